"""Property and acceptance checks shared by ``validate`` and the test suite.

Every check returns a :class:`CheckResult`; nothing here raises on a failed
property.  Sizes default to the full protocol; ``quick`` variants shrink the
simulations for smoke runs.
"""

from __future__ import annotations

import contextlib
import functools
import io
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .analytic import (asymptotics_report, blocking_argument, blocking_probability,
                       cubic_fit_r2, expected_max_hop, ips_conventional, ips_vmimo,
                       mc_blocking_probability, mc_expected_max_hop, renewal_expectations,
                       transition_probabilities)
from .core import ScenarioParams
from .engine import (FLOODING, VMIMO, Budget, Label, SchemeKind, coupled_dominance_run,
                     estimate_ips, simulate, step_slot)
from .experiments import SweepSpec, run_sweep
from .traffic import Lane, TrafficField, ensure_horizon, initial_state, poisson_positions

__all__ = ["CheckResult", "ACCEPTANCE", "acceptance_checks", "invariant_checks", "run_all"]

GRID_PER_LANE = (0.002, 0.003, 0.005, 0.01)
DENSE_PER_LANE = 0.05
SIM_BUDGET = Budget(max_slots=20000, min_cycles=50)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _sym(lam_per_lane: float, **kw) -> ScenarioParams:
    return ScenarioParams(lambda_r=lam_per_lane, lambda_f=lam_per_lane, **kw)


@functools.lru_cache(maxsize=4)
def _grid_sweep(replications: int, max_slots: int, min_cycles: int, seed: int):
    spec = SweepSpec("lambda_total_symmetric", tuple(2 * x for x in GRID_PER_LANE),
                     schemes=("vmimo", "flooding", "reverse_aided"),
                     replications=replications,
                     budget=Budget(max_slots=max_slots, min_cycles=min_cycles), base_seed=seed)
    return run_sweep(spec, workers=1)


# --------------------------------------------------------------------------- acceptance

def criterion_1(replications: int = 30, budget: Budget = SIM_BUDGET, seed: int = 2024):
    rows = _grid_sweep(replications, budget.max_slots, budget.min_cycles, seed)
    parts, ok = [], True
    for row in rows:
        if row.scheme == "reverse_aided":
            continue
        if row.error:
            ok = False
            parts.append(f"{row.scheme}@{row.lambda_r:g} error")
            continue
        rel = abs(row.ips_sim_mean - row.ips_analytic) / row.ips_analytic
        ok &= rel <= 0.20
        parts.append(f"{row.scheme}@{row.lambda_r:g} sim={row.ips_sim_mean:.4g} "
                     f"analytic={row.ips_analytic:.4g} rel={rel:.3f}")
    return CheckResult("analytic-vs-simulation (rel <= 0.20)", ok, "; ".join(parts))


def criterion_2(replications: int = 10, budget: Budget = Budget(max_slots=400_000, min_cycles=20),
                seed: int = 7):
    parts, ok = [], True
    for v in (10.0, 25.0):
        p = _sym(5e-5, v=v)
        vals = [simulate(p, VMIMO, budget, np.random.SeedSequence(seed, spawn_key=(k,))).ips
                for k in range(replications)]
        mean = float(np.mean(vals))
        rel = abs(mean - v) / v
        ok &= rel <= 0.10
        parts.append(f"v={v:g} sim={mean:.4g} rel={rel:.3f}")
    return CheckResult("low-density limit (within 10% of v)", ok, "; ".join(parts))


def criterion_3():
    lams = np.linspace(1e-4, 1e-3, 19)
    p0 = ScenarioParams()
    ips = [ips_vmimo(_sym(x)) for x in lams]
    r2 = cubic_fit_r2(lams, ips, offset=p0.v)
    return CheckResult("cubic low-density shape (R^2 >= 0.95)", r2 >= 0.95, f"R^2={r2:.4f}")


def criterion_4(replications: int = 3, slots: int = 2000, seed: int = 11):
    p = _sym(DENSE_PER_LANE)
    vm, conv = ips_vmimo(p), ips_conventional(p)
    lo, hi = 0.85 * p.R / p.tau, p.R / p.tau
    ok_vm = lo <= vm < hi
    ok_conv = 7000.0 <= conv < p.r / p.tau
    guard = p.R / p.tau + 2 * p.v
    worst_ips, worst_hop = 0.0, 0.0
    budget = Budget(max_slots=slots, min_cycles=None)
    for k in range(replications):
        res = simulate(p, VMIMO, budget, np.random.SeedSequence(seed, spawn_key=(k,)))
        worst_ips = max(worst_ips, res.ips)
        worst_hop = max(worst_hop, float(np.max(res.head_after - res.head_before)))
    ok_sim = worst_ips <= guard and worst_hop <= p.R + 2 * p.v * p.tau
    return CheckResult(
        "high-density ceiling", ok_vm and ok_conv and ok_sim,
        f"ips_vmimo={vm:.6g} in [{lo:.6g},{hi:.6g}): {ok_vm}; ips_conventional={conv:.6g} "
        f">= 7000: {ok_conv}; max sim ips={worst_ips:.6g} <= {guard:g}, "
        f"max hop={worst_hop:.5g}: {ok_sim}")


def criterion_5():
    p = _sym(DENSE_PER_LANE)
    g = ips_vmimo(p) / ips_conventional(p)
    target = p.R / p.r
    ok_dense = abs(g - target) <= 0.10 * target
    grid = {x: ips_vmimo(_sym(x)) / ips_conventional(_sym(x)) for x in GRID_PER_LANE}
    ok_grid = all(v >= 1.0 for v in grid.values())
    detail = (f"gain@{DENSE_PER_LANE:g}={g:.4f} vs {target:g}: {ok_dense}; grid gains "
              + ", ".join(f"{k:g}:{v:.3f}" for k, v in grid.items()) + f": {ok_grid}")
    return CheckResult("gain limit", ok_dense and ok_grid, detail)


def criterion_6(replications: int = 30, budget: Budget = SIM_BUDGET, seed: int = 2024,
                coupled_slots: int = 2000, coupled_seeds: int = 2):
    rows = _grid_sweep(replications, budget.max_slots, budget.min_cycles, seed)
    by_point: dict = {}
    for row in rows:
        by_point.setdefault(row.lambda_r, {})[row.scheme] = row.ips_sim_mean
    ok, parts = True, []
    for lam, m in by_point.items():
        ra, fl, vm = m.get("reverse_aided"), m.get("flooding"), m.get("vmimo")
        good = None not in (ra, fl, vm) and ra <= fl <= vm
        ok &= bool(good)
        parts.append(f"{lam:g}: ra={ra:.6g} fl={fl:.6g} vm={vm:.6g} {'ok' if good else 'VIOLATED'}")
    violations = 0
    for lam in GRID_PER_LANE:
        for k in range(coupled_seeds):
            rep = coupled_dominance_run(_sym(lam), Budget(max_slots=coupled_slots, min_cycles=None),
                                        np.random.SeedSequence(seed, spawn_key=(k,)),
                                        raise_on_violation=False)
            violations += len(rep.violations)
    ok &= violations == 0
    parts.append(f"coupled dominance violations={violations}")
    return CheckResult("scheme ordering", ok, "; ".join(parts))


def criterion_7(replications: int = 20, budget: Budget = Budget(max_slots=40000, min_cycles=50),
                seed: int = 5):
    speeds = (5.0, 10.0, 20.0, 40.0, 80.0)
    ana = [ips_vmimo(_sym(0.003, v=v)) for v in speeds]
    caps = [asymptotics_report(_sym(0.003, v=v)).infinite_speed_limit for v in speeds]
    mono = all(b >= a for a, b in zip(ana, ana[1:]))
    bounded = all(a <= c for a, c in zip(ana, caps))
    est = {}
    for v in (5.0, 40.0):
        vals = [simulate(_sym(0.003, v=v), VMIMO, budget,
                         np.random.SeedSequence(seed, spawn_key=(k,))).ips
                for k in range(replications)]
        est[v] = estimate_ips(vals)
    hi5 = est[5.0].mean + est[5.0].ci95_halfwidth
    lo40 = est[40.0].mean - est[40.0].ci95_halfwidth
    sim_ok = est[5.0].mean < est[40.0].mean and hi5 < lo40
    detail = ("analytic " + ", ".join(f"{v:g}:{a:.4g}" for v, a in zip(speeds, ana))
              + f" nondecreasing={mono} bounded={bounded}; sim v=5 {est[5.0].mean:.4g}"
              f"+-{est[5.0].ci95_halfwidth:.3g}, v=40 {est[40.0].mean:.4g}"
              f"+-{est[40.0].ci95_halfwidth:.3g} separated={sim_ok}")
    return CheckResult("mobility monotonicity", mono and bounded and sim_ok, detail)


def criterion_8(blocking_samples: int = 1_000_000, hop_samples: int = 100_000, seed: int = 3):
    p = ScenarioParams()
    ok, parts = True, []
    for lam in (0.005, 0.01, 0.02):
        assert lam * (p.R - p.r) >= 2
        est, _ = mc_blocking_probability(lam, p.r, p.R, blocking_samples, seed)
        ref = blocking_probability(lam, p.r, p.R)
        rel = abs(est - ref) / ref
        ok &= rel <= 0.15
        parts.append(f"p_b@{lam:g} mc={est:.4g} closed={ref:.4g} rel={rel:.3f}")
    for lam in (0.005, 0.01, 0.02):
        est, _ = mc_expected_max_hop(lam, p.r, p.R, hop_samples, seed)
        ref = expected_max_hop(lam, p.r, p.R)
        rel = abs(est - ref) / ref
        ok &= rel <= 0.20
        parts.append(f"hop@{lam:g} mc={est:.4g} closed={ref:.4g} rel={rel:.3f}")
    return CheckResult("oracle agreement", ok, "; ".join(parts))


def random_params(rng: np.random.Generator) -> ScenarioParams:
    r = float(rng.uniform(50, 400))
    return ScenarioParams(lambda_r=float(rng.uniform(1e-4, 0.05)),
                          lambda_f=float(rng.uniform(0, 0.05)),
                          v=float(rng.uniform(1, 60)), r=r, R=float(r * rng.uniform(1.1, 5)),
                          tau=float(rng.uniform(0.005, 0.1)))


def analytic_identities(n_points: int = 1000, seed: int = 9) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = [0.0, 0.0, 0.0]
    for _ in range(n_points):
        p = random_params(rng)
        p_b = blocking_probability(p.lam, p.r, p.R)
        t = transition_probabilities(p.lambda_r, p.lambda_f, p_b)
        e = renewal_expectations(p)
        worst[0] = max(worst[0], abs(t.sigma1 + t.sigma2 - 1.0))
        worst[1] = max(worst[1], abs(t.p_f + t.p_r + t.p_b - 1.0))
        ratio = e.e_d_prop / (e.e_t_prop + e.e_t_stop)
        worst[2] = max(worst[2], abs(ips_vmimo(p) - ratio) / ratio)
    ok = worst[0] <= 1e-12 and worst[1] <= 1e-12 and worst[2] <= 1e-9
    return ok, (f"{n_points} points: max|s1+s2-1|={worst[0]:.2e} max|pf+pr+pb-1|={worst[1]:.2e} "
                f"max rel(ips - E[D]/E[T])={worst[2]:.2e}")


def fuzz_monotonicity(n_runs: int = 12, slots: int = 300, seed: int = 13) -> tuple[bool, str]:
    """Head and informed-set monotonicity over random short slot-by-slot runs."""
    rng = np.random.default_rng(seed)
    schemes = (VMIMO, FLOODING, SchemeKind("reverse_aided", 2))
    bad_head = bad_set = 0
    for k in range(n_runs):
        p = ScenarioParams(lambda_r=float(rng.uniform(1e-3, 0.02)),
                           lambda_f=float(rng.uniform(1e-3, 0.02)), v=float(rng.uniform(5, 40)))
        scheme = schemes[k % 3]
        field = TrafficField(p.lambda_r, p.lambda_f, int(rng.integers(1 << 31)))
        trailing = scheme.name != "reverse_aided"
        state = initial_state(p, field, inform_trailing=trailing)
        for _ in range(slots):
            ensure_horizon(state, p, field, inform_trailing=trailing)
            before = {s.lane: dict(zip(s.ids.tolist(), s.informed.tolist())) for s in state.lanes()}
            state, rec = step_slot(state, p, scheme)
            bad_head += rec.head_after < rec.head_before
            for s in state.lanes():
                prev = before[s.lane]
                bad_set += sum(1 for i, f in zip(s.ids.tolist(), s.informed.tolist())
                               if prev.get(i, False) and not f)
    return bad_head == 0 and bad_set == 0, (f"{n_runs} runs x {slots} slots: head decreases="
                                            f"{bad_head}, informed resets={bad_set}")


def criterion_9(n_points: int = 1000, fuzz_runs: int = 12, fuzz_slots: int = 300):
    ok_a, det_a = analytic_identities(n_points)
    ok_e, det_e = fuzz_monotonicity(fuzz_runs, fuzz_slots)
    return CheckResult("exact identities", ok_a and ok_e, f"{det_a}; {det_e}")


CLI_DETERMINISM_CASES = (
    ["analytic"],
    ["simulate", "--scheme", "vmimo", "--seed", "42", "--replications", "3",
     "--max-slots", "3000", "--min-cycles", "20"],
    ["sweep", "--param", "lambda_total_symmetric", "--from", "0.004", "--to", "0.01",
     "--steps", "2", "--replications", "2", "--max-slots", "2000", "--min-cycles", "10",
     "--seed", "42", "--workers", "1"],
    ["compare", "--param", "v", "--from", "10", "--to", "30", "--steps", "2",
     "--replications", "2", "--max-slots", "2000", "--min-cycles", "10", "--seed", "42",
     "--workers", "1"],
    ["validate", "--quick", "--seed", "42"],
)


def cli_run(argv: list[str]) -> tuple[int, str, dict]:
    """Run the CLI in-process inside a scratch directory; return (status, stdout, files)."""
    from . import cli

    out = io.StringIO()
    with tempfile.TemporaryDirectory() as tmp:
        cwd = os.getcwd()
        os.chdir(tmp)
        try:
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
                status = cli.main(list(argv))
            files = {}
            for name in sorted(os.listdir(tmp)):
                with open(os.path.join(tmp, name), "rb") as fh:
                    files[name] = fh.read()
        finally:
            os.chdir(cwd)
    return status, out.getvalue(), files


def criterion_10(cases=CLI_DETERMINISM_CASES):
    ok, parts = True, []
    for argv in cases:
        argv = list(argv)
        if argv[0] in ("sweep", "compare"):
            argv += ["--output", "out.csv"]
        first, second = cli_run(argv), cli_run(argv)
        same = first == second
        ok &= same
        parts.append(f"{argv[0]}: {'identical' if same else 'DIFFERS'} (exit {first[0]})")
    return CheckResult("CLI determinism", ok, "; ".join(parts))


ACCEPTANCE: tuple[tuple[int, Callable[..., CheckResult]], ...] = (
    (1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5),
    (6, criterion_6), (7, criterion_7), (8, criterion_8), (9, criterion_9), (10, criterion_10),
)


def acceptance_checks() -> list[CheckResult]:
    return [fn() for _, fn in ACCEPTANCE]


# --------------------------------------------------------------------------- module invariants

def _traffic_checks(seed: int, quick: bool) -> list[CheckResult]:
    n = 200_000 if quick else 1_000_000
    rng = np.random.default_rng(seed)
    gaps = np.diff(poisson_positions(0.01, 0.0, n / 0.01, rng))
    ks = stats.kstest(gaps, "expon", args=(0, 100.0))
    # many small materializations straddling block boundaries
    field = TrafficField(0.01, 0.01, seed, block_length=3000.0)
    cuts = np.cumsum(rng.uniform(50.0, 2000.0, size=n // 100))
    pieces = [field.segment(Lane.FORWARD, a, b)[0] for a, b in zip(cuts[:-1], cuts[1:])]
    fwd = np.concatenate(pieces)
    ks2 = stats.kstest(np.diff(fwd), "expon", args=(0, 100.0))
    return [
        CheckResult("traffic: exponential gaps", ks.pvalue > 0.01,
                    f"n={gaps.size} mean gap={gaps.mean():.2f} KS p={ks.pvalue:.3f}"),
        CheckResult("traffic: stationarity across regenerations", ks2.pvalue > 0.01,
                    f"n={fwd.size - 1} KS p={ks2.pvalue:.3f}"),
    ]


def _run_labels(params: ScenarioParams, runs: int, slots: int, seed: int):
    out = []
    for k in range(runs):
        res = simulate(params, VMIMO, Budget(max_slots=slots, min_cycles=None),
                       np.random.SeedSequence(seed, spawn_key=(k,)))
        out.append(res)
    return out


def _runs_of(labels: np.ndarray):
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.r_[0, change]
    ends = np.r_[change, labels.size]
    return labels[starts], ends - starts


def _engine_checks(seed: int, quick: bool) -> list[CheckResult]:
    results = []
    ok, det = fuzz_monotonicity(4 if quick else 12, 150 if quick else 300, seed)
    results.append(CheckResult("engine: head and informed-set monotonicity", ok, det))

    worst = {"vmimo": 0.0, "flooding": 0.0}
    for lam in (0.005, 0.02):
        p = _sym(lam)
        for scheme in (VMIMO, FLOODING):
            res = simulate(p, scheme, Budget(max_slots=1500 if quick else 5000, min_cycles=None),
                           seed)
            worst[scheme.name] = max(worst[scheme.name],
                                     float(np.max(res.head_after - res.head_before)))
    p = ScenarioParams()
    step = 2 * p.v * p.tau
    results.append(CheckResult(
        "engine: per-slot hop bound",
        worst["vmimo"] <= p.R + step and worst["flooding"] <= p.r + step,
        f"max vmimo hop={worst['vmimo']:.2f} (<= {p.R + step:g}), "
        f"max flooding hop={worst['flooding']:.2f} (<= {p.r + step:g})"))

    violations = 0
    for k in range(1 if quick else 3):
        rep = coupled_dominance_run(p, Budget(max_slots=800 if quick else 3000, min_cycles=None),
                                    np.random.SeedSequence(seed, spawn_key=(k,)),
                                    raise_on_violation=False)
        violations += len(rep.violations)
    results.append(CheckResult("engine: coupled flooding-within-vmimo dominance",
                               violations == 0, f"violations={violations}"))

    runs, slots = (4, 8000) if quick else (10, 20000)
    ratios, stop_parts, stop_ok, auto_bad = [], [], True, 0
    for lam in (0.005, 0.01):
        p = _sym(lam / 2)
        p_b = blocking_probability(p.lam, p.r, p.R)
        prop_i, stops = [], []
        for res in _run_labels(p, runs, slots, seed):
            kinds, lengths = _runs_of(res.labels)
            inner = slice(1, -1)
            prop_i += list(lengths[inner][kinds[inner] == Label.PROP_I])
            stops += list(lengths[inner][kinds[inner] == Label.STOP])
            auto_bad += int(np.count_nonzero((kinds[:-1] == Label.STOP)
                                             & (kinds[1:] != Label.PROP_II)))
            auto_bad += int(np.count_nonzero((kinds[:-1] == Label.PROP_II)
                                             & (kinds[1:] != Label.PROP_I)))
        if prop_i:
            ratios.append((lam, float(np.mean(prop_i)) * p_b))
        if stops:
            mean_stop = float(np.mean(stops)) * p.tau
            bound = 1.0 / (2 * p.v * p.lam) + p.tau
            stop_ok &= mean_stop <= bound
            stop_parts.append(f"{lam:g}: {mean_stop:.3f}s vs {bound:.3f}s")
    abs_ok = bool(ratios) and all(abs(x - 1.0) <= 0.15 for _, x in ratios)
    results.append(CheckResult(
        "engine: PROP_I run length matches 1/p_b (15%)", abs_ok,
        ", ".join(f"lam={l:g}: mean*p_b={x:.3f}" for l, x in ratios)))
    results.append(CheckResult("engine: mean STOP duration within worst case", stop_ok,
                               "; ".join(stop_parts)))
    results.append(CheckResult("engine: renewal label automaton", auto_bad == 0,
                               f"illegal run transitions={auto_bad}"))
    return results


def _analytic_checks(quick: bool) -> list[CheckResult]:
    ok, det = analytic_identities(200 if quick else 1000)
    lams = np.linspace(1e-4, 0.1, 200)
    args = [blocking_argument(x, 200.0, 600.0) for x in lams]
    pbs = [blocking_probability(x, 200.0, 600.0) for x in lams]
    mono = all(b < a for a, b in zip(args, args[1:])) and all(b <= a for a, b in zip(pbs, pbs[1:]))
    rng = np.random.default_rng(1)
    bounded = True
    for _ in range(200):
        p = random_params(rng)
        vm = ips_vmimo(p)
        bounded &= 0.0 <= vm <= p.R / p.tau + 2 * p.v
    return [
        CheckResult("analytic: probability and renewal identities", ok, det),
        CheckResult("analytic: blocking probability decreasing in density", mono,
                    f"{lams.size} grid points"),
        CheckResult("analytic: IPS nonnegative and below R/tau + 2v", bounded, "200 random points"),
    ]


def _experiments_checks(seed: int) -> list[CheckResult]:
    spec = SweepSpec("lambda_total_symmetric", (0.006,), replications=2,
                     budget=Budget(max_slots=1500, min_cycles=10), base_seed=seed)
    a, b = run_sweep(spec, workers=1), run_sweep(spec, workers=1)
    return [CheckResult("experiments: sweep determinism", a == b, f"{len(a)} rows")]


def invariant_checks(seed: int = 0, quick: bool = False) -> list[CheckResult]:
    return (_analytic_checks(quick) + _traffic_checks(seed, quick) + _engine_checks(seed, quick)
            + _experiments_checks(seed))


def run_all(seed: int = 0, quick: bool = False,
            acceptance: Optional[bool] = None) -> list[CheckResult]:
    """Module invariants, plus the acceptance criteria unless ``quick``."""
    out = invariant_checks(seed, quick)
    if acceptance if acceptance is not None else not quick:
        out += acceptance_checks()
    return out
