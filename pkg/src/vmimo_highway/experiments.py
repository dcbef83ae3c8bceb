"""Parameter sweeps, scheme comparisons and CSV output.

Replication seeds depend on ``(base_seed, value index, replication index)``
only, so every scheme at one parameter point runs on the same traffic
realizations and any single replication can be rerun in isolation.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytic import ips_conventional, ips_vmimo
from .core import InvalidParameterError, ScenarioParams
from .engine import FLOODING, VMIMO, Budget, SchemeKind, estimate_ips, simulate

__all__ = [
    "VARYING",
    "SweepSpec",
    "SweepRow",
    "GainRow",
    "CSV_HEADER",
    "replication_seed",
    "run_sweep",
    "compare_schemes",
    "emit_csv",
    "emit_gain_csv",
    "parse_csv",
    "write_meta",
]

VARYING = ("lambda_r", "lambda_f", "lambda_total_symmetric", "v", "R")
CSV_HEADER = ("lambda_r,lambda_f,v,r,R,tau,scheme,ips_sim_mean,ips_sim_ci95,ips_analytic,"
              "gain_vs_flooding,replications,base_seed")
GAIN_HEADER = "lambda_r,lambda_f,v,r,R,tau,g_sim,g_analytic,g_high_density_ref,note"


def substitute(params: ScenarioParams, varying: str, value: float) -> ScenarioParams:
    """``params`` with the swept quantity set to ``value``."""
    if varying == "lambda_total_symmetric":
        return params.with_(lambda_r=value / 2.0, lambda_f=value / 2.0)
    if varying not in VARYING:
        raise InvalidParameterError(f"cannot sweep {varying!r}; choose from {VARYING}")
    return params.with_(**{varying: value})


@dataclass(frozen=True)
class SweepSpec:
    varying: str
    values: tuple
    fixed: ScenarioParams = field(default_factory=ScenarioParams)
    schemes: tuple = (VMIMO, FLOODING)
    replications: int = 30
    budget: Budget = field(default_factory=Budget)
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        object.__setattr__(self, "schemes", tuple(SchemeKind.parse(s) for s in self.schemes))
        if not self.values:
            raise InvalidParameterError("requires at least one sweep value")
        if not self.schemes:
            raise InvalidParameterError("requires at least one scheme")
        if self.replications < 1:
            raise InvalidParameterError("requires replications >= 1")
        for i in range(len(self.values)):
            self.params_at(i).validate()

    def params_at(self, i: int) -> ScenarioParams:
        return substitute(self.fixed, self.varying, self.values[i])

    def as_meta(self) -> dict:
        meta = {"artifact_version": __version__, "varying": self.varying,
                "values": " ".join(repr(v) for v in self.values),
                "schemes": " ".join(f"{s.name}:{s.handshake_slots}" for s in self.schemes),
                "replications": self.replications, "base_seed": self.base_seed}
        for k, v in self.fixed.as_dict().items():
            if v is not None:
                meta[f"fixed.{k}"] = repr(v)
        for f in fields(self.budget):
            meta[f"budget.{f.name}"] = getattr(self.budget, f.name)
        return meta


@dataclass(frozen=True)
class SweepRow:
    lambda_r: float
    lambda_f: float
    v: float
    r: float
    R: float
    tau: float
    scheme: str
    ips_sim_mean: Optional[float]
    ips_sim_ci95: Optional[float]
    ips_analytic: Optional[float]
    gain_vs_flooding: Optional[float]
    replications: int
    base_seed: int
    value_index: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def point(self) -> tuple:
        return (self.lambda_r, self.lambda_f, self.v, self.r, self.R, self.tau)


def replication_seed(base_seed: int, value_index: int, replication: int) -> np.random.SeedSequence:
    """Seed of one replication; shared by every scheme at that parameter point."""
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(value_index), int(replication)))


def _analytic(params: ScenarioParams, scheme: SchemeKind) -> Optional[float]:
    if scheme.name == "vmimo":
        return ips_vmimo(params)
    if scheme.name == "flooding":
        return ips_conventional(params)
    return None


def _one_replication(task) -> float:
    params, scheme, budget, base_seed, i, k = task
    return simulate(params, scheme, budget, replication_seed(base_seed, i, k)).ips


def _run_tasks(tasks, workers: int):
    """Evaluate tasks in order; exceptions are returned in place of results."""
    def safe(t):
        try:
            return _one_replication(t)
        except Exception as exc:  # recorded per row, never fatal
            return exc

    if workers <= 1 or len(tasks) <= 1:
        return [safe(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_one_replication, t) for t in tasks]
        out = []
        for fut in futures:
            try:
                out.append(fut.result())
            except Exception as exc:
                out.append(exc)
        return out


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> list[SweepRow]:
    """One row per (value, scheme), ordered by value then scheme name."""
    workers = (os.cpu_count() or 1) if workers is None else int(workers)
    schemes = sorted(spec.schemes, key=lambda s: (s.name, s.handshake_slots))
    tasks = [(spec.params_at(i), s, spec.budget, spec.base_seed, i, k)
             for i in range(len(spec.values)) for s in schemes
             for k in range(spec.replications)]
    results = iter(_run_tasks(tasks, workers))
    raw = []
    for i in range(len(spec.values)):
        p = spec.params_at(i)
        for s in schemes:
            vals = [next(results) for _ in range(spec.replications)]
            errors = [v for v in vals if isinstance(v, Exception)]
            mean = ci = ana = None
            err = None
            try:
                ana = _analytic(p, s)
            except (ArithmeticError, ValueError) as exc:
                err = f"analytic: {exc}"
            if errors:
                err = f"simulation: {errors[0]}"
            elif len(vals) >= 2:
                est = estimate_ips(vals)
                mean, ci = est.mean, est.ci95_halfwidth
            else:
                mean = float(vals[0])
            raw.append((i, p, s, mean, ci, ana, err))
    rows = []
    for i, p, s, mean, ci, ana, err in raw:
        ref = next((m for j, _, t, m, *_ in raw if j == i and t.name == "flooding"), None)
        gain = mean / ref if (mean is not None and ref) else None
        rows.append(SweepRow(p.lambda_r, p.lambda_f, p.v, p.r, p.R, p.tau, s.name,
                             None if err else mean, None if err else ci, ana,
                             None if err else gain, spec.replications, spec.base_seed, i, err))
    return rows


@dataclass(frozen=True)
class GainRow:
    lambda_r: float
    lambda_f: float
    v: float
    r: float
    R: float
    tau: float
    g_sim: Optional[float]
    g_analytic: Optional[float]
    g_high_density_ref: float
    note: str = ""


def compare_schemes(rows: Sequence[SweepRow]) -> list[GainRow]:
    """vmimo/flooding gain per parameter point, simulated and analytic.

    ``g_high_density_ref`` is ``lam r R / (lam r^2 + R)``, the dense-traffic
    approximation of the gain.  Points without both schemes yield a row whose
    ``note`` says what is missing.
    """
    points: dict[tuple, dict[str, SweepRow]] = {}
    for row in rows:
        points.setdefault(row.point(), {})[row.scheme] = row
    out = []
    for key, by_scheme in points.items():
        lr, lf, v, r, R, tau = key
        lam = lr + lf
        ref = lam * r * R / (lam * r * r + R)
        vm, fl = by_scheme.get("vmimo"), by_scheme.get("flooding")
        if vm is None or fl is None:
            missing = "vmimo" if vm is None else "flooding"
            warnings.warn(f"unmatched point {key}: no {missing} row")
            out.append(GainRow(*key, None, None, ref, f"unmatched: no {missing} row"))
            continue
        g_sim = (vm.ips_sim_mean / fl.ips_sim_mean
                 if vm.ips_sim_mean is not None and fl.ips_sim_mean else None)
        g_ana = (vm.ips_analytic / fl.ips_analytic
                 if vm.ips_analytic is not None and fl.ips_analytic else None)
        note = "; ".join(x.error for x in (vm, fl) if x.error) if (vm.error or fl.error) else ""
        out.append(GainRow(*key, g_sim, g_ana, ref, note))
    return out


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.6g}"


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)}: {exc.strerror or exc}") from exc


def emit_csv(rows: Sequence[SweepRow], path, spec: Optional[SweepSpec] = None) -> str:
    """Sweep CSV text, written to ``path`` (plus a ``.meta`` companion when ``spec``
    is given) unless ``path`` is None."""
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, name)) for name in CSV_HEADER.split(",")))
    text = "\n".join(lines) + "\n"
    if path is not None:
        _write_text(path, text)
        if spec is not None:
            write_meta(path, spec, rows)
    return text


def write_meta(path, spec: SweepSpec, rows: Sequence[SweepRow] = ()) -> str:
    meta = spec.as_meta()
    for n, row in enumerate(rows):
        if row.error:
            meta[f"row.{n}.error"] = row.error.replace("\n", " ")
    text = "".join(f"{k}={v}\n" for k, v in meta.items())
    _write_text(os.path.splitext(os.fspath(path))[0] + ".meta", text)
    return text


def emit_gain_csv(gains: Sequence[GainRow], path) -> str:
    lines = [GAIN_HEADER]
    for g in gains:
        lines.append(",".join(_fmt(getattr(g, name)) for name in GAIN_HEADER.split(",")))
    text = "\n".join(lines) + "\n"
    if path is not None:
        _write_text(path, text)
    return text


def parse_csv(path) -> list[dict]:
    """Read a sweep CSV back; numeric cells become floats, empty cells ``None``."""
    with open(path, newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if v == "":
                    row[k] = None
                elif k == "scheme":
                    row[k] = v
                else:
                    row[k] = float(v)
            out.append(row)
        return out
