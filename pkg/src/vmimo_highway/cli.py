"""Command-line front end.

Subcommands: ``analytic``, ``simulate``, ``sweep``, ``compare``, ``validate``.
All quantities are SI (m, s, vehicles/m, m/s).  Settings come from flags,
then an optional ``--config`` key=value file, then built-in defaults.

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .analytic import analytic_report
from .core import InvalidParameterError, ScenarioParams
from .engine import (SCHEME_NAMES, Budget, SchemeKind, estimate_ips, simulate, write_trace)
from .experiments import (VARYING, SweepSpec, compare_schemes, emit_csv, emit_gain_csv,
                          replication_seed, run_sweep)

__all__ = ["main", "build_parser", "load_config"]

_DEFAULTS = ScenarioParams()


class UsageError(Exception):
    """Bad command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _scheme_list(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    for n in names:
        if n not in SCHEME_NAMES:
            raise argparse.ArgumentTypeError(f"unknown scheme {n!r}")
    return names


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario (SI units)")
    g.add_argument("--lambda-r", type=float, default=_DEFAULTS.lambda_r, help="reverse-lane density")
    g.add_argument("--lambda-f", type=float, default=_DEFAULTS.lambda_f, help="forward-lane density")
    g.add_argument("--v", type=float, default=_DEFAULTS.v, help="vehicle speed")
    g.add_argument("--r", type=float, default=_DEFAULTS.r, help="transmission range")
    g.add_argument("--R", type=float, default=_DEFAULTS.R, help="detection range")
    g.add_argument("--tau", type=float, default=_DEFAULTS.tau, help="slot duration")
    g.add_argument("--alpha-pt-over-n0", type=float, default=None,
                   help="link budget; with both gammas it overrides --r/--R")
    g.add_argument("--gamma-dec", type=float, default=None)
    g.add_argument("--gamma-det", type=float, default=None)
    p.add_argument("--config", default=None, help="key=value file; flags take precedence")
    p.add_argument("--seed", type=int, default=0)


def _add_sim(p: argparse.ArgumentParser, replications: int) -> None:
    g = p.add_argument_group("simulation budget")
    g.add_argument("--replications", type=int, default=replications)
    g.add_argument("--max-slots", type=int, default=20000)
    g.add_argument("--min-cycles", type=int, default=50, help="0 runs to --max-slots")
    g.add_argument("--warmup-slots", type=int, default=200)
    g.add_argument("--handshake-slots", type=int, default=1, help="reverse_aided handshake cost")
    g.add_argument("--workers", type=int, default=None, help="worker processes (default: CPUs)")


def _add_sweep(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sweep")
    g.add_argument("--param", choices=VARYING, default="lambda_total_symmetric")
    g.add_argument("--from", dest="start", type=float, required=False, default=None)
    g.add_argument("--to", dest="stop", type=float, required=False, default=None)
    g.add_argument("--steps", type=int, default=5)
    g.add_argument("--log", action="store_true", help="geometric spacing")
    p.add_argument("--output", "-o", default=None, help="CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vmimo-highway", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analytic", help="closed-form IPS report")
    _add_common(p)
    p.add_argument("--csv", default=None, help="also write a one-row CSV here")

    p = sub.add_parser("simulate", help="simulate one scheme")
    _add_common(p)
    _add_sim(p, replications=30)
    p.add_argument("--scheme", choices=SCHEME_NAMES, default="vmimo")
    p.add_argument("--trace", default=None, help="per-slot CSV trace of replication 0")

    p = sub.add_parser("sweep", help="parameter sweep to CSV")
    _add_common(p)
    _add_sim(p, replications=30)
    _add_sweep(p)
    p.add_argument("--schemes", type=_scheme_list, default=["vmimo", "flooding"])

    p = sub.add_parser("compare", help="vmimo/flooding gain table")
    _add_common(p)
    _add_sim(p, replications=30)
    _add_sweep(p)

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="module invariants at reduced size")
    p.add_argument("--config", default=None)
    return parser


def load_config(path: str) -> dict[str, str]:
    """Parse a plain-text ``key=value`` file (``#`` comments, blank lines ignored)."""
    out = {}
    try:
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{n}: expected key=value")
                key, value = (s.strip() for s in line.split("=", 1))
                out[key.replace("-", "_")] = value
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    return out


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in load_config(args.config).items():
            dest = {"from": "start", "to": "stop"}.get(key, key)
            action = actions.get(dest)
            if action is None or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            try:
                defaults[dest] = action.type(raw) if action.type else (
                    raw.lower() in ("1", "true", "yes") if isinstance(action.default, bool) else raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _params(args) -> ScenarioParams:
    thresholds = (args.alpha_pt_over_n0, args.gamma_dec, args.gamma_det)
    if any(x is not None for x in thresholds):
        p = ScenarioParams.from_thresholds(*thresholds, lambda_r=args.lambda_r,
                                           lambda_f=args.lambda_f, v=args.v, tau=args.tau)
    else:
        p = ScenarioParams(lambda_r=args.lambda_r, lambda_f=args.lambda_f, v=args.v,
                           r=args.r, R=args.R, tau=args.tau)
    p.validate()
    return p


def _budget(args) -> Budget:
    if args.replications < 1:
        raise InvalidParameterError("requires replications >= 1")
    if args.max_slots < 1:
        raise InvalidParameterError("requires max_slots >= 1")
    return Budget(max_slots=args.max_slots, min_cycles=args.min_cycles or None,
                  warmup_slots=args.warmup_slots)


def _sweep_values(args) -> list[float]:
    if args.start is None or args.stop is None:
        raise UsageError("sweep requires --from and --to")
    if args.steps < 1:
        raise InvalidParameterError("requires steps >= 1")
    if args.log:
        if not (args.start > 0 and args.stop > 0):
            raise InvalidParameterError("requires positive --from/--to with --log")
        return [float(x) for x in np.geomspace(args.start, args.stop, args.steps)]
    return [float(x) for x in np.linspace(args.start, args.stop, args.steps)]


def _cmd_analytic(args) -> int:
    p = _params(args)
    report = analytic_report(p)
    print("quantity          value")
    for k in ("lambda_r", "lambda_f", "v", "r", "R", "tau"):
        print(f"{k:<17} {getattr(p, k):.6g}")
    for name, value in report.rows():
        print(f"{name:<17} {value:.6g}")
    if args.csv:
        names = ["lambda_r", "lambda_f", "v", "r", "R", "tau"] + [n for n, _ in report.rows()]
        values = [getattr(p, k) for k in names[:6]] + [v for _, v in report.rows()]
        with open(args.csv, "w") as fh:
            fh.write(",".join(names) + "\n" + ",".join(f"{v:.6g}" for v in values) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    p = _params(args)
    budget = _budget(args)
    scheme = SchemeKind(args.scheme, args.handshake_slots)
    results = []
    for k in range(args.replications):
        res = simulate(p, scheme, budget, replication_seed(args.seed, 0, k))
        if k == 0 and args.trace:
            write_trace(res, args.trace)
        results.append(res.estimate())
    est = estimate_ips(results) if len(results) >= 2 else results[0]
    print(f"scheme           {scheme.name}")
    print(f"ips_mean         {est.mean:.6g}")
    print(f"ci95_halfwidth   {est.ci95_halfwidth:.6g}")
    print(f"replications     {est.replications}")
    print(f"slots_per_rep    {est.slots_per_rep}")
    print(f"warmup_slots     {est.warmup_slots}")
    return 0


def _spec(args, schemes) -> SweepSpec:
    return SweepSpec(args.param, tuple(_sweep_values(args)), fixed=_params(args),
                     schemes=tuple(SchemeKind(s, args.handshake_slots) for s in schemes),
                     replications=args.replications, budget=_budget(args),
                     base_seed=args.seed)


def _emit(text: str, path: Optional[str]) -> None:
    if not path:
        sys.stdout.write(text)


def _cmd_sweep(args) -> int:
    spec = _spec(args, args.schemes)
    rows = run_sweep(spec, workers=args.workers)
    _emit(emit_csv(rows, args.output, spec), args.output)
    failed = sum(r.failed for r in rows)
    if failed:
        print(f"warning: {failed} row(s) failed; see the .meta file", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    spec = _spec(args, ["vmimo", "flooding"])
    rows = run_sweep(spec, workers=args.workers)
    gains = compare_schemes(rows)
    _emit(emit_gain_csv(gains, args.output), args.output)
    return 0


def _cmd_validate(args) -> int:
    from .checks import run_all

    results = run_all(seed=args.seed, quick=args.quick)
    for res in results:
        print(res.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


_COMMANDS = {"analytic": _cmd_analytic, "simulate": _cmd_simulate, "sweep": _cmd_sweep,
             "compare": _cmd_compare, "validate": _cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except InvalidParameterError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
