"""Command line front end.

Exit codes: 0 every check passed, 1 a mathematical check failed (or a
computation broke down), 2 bad usage or unreadable input.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import UnitarityError, validate_bundle
from .config import DEFAULT_T_GRID, DEFAULTS, Tolerances
from .files import InputError, file_digest, load_bundle, load_graph, load_lengths
from .forms import assemble_magnetic, assemble_scalar, check_first_bd, check_kato_samples
from .graph import FamilySpec, validate_graph
from .metrics import (
    FAILS,
    EdgeLengths,
    check_intrinsic,
    check_strongly_intrinsic,
    criterion_report,
    jump_size,
    path_pseudo_metric,
    weighted_degree,
)
from .probe import run_probe, transfer_evidence
from .report import FAIL, PASS, VerificationReport
from .semigroup import check_domination

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be a nonnegative integer")
    return value


def _tolerances(args) -> Tolerances:
    return DEFAULTS.replace(domination=getattr(args, "tol_domination", None))


def _envelope(command: str, args, tol: Tolerances, inputs: dict, reports: list, verdict: str, extra=None) -> dict:
    out = {
        "tool": "formdom",
        "version": __version__,
        "command": command,
        "seed": getattr(args, "seed", 0),
        "tolerances": tol.as_dict(),
        "inputs": inputs,
        "reports": reports,
        "verdict": verdict,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        out.update(extra)
    return out


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _say(line: str) -> None:
    print(line, file=sys.stderr)


# --- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    tol = _tolerances(args)
    g = load_graph(args.graph)
    inputs = {str(args.graph): file_digest(args.graph)}
    reports = [validate_graph(g)]
    if args.bundle:
        inputs[str(args.bundle)] = file_digest(args.bundle)
        try:
            conn, w = load_bundle(args.bundle, g)
            reports.append(validate_bundle(conn, w, tol))
        except UnitarityError as exc:
            reports.append(
                VerificationReport(
                    check="validate_bundle",
                    verdict=FAIL,
                    max_violation=exc.residual,
                    worst_case={"invariant": "Phi unitary", "edge": list(exc.edge), "residual": exc.residual},
                )
            )
    verdict = PASS if all(r.passed for r in reports) else FAIL
    for r in reports:
        _say(r.summary())
        for v in r.violations:
            _say(f"  violated {v.get('axiom') or v.get('invariant')}: {v}")
    _emit(_envelope("validate", args, tol, inputs, [r.to_dict() for r in reports], verdict), args.out)
    return EXIT_OK if verdict == PASS else EXIT_FAIL


def cmd_dominate(args) -> int:
    tol = _tolerances(args)
    g = load_graph(args.graph)
    conn, w = load_bundle(args.bundle, g)
    inputs = {str(args.graph): file_digest(args.graph), str(args.bundle): file_digest(args.bundle)}
    pre = [validate_graph(g), validate_bundle(conn, w, tol)]
    if not all(r.passed for r in pre):
        for r in pre:
            _say(r.summary())
        _emit(_envelope("dominate", args, tol, inputs, [r.to_dict() for r in pre], FAIL), args.out)
        return EXIT_FAIL
    mag = assemble_magnetic(g, conn, w)
    sc = assemble_scalar(g)
    reports = [
        check_domination(mag, sc, args.t_grid, args.samples, args.seed, tol=tol.domination),
        check_kato_samples(mag, sc, args.samples, args.seed, tol=tol.form),
        check_first_bd(sc, args.samples, args.seed, tol=tol.form),
    ]
    reports.sort(key=lambda r: r.check)
    verdict = PASS if all(r.passed for r in reports) else FAIL
    for r in reports:
        _say(r.summary())
    _emit(_envelope("dominate", args, tol, inputs, [r.to_dict() for r in reports], verdict), args.out)
    return EXIT_OK if verdict == PASS else EXIT_FAIL


def cmd_probe(args) -> int:
    tol = _tolerances(args)
    if not args.sizes:
        raise UsageError("--sizes must list at least one truncation size")
    try:
        family = FamilySpec.parse(args.family)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.phases == "trivial":
        connection = "trivial"
    else:
        connection = "random-phase" if args.dim == 1 else "random-unitary"
    try:
        result = run_probe(family, args.sizes, connection, args.w, args.dim, args.seed, args.x0, args.z)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    evidence = transfer_evidence(result, args.gap_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.csv").write_text(result.to_csv())
    payload = _envelope(
        "probe", args, tol, {"family": args.family}, [evidence.to_dict()], evidence.verdict,
        extra={"probe": result.to_dict()},
    )
    _emit(payload, out / "probe.json")
    _say(f"probe {family.name} sizes={result.sizes}")
    for row in zip(result.sizes, result.scalar_gap, result.magnetic_gap, result.resolvent_diff):
        _say("  N=%d scalarGap=%.3e magneticGap=%.3e resolventDiff=%.3e" % row)
    _say(f"transfer evidence: {evidence.verdict}")
    print(evidence.verdict)
    return EXIT_OK


def _sigma(args, g):
    if args.sigma is None:
        return None
    if args.sigma == "auto":
        return "auto" if g is None else EdgeLengths.canonical(g)
    try:
        value = float(args.sigma)
    except ValueError:
        if g is None:
            raise UsageError("a sigma file needs a graph, not a family") from None
        return load_lengths(args.sigma, g)
    if value <= 0:
        raise UsageError("constant sigma must be positive")
    return value if g is None else EdgeLengths.constant(g, value)


def cmd_metric(args) -> int:
    tol = _tolerances(args)
    if (args.graph is None) == (args.family is None):
        raise UsageError("give exactly one of GRAPH or --family")
    reports, inputs, extra = [], {}, {}
    if args.graph is not None:
        g = load_graph(args.graph)
        inputs[str(args.graph)] = file_digest(args.graph)
        lengths = _sigma(args, g)
        if lengths is not None:
            reports.append(check_strongly_intrinsic(g, lengths))
            D = path_pseudo_metric(g, lengths)
            reports.append(check_intrinsic(g, D))
            extra["jump_size"] = jump_size(g, D)
        extra["weighted_degree_max"] = float(weighted_degree(g).max()) if g.n else 0.0
        crit = criterion_report(g, sigma=lengths)
    else:
        try:
            family = FamilySpec.parse(args.family)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if not args.sizes:
            raise UsageError("--family needs --sizes")
        inputs["family"] = args.family
        crit = criterion_report(family=family, sizes=args.sizes, sigma=_sigma(args, None))
    wanted = args.criteria or list(crit.verdicts)
    unknown = [c for c in wanted if c not in crit.verdicts]
    if unknown:
        raise UsageError(f"unknown criteria {unknown}; choose from {sorted(crit.verdicts)}")
    verdicts = {c: crit.verdicts[c] for c in wanted}
    extra["criteria"] = dict(crit.to_dict(), verdicts=verdicts)
    failed = any(not r.passed for r in reports) or any(v == FAILS for v in verdicts.values())
    for r in reports:
        _say(r.summary() + ("" if r.passed else f" worst vertex {r.worst_case['vertex']} ratio {r.worst_case['ratio']:.12g}"))
    for c, v in verdicts.items():
        _say(f"criterion {c}: {v}")
    verdict = FAIL if failed else PASS
    _emit(_envelope("metric", args, tol, inputs, [r.to_dict() for r in reports], verdict, extra), args.out)
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formdom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"formdom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
        p.add_argument("--tol-domination", type=float, default=None)

    p = sub.add_parser("validate", help="check graph axioms and bundle invariants")
    p.add_argument("graph")
    p.add_argument("--bundle", default=None)
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dominate", help="semigroup domination, Kato and Beurling-Deny checks")
    p.add_argument("graph")
    p.add_argument("bundle")
    p.add_argument("--t-grid", type=_floats, default=list(DEFAULT_T_GRID))
    p.add_argument("--samples", type=int, default=25)
    common(p)
    p.set_defaults(func=cmd_dominate)

    p = sub.add_parser("probe", help="Dirichlet vs Neumann probe on growing truncations")
    p.add_argument("--family", required=True, help="e.g. path, path:m_profile=geometric,ratio=0.5")
    p.add_argument("--sizes", type=_ints, default=[25, 50, 100, 200, 400])
    p.add_argument("--phases", choices=("random", "trivial"), default="random")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--w", choices=("c", "c+random"), default="c")
    p.add_argument("--x0", type=int, default=0)
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--gap-threshold", type=float, default=1e-2)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory for probe.csv and probe.json")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("metric", help="intrinsic metric checks and uniqueness criteria")
    p.add_argument("graph", nargs="?")
    p.add_argument("--family", default=None)
    p.add_argument("--sizes", type=_ints, default=None)
    p.add_argument("--sigma", default=None, help="constant, 'auto', or a JSON file of edge lengths")
    p.add_argument("--criteria", type=lambda s: [c.strip() for c in s.split(",") if c.strip()], default=None)
    common(p)
    p.set_defaults(func=cmd_metric)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tol_domination", None) is not None and args.tol_domination < 0:
        parser.error("tolerance overrides must be >= 0")
    try:
        return args.func(args)
    except (InputError, UsageError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except UnitarityError as exc:
        _say(f"invariant violated: {exc}")
        return EXIT_FAIL
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        _say(f"computation failed: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
