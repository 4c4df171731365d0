"""Command-line interface: ``cbd validate|generate|analyze|sweep|witness``.

Exit codes: 0 ok, 1 I/O or parse error, 2 domain or validation error,
3 solver failure, 4 no witness found.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import CbdError, SolverFailure
from .generators import parity_system, product_system, random_system
from .measures import MEASURES, POSITIVITY_TOL, all_measures
from .system import System, validate_system

EXIT_OK, EXIT_IO, EXIT_DOMAIN, EXIT_SOLVER, EXIT_NO_WITNESS = 0, 1, 2, 3, 4


class UsageError(Exception):
    """Bad flag values found after argparse (exit 2)."""


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pair(text: str):
    if text == "all":
        return "all"
    parts = text.split(":")
    valid = set(MEASURES) | {f"cnt2_l{m}" for m in range(1, 33)}
    if len(parts) != 2 or parts[0] == parts[1] or not set(parts) <= valid:
        raise argparse.ArgumentTypeError(f"pair must be x:y with two distinct measures or 'all', got {text!r}")
    return tuple(parts)


def _read_system(path: str) -> System:
    """Load a system file; raises OSError/ValueError on I/O or parse problems."""
    return System.from_json(Path(path).read_text())


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------

def cmd_validate(args) -> int:
    system = _read_system(args.path)
    report = validate_system(system)
    if not report:
        print(f"OK {system.name or args.path}: {len(system.contents)} contents, {len(system.contexts)} contexts")
        return EXIT_OK
    for v in report:
        print(v)
    return EXIT_DOMAIN


def cmd_generate(args) -> int:
    shape = (args.order, args.rank)
    if args.family == "parity":
        if args.eps is None:
            raise UsageError("--family parity needs --eps")
        system = parity_system(shape, args.eps)
    elif args.family == "random":
        if args.seed is None:
            raise UsageError("--family random needs --seed")
        system = random_system(shape, args.seed)
    else:
        probs = args.p if args.p is not None else [0.5]
        system = product_system(shape, probs[0] if len(probs) == 1 else probs)
    system.check()
    _emit(system.to_json() + "\n", args.out)
    return EXIT_OK


def _g(v: float) -> float:
    return float(format(v, ".12g"))


def analysis_dict(system: System, rep) -> dict:
    """Machine-readable analysis using the CSV column vocabulary."""
    out = {"system": system.name}
    for key, v in rep.as_row().items():
        out[key] = _g(v) if isinstance(v, float) else v
    out["tol"] = rep.tol
    out["diagnostics"] = list(rep.diagnostics)
    return out


def cmd_analyze(args) -> int:
    system = _read_system(args.path)
    rep = all_measures(system, tol=args.tol, max_slots=args.max_slots)
    data = analysis_dict(system, rep)
    if args.format == "json":
        print(json.dumps(data, indent=2))
    else:
        print(f"system      {system.name}")
        for key, v in data.items():
            if key in ("system", "diagnostics", "tol", "contextual"):
                continue
            print(f"{key:<11} {'NONE' if v is None else harness._fmt(v)}")
        print(f"T (cnt3+1)  {harness._fmt(_g(rep.total_variation))}")
        print(f"M (1-cntf)  {harness._fmt(_g(rep.mass))}")
        print("verdict     " + ("contextual" if rep.contextual else "noncontextual"))
        for msg in rep.diagnostics:
            print(msg)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.family == "parity":
        if args.grid_coords is not None:
            records = harness.sweep_parity(args.order, args.rank, "grid",
                                           grid_coords=[c - 1 for c in args.grid_coords],
                                           grid_points=args.grid_points, fixed=args.fixed,
                                           workers=args.workers, tol=args.tol, max_slots=args.max_slots)
        else:
            records = harness.sweep_parity(args.order, args.rank, "random", count=args.count, seed=args.seed,
                                           workers=args.workers, tol=args.tol, max_slots=args.max_slots)
    else:
        records = harness.sweep_random(args.order, args.rank, args.count, args.seed,
                                       workers=args.workers, tol=args.tol, max_slots=args.max_slots)
    text = harness.csv_text(records, "records")
    _emit(text, args.out)
    if args.svg:
        x, y = args.svg_pair
        harness.scatter_svg(records, x, y, args.svg)
    if args.out:
        print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_witness(args) -> int:
    records = harness.read_csv(args.input)
    pairs = harness.measure_pairs() if args.pair == "all" else [args.pair]
    found = []
    for pair in pairs:
        ws = harness.find_witnesses(records, pair, args.eps_hold, args.delta, args.limit)
        print(f"{pair[0]} held, {pair[1]} varied: {len(ws)} witness pair(s)"
              + (f" (capped at {args.limit})" if args.limit is not None and len(ws) >= args.limit else ""),
              file=sys.stderr)
        found.append(ws)
    _emit(harness.csv_text([w for ws in found for w in ws], "witnesses"), args.out)
    return EXIT_OK if all(found) else EXIT_NO_WITNESS


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbd", description="Contextuality measures for systems of binary random variables.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=float, default=POSITIVITY_TOL, help="positivity tolerance (default 1e-7)")
        sp.add_argument("--max-slots", type=int, default=None,
                        help="cap on binary slots in the outcome space (env CBD_MAX_SLOTS, default 24)")

    v = sub.add_parser("validate", help="check a system file")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("generate", help="write a generated system as JSON")
    g.add_argument("--family", choices=("parity", "random", "product"), required=True)
    g.add_argument("--order", type=int, required=True)
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--eps", type=_floats, help="parity eps values, one per context")
    g.add_argument("--seed", type=int)
    g.add_argument("--p", type=_floats, help="product Pr(R=1): one value or one per content (default 0.5)")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="compute all measures of a system file")
    a.add_argument("path")
    a.add_argument("--format", choices=("text", "json"), default="text")
    common(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="tabulate measures over a system family")
    s.add_argument("--family", choices=("parity", "random"), required=True)
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid-coords", type=_ints, help="parity grid mode: 1-based eps coordinates to vary (1 or 2)")
    s.add_argument("--grid-points", type=int, default=9)
    s.add_argument("--fixed", type=_floats, help="parity grid mode: values of the other eps coordinates")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--svg", help="also write a scatter plot of --svg-pair")
    s.add_argument("--svg-pair", type=_pair, default=("cnt1", "cnt3"))
    common(s)
    s.set_defaults(func=cmd_sweep)

    w = sub.add_parser("witness", help="search a sweep CSV for non-functionality witnesses")
    w.add_argument("--in", dest="input", required=True)
    w.add_argument("--pair", type=_pair, default="all", help="x:y (x held, y varied) or 'all' for every orientation")
    w.add_argument("--eps-hold", type=float, default=harness.DEFAULT_EPS_HOLD)
    w.add_argument("--delta", type=float, default=harness.DEFAULT_DELTA_VARY)
    w.add_argument("--limit", type=int, default=1000, help="max witnesses per orientation")
    w.add_argument("--out")
    w.set_defaults(func=cmd_witness)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "svg_pair", None) == "all":
        parser.error("--svg-pair takes x:y")
    try:
        return args.func(args)
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CbdError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
