"""Command-line front end: ``collapse-oracle <command> [flags]``.

Exit codes: 0 success, 2 usage/parse error, 3 degenerate input (result still
printed), 4 input invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .discrimination import (
    Effect,
    blind_guess_thresholds,
    helstrom,
    optimal_known_psi,
    reduce_dimension,
    rmax_2d_closed_form,
    rmax_bounds_known_psi,
    rmax_known_psi,
)
from .errors import CollapseOracleError, InvariantViolation, RankDeficient
from .model import (
    Basis,
    CollapseBasis,
    DensityMatrix,
    CollapseScenario,
    FactorSBasis,
    FactorTBasis,
    JointBasis,
    StateVector,
    Subspaces,
    Unsharp,
    array_from_json_dict,
    collapse_pair,
    make_stream,
    to_json_dict,
)
from .montecarlo import (
    CHUNK_SIZE,
    EFFECT_SAMPLERS,
    conjecture_bound,
    conjecture_scan,
    estimate_lambda,
    simulate_reliability,
)

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_INVALID = 0, 2, 3, 4

DEGENERATE_NOTE = (
    "psi is a single basis vector up to phase: collapse leaves it unchanged, "
    "so no experiment beats blind guessing (reliability max(p, 1-p))."
)


class UsageError(Exception):
    """Bad flag value or unparsable input file."""


# ------------------------------------------------------------------ parsing

def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` (endpoints included within half a step), comma list, or a single value."""
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = [float(x) for x in spec.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise UsageError(f"grid {spec!r} needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 0.5))
            values = [round(start + i * step, 12) for i in range(n + 1)]
        else:
            values = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {spec!r}") from None
    if not values:
        raise UsageError("empty grid")
    return values


def parse_p_grid(spec: str) -> list[float]:
    values = parse_grid(spec)
    if any(not 0.0 <= p <= 1.0 for p in values):
        raise UsageError(f"probabilities in {spec!r} must lie in [0, 1]")
    return values


def _load_json(path: str):
    path = path[1:] if path.startswith("@") else path
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def load_array(path: str) -> np.ndarray:
    try:
        return array_from_json_dict(_load_json(path))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def load_operators(path: str) -> list[np.ndarray]:
    obj = _load_json(path)
    items = obj.get("operators") if isinstance(obj, dict) else obj
    if not isinstance(items, list) or not items:
        raise UsageError(f"{path}: expected {{'operators': [...]}} or a list of matrices")
    try:
        return [array_from_json_dict(item) for item in items]
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def parse_psi(spec: str, dim: Optional[int]) -> StateVector:
    """Comma-separated |psi_k|^2 weights, ``uniform`` (with --dim) or ``@file.json``."""
    spec = spec.strip()
    if spec.startswith("@"):
        arr = load_array(spec)
        if arr.ndim != 1:
            raise UsageError(f"{spec} holds a matrix, not a state vector")
        return StateVector(arr)
    if spec == "uniform":
        if dim is None or dim < 2:
            raise UsageError("--psi uniform needs --dim >= 2")
        return StateVector.uniform(dim)
    try:
        weights = [float(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse psi spec {spec!r}") from None
    if len(weights) < 2 or any(w < 0 for w in weights) or sum(weights) <= 0:
        raise UsageError("psi weights must be >= 2 nonnegative numbers with positive sum")
    psi = StateVector.from_weights(weights)
    if dim is not None and dim != psi.dim:
        raise UsageError(f"--dim {dim} does not match {psi.dim} weights")
    return psi


def parse_blocks(spec: str, dim: int) -> Subspaces:
    try:
        blocks = [[int(k) for k in blk.split(",")] for blk in spec.split(";")]
    except ValueError:
        raise UsageError(f"cannot parse blocks {spec!r}; use e.g. '0,1;2'") from None
    if sorted(k for blk in blocks for k in blk) != list(range(dim)):
        raise UsageError(f"blocks {spec!r} must partition 0..{dim - 1}")
    return Subspaces.from_blocks(blocks, dim)


def load_basis(path: Optional[str], dim: int) -> CollapseBasis:
    if path is None:
        return CollapseBasis.standard(dim)
    arr = load_array(path)
    if arr.shape != (dim, dim):
        raise UsageError(f"basis in {path} has shape {arr.shape}, expected ({dim}, {dim})")
    return CollapseBasis(arr)


def parse_effect(spec: str, dim: int, p: float, psi: Optional[StateVector] = None) -> Effect:
    if spec.startswith("@"):
        arr = load_array(spec)
        if arr.shape != (dim, dim):
            raise UsageError(f"effect in {spec} has shape {arr.shape}, expected ({dim}, {dim})")
        return Effect(arr)
    if spec == "zero":
        return Effect.zero(dim)
    if spec == "identity":
        return Effect.identity(dim)
    if spec == "blind":
        return Effect.blind_guess(p, dim)
    if spec in ("opt", "complement"):
        if psi is None:
            raise UsageError(f"effect {spec!r} needs a known psi")
        if spec == "complement":
            return Effect.complement(psi)
        red = reduce_dimension(psi)
        if red.degenerate:
            return Effect.blind_guess(p, dim)
        return Effect(red.lift(optimal_known_psi(red.psi, p).e_opt.matrix))
    raise UsageError(f"unknown effect spec {spec!r}")


# ------------------------------------------------------------------ output

def _num(x) -> str:
    return repr(float(x))


def emit_rows(out, fmt: str, header: Sequence[str], rows: list[Sequence[float]], comments: Sequence[str] = ()) -> None:
    if fmt == "json":
        json.dump([dict(zip(header, map(float, r))) for r in rows], out, indent=1)
        out.write("\n")
        return
    for c in comments:
        out.write(f"# {c}\n")
    if fmt == "csv":
        writer = csv.writer(out)  # RFC 4180: CRLF line endings, minimal quoting
        writer.writerow(header)
        writer.writerows([[_num(x) for x in r] for r in rows])
        return
    width = max(12, *(len(h) for h in header))
    out.write("  ".join(h.rjust(width) for h in header) + "\n")
    for r in rows:
        out.write("  ".join(f"{float(x):.10f}".rjust(width) for x in r) + "\n")


def emit_record(out, fmt: str, record: dict) -> None:
    if fmt == "json":
        json.dump(record, out, indent=1)
        out.write("\n")
    elif fmt == "csv":
        writer = csv.writer(out)
        writer.writerow(["field", "value"])
        for key, val in record.items():
            writer.writerow([key, json.dumps(val) if isinstance(val, (dict, list)) else val])
    else:
        for key, val in record.items():
            if isinstance(val, dict) and "re" in val:
                val = _matrix_text(val)
            elif isinstance(val, (dict, list)):
                val = json.dumps(val)
            out.write(f"{key:>16}: {val}\n")


def _matrix_text(obj: dict) -> str:
    arr = array_from_json_dict(obj)
    arr = np.atleast_2d(arr)
    lines = ["[" + " ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in row) + "]" for row in arr]
    return ("\n" + " " * 18).join(lines)


# ------------------------------------------------------------------ commands

def cmd_rmax(args, out) -> int:
    psi = parse_psi(args.psi, args.dim)
    grid = parse_p_grid(args.p)
    red = reduce_dimension(psi)
    rows = []
    for p in grid:
        b = rmax_bounds_known_psi(psi, p)
        rows.append((p, rmax_known_psi(psi, p), b.lower, b.upper, b.delta_upper, max(p, 1 - p)))
    comments = []
    if args.gnuplot:
        comments = [
            "gnuplot: set datafile separator ','; set xlabel 'p'; set ylabel 'reliability'",
            "gnuplot: plot for [c=2:6] 'FILE' using 1:c skip 1 with lines title columnheader(c)",
        ]
    emit_rows(out, args.format or "csv", ["p", "r_max", "lower", "upper", "delta_upper", "blind_guess"], rows, comments)
    if red.degenerate:
        print(DEGENERATE_NOTE, file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_ellipse(args, out) -> int:
    grid = parse_grid(args.grid)
    if any(not 0.0 <= w <= 1.0 for w in grid):
        raise UsageError("|psi_1|^2 grid must lie in [0, 1]")
    p = args.p
    if not 0.0 <= p <= 1.0:
        raise UsageError("p must lie in [0, 1]")
    rows = [(w, rmax_2d_closed_form(StateVector.from_weights([w, 1 - w]), p)) for w in grid]
    comments = []
    if args.gnuplot:
        comments = ["gnuplot: set datafile separator ','; plot 'FILE' using 1:2 skip 1 with lines title 'r_max'"]
    emit_rows(out, args.format or "csv", ["psi1_sq", "r_max"], rows, comments)
    return EXIT_OK


def _thresholds(rho1, rho2) -> tuple[Optional[float], Optional[float], Optional[str]]:
    try:
        lo, hi = blind_guess_thresholds(rho1, rho2)
        return lo, hi, None
    except RankDeficient as exc:
        return None, None, str(exc)


def cmd_helstrom(args, out) -> int:
    rho1, rho2 = load_array(args.rho1), load_array(args.rho2)
    if rho1.ndim != 2 or rho2.ndim != 2:
        raise UsageError("helstrom expects two density-matrix files")
    res = helstrom(rho1, rho2, args.p)
    lo, hi, note = _thresholds(rho1, rho2)
    record = {
        "p": args.p,
        "r_max": res.r_max,
        "blind_guess": max(args.p, 1 - args.p),
        "lambda_plus": res.lambda_plus,
        "lambda_minus": res.lambda_minus,
        "p_lo": lo,
        "p_hi": hi,
        "e_opt": to_json_dict(res.e_opt.matrix),
    }
    if note:
        record["threshold_note"] = note
    emit_record(out, args.format or "table", record)
    return EXIT_OK


def _scenario_for(args, dim: int) -> CollapseScenario:
    if args.blocks and args.operators:
        raise UsageError("give either --blocks or --operators, not both")
    if args.blocks:
        return CollapseScenario(args.p, parse_blocks(args.blocks, dim))
    if args.operators:
        return CollapseScenario(args.p, Unsharp(tuple(load_operators(args.operators))))
    return CollapseScenario(args.p, Basis(load_basis(args.basis, dim)))


def cmd_simulate(args, out) -> int:
    psi = parse_psi(args.psi, args.dim)
    if not 0.0 <= args.p <= 1.0:
        raise UsageError("p must lie in [0, 1]")
    scenario = _scenario_for(args, psi.dim)
    effect = parse_effect(args.effect, psi.dim, args.p, psi)
    t0 = time.perf_counter()
    res = simulate_reliability(psi, scenario, effect, args.trials, args.seed)
    record = res.to_dict()
    record["meta"] = {"seed": args.seed, "chunk_size": CHUNK_SIZE, "wall_time_s": time.perf_counter() - t0}
    emit_record(out, args.format or "json", record)
    return EXIT_OK


def cmd_lambda(args, out) -> int:
    if args.dim < 2:
        raise UsageError("--dim must be at least 2")
    grid = parse_p_grid(args.p)
    if any(not 0.0 < p < 1.0 for p in grid):
        raise UsageError("lambda needs 0 < p < 1")
    t0 = time.perf_counter()
    if args.scan:
        rep = conjecture_scan(args.dim, grid, args.sampler, args.n_effects, args.samples, args.seed)
        record = rep.to_dict(include_estimates=args.verbose)
        record.pop("wall_time")
        record["note_half"] = (
            f"{len(rep.exceeds_half)} estimate(s) above 1/2" if rep.exceeds_half else "no estimate above 1/2"
        )
    else:
        if args.effect in EFFECT_SAMPLERS:
            effect = EFFECT_SAMPLERS[args.effect](args.dim, make_stream(args.seed, 5))
        else:
            effect = parse_effect(args.effect, args.dim, grid[0])
        estimates = [estimate_lambda(effect, p, args.samples, args.seed).to_dict() for p in grid]
        record = {
            "dim": args.dim,
            "conjecture_bound": conjecture_bound(args.dim),
            "estimates": estimates,
            "effect": to_json_dict(effect.matrix),
        }
    record["meta"] = {"seed": args.seed, "chunk_size": CHUNK_SIZE, "wall_time_s": time.perf_counter() - t0}
    emit_record(out, args.format or "json", record)
    return EXIT_OK


def cmd_scenario(args, out) -> int:
    state = load_array(args.state)
    ds, dt = args.dim_s, args.dim_t
    v = args.variant
    if v in (1, 2, 3) and (ds is None or dt is None):
        raise UsageError(f"variant {v} needs --dim-s and --dim-t")
    full = state.shape[0]
    if v == 1:
        structure = FactorSBasis(dt, load_basis(args.basis, ds))
    elif v == 2:
        structure = FactorTBasis(ds, load_basis(args.basis, dt))
    elif v == 3:
        structure = JointBasis(load_basis(args.basis, ds * dt), ds, dt)
    else:
        if args.blocks:
            structure = parse_blocks(args.blocks, full)
        elif args.operators:
            structure = Unsharp(tuple(load_operators(args.operators)))
        else:
            raise UsageError("variant 4 needs --blocks or --operators")
    scenario = CollapseScenario(args.p, structure)
    rho = StateVector(state).projector() if state.ndim == 1 else DensityMatrix(state).matrix
    rho1, rho2 = collapse_pair(rho, scenario)
    res = helstrom(rho1, rho2, args.p)
    record = {
        "variant": v,
        "p": args.p,
        "r_max": res.r_max,
        "blind_guess": max(args.p, 1 - args.p),
        "rho1": to_json_dict(rho1.matrix),
        "rho2": to_json_dict(rho2.matrix),
        "e_opt": to_json_dict(res.e_opt.matrix),
    }
    emit_record(out, args.format or "table", record)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    def global_flags(defaults: bool) -> argparse.ArgumentParser:
        # subcommands repeat the flags without defaults so values given before the command survive
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        g.add_argument("--seed", type=int, default=d(0), help="RNG seed (64-bit unsigned)")
        g.add_argument("--format", choices=["csv", "json", "table"], default=d(None))
        g.add_argument("--out", default=d(None), help="write output to this file instead of stdout")
        return g

    common = global_flags(False)
    parser = argparse.ArgumentParser(
        prog="collapse-oracle",
        description="Maximal reliability of experiments detecting wave-function collapse.",
        parents=[global_flags(True)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rmax", parents=[common], help="R_max(psi) and bounds over a p grid")
    p.add_argument("--psi", required=True, help="weights '0.2,0.8', 'uniform' or @file.json")
    p.add_argument("--dim", type=int)
    p.add_argument("--p", default="0:1:0.01", help="start:stop:step, list, or value")
    p.add_argument("--gnuplot", action="store_true", help="prefix a gnuplot script as comments")
    p.set_defaults(func=cmd_rmax)

    p = sub.add_parser("ellipse", parents=[common], help="d=2 R_max as a function of |psi_1|^2")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--grid", default="0:1:0.01")
    p.add_argument("--gnuplot", action="store_true")
    p.set_defaults(func=cmd_ellipse)

    p = sub.add_parser("helstrom", parents=[common], help="optimal discrimination of two density matrices")
    p.add_argument("rho1")
    p.add_argument("rho2")
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(func=cmd_helstrom)

    def scenario_flags(p):
        p.add_argument("--basis", help="collapse basis file (matrix JSON, columns = vectors)")
        p.add_argument("--blocks", help="orthogonal coordinate subspaces, e.g. '0,1;2'")
        p.add_argument("--operators", help="unsharp collapse operators file")

    p = sub.add_parser("simulate", parents=[common], help="simulate an experiment and count correct verdicts")
    p.add_argument("--psi", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--effect", default="opt", help="opt, complement, blind, zero, identity or @file.json")
    p.add_argument("--trials", type=int, default=100_000)
    scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lambda", parents=[common], help="sphere fraction where an effect beats blind guessing")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--p", default="0.3")
    p.add_argument("--effect", default="spectral", help="spectral, structured, zero, identity, blind or @file.json")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--scan", action="store_true", help="scan many random effects")
    p.add_argument("--n-effects", type=int, default=200)
    p.add_argument("--sampler", choices=["spectral", "structured", "mixed"], default="mixed")
    p.add_argument("--verbose", action="store_true", help="include every estimate in the scan report")
    p.set_defaults(func=cmd_lambda)

    p = sub.add_parser("scenario", parents=[common], help="entangled / subspace collapse variants")
    p.add_argument("--variant", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--state", required=True, help="state vector or density matrix JSON")
    p.add_argument("--dim-s", type=int)
    p.add_argument("--dim-t", type=int)
    p.add_argument("--p", type=float, required=True)
    scenario_flags(p)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_USAGE
    buf = io.StringIO(newline="")
    try:
        code = args.func(args, buf)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CollapseOracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
