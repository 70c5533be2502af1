"""Command-line interface: grid scans, point queries, dimension tables.

Outputs are deterministic: CSV columns are fixed, floats are printed with 12
significant digits, and a scan writes a metadata file from which it can be
rerun bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__, observables
from .basis import (
    BlockLabel,
    ParityKey,
    SectorKey,
    enumerate_rwa_sector,
    sector_dimension_formula,
)
from .model import (
    CouplingPoint,
    CouplingTopology,
    LevelScheme,
    ModelSpec,
    ModeSet,
    load_model_file,
    preset,
    symmetry_generators,
)
from .phase_diagram import (
    GridSpec,
    ScanResult,
    Thresholds,
    bures_distance,
    default_labels,
    detect_separatrix,
    scan_ground,
)
from .solver import (
    BlockCache,
    NonConvergenceError,
    SolverSettings,
    ground_over_blocks,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SCHEMA = 1


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.12g}"


def format_label(label: BlockLabel | None) -> str:
    return "" if label is None else str(label)


def parse_label(text: str) -> BlockLabel:
    if ":" in text:
        return SectorKey(tuple(int(t) for t in text.split(":")))
    return ParityKey.from_label(text)


class ConfigError(Exception):
    pass


def _resolve_spec(args: argparse.Namespace) -> ModelSpec:
    if getattr(args, "model_file", None):
        try:
            return load_model_file(args.model_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load model file: {exc}") from exc
    if getattr(args, "config", None):
        try:
            return preset(args.config, args.na)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("either --config or --model-file is required")


def _parse_axis(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"axis must be start:stop:count, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad axis {text!r}: {exc}") from exc


def _settings_from_args(args: argparse.Namespace) -> SolverSettings:
    return SolverSettings(
        fidelity_tol=args.fidelity_tol,
        energy_tol=args.energy_tol,
        dense_threshold=args.dense_threshold,
        start_cutoff=args.start_cutoff,
        max_cutoff=args.max_cutoff,
    )


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", choices=["xi", "lambda", "v"],
                   help="named three-level configuration preset")
    p.add_argument("--model-file", help="model description file")
    p.add_argument("--na", type=int, default=1, help="number of atoms")
    p.add_argument("--model", choices=["rwa", "dicke"], default="dicke",
                   help="conserving (rwa) or full (dicke) model")


def _add_solver_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fidelity-tol", type=float, default=1e-10)
    p.add_argument("--energy-tol", type=float, default=1e-8)
    p.add_argument("--dense-threshold", type=int, default=500,
                   help="largest dimension solved with the dense eigensolver")
    p.add_argument("--start-cutoff", type=int, default=6)
    p.add_argument("--max-cutoff", type=int, default=200)
    p.add_argument("--kmax", type=int, nargs=2, default=(12, 12),
                   metavar=("K1MAX", "K2MAX"),
                   help="sector bounds for the conserving model")


def _add_threshold_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta-disc", type=float, default=1e-6,
                   help="fidelity at or below this is a discontinuous transition")
    p.add_argument("--theta-unstable", type=float, default=0.5,
                   help="fidelity at or below this is unstable-continuous")
    p.add_argument("--min-drop", type=float, default=1e-3,
                   help="smallest 1-F counted as a fidelity minimum")


# ---------------------------------------------------------------- scan


def _write_surface(path: str, spec: ModelSpec, scan: ScanResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(
            ["x1", "x2", "E_g", "label", "parity"]
            + [f"p{k}" for k in range(1, spec.n + 1)]
            + ["S_L", "status"]
        )
        for i in range(scan.grid.n1):
            for j in range(scan.grid.n2):
                w.writerow(
                    [_fmt(scan.x1[i]), _fmt(scan.x2[j]), _fmt(scan.energy[i, j]),
                     format_label(scan.labels[i][j]), format_label(scan.parities[i][j])]
                    + [_fmt(p) for p in scan.probs[i, j]]
                    + [_fmt(scan.entropy[i, j]), scan.status[i][j]]
                )


def _write_fidelity(path: str, scan: ScanResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "F_along_x1", "F_along_x2"])
        for i in range(scan.grid.n1):
            for j in range(scan.grid.n2):
                w.writerow(
                    [_fmt(scan.x1[i]), _fmt(scan.x2[j]),
                     _fmt(scan.fidelity_x1[i, j]), _fmt(scan.fidelity_x2[i, j])]
                )


def _write_separatrix(path: str, points) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "kind", "parity_change", "axis", "fidelity"])
        for p in points:
            w.writerow(
                [_fmt(p.x1), _fmt(p.x2), p.kind, int(p.parity_change),
                 p.axis, _fmt(p.fidelity)]
            )


def _write_simplex(path: str, scan: ScanResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "p1", "p2", "p3", "sx", "sy", "S_L"])
        for i in range(scan.grid.n1):
            for j in range(scan.grid.n2):
                p = scan.probs[i, j]
                if np.any(np.isnan(p)):
                    sx, sy = float("nan"), float("nan")
                else:
                    sx, sy = observables.simplex_coords(tuple(p))
                w.writerow(
                    [_fmt(scan.x1[i]), _fmt(scan.x2[j])]
                    + [_fmt(q) for q in p]
                    + [_fmt(sx), _fmt(sy), _fmt(scan.entropy[i, j])]
                )


def _meta_dict(args: argparse.Namespace, spec: ModelSpec, jobs: int) -> dict:
    return {
        "schema": SCHEMA,
        "version": __version__,
        "levels": list(spec.levels.omegas),
        "modes": list(spec.modes.Omegas),
        "edges": [list(e) for e in spec.topology.edges],
        "Na": spec.Na,
        "model": args.model,
        "x1": list(args.x1),
        "x2": list(args.x2),
        "kmax": list(args.kmax),
        "fidelity_tol": args.fidelity_tol,
        "energy_tol": args.energy_tol,
        "dense_threshold": args.dense_threshold,
        "start_cutoff": args.start_cutoff,
        "max_cutoff": args.max_cutoff,
        "theta_disc": args.theta_disc,
        "theta_unstable": args.theta_unstable,
        "min_drop": args.min_drop,
        "jobs": jobs,
    }


def _job_count(args: argparse.Namespace) -> int:
    env = os.environ.get("QPD_THREADS")
    if env:
        return max(1, int(env))
    if args.jobs == 0:
        return max(1, os.cpu_count() or 1)
    return max(1, args.jobs)


def cmd_scan(args: argparse.Namespace) -> int:
    if args.from_meta:
        try:
            with open(args.from_meta, encoding="utf-8") as fh:
                meta = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load metadata: {exc}") from exc
        return _run_scan_from_meta(meta, args.out)

    jobs = _job_count(args)
    spec = _resolve_spec(args)
    default_n = 101 if args.full else 21
    args.x1 = _parse_axis(args.x1_spec) if args.x1_spec else (0.0, 5.0, default_n)
    args.x2 = _parse_axis(args.x2_spec) if args.x2_spec else (0.0, 5.0, default_n)
    meta = _meta_dict(args, spec, jobs)

    if args.na_series:
        rc = EXIT_OK
        for na in args.na_series:
            sub = dict(meta)
            sub["Na"] = na
            rc = max(rc, _run_scan_from_meta(sub, f"{args.out}_na{na}"))
        return rc
    return _run_scan_from_meta(meta, args.out)


def _run_scan_from_meta(meta: dict, out_prefix: str) -> int:
    spec = ModelSpec(
        levels=LevelScheme(tuple(meta["levels"])),
        modes=ModeSet(tuple(meta["modes"])),
        topology=CouplingTopology(tuple(tuple(e) for e in meta["edges"])),
        Na=int(meta["Na"]),
    )
    generators = symmetry_generators(spec.topology, spec.n, spec.ell)
    grid = GridSpec(
        x1_range=(meta["x1"][0], meta["x1"][1]),
        x2_range=(meta["x2"][0], meta["x2"][1]),
        n1=int(meta["x1"][2]),
        n2=int(meta["x2"][2]),
        model=meta["model"],
    )
    settings = SolverSettings(
        fidelity_tol=meta["fidelity_tol"],
        energy_tol=meta["energy_tol"],
        dense_threshold=int(meta["dense_threshold"]),
        start_cutoff=int(meta["start_cutoff"]),
        max_cutoff=int(meta["max_cutoff"]),
    )
    thresholds = Thresholds(
        disc=meta["theta_disc"],
        unstable=meta["theta_unstable"],
        min_drop=meta["min_drop"],
    )

    scan = scan_ground(
        spec, generators, grid, settings=settings, kmax=tuple(meta["kmax"]),
        jobs=int(meta.get("jobs", 1)),
    )
    points = detect_separatrix(scan, thresholds)

    _write_surface(f"{out_prefix}_surface.csv", spec, scan)
    _write_fidelity(f"{out_prefix}_fidelity.csv", scan)
    _write_separatrix(f"{out_prefix}_separatrix.csv", points)
    if spec.n == 3:
        _write_simplex(f"{out_prefix}_simplex.csv", scan)
    with open(f"{out_prefix}_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if scan.failures:
        for i, j, msg in scan.failures:
            print(f"point ({scan.x1[i]:g}, {scan.x2[j]:g}): {msg}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------- point


def _solve_point(spec, generators, model, values, settings, kmax):
    labels = default_labels(spec, generators, model, kmax)
    point = CouplingPoint.from_values(spec, values)
    return ground_over_blocks(spec, generators, point, labels, settings=settings)


def _dump_state(path: str, sol) -> None:
    """Ground vector with its basis labels; rows follow the block ordering."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.writer(fh)
        nmodes = len(sol.basis.cutoff)
        nlev = len(sol.basis.states[0].b) if sol.basis.states else 0
        w.writerow(
            ["index"]
            + [f"nu{s+1}" for s in range(nmodes)]
            + [f"b{k+1}" for k in range(nlev)]
            + ["amplitude"]
        )
        for i, st in enumerate(sol.basis.states):
            w.writerow([i, *st.nu, *st.b, _fmt(float(sol.vector[i]))])


def cmd_point(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args)
    generators = symmetry_generators(spec.topology, spec.n, spec.ell)
    settings = _settings_from_args(args)
    kmax = tuple(args.kmax)

    try:
        minimum = _solve_point(spec, generators, args.model, args.x, settings, kmax)
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    sol = minimum.solution
    rho = observables.reduced_matter(sol)

    print(f"x = ({_fmt(args.x[0])}, {_fmt(args.x[1])})")
    print(f"E_g = {_fmt(sol.energy)}")
    print(f"label = {format_label(sol.label)}  parity = {format_label(sol.parity)}")
    print(f"cutoff = {sol.cutoff}  dim = {sol.basis.dim}")
    print("p = " + " ".join(_fmt(p) for p in rho.probs))
    print(f"S_L = {_fmt(observables.linear_entropy(rho))}")
    if len(minimum.ties) > 1:
        print("degenerate with: " + " ".join(map(format_label, minimum.ties)))

    if args.amplitudes:
        print(f"amplitudes >= {args.amp_threshold:g}:")
        order = np.argsort(-np.abs(sol.vector))
        for idx in order:
            amp = float(sol.vector[idx])
            if abs(amp) < args.amp_threshold:
                break
            st = sol.basis.states[idx]
            print(f"  |{','.join(map(str, st.nu))};{','.join(map(str, st.b))}>  {_fmt(amp)}")

    if args.dump_matrix:
        cache = BlockCache(spec, generators)
        ops = cache.block(sol.label, sol.cutoff)
        op = ops.assemble(spec, CouplingPoint.from_values(spec, args.x))
        with open(args.dump_matrix, "w", encoding="utf-8") as fh:
            op.dump(fh)
        print(f"matrix written to {args.dump_matrix}")

    if args.dump_state:
        _dump_state(args.dump_state, sol)
        print(f"state written to {args.dump_state}")

    if args.pair:
        try:
            other = _solve_point(spec, generators, args.model, args.pair, settings, kmax)
        except NonConvergenceError as exc:
            print(f"solver did not converge: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        metrics = bures_distance(sol, other.solution)
        print(f"pair x = ({_fmt(args.pair[0])}, {_fmt(args.pair[1])})")
        print(f"pair E_g = {_fmt(other.solution.energy)}  label = "
              f"{format_label(other.solution.label)}")
        print(f"Tr rhoA rhoB = {_fmt(metrics.tr_product)}")
        print(f"D_B = {_fmt(metrics.bures)}")
        if args.dump_state_pair:
            _dump_state(args.dump_state_pair, other.solution)
            print(f"pair state written to {args.dump_state_pair}")
    return EXIT_OK


# ---------------------------------------------------------------- dims


def cmd_dims(args: argparse.Namespace) -> int:
    if not args.config:
        print("dims requires --config (closed forms exist only for the named "
              "configurations)", file=sys.stderr)
        return EXIT_CONFIG
    spec = preset(args.config, args.na)
    generators = symmetry_generators(spec.topology, spec.n, spec.ell)
    mismatches = 0
    print(f"# config={args.config} Na={args.na}")
    print("k1 k2 formula enumerated status")
    for k1 in range(args.kmax_dims + 1):
        for k2 in range(args.kmax_dims + 1):
            key = SectorKey((k1, k2))
            formula = sector_dimension_formula(args.config, key, args.na)
            cap = k1 + k2 + args.na + 2
            enum = enumerate_rwa_sector(spec, generators, key, (cap, cap)).dim
            status = "OK" if formula == enum else "MISMATCH"
            mismatches += status != "OK"
            print(f"{k1} {k2} {formula} {enum} {status}")
    if mismatches:
        print(f"{mismatches} mismatching cells", file=sys.stderr)
        return 1
    return EXIT_OK


# ---------------------------------------------------------------- classify


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema="):
            raise ConfigError(f"{path}: missing schema header")
        if int(first.strip().split("=", 1)[1]) != SCHEMA:
            raise ConfigError(f"{path}: unsupported schema {first.strip()!r}")
        return list(csv.DictReader(fh))


def cmd_classify(args: argparse.Namespace) -> int:
    try:
        surface = _read_csv(f"{args.inp}_surface.csv")
        fidelity = _read_csv(f"{args.inp}_fidelity.csv")
    except OSError as exc:
        raise ConfigError(str(exc)) from exc

    x1 = sorted({float(r["x1"]) for r in surface})
    x2 = sorted({float(r["x2"]) for r in surface})
    n1, n2 = len(x1), len(x2)
    i_of = {v: i for i, v in enumerate(x1)}
    j_of = {v: j for j, v in enumerate(x2)}

    labels: list[list[BlockLabel | None]] = [[None] * n2 for _ in range(n1)]
    parities: list[list[BlockLabel | None]] = [[None] * n2 for _ in range(n1)]
    nprob = sum(1 for k in surface[0] if k.startswith("p"))
    for r in surface:
        i, j = i_of[float(r["x1"])], j_of[float(r["x2"])]
        labels[i][j] = parse_label(r["label"]) if r["label"] else None
        parities[i][j] = parse_label(r["parity"]) if r["parity"] else None
    f1 = np.full((n1, n2), np.nan)
    f2 = np.full((n1, n2), np.nan)
    for r in fidelity:
        i, j = i_of[float(r["x1"])], j_of[float(r["x2"])]
        f1[i, j] = float(r["F_along_x1"])
        f2[i, j] = float(r["F_along_x2"])

    grid = GridSpec((x1[0], x1[-1]), (x2[0], x2[-1]), n1, n2)
    scan = ScanResult(
        grid=grid, x1=np.array(x1), x2=np.array(x2),
        energy=np.zeros((n1, n2)), labels=labels, parities=parities,
        probs=np.zeros((n1, n2, nprob)), entropy=np.zeros((n1, n2)),
        cutoffs=[[None] * n2 for _ in range(n1)],
        fidelity_x1=f1, fidelity_x2=f2,
        status=[["ok"] * n2 for _ in range(n1)],
    )
    thresholds = Thresholds(args.theta_disc, args.theta_unstable, args.min_drop)
    points = detect_separatrix(scan, thresholds)
    out = args.out or args.inp
    _write_separatrix(f"{out}_separatrix.csv", points)
    print(f"{len(points)} separatrix points -> {out}_separatrix.csv")
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qpd",
        description="Finite-size quantum phase diagrams of multilevel atoms "
                    "coupled to cavity field modes",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("scan", help="sweep the coupling plane")
    _add_model_options(ps)
    _add_solver_options(ps)
    _add_threshold_options(ps)
    ps.add_argument("--x1", dest="x1_spec", metavar="A:B:N",
                    help="first axis as start:stop:count")
    ps.add_argument("--x2", dest="x2_spec", metavar="A:B:N",
                    help="second axis as start:stop:count")
    ps.add_argument("--out", required=True, help="output file prefix")
    ps.add_argument("--full", action="store_true",
                    help="default axes at figure resolution (101 points)")
    ps.add_argument("--na-series", type=int, nargs="+", metavar="NA",
                    help="repeat the scan for several atom counts")
    ps.add_argument("--from-meta", help="rerun a scan from its metadata file")
    ps.add_argument("--jobs", type=int, default=0,
                    help="worker processes per row; 0 means all cores, 1 "
                         "forces serial (QPD_THREADS overrides)")
    ps.set_defaults(func=cmd_scan)

    pp = sub.add_parser("point", help="ground state at one coupling point")
    _add_model_options(pp)
    _add_solver_options(pp)
    pp.add_argument("--x", type=float, nargs=2, required=True,
                    metavar=("X1", "X2"))
    pp.add_argument("--pair", type=float, nargs=2, metavar=("X1", "X2"),
                    help="second point; reports overlap and Bures distance")
    pp.add_argument("--amplitudes", action="store_true",
                    help="print dominant basis amplitudes")
    pp.add_argument("--amp-threshold", type=float, default=1e-3)
    pp.add_argument("--dump-matrix", metavar="FILE",
                    help="write the winning block Hamiltonian as triplets")
    pp.add_argument("--dump-state", metavar="FILE",
                    help="write the ground vector with basis labels")
    pp.add_argument("--dump-state-pair", metavar="FILE",
                    help="write the pair ground vector with basis labels")
    pp.set_defaults(func=cmd_point)

    pd = sub.add_parser("dims", help="closed-form sector dimensions vs enumeration")
    pd.add_argument("--config", choices=["xi", "lambda", "v"])
    pd.add_argument("--na", type=int, default=1)
    pd.add_argument("--kmax", dest="kmax_dims", type=int, default=6)
    pd.set_defaults(func=cmd_dims)

    pc = sub.add_parser("classify", help="re-threshold an existing scan")
    pc.add_argument("--in", dest="inp", required=True, help="input file prefix")
    pc.add_argument("--out", help="output prefix (default: input prefix)")
    _add_threshold_options(pc)
    pc.set_defaults(func=cmd_classify)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
