#!/usr/bin/env python3
"""Figure generation from scan output files.

Renders the standard views of a coupling-plane sweep: the ground energy
surface with its classified separatrix overlay, the two fidelity fields,
ground-state density-matrix block images, the occupation simplex, the linear
entropy surface, and the two occupation pair sums.  Reads only the CSV/JSON
files written by the sweep tool; nothing is recomputed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402

SCHEMA = 1

KIND_STYLES = {
    "stable-continuous": dict(color="white", linestyle="-"),
    "discontinuous": dict(color="white", linestyle="--"),
    "unstable-continuous": dict(color="white", linestyle=":"),
}

# occupation pairs summed per named configuration, keyed by its edge set
PAIR_COLUMNS = {
    frozenset({(1, 2, 1), (2, 3, 2)}): (("p1", "p2"), ("p2", "p3")),
    frozenset({(1, 3, 1), (2, 3, 2)}): (("p1", "p3"), ("p2", "p3")),
    frozenset({(1, 2, 1), (1, 3, 2)}): (("p1", "p2"), ("p1", "p3")),
}


class SchemaError(Exception):
    pass


def read_table(path: str) -> list[dict]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SchemaError(f"cannot open {path}: {exc}") from exc
    with fh:
        first = fh.readline()
        if not first.startswith("# schema="):
            raise SchemaError(f"{path}: missing schema header")
        found = int(first.strip().split("=", 1)[1])
        if found != SCHEMA:
            raise SchemaError(f"{path}: schema {found} not supported")
        return list(csv.DictReader(fh))


def load_grid(rows: list[dict], column: str):
    """Pivot a long-form table into (x1 values, x2 values, 2-D array)."""
    x1 = sorted({float(r["x1"]) for r in rows})
    x2 = sorted({float(r["x2"]) for r in rows})
    i_of = {v: i for i, v in enumerate(x1)}
    j_of = {v: j for j, v in enumerate(x2)}
    z = np.full((len(x1), len(x2)), np.nan)
    for r in rows:
        z[i_of[float(r["x1"])], j_of[float(r["x2"])]] = float(r[column])
    return np.array(x1), np.array(x2), z


def _axes_labels(ax):
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")


def _heat(ax, x1, x2, z, cmap, label):
    mesh = ax.pcolormesh(x1, x2, z.T, cmap=cmap, shading="nearest")
    _axes_labels(ax)
    cbar = ax.figure.colorbar(mesh, ax=ax)
    cbar.set_label(label)
    return mesh


def _overlay_separatrix(ax, prefix, x1, x2) -> None:
    """Classified boundary elements as short segments, one style per kind.

    A point detected along an axis marks a boundary crossing between two
    neighbouring grid points, so the boundary element runs perpendicular to
    that axis, with the local grid step as its length.
    """
    points = read_table(f"{prefix}_separatrix.csv")
    step1 = float(np.min(np.diff(x1))) if len(x1) > 1 else 1.0
    step2 = float(np.min(np.diff(x2))) if len(x2) > 1 else 1.0
    for p in points:
        style = KIND_STYLES.get(p["kind"], dict(color="white", linestyle="-"))
        cx, cy = float(p["x1"]), float(p["x2"])
        if int(p["axis"]) == 1:
            seg = ([cx, cx], [cy - step2 / 2, cy + step2 / 2])
        else:
            seg = ([cx - step1 / 2, cx + step1 / 2], [cy, cy])
        ax.plot(*seg, linewidth=1.4, **style)
    handles = [
        plt.Line2D([], [], linewidth=1.4, label=kind, **style)
        for kind, style in KIND_STYLES.items()
    ]
    ax.legend(handles=handles, loc="upper right", fontsize="x-small",
              framealpha=0.6, labelcolor="black")


def render_surface(args) -> None:
    rows = read_table(f"{args.inp}_surface.csv")
    x1, x2, energy = load_grid(rows, "E_g")
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    _heat(ax, x1, x2, energy, args.cmap, "$E_g$")
    _overlay_separatrix(ax, args.inp, x1, x2)
    ax.set_title(args.title or "ground state energy")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


def render_fidelity(args) -> None:
    rows = read_table(f"{args.inp}_fidelity.csv")
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.0))
    for ax, column, label in zip(
        axes, ("F_along_x1", "F_along_x2"),
        ("$F$ along $x_1$", "$F$ along $x_2$"),
    ):
        x1, x2, f = load_grid(rows, column)
        _heat(ax, x1, x2, f, args.cmap, label)
    fig.suptitle(args.title or "neighbour fidelity")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


def _load_state(path: str) -> np.ndarray:
    rows = read_table(path)
    return np.array([float(r["amplitude"]) for r in rows])


def render_blocks(args) -> None:
    paths = args.inp.split(",")
    if len(paths) != 2:
        raise SchemaError("blocks needs --in stateA.csv,stateB.csv")
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.4))
    floor = args.floor
    for ax, path in zip(axes, paths):
        v = _load_state(path)
        rho = np.abs(np.outer(v, v))
        masked = np.ma.masked_less(rho, floor)
        mesh = ax.pcolormesh(
            masked, cmap=args.cmap,
            norm=LogNorm(vmin=floor, vmax=max(rho.max(), floor * 10)),
            shading="flat",
        )
        ax.invert_yaxis()
        ax.set_aspect("equal")
        ax.set_title(path.rsplit("/", 1)[-1])
        fig.colorbar(mesh, ax=ax, label=r"$|\rho_{ij}|$")
    fig.suptitle(args.title or f"density matrix magnitudes (floor {floor:g})")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


def render_simplex(args) -> None:
    rows = read_table(f"{args.inp}_simplex.csv")
    sx = np.array([float(r["sx"]) for r in rows])
    sy = np.array([float(r["sy"]) for r in rows])
    sl = np.array([float(r["S_L"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.4, 4.8))
    tri_x = [0.0, 1.0, 0.5, 0.0]
    tri_y = [0.0, 0.0, np.sqrt(3) / 2, 0.0]
    ax.plot(tri_x, tri_y, color="black", linewidth=1.0)
    sc = ax.scatter(sx, sy, c=sl, cmap=args.cmap, s=14)
    fig.colorbar(sc, ax=ax, label="$S_L$")
    ax.annotate("(1,0,0)", (0, 0), xytext=(-8, -12), textcoords="offset points")
    ax.annotate("(0,1,0)", (1, 0), xytext=(-8, -12), textcoords="offset points")
    ax.annotate("(0,0,1)", (0.5, np.sqrt(3) / 2), xytext=(-8, 6),
                textcoords="offset points")
    ax.set_aspect("equal")
    ax.set_axis_off()
    ax.set_title(args.title or "matter occupation simplex")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


def render_entropy(args) -> None:
    rows = read_table(f"{args.inp}_surface.csv")
    x1, x2, sl = load_grid(rows, "S_L")
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    _heat(ax, x1, x2, sl, args.cmap, "$S_L$")
    ax.set_title(args.title or "linear entropy")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


def _configuration_pairs(prefix: str):
    try:
        with open(f"{prefix}_meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"pairs needs {prefix}_meta.json: {exc}") from exc
    edges = frozenset(tuple(e) for e in meta.get("edges", ()))
    if edges not in PAIR_COLUMNS:
        raise SchemaError("no occupation pairs defined for this edge set")
    return PAIR_COLUMNS[edges]


def render_pairs(args) -> None:
    rows = read_table(f"{args.inp}_surface.csv")
    (a1, a2), (b1, b2) = _configuration_pairs(args.inp)
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.0))
    for ax, (ca, cb) in zip(axes, ((a1, a2), (b1, b2))):
        x1 = sorted({float(r["x1"]) for r in rows})
        x2 = sorted({float(r["x2"]) for r in rows})
        _, _, za = load_grid(rows, ca)
        _, _, zb = load_grid(rows, cb)
        _heat(ax, np.array(x1), np.array(x2), za + zb,
              args.cmap, f"${ca} + {cb}$")
    fig.suptitle(args.title or "occupation pair sums")
    fig.tight_layout()
    fig.savefig(args.out, dpi=args.dpi)


RENDERERS = {
    "surface": render_surface,
    "fidelity": render_fidelity,
    "blocks": render_blocks,
    "simplex": render_simplex,
    "entropy": render_entropy,
    "pairs": render_pairs,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        description="Render figures from sweep output files."
    )
    ap.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    ap.add_argument("--in", dest="inp", required=True,
                    help="input prefix (blocks: two state files, comma-separated)")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--cmap", default="viridis")
    ap.add_argument("--dpi", type=int, default=150)
    ap.add_argument("--floor", type=float, default=1e-3,
                    help="blocks: magnitudes below this are blank")
    ap.add_argument("--title", default=None)
    args = ap.parse_args(argv)
    try:
        RENDERERS[args.kind](args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
