"""Control-plane scans, fidelity fields, separatrix detection, derivatives.

A scan sweeps the two coupling strengths over a rectangular grid, records the
block-resolved ground state at every point, and compares neighbouring ground
states through their squared overlap.  Minima of that overlap field locate
the transitions; their depth classifies them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import observables
from .basis import BlockLabel, Cutoff, ParityKey, SectorKey, all_parity_keys
from .model import CouplingPoint, Edge, ModelSpec, SymmetryGenerator
from .solver import (
    BlockCache,
    BlockMinimum,
    GroundSolution,
    NonConvergenceError,
    SolverSettings,
    ground_over_blocks,
    label_sort_key,
    overlap,
)

RWA = "rwa"
DICKE = "dicke"

DISCONTINUOUS = "discontinuous"
STABLE_CONTINUOUS = "stable-continuous"
UNSTABLE_CONTINUOUS = "unstable-continuous"


class DegenerateGroundError(RuntimeError):
    """The ground state is degenerate, so the energy derivative is undefined."""


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid over the two dimensionless coupling strengths."""

    x1_range: tuple[float, float]
    x2_range: tuple[float, float]
    n1: int
    n2: int
    model: str = DICKE

    def __post_init__(self) -> None:
        if self.model not in (RWA, DICKE):
            raise ValueError(f"model must be '{RWA}' or '{DICKE}', got {self.model!r}")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("need at least two points along each axis")
        for lo, hi in (self.x1_range, self.x2_range):
            if lo < 0 or hi <= lo:
                raise ValueError(f"invalid axis range ({lo}, {hi})")

    def x1_values(self) -> np.ndarray:
        return np.linspace(*self.x1_range, self.n1)

    def x2_values(self) -> np.ndarray:
        return np.linspace(*self.x2_range, self.n2)


@dataclass(frozen=True)
class TransitionClass:
    kind: str
    parity_change: bool

    def __post_init__(self) -> None:
        if self.kind not in (DISCONTINUOUS, STABLE_CONTINUOUS, UNSTABLE_CONTINUOUS):
            raise ValueError(f"unknown transition kind {self.kind!r}")
        if self.parity_change and self.kind != DISCONTINUOUS:
            raise ValueError("a parity change forces a discontinuous transition")


@dataclass(frozen=True)
class SeparatrixPoint:
    """Midpoint of a grid segment where the ground state changes character."""

    x1: float
    x2: float
    kind: str
    parity_change: bool
    axis: int          # 1 or 2: scan direction that detected the point
    fidelity: float    # overlap^2 across the segment


@dataclass
class Thresholds:
    """Classification thresholds on the segment fidelity."""

    disc: float = 1e-6       # at or below: discontinuous
    unstable: float = 0.5    # at or below: unstable-continuous
    min_drop: float = 1e-3   # minimum 1-F for a minimum to count at all


@dataclass
class ScanResult:
    """Per-point ground data plus the fidelity fields of both directions.

    Arrays are indexed [i, j] with i along the first coupling and j along the
    second.  The fidelity along an axis is stored at the lower point of each
    segment; the last slice along that axis is NaN.
    """

    grid: GridSpec
    x1: np.ndarray
    x2: np.ndarray
    energy: np.ndarray
    labels: list[list[BlockLabel | None]]
    parities: list[list[ParityKey | None]]
    probs: np.ndarray
    entropy: np.ndarray
    cutoffs: list[list[Cutoff | None]]
    fidelity_x1: np.ndarray
    fidelity_x2: np.ndarray
    status: list[list[str]]
    separatrix: list[SeparatrixPoint] = field(default_factory=list)
    # largest matter coherence per point; identically zero for one atom
    rho_offdiag: np.ndarray | None = None

    @property
    def failures(self) -> list[tuple[int, int, str]]:
        return [
            (i, j, st)
            for i, row in enumerate(self.status)
            for j, st in enumerate(row)
            if st != "ok"
        ]


def default_labels(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    model: str,
    kmax: tuple[int, int] = (12, 12),
) -> list[BlockLabel]:
    """Blocks to minimize over: candidate sectors (conserving model) or all
    parity blocks (full model)."""
    if model == RWA:
        config = spec.configuration
        if config is None:
            raise ValueError(
                "no candidate-sector rule for this topology; pass labels explicitly"
            )
        from .basis import gtcm_candidate_sectors

        return list(gtcm_candidate_sectors(config, kmax[0], kmax[1], spec.Na))
    return list(all_parity_keys(len(generators)))


def _point_scalars(minimum: BlockMinimum):
    sol = minimum.solution
    rho = observables.reduced_matter(sol)
    return (
        sol.energy,
        sol.label,
        sol.parity,
        rho.probs,
        observables.linear_entropy(rho),
        sol.cutoff,
        rho.max_offdiagonal(),
    )


_WORKER_CTX: dict = {}


def _scan_worker_init(spec, generators, labels, settings) -> None:
    _WORKER_CTX["spec"] = spec
    _WORKER_CTX["generators"] = generators
    _WORKER_CTX["labels"] = labels
    _WORKER_CTX["settings"] = settings
    _WORKER_CTX["cache"] = BlockCache(spec, generators)


def _scan_worker_point(xy: tuple[float, float], starts: dict):
    """Solve one grid point in a worker; returns the minimum or an error."""
    spec = _WORKER_CTX["spec"]
    try:
        minimum = ground_over_blocks(
            spec, _WORKER_CTX["generators"],
            CouplingPoint.from_values(spec, xy),
            _WORKER_CTX["labels"],
            settings=_WORKER_CTX["settings"],
            cache=_WORKER_CTX["cache"],
            start_cutoffs=starts,
        )
        block_cutoffs = {s.label: s.cutoff for s in minimum.solutions}
        minimum.solutions = []  # vectors are not shipped back
        return minimum, block_cutoffs, None
    except NonConvergenceError as exc:
        return None, {}, str(exc)


def scan_ground(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    grid: GridSpec,
    labels: Sequence[BlockLabel] | None = None,
    settings: SolverSettings | None = None,
    kmax: tuple[int, int] = (12, 12),
    jobs: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> ScanResult:
    """Sweep the grid, recording ground data and both fidelity fields.

    The sweep runs row by row (row = fixed second coupling); only the
    previous row of state vectors is kept, which bounds memory while letting
    both fidelity directions be filled in one pass.  With ``jobs > 1`` the
    points of a row are solved by a process pool; results are collected in
    grid order, so the output does not depend on scheduling.  Solver failures
    are recorded per point (status column) instead of aborting the sweep.
    """
    settings = settings or SolverSettings()
    if labels is None:
        labels = default_labels(spec, generators, grid.model, kmax)
    labels = sorted(labels, key=label_sort_key)
    cache = BlockCache(spec, generators)

    x1 = grid.x1_values()
    x2 = grid.x2_values()
    n1, n2 = grid.n1, grid.n2
    energy = np.full((n1, n2), np.nan)
    probs = np.full((n1, n2, spec.n), np.nan)
    entropy = np.full((n1, n2), np.nan)
    f1 = np.full((n1, n2), np.nan)
    f2 = np.full((n1, n2), np.nan)
    lab: list[list[BlockLabel | None]] = [[None] * n2 for _ in range(n1)]
    par: list[list[ParityKey | None]] = [[None] * n2 for _ in range(n1)]
    cuts: list[list[Cutoff | None]] = [[None] * n2 for _ in range(n1)]
    offdiag = np.full((n1, n2), np.nan)
    status = [["ok"] * n2 for _ in range(n1)]

    # Warm starts per block: converged caps propagate from the same column of
    # the previous row and (serially) the previous column of this row, and
    # the previous point's block states seed the iterative eigensolver.
    warm: list[dict[BlockLabel, Cutoff]] = [dict() for _ in range(n1)]

    executor = None
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        executor = ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_scan_worker_init,
            initargs=(spec, tuple(generators), tuple(labels), settings),
        )

    def solve_row(j: int) -> list[BlockMinimum | None]:
        minima: list[BlockMinimum | None] = [None] * n1
        if executor is not None:
            futures = []
            for i in range(n1):
                xy = (float(x1[i]), float(x2[j]))
                futures.append(executor.submit(_scan_worker_point, xy, dict(warm[i])))
            for i, fut in enumerate(futures):
                minimum, block_cutoffs, err = fut.result()
                if err is not None:
                    status[i][j] = f"nonconverged: {err}"
                else:
                    warm[i].update(block_cutoffs)
                    minima[i] = minimum
            return minima
        guesses: dict[BlockLabel, GroundSolution] = {}
        for i in range(n1):
            point = CouplingPoint.from_values(spec, (float(x1[i]), float(x2[j])))
            starts = dict(warm[i])
            if i > 0:
                for lbl, c in warm[i - 1].items():
                    starts[lbl] = max(starts.get(lbl, c), c)
            try:
                minimum = ground_over_blocks(
                    spec, generators, point, labels,
                    settings=settings, cache=cache, start_cutoffs=starts,
                    guesses=guesses,
                )
            except NonConvergenceError as exc:
                status[i][j] = f"nonconverged: {exc}"
                guesses = {}
                continue
            guesses = {s.label: s for s in minimum.solutions}
            for s in minimum.solutions:
                warm[i][s.label] = s.cutoff
            minima[i] = minimum
        return minima

    try:
        prev_row: list[GroundSolution | None] = [None] * n1
        done = 0
        for j in range(n2):
            minima = solve_row(j)
            row: list[GroundSolution | None] = [None] * n1
            for i in range(n1):
                done += 1
                minimum = minima[i]
                if minimum is None:
                    continue
                sol = minimum.solution
                row[i] = sol
                (energy[i, j], lab[i][j], par[i][j],
                 probs[i, j], entropy[i, j], cuts[i][j],
                 offdiag[i, j]) = _point_scalars(minimum)
                if progress is not None:
                    progress(done, n1 * n2)
            for i in range(n1 - 1):
                if row[i] is not None and row[i + 1] is not None:
                    f1[i, j] = min(1.0, overlap(row[i], row[i + 1]) ** 2)
            if j > 0:
                for i in range(n1):
                    if prev_row[i] is not None and row[i] is not None:
                        f2[i, j - 1] = min(1.0, overlap(prev_row[i], row[i]) ** 2)
            prev_row = row
    finally:
        if executor is not None:
            executor.shutdown()

    return ScanResult(
        grid=grid, x1=x1, x2=x2, energy=energy, labels=lab, parities=par,
        probs=probs, entropy=entropy, cutoffs=cuts,
        fidelity_x1=f1, fidelity_x2=f2, status=status, rho_offdiag=offdiag,
    )


def fidelity_line(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    model: str,
    fixed_axis: int,
    fixed_value: float,
    varying: Sequence[float],
    labels: Sequence[BlockLabel] | None = None,
    settings: SolverSettings | None = None,
    kmax: tuple[int, int] = (12, 12),
) -> np.ndarray:
    """Squared overlaps of the ground state between consecutive points of a
    one-parameter path (the other coupling held fixed).

    ``fixed_axis`` is 1 or 2; the step of ``varying`` plays the role of the
    comparison offset.
    """
    if fixed_axis not in (1, 2):
        raise ValueError("fixed_axis must be 1 or 2")
    if len(varying) < 2:
        raise ValueError("need at least two points along the varying axis")
    steps = np.diff(np.asarray(varying, dtype=float))
    if np.any(steps <= 0):
        raise ValueError("varying values must be strictly increasing")
    settings = settings or SolverSettings()
    if labels is None:
        labels = default_labels(spec, generators, model, kmax)
    cache = BlockCache(spec, generators)

    values = []
    prev: GroundSolution | None = None
    warm: dict[BlockLabel, Cutoff] = {}
    for v in varying:
        xy = (fixed_value, float(v)) if fixed_axis == 1 else (float(v), fixed_value)
        point = CouplingPoint.from_values(spec, xy)
        minimum = ground_over_blocks(
            spec, generators, point, labels,
            settings=settings, cache=cache, start_cutoffs=warm,
        )
        sol = minimum.solution
        warm[sol.label] = sol.cutoff
        if prev is not None:
            values.append(min(1.0, overlap(prev, sol) ** 2))
        prev = sol
    return np.asarray(values)


@dataclass(frozen=True)
class PairMetrics:
    """Distance data of two pure states: product trace and Bures distance."""

    overlap: float
    tr_product: float
    bures: float


def bures_distance(state_a: GroundSolution, state_b: GroundSolution) -> PairMetrics:
    """Bures distance between two pure ground states.

    For pure states the fidelity is the squared overlap, so
    D_B = sqrt(2 (1 - |<a|b>|)) and Tr(rho_a rho_b) = |<a|b>|^2.
    """
    for s in (state_a, state_b):
        if abs(float(np.dot(s.vector, s.vector)) - 1.0) > 1e-9:
            raise ValueError("states must be normalized")
    ov = min(1.0, abs(overlap(state_a, state_b)))  # guard last-ulp excess
    return PairMetrics(
        overlap=ov,
        tr_product=ov * ov,
        bures=math.sqrt(2.0 * (1.0 - ov)),
    )


def _segment_class(
    fid: float, parity_change: bool, thresholds: Thresholds
) -> TransitionClass:
    if parity_change or fid <= thresholds.disc:
        return TransitionClass(DISCONTINUOUS, parity_change)
    if fid <= thresholds.unstable:
        return TransitionClass(UNSTABLE_CONTINUOUS, False)
    return TransitionClass(STABLE_CONTINUOUS, False)


def _line_minima(fids: np.ndarray) -> Iterable[int]:
    """Indices of strict local minima, taking the leftmost point of plateaus.

    A minimum must be confirmed by a strictly higher value on both sides;
    segments at the ends of a line therefore never qualify.
    """
    n = len(fids)
    for i in range(1, n):
        if math.isnan(fids[i]) or math.isnan(fids[i - 1]):
            continue
        if not fids[i - 1] > fids[i]:
            continue
        right = None
        for k in range(i + 1, n):  # skip a plateau to the right
            if math.isnan(fids[k]):
                break
            if fids[k] != fids[i]:
                right = fids[k]
                break
        if right is not None and right > fids[i]:
            yield i


def detect_separatrix(
    scan: ScanResult, thresholds: Thresholds | None = None
) -> list[SeparatrixPoint]:
    """Classified transition points from both scan directions.

    A segment is marked when the winning block label changes, or when the
    fidelity line through it has a local minimum that dips at least
    ``min_drop`` below one.  Detections from the two directions are unioned;
    single-direction sweeps are known to leave some boundaries incomplete.
    """
    thresholds = thresholds or Thresholds()
    points: list[SeparatrixPoint] = []

    def midpoints(axis: int):
        if axis == 1:
            for j in range(scan.grid.n2):
                line = scan.fidelity_x1[:, j]
                labels = [scan.labels[i][j] for i in range(scan.grid.n1)]
                pars = [scan.parities[i][j] for i in range(scan.grid.n1)]
                coords = [
                    (0.5 * (scan.x1[i] + scan.x1[i + 1]), scan.x2[j])
                    for i in range(scan.grid.n1 - 1)
                ]
                yield line, labels, pars, coords
        else:
            for i in range(scan.grid.n1):
                line = scan.fidelity_x2[i, :]
                labels = list(scan.labels[i])
                pars = list(scan.parities[i])
                coords = [
                    (scan.x1[i], 0.5 * (scan.x2[j] + scan.x2[j + 1]))
                    for j in range(scan.grid.n2 - 1)
                ]
                yield line, labels, pars, coords

    for axis in (1, 2):
        for line, labels, pars, coords in midpoints(axis):
            fids = line[: len(coords)]
            flagged: set[int] = set()
            for seg in range(len(coords)):
                la, lb = labels[seg], labels[seg + 1]
                if la is None or lb is None or math.isnan(fids[seg]):
                    continue
                if la != lb:
                    pa, pb = pars[seg], pars[seg + 1]
                    cls = _segment_class(float(fids[seg]), pa != pb, thresholds)
                    # A change of conserved labels always jumps between
                    # orthogonal subspaces, hence is discontinuous.
                    if isinstance(la, SectorKey):
                        cls = TransitionClass(DISCONTINUOUS, pa != pb)
                    flagged.add(seg)
                    points.append(
                        SeparatrixPoint(
                            coords[seg][0], coords[seg][1],
                            cls.kind, cls.parity_change, axis, float(fids[seg]),
                        )
                    )
            for seg in _line_minima(fids):
                if seg in flagged or seg >= len(coords):
                    continue
                if 1.0 - fids[seg] < thresholds.min_drop:
                    continue
                cls = _segment_class(float(fids[seg]), False, thresholds)
                points.append(
                    SeparatrixPoint(
                        coords[seg][0], coords[seg][1],
                        cls.kind, cls.parity_change, axis, float(fids[seg]),
                    )
                )

    points.sort(key=lambda p: (p.x1, p.x2, p.axis))
    return points


def energy_derivative(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    point: CouplingPoint,
    edge: Edge,
    model: str = DICKE,
    labels: Sequence[BlockLabel] | None = None,
    settings: SolverSettings | None = None,
    cache: BlockCache | None = None,
    kmax: tuple[int, int] = (12, 12),
) -> float:
    """Exact derivative of the ground energy along one coupling strength.

    By the Hellmann-Feynman theorem this is the ground-state expectation of
    the derivative of the Hamiltonian, i.e. -(mubar/sqrt(Na)) times the bare
    interaction operator of the edge (its excitation-conserving half for the
    conserving model).  Undefined at a degenerate ground state.
    """
    settings = settings or SolverSettings()
    if labels is None:
        labels = default_labels(spec, generators, model, kmax)
    cache = cache or BlockCache(spec, generators)
    minimum = ground_over_blocks(
        spec, generators, point, labels, settings=settings, cache=cache
    )
    if minimum.degenerate:
        raise DegenerateGroundError(
            f"ground state degenerate at {point.values}; "
            "the derivative has one-sided limits only"
        )
    sol = minimum.solution
    ops = cache.block(sol.label, sol.cutoff)
    w = ops.wops[edge]
    coeff = -spec.mubar(edge) / math.sqrt(spec.Na)
    return float(coeff * (sol.vector @ (w @ sol.vector)))
