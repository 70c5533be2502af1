"""Lowest eigenpairs per symmetry block, cutoff convergence, block minimum.

The ground state of the full model is the minimum over independent symmetry
blocks: sector blocks for the excitation-conserving model, fixed-parity
blocks for the full model.  Photon caps are grown in steps of two (preserving
the sector content of a parity block) until the ground state is stable under
further growth, judged by the overlap and energy of successive solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from . import basis as basis_mod
from .basis import BlockLabel, Cutoff, ParityKey, SectorBasis, SectorKey
from .hamiltonian import SparseOperator, build_H_diag, interaction_operator
from .model import CouplingPoint, Edge, ModelSpec, SymmetryGenerator


class SolverError(RuntimeError):
    """Eigensolver failed to reach the requested residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NonConvergenceError(SolverError):
    """Photon-cap growth hit the hard cap before the state stabilized."""


@dataclass
class SolverSettings:
    """Tolerances and knobs shared by all diagonalization paths."""

    fidelity_tol: float = 1e-10   # on 1 - |<psi_c|psi_c'>|^2 between caps
    energy_tol: float = 1e-8      # on |E_c - E_c'| between caps
    eig_tol: float = 1e-10        # residual tolerance of the iterative solver
    dense_threshold: int = 2000   # below this dimension, use the dense solver
    start_cutoff: int = 6         # initial per-mode photon cap
    cutoff_step: int = 2          # cap growth per iteration (keeps parity content)
    max_cutoff: int = 200         # hard cap per mode
    degeneracy_tol: float = 1e-10
    block_levels: int = 2         # eigenpairs per block (2 resolves the gap)


def lowest_eigenpairs(
    op: SparseOperator,
    m: int,
    tol: float = 1e-10,
    dense_threshold: int = 2000,
    v0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """The m smallest eigenvalues with orthonormal eigenvectors.

    Dense symmetric diagonalization below ``dense_threshold``; Lanczos
    (ARPACK) above it, with a deterministic start vector and a dense retry if
    the residual check fails.  A good ``v0`` (for example the ground vector
    of a neighbouring parameter point) cuts the iteration count sharply.
    Eigenvector signs are canonicalized so the largest-magnitude component is
    positive.
    """
    if not (1 <= m <= op.dim):
        raise ValueError(f"need 1 <= m <= dim, got m={m}, dim={op.dim}")
    use_dense = op.dim <= dense_threshold or m >= op.dim - 1
    if use_dense:
        energies, vectors = np.linalg.eigh(op.to_dense())
        energies, vectors = energies[:m], vectors[:, :m]
    else:
        csr = op.to_csr()
        if v0 is None or not np.any(v0):
            rng = np.random.default_rng(0x5EED)
            v0 = rng.standard_normal(op.dim)
        try:
            energies, vectors = spla.eigsh(csr, k=m, which="SA", tol=tol, v0=v0)
        except spla.ArpackNoConvergence as exc:
            if exc.eigenvalues is not None and len(exc.eigenvalues) >= m:
                energies, vectors = exc.eigenvalues[:m], exc.eigenvectors[:, :m]
            else:
                raise SolverError(f"Lanczos did not converge: {exc}") from exc
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]
        resid = _max_residual(csr, energies, vectors)
        if resid > tol * max(1.0, float(np.max(np.abs(energies)))):
            energies, vectors = np.linalg.eigh(op.to_dense())
            energies, vectors = energies[:m], vectors[:, :m]

    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    for col in range(vectors.shape[1]):
        v = vectors[:, col]
        v /= np.linalg.norm(v)
        if v[int(np.argmax(np.abs(v)))] < 0:
            v *= -1.0
    return np.asarray(energies, dtype=np.float64), vectors


def _max_residual(csr: sparse.csr_matrix, energies: np.ndarray, vectors: np.ndarray) -> float:
    r = csr @ vectors - vectors * energies[np.newaxis, :]
    return float(np.max(np.linalg.norm(r, axis=0))) if r.size else 0.0


@dataclass
class GroundSolution:
    """Lowest eigenpair of one symmetry block at a given photon cap."""

    energy: float
    vector: np.ndarray
    basis: SectorBasis
    converged: bool
    gap: float | None = None  # distance to the next level within the block

    @property
    def label(self) -> BlockLabel:
        return self.basis.key

    @property
    def cutoff(self) -> Cutoff:
        return self.basis.cutoff

    @property
    def parity(self) -> ParityKey:
        if isinstance(self.basis.key, ParityKey):
            return self.basis.key
        return basis_mod.parity_of(self.basis.key)


def overlap(a: GroundSolution, b: GroundSolution) -> float:
    """Inner product of two block ground states on the common product basis.

    States from different blocks are orthogonal by construction.  Within one
    block the bases are nested by cap growth, so zero-padding the smaller one
    amounts to summing over the shared product states.
    """
    if type(a.label) is not type(b.label) or a.label != b.label:
        return 0.0
    if a.basis.generators != b.basis.generators:
        raise ValueError("states belong to blocks of different symmetry families")
    if a.basis.cutoff == b.basis.cutoff:
        return float(np.dot(a.vector, b.vector))
    small, big = (a, b) if a.basis.dim <= b.basis.dim else (b, a)
    big_index = big.basis.index
    total = 0.0
    for i, st in enumerate(small.basis.states):
        jdx = big_index.get(st.key())
        if jdx is not None:
            total += small.vector[i] * big.vector[jdx]
    return float(total)


def fidelity(a: GroundSolution, b: GroundSolution) -> float:
    """Squared overlap, clipped to [0, 1]."""
    return min(1.0, overlap(a, b) ** 2)


@dataclass
class BlockOperators:
    """Cached pieces of one block Hamiltonian: H(x) = diag + sum_e coeff_e W_e."""

    basis: SectorBasis
    hdiag: np.ndarray
    wops: dict[Edge, sparse.csr_matrix]

    def assemble(self, spec: ModelSpec, point: CouplingPoint) -> SparseOperator:
        csr = sparse.diags(self.hdiag, format="csr", dtype=np.float64)
        root_na = math.sqrt(spec.Na)
        for edge, x in zip(point.edges, point.values):
            if x != 0.0:
                csr = csr + (-x * spec.mubar(edge) / root_na) * self.wops[edge]
        csr = sparse.triu(csr, format="csr")
        coo = csr.tocoo()
        return SparseOperator(
            self.basis.dim,
            coo.row.astype(np.int64),
            coo.col.astype(np.int64),
            coo.data.astype(np.float64),
        )


class BlockCache:
    """Bases and x-independent interaction matrices per (label, cutoff)."""

    def __init__(self, spec: ModelSpec, generators: Sequence[SymmetryGenerator]):
        self.spec = spec
        self.generators = tuple(generators)
        self._blocks: dict[tuple[BlockLabel, Cutoff], BlockOperators] = {}

    def block(self, label: BlockLabel, cutoff: Cutoff) -> BlockOperators:
        key = (label, tuple(cutoff))
        cached = self._blocks.get(key)
        if cached is not None:
            return cached
        if isinstance(label, SectorKey):
            bas = basis_mod.enumerate_rwa_sector(self.spec, self.generators, label, cutoff)
            part = "rotating"
        else:
            bas = basis_mod.enumerate_parity_basis(
                self.spec, self.generators, label, None, cutoff
            )
            part = "full"
        hd = np.zeros(bas.dim)
        hdop = build_H_diag(bas, self.spec)
        hd[hdop.rows] = hdop.vals
        wops = {
            edge: interaction_operator(bas, self.spec, edge, part).to_csr()
            for edge in self.spec.topology.edges
        }
        ops = BlockOperators(bas, hd, wops)
        self._blocks[key] = ops
        return ops

    def embed(self, sol: "GroundSolution", target: SectorBasis) -> np.ndarray:
        """Zero-padded copy of a state vector in another (nested) basis."""
        if sol.basis.cutoff == target.cutoff:
            return sol.vector
        out = np.zeros(target.dim)
        index = target.index
        for i, st in enumerate(sol.basis.states):
            jdx = index.get(st.key())
            if jdx is not None:
                out[jdx] = sol.vector[i]
        return out


def _solve_block(
    ops: BlockOperators,
    spec: ModelSpec,
    point: CouplingPoint,
    settings: SolverSettings,
    converged: bool = False,
    guess: np.ndarray | None = None,
) -> GroundSolution:
    m = min(max(1, settings.block_levels), ops.basis.dim)
    op = ops.assemble(spec, point)
    energies, vectors = lowest_eigenpairs(
        op, m, tol=settings.eig_tol, dense_threshold=settings.dense_threshold,
        v0=guess,
    )
    gap = float(energies[1] - energies[0]) if m == 2 else None
    return GroundSolution(
        energy=float(energies[0]),
        vector=vectors[:, 0],
        basis=ops.basis,
        converged=converged,
        gap=gap,
    )


def _grow(cutoff: Cutoff, step: int) -> Cutoff:
    return tuple(c + step for c in cutoff)


def converge_cutoff(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    point: CouplingPoint,
    label: BlockLabel,
    start_cutoff: Cutoff | None = None,
    settings: SolverSettings | None = None,
    cache: BlockCache | None = None,
    guess: GroundSolution | None = None,
) -> GroundSolution | None:
    """Block ground state with photon caps grown until it is stable.

    Growth stops when the solution at one cap overlaps the solution at the
    next cap to within the fidelity tolerance and agrees in energy; the
    certified solution (at the smaller cap) is returned.  A saturated sector,
    where growth adds no states, is exact.  Returns None for a block that
    stays empty, so the minimum over blocks can simply skip it.  ``guess``
    seeds the iterative eigensolver, e.g. from a neighbouring point.
    """
    settings = settings or SolverSettings()
    cache = cache or BlockCache(spec, generators)
    cutoff = tuple(start_cutoff) if start_cutoff is not None else (
        (settings.start_cutoff,) * spec.ell
    )

    def seed(ops: BlockOperators) -> np.ndarray | None:
        if guess is None or guess.label != label:
            return None
        return cache.embed(guess, ops.basis)

    config = spec.configuration
    if isinstance(label, SectorKey) and config is not None:
        # The sector eigenvalues bound the photon content exactly, so a
        # non-binding cap makes the block finite and the solution exact.
        exact = basis_mod.nonbinding_cutoff(config, label)
        cutoff = tuple(max(c, e) for c, e in zip(cutoff, exact))
        ops = cache.block(label, cutoff)
        if ops.basis.dim == 0:
            return None
        return _solve_block(ops, spec, point, settings, converged=True, guess=seed(ops))

    ops = cache.block(label, cutoff)
    while ops.basis.dim == 0:
        if any(c + settings.cutoff_step > settings.max_cutoff for c in cutoff):
            return None
        cutoff = _grow(cutoff, settings.cutoff_step)
        ops = cache.block(label, cutoff)

    sol = _solve_block(ops, spec, point, settings, guess=seed(ops))
    while True:
        next_cutoff = _grow(cutoff, settings.cutoff_step)
        if any(c > settings.max_cutoff for c in next_cutoff):
            raise NonConvergenceError(
                f"block {label} not converged at the hard cap {settings.max_cutoff}"
            )
        next_ops = cache.block(label, next_cutoff)
        if next_ops.basis.dim == ops.basis.dim:
            # Growth added no states: the block is saturated and exact.
            return replace(sol, converged=True)
        next_sol = _solve_block(
            next_ops, spec, point, settings, guess=cache.embed(sol, next_ops.basis)
        )
        df = 1.0 - fidelity(sol, next_sol)
        de = abs(next_sol.energy - sol.energy)
        if df <= settings.fidelity_tol and de <= settings.energy_tol:
            # the smaller cap is certified sufficient; keep it so repeated
            # solves at nearby points reuse the same cached blocks
            return replace(sol, converged=True)
        cutoff, ops, sol = next_cutoff, next_ops, next_sol


def label_sort_key(label: BlockLabel) -> tuple[int, tuple[int, ...]]:
    if isinstance(label, SectorKey):
        return (0, label.kappa)
    return (1, label.sigma)


@dataclass
class BlockMinimum:
    """Result of minimizing the ground energy over a list of blocks."""

    solution: GroundSolution
    block_energies: list[tuple[BlockLabel, float]]
    ties: list[BlockLabel] = field(default_factory=list)
    excited: list[tuple[float, BlockLabel]] = field(default_factory=list)
    solutions: list[GroundSolution] = field(default_factory=list)

    @property
    def global_gap(self) -> float:
        """Distance from the ground energy to the next level of any block."""
        best = math.inf
        if self.solution.gap is not None:
            best = self.solution.gap
        for label, energy in self.block_energies:
            if label != self.solution.label:
                best = min(best, energy - self.solution.energy)
        return best

    @property
    def degenerate(self) -> bool:
        return self.global_gap < SolverSettings.degeneracy_tol


def ground_over_blocks(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    point: CouplingPoint,
    labels: Sequence[BlockLabel],
    settings: SolverSettings | None = None,
    cache: BlockCache | None = None,
    start_cutoffs: dict[BlockLabel, Cutoff] | None = None,
    guesses: dict[BlockLabel, GroundSolution] | None = None,
    n_excited: int = 0,
) -> BlockMinimum:
    """Minimum ground energy across blocks, with deterministic tie-breaking.

    Exact ties (within the degeneracy tolerance) go to the lexicographically
    smallest label; all tied labels are reported.  When excited surfaces are
    requested, the per-block spectra are merged and the lowest entries
    returned with the ground struck out.  ``start_cutoffs`` and ``guesses``
    (typically from a neighbouring parameter point) speed up the per-block
    convergence without affecting the result.
    """
    if not labels:
        raise ValueError("need at least one block label")
    settings = settings or SolverSettings()
    cache = cache or BlockCache(spec, generators)

    solutions: list[GroundSolution] = []
    for label in labels:
        start = (start_cutoffs or {}).get(label)
        guess = (guesses or {}).get(label)
        sol = converge_cutoff(
            spec, generators, point, label, start, settings, cache, guess=guess
        )
        if sol is not None:
            solutions.append(sol)
    if not solutions:
        raise ValueError("all blocks are empty")

    emin = min(s.energy for s in solutions)
    tied = [s for s in solutions if s.energy - emin <= settings.degeneracy_tol]
    winner = min(tied, key=lambda s: label_sort_key(s.label))
    result = BlockMinimum(
        solution=winner,
        block_energies=sorted(
            ((s.label, s.energy) for s in solutions),
            key=lambda t: label_sort_key(t[0]),
        ),
        ties=sorted((s.label for s in tied), key=label_sort_key),
        solutions=solutions,
    )
    if n_excited > 0:
        merged: list[tuple[float, BlockLabel]] = []
        for s in solutions:
            ops = cache.block(s.label, s.cutoff)
            m = min(n_excited + 1, ops.basis.dim)
            energies, _ = lowest_eigenpairs(
                ops.assemble(spec, point), m,
                tol=settings.eig_tol, dense_threshold=settings.dense_threshold,
            )
            merged.extend((float(e), s.label) for e in energies)
        merged.sort(key=lambda t: (t[0], label_sort_key(t[1])))
        # Strike the global ground; what remains are the excited surfaces.
        result.excited = merged[1 : n_excited + 1]
    return result
