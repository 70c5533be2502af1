"""Sparse matrix assembly for the model Hamiltonians and symmetry operators.

All operators are real symmetric in the product Fock basis; matrices are kept
as deduplicated upper-triangle triplets.  Matter operators act collectively on
the symmetric occupation states: moving one atom from level k to level j
carries the ladder weight sqrt(b_k (b_j + 1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
import scipy.sparse as sparse

from .basis import ParityKey, SectorBasis, SectorKey, occupation_vectors
from .model import CouplingPoint, Edge, ModelSpec, SymmetryGenerator


class ConsistencyError(RuntimeError):
    """An assembled matrix element left its symmetry block; indicates a bug."""


@dataclass(frozen=True)
class SparseOperator:
    """Real symmetric operator stored as sorted upper-triangle triplets."""

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_arrays(
        cls, dim: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray
    ) -> "SparseOperator":
        """Fold below-diagonal entries up, merge duplicates, sort, drop zeros."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (
            rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim
        ):
            raise ValueError(f"entry outside dimension {dim}")
        r = np.minimum(rows, cols)
        c = np.maximum(rows, cols)
        code = r * dim + c
        uniq, inverse = np.unique(code, return_inverse=True)
        summed = np.bincount(inverse, weights=vals, minlength=len(uniq))
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        return cls(
            dim=dim,
            rows=(uniq // dim).astype(np.int64),
            cols=(uniq % dim).astype(np.int64),
            vals=summed.astype(np.float64),
        )

    @classmethod
    def from_triplets(
        cls, dim: int, triplets: Iterable[tuple[int, int, float]]
    ) -> "SparseOperator":
        entries = list(triplets)
        if not entries:
            return cls.empty(dim)
        rows, cols, vals = zip(*entries)
        return cls.from_arrays(dim, np.array(rows), np.array(cols), np.array(vals))

    @classmethod
    def empty(cls, dim: int) -> "SparseOperator":
        z = np.zeros(0, dtype=np.int64)
        return cls(dim, z, z, np.zeros(0))

    @classmethod
    def from_csr(cls, csr: sparse.csr_matrix) -> "SparseOperator":
        coo = sparse.triu(csr, format="coo")
        return cls.from_arrays(csr.shape[0], coo.row, coo.col, coo.data)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def to_csr(self) -> sparse.csr_matrix:
        """Symmetric completion as a scipy CSR matrix."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.vals, self.vals[off]])
        return sparse.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def dump(self, fh: IO[str]) -> None:
        """Text triplet dump: header ``dim nnz`` then ``row col value`` lines."""
        fh.write(f"{self.dim} {self.nnz}\n")
        for r, c, v in zip(self.rows, self.cols, self.vals):
            fh.write(f"{r} {c} {v:.17g}\n")


def _diagonal(dim: int, values: np.ndarray) -> SparseOperator:
    idx = np.arange(dim, dtype=np.int64)
    keep = values != 0.0
    return SparseOperator(dim, idx[keep], idx[keep], values[keep].astype(np.float64))


def diagonal_energies(basis: SectorBasis, spec: ModelSpec) -> np.ndarray:
    """Free energy of every basis state (mode quanta plus level energies)."""
    if basis.dim == 0:
        return np.zeros(0)
    om = np.asarray(spec.modes.Omegas)
    ol = np.asarray(spec.levels.omegas)
    return basis.nu_array @ om + basis.b_array @ ol


def build_H_diag(basis: SectorBasis, spec: ModelSpec) -> SparseOperator:
    """Free Hamiltonian: sum of mode energies and level energies per state."""
    return _diagonal(basis.dim, diagonal_energies(basis, spec))


def build_K(basis: SectorBasis, generator: SymmetryGenerator) -> SparseOperator:
    """Diagonal matrix of a symmetry generator in the given basis."""
    if basis.dim == 0:
        return SparseOperator.empty(0)
    vals = (
        basis.nu_array @ np.asarray(generator.eta, dtype=np.int64)
        + basis.b_array @ np.asarray(generator.lam, dtype=np.int64)
    ).astype(np.float64)
    return _diagonal(basis.dim, vals)


class _MatterMoves:
    """Transition table of the collective move of one atom between levels.

    For occupation vectors listed in lexicographic order, ``target[src][dst]``
    maps each occupation index to the index after moving one atom from level
    src to dst (-1 when the source level is empty), and ``weight`` holds the
    corresponding ladder amplitude sqrt(b_src (b_dst + 1)).
    """

    def __init__(self, n: int, Na: int):
        occ = list(occupation_vectors(n, Na))
        self.occ = np.array(occ, dtype=np.int64)
        index = {o: i for i, o in enumerate(occ)}
        g = len(occ)
        self.target = np.full((n, n, g), -1, dtype=np.int64)
        self.weight = np.zeros((n, n, g))
        for i, o in enumerate(occ):
            for src in range(n):
                if o[src] == 0:
                    continue
                for dst in range(n):
                    if dst == src:
                        continue
                    moved = list(o)
                    moved[src] -= 1
                    moved[dst] += 1
                    self.target[src, dst, i] = index[tuple(moved)]
                    self.weight[src, dst, i] = math.sqrt(o[src] * (o[dst] + 1))


_MOVES_CACHE: dict[tuple[int, int], _MatterMoves] = {}


def _matter_moves(n: int, Na: int) -> _MatterMoves:
    key = (n, Na)
    if key not in _MOVES_CACHE:
        _MOVES_CACHE[key] = _MatterMoves(n, Na)
    return _MOVES_CACHE[key]


def interaction_operator(
    basis: SectorBasis, spec: ModelSpec, edge: Edge, part: str = "full"
) -> SparseOperator:
    """Dimensionless interaction operator of one edge, without its prefactor.

    ``part`` selects the excitation-conserving half (``"rotating"``), the
    excitation-nonconserving half (``"counter"``) or their sum (``"full"``).
    The Hamiltonian contribution of the edge is -(x mubar / sqrt(Na)) times
    this operator.

    Transitions whose target lies inside the photon caps but is missing from
    the basis are a consistency violation when the target belongs to the same
    block (same sector eigenvalues or parities); targets clipped by the caps
    or excluded by the block are skipped.
    """
    if part not in ("rotating", "counter", "full"):
        raise ValueError(f"unknown interaction part {part!r}")
    d = basis.dim
    if d == 0:
        return SparseOperator.empty(0)
    j, k, s = edge
    jdx, kdx, sdx = j - 1, k - 1, s - 1
    moves = _matter_moves(spec.n, spec.Na)

    # state encoding: photon labels in mixed radix, matter index last
    radix = [c + 1 for c in basis.cutoff]
    g = moves.occ.shape[0]
    occ_index = {tuple(o): i for i, o in enumerate(moves.occ.tolist())}
    bidx = np.array([occ_index[st.b] for st in basis.states], dtype=np.int64)
    photon_code = np.zeros(d, dtype=np.int64)
    for mode in range(spec.ell):
        photon_code = photon_code * radix[mode] + basis.nu_array[:, mode]
    codes = photon_code * g + bidx
    order = np.argsort(codes)
    sorted_codes = codes[order]

    # code increment per unit photon in the edge's mode
    stride_s = g
    for mode in range(spec.ell - 1, sdx, -1):
        stride_s *= radix[mode]

    # (source level, destination level, photon shift) per primitive term
    prims: list[tuple[int, int, int]] = []
    if part in ("rotating", "full"):
        prims += [(kdx, jdx, +1), (jdx, kdx, -1)]  # A_jk a+  and  A_kj a
    if part in ("counter", "full"):
        prims += [(kdx, jdx, -1), (jdx, kdx, +1)]  # A_jk a   and  A_kj a+

    all_rows, all_cols, all_vals = [], [], []
    nu_s = basis.nu_array[:, sdx]
    for src, dst, shift in prims:
        tb = moves.target[src, dst, bidx]
        ns = nu_s + shift
        valid = (tb >= 0) & (ns >= 0) & (ns <= basis.cutoff[sdx])
        cols = np.nonzero(valid)[0]
        if not len(cols):
            continue
        tcodes = codes[cols] + shift * stride_s + (tb[cols] - bidx[cols])
        pos = np.searchsorted(sorted_codes, tcodes)
        pos_ok = pos < d
        hit = np.zeros(len(cols), dtype=bool)
        hit[pos_ok] = sorted_codes[pos[pos_ok]] == tcodes[pos_ok]
        missed = cols[~hit]
        for col in missed:
            nu2 = list(basis.states[col].nu)
            nu2[sdx] += shift
            b2 = tuple(moves.occ[tb[col]])
            if basis.contains_labels(nu2, b2):
                raise ConsistencyError(
                    f"target {tuple(nu2)};{b2} of edge {edge} missing from "
                    f"block {basis.key} at cutoff {basis.cutoff}"
                )
        cols = cols[hit]
        rows = order[pos[hit]]
        keep = rows <= cols  # stored once; the conjugate term fills the mirror
        rows, cols = rows[keep], cols[keep]
        amp = moves.weight[src, dst, bidx[cols]]
        famp = np.sqrt(np.where(shift > 0, nu_s[cols] + 1, nu_s[cols]))
        all_rows.append(rows)
        all_cols.append(cols)
        all_vals.append(amp * famp)

    if not all_rows:
        return SparseOperator.empty(d)
    return SparseOperator.from_arrays(
        d,
        np.concatenate(all_rows),
        np.concatenate(all_cols),
        np.concatenate(all_vals),
    )


def _interaction_sum(
    basis: SectorBasis, spec: ModelSpec, point: CouplingPoint, part: str
) -> SparseOperator:
    csr = sparse.diags(
        diagonal_energies(basis, spec), format="csr", dtype=np.float64
    )
    root_na = math.sqrt(spec.Na)
    for edge, x in zip(point.edges, point.values):
        if x == 0.0:
            continue
        w = interaction_operator(basis, spec, edge, part)
        csr = csr + (-x * spec.mubar(edge) / root_na) * w.to_csr()
    return SparseOperator.from_csr(csr)


def build_H_rwa(
    basis: SectorBasis, spec: ModelSpec, point: CouplingPoint
) -> SparseOperator:
    """Excitation-conserving Hamiltonian in a single-sector basis."""
    if not isinstance(basis.key, SectorKey):
        raise ValueError("the excitation-conserving Hamiltonian acts within one sector")
    return _interaction_sum(basis, spec, point, "rotating")


def build_H_full(
    basis: SectorBasis, spec: ModelSpec, point: CouplingPoint
) -> SparseOperator:
    """Full Hamiltonian in a fixed-parity basis (sector blocks plus the
    parity-preserving couplings between them)."""
    if not isinstance(basis.key, ParityKey):
        raise ValueError("the full Hamiltonian acts within one parity block")
    return _interaction_sum(basis, spec, point, "full")


def build_hamiltonian(
    basis: SectorBasis, spec: ModelSpec, point: CouplingPoint
) -> SparseOperator:
    """Dispatch on the basis label: sector -> conserving, parity -> full."""
    if isinstance(basis.key, SectorKey):
        return build_H_rwa(basis, spec, point)
    return build_H_full(basis, spec, point)
