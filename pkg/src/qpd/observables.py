"""Matter-sector observables: reduced density matrix, entropy, simplex.

For a single atom the matter reduced density matrix is diagonal in the level
populations because coherences would connect states of different symmetry.
For more atoms the collective one-body matrix <A_jk>/Na is used, which
reduces to the same object at Na = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .model import LAMBDA, V, XI
from .solver import GroundSolution

if TYPE_CHECKING:  # pragma: no cover
    from .phase_diagram import ScanResult

# Occupation pairs whose sums witness the two-level subregions, per
# configuration: the pair driven by each mode.
PAIR_SUMS: dict[str, tuple[tuple[int, int], tuple[int, int]]] = {
    XI: ((1, 2), (2, 3)),
    LAMBDA: ((1, 3), (2, 3)),
    V: ((1, 2), (1, 3)),
}


@dataclass(frozen=True)
class MatterDensity:
    """Single-particle matter density matrix, trace one and PSD."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=np.float64)
        object.__setattr__(self, "rho", rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        if abs(float(np.trace(rho)) - 1.0) > 1e-12:
            raise ValueError("density matrix must have unit trace")
        if float(np.min(np.linalg.eigvalsh(rho))) < -1e-12:
            raise ValueError("density matrix must be positive semidefinite")

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(float(p) for p in np.diag(self.rho))

    def max_offdiagonal(self) -> float:
        off = self.rho - np.diag(np.diag(self.rho))
        return float(np.max(np.abs(off))) if off.size else 0.0


@dataclass(frozen=True)
class FieldDiagonal:
    """Marginal photon-number probabilities, keyed by (nu_1, ..., nu_ell)."""

    probs: dict[tuple[int, ...], float]

    def __post_init__(self) -> None:
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"photon probabilities sum to {total}, expected 1")


def _check_normalized(state: GroundSolution) -> np.ndarray:
    v = state.vector
    if abs(float(np.dot(v, v)) - 1.0) > 1e-9:
        raise ValueError("state vector must be normalized")
    return v


def occupations(state: GroundSolution) -> tuple[float, ...]:
    """Occupation probabilities p_k = <A_kk>/Na of the atomic levels."""
    v = _check_normalized(state)
    states = state.basis.states
    n = len(states[0].b)
    na = sum(states[0].b)
    acc = np.zeros(n)
    for amp, st in zip(v, states):
        w = amp * amp
        for k, bk in enumerate(st.b):
            if bk:
                acc[k] += w * bk
    return tuple(float(p) for p in acc / na)


def reduced_matter(state: GroundSolution) -> MatterDensity:
    """One-body matter density matrix <A_jk>/Na of a block ground state."""
    v = _check_normalized(state)
    states = state.basis.states
    index = state.basis.index
    n = len(states[0].b)
    na = sum(states[0].b)
    rho = np.zeros((n, n))
    for i, st in enumerate(states):
        w = v[i]
        for k in range(n):
            rho[k, k] += w * w * st.b[k]
        # coherences <A_jk> with j != k: move one atom from level k to j
        for k in range(n):
            if st.b[k] == 0:
                continue
            for j in range(n):
                if j == k:
                    continue
                b2 = list(st.b)
                b2[k] -= 1
                b2[j] += 1
                target = index.get((st.nu, tuple(b2)))
                if target is not None:
                    amp = math.sqrt(st.b[k] * (st.b[j] + 1))
                    rho[j, k] += v[target] * amp * w
    rho /= na
    rho = 0.5 * (rho + rho.T)
    return MatterDensity(rho)


def field_diagonal(state: GroundSolution) -> FieldDiagonal:
    """Diagonal of the field reduced density matrix, in basis order."""
    v = _check_normalized(state)
    probs: dict[tuple[int, ...], float] = {}
    for amp, st in zip(v, state.basis.states):
        probs[st.nu] = probs.get(st.nu, 0.0) + float(amp * amp)
    return FieldDiagonal({nu: p for nu, p in probs.items() if p != 0.0})


def linear_entropy(rho: MatterDensity | np.ndarray) -> float:
    """Mixedness 1 - Tr(rho^2) of a density matrix."""
    mat = rho.rho if isinstance(rho, MatterDensity) else np.asarray(rho)
    return float(1.0 - np.trace(mat @ mat))


def linear_entropy_pair(p1: float, p2: float) -> float:
    """Closed form of the linear entropy of diag(p1, p2, 1-p1-p2)."""
    return 2.0 * (p1 + p2) - 2.0 * (p1 * p1 + p2 * p2 + p1 * p2)


def simplex_coords(p: Sequence[float]) -> tuple[float, float]:
    """Barycentric embedding of (p1, p2, p3) into the unit-side triangle.

    The pure states map to the vertices (0,0), (1,0) and (1/2, sqrt(3)/2).
    """
    if len(p) != 3:
        raise ValueError("simplex coordinates need three probabilities")
    if any(q < -1e-12 for q in p) or abs(sum(p) - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector: {tuple(p)}")
    _, p2, p3 = p
    return (p2 + 0.5 * p3, p3 * math.sqrt(3.0) / 2.0)


def pair_occupation_sums(
    scan: "ScanResult", config: str
) -> tuple[np.ndarray, np.ndarray]:
    """The two configuration-specific occupation pair sums over a scan grid."""
    try:
        (a1, a2), (b1, b2) = PAIR_SUMS[config.lower()]
    except KeyError:
        raise ValueError(f"no occupation pairs for configuration {config!r}") from None
    probs = scan.probs
    first = probs[:, :, a1 - 1] + probs[:, :, a2 - 1]
    second = probs[:, :, b1 - 1] + probs[:, :, b2 - 1]
    return first, second
