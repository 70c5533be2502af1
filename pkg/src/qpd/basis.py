"""Product Fock bases organized into symmetry sectors and fixed-parity sums.

Basis states are |nu_1..nu_ell; b_1..b_n> with nu_s photons in mode s and b_k
atoms in level k, sum(b) = Na.  A sector collects the states with prescribed
eigenvalues of all symmetry generators; a parity basis is the direct sum of
the sectors whose eigenvalues have prescribed parities, truncated by per-mode
photon caps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .model import LAMBDA, V, XI, ModelSpec, SymmetryGenerator

Cutoff = tuple[int, ...]


@dataclass(frozen=True)
class FockState:
    """One product state: photon numbers per mode, atom count per level."""

    nu: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", tuple(int(v) for v in self.nu))
        object.__setattr__(self, "b", tuple(int(v) for v in self.b))
        if any(v < 0 for v in self.nu) or any(v < 0 for v in self.b):
            raise ValueError("occupation numbers must be nonnegative")

    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.nu, self.b)


@dataclass(frozen=True, order=True)
class SectorKey:
    """Joint eigenvalues (k_1, ..., k_zeta0) of the symmetry generators."""

    kappa: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", tuple(int(k) for k in self.kappa))

    def __str__(self) -> str:
        return ":".join(str(k) for k in self.kappa)


@dataclass(frozen=True, order=True)
class ParityKey:
    """Parities of the generator eigenvalues; 0 is even, 1 is odd."""

    sigma: tuple[int, ...]

    def __post_init__(self) -> None:
        sig = tuple(int(s) for s in self.sigma)
        if any(s not in (0, 1) for s in sig):
            raise ValueError("parities must be 0 (even) or 1 (odd)")
        object.__setattr__(self, "sigma", sig)

    @classmethod
    def from_label(cls, label: str) -> "ParityKey":
        if set(label) - {"e", "o"}:
            raise ValueError(f"parity label must use only 'e'/'o', got {label!r}")
        return cls(tuple(0 if c == "e" else 1 for c in label))

    def __str__(self) -> str:
        return "".join("eo"[s] for s in self.sigma)


BlockLabel = SectorKey | ParityKey


def parity_of(key: SectorKey) -> ParityKey:
    """Componentwise parity of a sector key."""
    return ParityKey(tuple(k % 2 for k in key.kappa))


@dataclass(frozen=True)
class SectorBasis:
    """Ordered basis of one sector or one fixed-parity block.

    States are sorted by (generator eigenvalues, photon numbers, populations),
    so a parity basis appears block-ordered by sector and the ordering is
    reproducible across runs.  The generator set that defines the block is
    carried along, as is the optional sector-lattice truncation of a parity
    block.
    """

    key: BlockLabel
    states: tuple[FockState, ...]
    cutoff: Cutoff
    generators: tuple[SymmetryGenerator, ...]
    kappa_max: tuple[int, ...] | None = None

    @property
    def dim(self) -> int:
        return len(self.states)

    @cached_property
    def index(self) -> dict[tuple[tuple[int, ...], tuple[int, ...]], int]:
        return {st.key(): i for i, st in enumerate(self.states)}

    @cached_property
    def nu_array(self) -> np.ndarray:
        """Photon labels as an integer array of shape (dim, ell)."""
        ell = len(self.cutoff)
        return np.array([st.nu for st in self.states], dtype=np.int64).reshape(
            self.dim, ell
        )

    @cached_property
    def b_array(self) -> np.ndarray:
        """Matter labels as an integer array of shape (dim, n)."""
        n = len(self.states[0].b) if self.states else 0
        return np.array([st.b for st in self.states], dtype=np.int64).reshape(
            self.dim, n
        )

    def contains_labels(self, nu: Sequence[int], b: Sequence[int]) -> bool:
        """Whether a product state belongs to this block, photon caps aside."""
        kv = tuple(g.eigenvalue(nu, b) for g in self.generators)
        if self.kappa_max is not None and any(
            k > m for k, m in zip(kv, self.kappa_max)
        ):
            return False
        if isinstance(self.key, SectorKey):
            return kv == self.key.kappa
        return all(k % 2 == s for k, s in zip(kv, self.key.sigma))


def occupation_vectors(n: int, Na: int) -> Iterator[tuple[int, ...]]:
    """All length-n nonnegative integer tuples summing to Na, in lex order."""
    if n == 1:
        yield (Na,)
        return
    for first in range(Na + 1):
        for rest in occupation_vectors(n - 1, Na - first):
            yield (first,) + rest


def _product_grid(spec: ModelSpec, cutoff: Cutoff) -> tuple[np.ndarray, np.ndarray]:
    """All (photon, matter) label combinations as integer arrays.

    Returns NU of shape (m, ell) over the photon box and B of shape (g, n)
    over the matter occupations; the product-state list is their outer
    pairing with the matter index varying fastest.
    """
    if len(cutoff) != spec.ell:
        raise ValueError("cutoff must give one photon cap per mode")
    if any(c < 0 for c in cutoff):
        raise ValueError("photon caps must be nonnegative")
    axes = [np.arange(c + 1) for c in cutoff]
    mesh = np.meshgrid(*axes, indexing="ij")
    nu = np.stack([m.ravel() for m in mesh], axis=1)
    b = np.array(list(occupation_vectors(spec.n, spec.Na)), dtype=np.int64)
    return nu, b


def _eigenvalue_table(
    generators: Sequence[SymmetryGenerator], nu: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Generator eigenvalues of every (photon, matter) pairing.

    Shape (zeta0, m, g): eigenvalues separate into a photon part plus a
    matter part, so the full table is an outer sum.
    """
    tables = []
    for gen in generators:
        nu_part = nu @ np.asarray(gen.eta, dtype=np.int64)
        b_part = b @ np.asarray(gen.lam, dtype=np.int64)
        tables.append(nu_part[:, None] + b_part[None, :])
    return np.stack(tables) if tables else np.zeros((0, nu.shape[0], b.shape[0]), int)


def _collect_basis(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    key: BlockLabel,
    cutoff: Cutoff,
    mask: np.ndarray,
    nu: np.ndarray,
    b: np.ndarray,
    kv: np.ndarray,
    kappa_max: tuple[int, ...] | None,
) -> SectorBasis:
    mi, gi = np.nonzero(mask)
    if len(mi):
        # order: generator eigenvalues first, then photon and matter labels
        cols = [b[gi, k] for k in reversed(range(spec.n))]
        cols += [nu[mi, s] for s in reversed(range(spec.ell))]
        cols += [kv[z, mi, gi] for z in reversed(range(len(generators)))]
        order = np.lexsort(cols)
        mi, gi = mi[order], gi[order]
    nu_rows = nu[mi]
    b_rows = b[gi]
    states = tuple(
        FockState(tuple(int(x) for x in nr), tuple(int(x) for x in br))
        for nr, br in zip(nu_rows, b_rows)
    )
    return SectorBasis(
        key=key,
        states=states,
        cutoff=tuple(cutoff),
        generators=tuple(generators),
        kappa_max=kappa_max,
    )


def enumerate_rwa_sector(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    key: SectorKey,
    cutoff: Cutoff,
) -> SectorBasis:
    """All product states within the photon caps with the given eigenvalues.

    An empty result is valid: sectors may be empty either intrinsically or
    because the caps clip them.
    """
    if len(key.kappa) != len(generators):
        raise ValueError("sector key length must match the number of generators")
    nu, b = _product_grid(spec, cutoff)
    kv = _eigenvalue_table(generators, nu, b)
    mask = np.ones((nu.shape[0], b.shape[0]), dtype=bool)
    for z, target in enumerate(key.kappa):
        mask &= kv[z] == target
    return _collect_basis(spec, generators, key, cutoff, mask, nu, b, kv, None)


def enumerate_parity_basis(
    spec: ModelSpec,
    generators: Sequence[SymmetryGenerator],
    sigma: ParityKey,
    kappa_max: SectorKey | None,
    cutoff: Cutoff,
) -> SectorBasis:
    """Direct sum of the sectors with the given eigenvalue parities.

    ``kappa_max`` optionally truncates the sector lattice componentwise; the
    photon caps always apply.  States are block-ordered by sector.
    """
    if len(sigma.sigma) != len(generators):
        raise ValueError("parity key length must match the number of generators")
    nu, b = _product_grid(spec, cutoff)
    kv = _eigenvalue_table(generators, nu, b)
    mask = np.ones((nu.shape[0], b.shape[0]), dtype=bool)
    for z, par in enumerate(sigma.sigma):
        mask &= (kv[z] & 1) == par
    if kappa_max is not None:
        for z, km in enumerate(kappa_max.kappa):
            mask &= kv[z] <= km
    return _collect_basis(
        spec, generators, sigma, cutoff, mask, nu, b, kv,
        None if kappa_max is None else kappa_max.kappa,
    )


def all_parity_keys(zeta0: int) -> list[ParityKey]:
    """The 2**zeta0 parity labels, in lexicographic order."""
    return [ParityKey(sig) for sig in itertools.product((0, 1), repeat=zeta0)]


def oscillator_degeneracy(N: int, n: int) -> int:
    """Number of N-oscillator states with n total quanta; zero for n < 0."""
    if n < 0:
        return 0
    return comb(n + N - 1, n)


def _g3(n: int) -> int:
    return oscillator_degeneracy(3, n)


def _g2(n: int) -> int:
    return oscillator_degeneracy(2, n)


def _dim_xi(k1: int, k2: int, Na: int) -> int:
    if Na >= k1 - k2 and 2 * k2 >= k1:
        return _g3(k1 - k2)
    if Na >= k1 - k2 and 2 * k2 < k1:
        return _g3(k1) - _g3(k1 - k2 - 1) - 2 * _g3(k2 - 1)
    if Na > k2 and Na < k1 - k2:
        return _g3(Na) - _g3(Na - k2 - 1)
    if Na <= k2 and Na < k1 - k2:
        return _g3(Na)
    raise AssertionError(f"unreachable branch for ({k1},{k2},{Na})")


def _dim_lambda(k1: int, k2: int, Na: int) -> int:
    if k2 < k1 and Na >= k2:
        return _g3(k2)
    if k2 >= k1 and Na >= k2:
        return _g3(k1)
    if k2 >= k1 and Na < k2:
        return _g3(Na + k1 - k2)
    if k2 < k1 and Na <= k1 and Na < k2:
        return _g3(Na)
    raise AssertionError(f"unreachable branch for ({k1},{k2},{Na})")


def _dim_v(k1: int, k2: int, Na: int) -> int:
    if Na >= k1 + k2:
        return _g2(k1) * _g2(k2)
    half = (k1 + k2) / 2
    if (Na <= half and k2 < Na) or (k1 + k2 > Na > half and Na < k1):
        return _g2(k2) * _g2(Na) - _g3(k2 - 1)
    if (Na <= half and k1 < Na) or (k1 + k2 > Na > half and Na < k2):
        return _g2(k1) * _g2(Na) - _g3(k1 - 1)
    if k1 + k2 > Na > half and Na >= k1 and Na >= k2:
        return (
            1
            + _g2(k1 - 1) * _g2(k2 - 1)
            + _g2(Na - 1) * _g2(k1 + k2 - 1)
            - _g3(k1 + k2 - 2)
            - _g3(Na - 2)
        )
    # Saturation: with both eigenvalues at least the atom count, every matter
    # distribution is reachable and the dimension is that of an Na-quanta
    # three-dimensional oscillator.  Testing this last also covers the
    # boundary cells min(k1,k2) == Na that the case split above leaves open.
    if k2 >= Na and k1 >= Na:
        return _g3(Na)
    raise AssertionError(f"unreachable branch for ({k1},{k2},{Na})")


_DIM_FORMULAS = {XI: _dim_xi, LAMBDA: _dim_lambda, V: _dim_v}


def sector_dimension_formula(config: str, key: SectorKey, Na: int) -> int:
    """Closed-form sector dimension for the named 3-level configurations.

    The case distinctions follow the derivation for each configuration; the
    branch conditions are tested in the order written.  Every cell should be
    validated against enumeration (the `dims` command does exactly that).
    """
    try:
        formula = _DIM_FORMULAS[config.lower()]
    except KeyError:
        raise ValueError(f"no dimension formula for configuration {config!r}") from None
    k1, k2 = key.kappa
    return formula(k1, k2, Na)


def gtcm_candidate_sectors(
    config: str, k1max: int, k2max: int, Na: int
) -> list[SectorKey]:
    """Sector labels that can carry the excitation-conserving ground surface.

    Each named configuration contributes two one-parameter families obtained
    from its two-level subsystems; only these sectors need to be scanned when
    minimizing the ground energy over sectors.
    """
    if k1max < 0 or k2max < 0:
        raise ValueError("sector bounds must be nonnegative")
    cfg = config.lower()
    if cfg == XI:
        fams = [(k1, 0) for k1 in range(k1max + 1)]
        fams += [(k2 + Na, k2) for k2 in range(k2max + 1)]
    elif cfg == LAMBDA:
        fams = [(k1, Na) for k1 in range(k1max + 1)]
        fams += [(k2, k2) for k2 in range(k2max + 1)]
    elif cfg == V:
        fams = [(k1, 0) for k1 in range(k1max + 1)]
        fams += [(0, k2) for k2 in range(k2max + 1)]
    else:
        raise ValueError(f"no sector rule for configuration {config!r}")
    return [SectorKey(k) for k in sorted(set(fams))]


def nonbinding_cutoff(config: str, key: SectorKey) -> Cutoff:
    """Photon caps large enough that they cannot clip the given sector."""
    k1, k2 = key.kappa
    cfg = config.lower()
    if cfg == XI:
        return (max(k1 - k2, 0), max(k2, 0))
    if cfg == LAMBDA:
        return (max(k1, 0), max(k1, 0))
    if cfg == V:
        return (max(k1, 0), max(k2, 0))
    raise ValueError(f"no photon bound known for configuration {config!r}")
