"""Model definition: atomic levels, field modes, dipolar coupling topology.

A model is fully specified by the level energies (in units of the highest
level), the mode frequencies, the set of dipole-coupled level pairs with the
mode driving each of them, and the number of atoms.  Couplings are handled in
dimensionless form throughout: the strength on an edge is measured in units of
the two-level critical coupling of that edge.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from math import sqrt
from typing import Iterable, Mapping, Sequence

# An edge (j, k, s) couples levels j < k through mode s.  Indices are 1-based,
# matching the conventional labelling of levels and modes.
Edge = tuple[int, int, int]

XI = "xi"
LAMBDA = "lambda"
V = "v"
CONFIGURATIONS = (XI, LAMBDA, V)

# Level pairs and driving mode of the three named 3-level configurations.
_NAMED_EDGES: dict[str, tuple[Edge, ...]] = {
    XI: ((1, 2, 1), (2, 3, 2)),
    LAMBDA: ((1, 3, 1), (2, 3, 2)),
    V: ((1, 2, 1), (1, 3, 2)),
}

# Default level energies and mode frequencies of the named configurations
# (all transitions resonant with their driving mode).
_PRESET_PARAMS: dict[str, tuple[tuple[float, float, float], tuple[float, float]]] = {
    XI: ((0.0, 0.25, 1.0), (0.25, 0.75)),
    LAMBDA: ((0.0, 0.1, 1.0), (1.0, 0.9)),
    V: ((0.0, 0.8, 1.0), (0.8, 1.0)),
}


def critical_coupling(Omega: float, omega_jk: float) -> float:
    """Critical dipolar strength of a resonantly driven two-level transition.

    Both the mode frequency and the level gap must be positive.
    """
    if Omega <= 0 or omega_jk <= 0:
        raise ValueError(
            f"critical coupling needs positive frequency and gap, "
            f"got Omega={Omega}, omega_jk={omega_jk}"
        )
    return 0.5 * sqrt(Omega * omega_jk)


def detuning(Omega: float, omega_jk: float) -> float:
    """Dimensionless detuning of a mode from a level gap, Omega/omega_jk - 1."""
    if omega_jk <= 0:
        raise ValueError(f"level gap must be positive, got {omega_jk}")
    return Omega / omega_jk - 1.0


@dataclass(frozen=True)
class LevelScheme:
    """Atomic level energies, strictly increasing with omega_1 = 0, omega_n = 1."""

    omegas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        if len(self.omegas) < 2:
            raise ValueError("need at least two levels")
        if self.omegas[0] != 0.0 or self.omegas[-1] != 1.0:
            raise ValueError("level energies must satisfy omega_1 = 0, omega_n = 1")
        if any(a >= b for a, b in zip(self.omegas, self.omegas[1:])):
            raise ValueError("level energies must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.omegas)

    def gap(self, j: int, k: int) -> float:
        """Level separation |omega_j - omega_k| (1-based indices)."""
        return abs(self.omegas[j - 1] - self.omegas[k - 1])


@dataclass(frozen=True)
class ModeSet:
    """Frequencies of the quantized field modes, all positive."""

    Omegas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "Omegas", tuple(float(O) for O in self.Omegas))
        if not self.Omegas:
            raise ValueError("need at least one mode")
        if any(O <= 0 for O in self.Omegas):
            raise ValueError("mode frequencies must be positive")

    @property
    def ell(self) -> int:
        return len(self.Omegas)


@dataclass(frozen=True)
class CouplingTopology:
    """Set of dipole-coupled level pairs, each driven by exactly one mode."""

    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        edges = tuple(sorted((int(j), int(k), int(s)) for j, k, s in self.edges))
        object.__setattr__(self, "edges", edges)
        seen: set[tuple[int, int]] = set()
        for j, k, s in edges:
            if not (1 <= j < k):
                raise ValueError(f"edge ({j},{k},{s}) must have 1 <= j < k")
            if s < 1:
                raise ValueError(f"edge ({j},{k},{s}) has invalid mode index")
            if (j, k) in seen:
                raise ValueError(f"transition ({j},{k}) is driven by more than one mode")
            seen.add((j, k))

    @property
    def modes_used(self) -> tuple[int, ...]:
        return tuple(sorted({s for _, _, s in self.edges}))


def named_configuration(topology: CouplingTopology) -> str | None:
    """Name of the 3-level configuration this topology realizes, if any."""
    for name, edges in _NAMED_EDGES.items():
        if topology.edges == edges:
            return name
    return None


@dataclass(frozen=True)
class ModelSpec:
    """Complete model: levels, modes, coupling topology and atom count."""

    levels: LevelScheme
    modes: ModeSet
    topology: CouplingTopology
    Na: int

    def __post_init__(self) -> None:
        if self.Na < 1:
            raise ValueError("atom count must be at least 1")
        for j, k, s in self.topology.edges:
            if k > self.levels.n:
                raise ValueError(f"edge ({j},{k},{s}) references a missing level")
            if s > self.modes.ell:
                raise ValueError(f"edge ({j},{k},{s}) references a missing mode")
        if len(self.topology.modes_used) > self.levels.n:
            raise ValueError("more distinct driving modes than atomic levels")

    @property
    def n(self) -> int:
        return self.levels.n

    @property
    def ell(self) -> int:
        return self.modes.ell

    @property
    def configuration(self) -> str | None:
        return named_configuration(self.topology)

    def mubar(self, edge: Edge) -> float:
        """Critical coupling of an edge, used as the unit of its strength."""
        j, k, s = edge
        return critical_coupling(self.modes.Omegas[s - 1], self.levels.gap(j, k))

    def edge_detuning(self, edge: Edge) -> float:
        j, k, s = edge
        return detuning(self.modes.Omegas[s - 1], self.levels.gap(j, k))


@dataclass(frozen=True)
class CouplingPoint:
    """Dimensionless coupling strengths, one per topology edge."""

    edges: tuple[Edge, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.edges) != len(self.values):
            raise ValueError("one strength per edge required")
        if any(v < 0 for v in self.values):
            raise ValueError("coupling strengths must be nonnegative")

    @classmethod
    def from_mapping(cls, topology: CouplingTopology, x: Mapping[Edge, float]) -> "CouplingPoint":
        if set(x) != set(topology.edges):
            raise ValueError("strength keys must equal the topology edge set")
        return cls(topology.edges, tuple(x[e] for e in topology.edges))

    @classmethod
    def from_values(cls, spec: ModelSpec, values: Sequence[float]) -> "CouplingPoint":
        """Strengths listed in canonical (sorted) edge order."""
        return cls(spec.topology.edges, tuple(values))

    def __getitem__(self, edge: Edge) -> float:
        return self.values[self.edges.index(edge)]

    def as_dict(self) -> dict[Edge, float]:
        return dict(zip(self.edges, self.values))


@dataclass(frozen=True)
class SymmetryGenerator:
    """Integer-coefficient linear combination of photon numbers and populations.

    Commutes with the excitation-conserving Hamiltonian; its exponential
    exp(i pi K) is a parity symmetry of the full Hamiltonian.
    """

    eta: tuple[int, ...]
    lam: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta", tuple(int(e) for e in self.eta))
        object.__setattr__(self, "lam", tuple(int(l) for l in self.lam))

    def eigenvalue(self, nu: Sequence[int], b: Sequence[int]) -> int:
        return sum(e * v for e, v in zip(self.eta, nu)) + sum(
            l * p for l, p in zip(self.lam, b)
        )


# Conventional generator choices for the named configurations, written so that
# the first generator counts total excitations (or, for V, the excitations of
# the first two-level subsystem) and sector labels match the usual figures.
_NAMED_GENERATORS: dict[str, tuple[SymmetryGenerator, ...]] = {
    XI: (
        SymmetryGenerator((1, 1), (0, 1, 2)),  # nu1 + nu2 + A22 + 2 A33
        SymmetryGenerator((0, 1), (0, 0, 1)),  # nu2 + A33
    ),
    LAMBDA: (
        SymmetryGenerator((1, 1), (0, 0, 1)),  # nu1 + nu2 + A33
        SymmetryGenerator((0, 1), (1, 0, 1)),  # nu2 + A11 + A33
    ),
    V: (
        SymmetryGenerator((1, 0), (0, 1, 0)),  # nu1 + A22
        SymmetryGenerator((0, 1), (0, 0, 1)),  # nu2 + A33
    ),
}


def _euclid_eliminate(rows: list[list[int]], top: int, low: int, col: int) -> None:
    """Zero rows[low][col] against rows[top][col] by unimodular row operations."""
    while rows[low][col] != 0:
        q = rows[top][col] // rows[low][col]
        rows[top] = [a - q * b for a, b in zip(rows[top], rows[low])]
        rows[top], rows[low] = rows[low], rows[top]


def _integer_rank(rows: Iterable[Sequence[int]]) -> int:
    """Rank of an integer matrix, computed exactly by gcd elimination."""
    work = [list(r) for r in rows]
    rank = 0
    ncols = len(work[0]) if work else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(work)) if work[r][col] != 0), None)
        if pivot is None:
            continue
        work[rank], work[pivot] = work[pivot], work[rank]
        for r in range(rank + 1, len(work)):
            _euclid_eliminate(work, rank, r, col)
        rank += 1
    return rank


def _integer_kernel(rows: Sequence[Sequence[int]], nvars: int) -> list[tuple[int, ...]]:
    """Lattice basis of the integer solutions of ``rows @ x = 0``.

    Row-reduces the transposed system augmented with an identity block; the
    transformation rows whose matrix part vanishes span the kernel lattice.
    """
    m = len(rows)
    aug = [
        [rows[r][i] for r in range(m)] + [1 if c == i else 0 for c in range(nvars)]
        for i in range(nvars)
    ]
    pivot = 0
    for col in range(m):
        nz = next((r for r in range(pivot, nvars) if aug[r][col] != 0), None)
        if nz is None:
            continue
        aug[pivot], aug[nz] = aug[nz], aug[pivot]
        for r in range(pivot + 1, nvars):
            _euclid_eliminate(aug, pivot, r, col)
        pivot += 1
    return [tuple(aug[r][m:]) for r in range(pivot, nvars)]


def _hermite_rows(vectors: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    """Canonical (Hermite) basis of the lattice spanned by the given rows."""
    work = [list(v) for v in vectors]
    if not work:
        return []
    ncols = len(work[0])
    nrows = 0
    for col in range(ncols):
        pivot = next((r for r in range(nrows, len(work)) if work[r][col] != 0), None)
        if pivot is None:
            continue
        work[nrows], work[pivot] = work[pivot], work[nrows]
        for r in range(nrows + 1, len(work)):
            _euclid_eliminate(work, nrows, r, col)
        if work[nrows][col] < 0:
            work[nrows] = [-a for a in work[nrows]]
        p = work[nrows][col]
        for r in range(nrows):
            q = work[r][col] // p
            work[r] = [a - q * b for a, b in zip(work[r], work[nrows])]
        nrows += 1
    return [tuple(r) for r in work[:nrows]]


def symmetry_generators(
    topology: CouplingTopology, n: int, ell: int
) -> list[SymmetryGenerator]:
    """Independent constants of motion of the excitation-conserving Hamiltonian.

    Solves the integer linear system eta_s + lam_j - lam_k = 0 over the
    topology edges, modulo the trivial direction (all lam equal, eta zero)
    that merely counts atoms.  The number of generators returned equals
    ell + n - R - 1 with R the rank of the edge constraints.  For the three
    named 3-level configurations the conventional generator pair is returned,
    so sector labels agree with the standard choice; otherwise the basis is
    put in Hermite normal form, gauged to lam_1 = 0.
    """
    named = named_configuration(topology)
    if named is not None and (n, ell) == (3, 2):
        return list(_NAMED_GENERATORS[named])

    nvars = ell + n
    rows: list[list[int]] = []
    for j, k, s in topology.edges:
        row = [0] * nvars
        row[s - 1] = 1
        row[ell + j - 1] = 1
        row[ell + k - 1] = -1
        rows.append(row)
    rank = _integer_rank(rows) if rows else 0

    gauge = [0] * nvars
    gauge[ell] = 1  # fixes lam_1 = 0, removing the atom-counting direction
    kernel = _integer_kernel(rows + [gauge], nvars)
    basis = _hermite_rows(kernel)
    assert len(basis) == ell + n - rank - 1
    return [SymmetryGenerator(tuple(v[:ell]), tuple(v[ell:])) for v in basis]


def count_independent_constants(topology: CouplingTopology, n: int, ell: int) -> int:
    """The number zeta_0 = ell + n - R - 1 of constants of motion."""
    rows = []
    for j, k, s in topology.edges:
        row = [0] * (ell + n)
        row[s - 1] = 1
        row[ell + j - 1] = 1
        row[ell + k - 1] = -1
        rows.append(row)
    rank = _integer_rank(rows) if rows else 0
    return ell + n - rank - 1


def preset(config: str, Na: int) -> ModelSpec:
    """Named 3-level/2-mode model with the standard resonant parameters."""
    key = config.lower()
    if key not in _NAMED_EDGES:
        raise ValueError(f"unknown configuration {config!r}; expected one of {CONFIGURATIONS}")
    omegas, Omegas = _PRESET_PARAMS[key]
    return ModelSpec(
        levels=LevelScheme(omegas),
        modes=ModeSet(Omegas),
        topology=CouplingTopology(_NAMED_EDGES[key]),
        Na=Na,
    )


def parse_model_config(text: str) -> ModelSpec:
    """Parse a model file of ``key = value`` lines.

    Recognized keys: ``config`` (named preset), ``levels``, ``modes``,
    ``edges`` (list of [j, k, s] triples) and ``Na``.  A named preset supplies
    defaults for everything except ``Na``; explicit keys override it.
    """
    entries: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        try:
            entries[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ValueError(f"line {lineno}: cannot parse value {value.strip()!r}") from exc

    unknown = set(entries) - {"config", "levels", "modes", "edges", "Na"}
    if unknown:
        raise ValueError(f"unknown keys in model file: {sorted(unknown)}")
    if "Na" not in entries:
        raise ValueError("model file must set Na")
    Na = int(entries["Na"])  # type: ignore[arg-type]

    if "config" in entries:
        base = preset(str(entries["config"]), Na)
        levels = entries.get("levels", base.levels.omegas)
        modes = entries.get("modes", base.modes.Omegas)
        edges = entries.get("edges", base.topology.edges)
    else:
        try:
            levels = entries["levels"]
            modes = entries["modes"]
            edges = entries["edges"]
        except KeyError as exc:
            raise ValueError(f"model file missing key {exc.args[0]!r}") from exc

    return ModelSpec(
        levels=LevelScheme(tuple(levels)),  # type: ignore[arg-type]
        modes=ModeSet(tuple(modes)),  # type: ignore[arg-type]
        topology=CouplingTopology(tuple(tuple(e) for e in edges)),  # type: ignore[union-attr]
        Na=Na,
    )


def load_model_file(path: str) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_model_config(fh.read())
