"""Finite-size quantum phase diagrams of n-level atoms coupled to cavity modes.

Exact diagonalization in symmetry-resolved truncated Fock bases, ground-state
minimization over symmetry blocks, fidelity/Bures boundary detection, and
matter-sector observables, for excitation-conserving and full matter-field
models.
"""

from .basis import (
    FockState,
    ParityKey,
    SectorBasis,
    SectorKey,
    enumerate_parity_basis,
    enumerate_rwa_sector,
    gtcm_candidate_sectors,
    oscillator_degeneracy,
    parity_of,
    sector_dimension_formula,
)
from .hamiltonian import (
    SparseOperator,
    build_H_diag,
    build_H_full,
    build_H_rwa,
    build_K,
    interaction_operator,
)
from .model import (
    CouplingPoint,
    CouplingTopology,
    LevelScheme,
    ModelSpec,
    ModeSet,
    SymmetryGenerator,
    critical_coupling,
    detuning,
    load_model_file,
    named_configuration,
    parse_model_config,
    preset,
    symmetry_generators,
)
from .observables import (
    FieldDiagonal,
    MatterDensity,
    field_diagonal,
    linear_entropy,
    linear_entropy_pair,
    occupations,
    pair_occupation_sums,
    reduced_matter,
    simplex_coords,
)
from .phase_diagram import (
    GridSpec,
    ScanResult,
    SeparatrixPoint,
    Thresholds,
    TransitionClass,
    bures_distance,
    detect_separatrix,
    energy_derivative,
    fidelity_line,
    scan_ground,
)
from .solver import (
    BlockCache,
    GroundSolution,
    NonConvergenceError,
    SolverError,
    SolverSettings,
    converge_cutoff,
    ground_over_blocks,
    lowest_eigenpairs,
    overlap,
)

__version__ = "0.1.0"
