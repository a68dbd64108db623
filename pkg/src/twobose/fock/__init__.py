"""Exact many-body computations on truncated two-species Fock spaces."""

from .basis import (
    DimensionError,
    FockBasis,
    ManyBodyVector,
    SparseOperator,
    SpeciesSector,
    load_state,
    save_state,
)
from .excitation import (
    ExcitationBasis,
    ExcitationVector,
    RelationsReport,
    SplitReport,
    bogoliubov_operator,
    excitation_adjoint,
    excitation_map,
    excitation_unitary,
    split_M,
    verify_relations,
)
from .hamiltonian import (
    CondensationFraction,
    ConvergenceError,
    build_hamiltonian,
    condensation_fraction,
    ground_state,
    reduced_density,
)
from .quadratic import TruncatedFock, quadratic_operator, truncated_spectrum
from .toy import ToyHartree, ToyModel, ToyModelError, condensate_frame, toy_hartree

__all__ = [
    "DimensionError", "FockBasis", "ManyBodyVector", "SparseOperator", "SpeciesSector", "load_state", "save_state",
    "ExcitationBasis", "ExcitationVector", "RelationsReport", "SplitReport", "bogoliubov_operator",
    "excitation_adjoint", "excitation_map", "excitation_unitary", "split_M", "verify_relations",
    "CondensationFraction", "ConvergenceError", "build_hamiltonian", "condensation_fraction", "ground_state",
    "reduced_density", "TruncatedFock", "quadratic_operator", "truncated_spectrum",
    "ToyHartree", "ToyModel", "ToyModelError", "condensate_frame", "toy_hartree",
]

from .convergence import ConvergenceTable, bogoliubov_convergence_study, hartree_frame  # noqa: E402

__all__ += ["ConvergenceTable", "bogoliubov_convergence_study", "hartree_frame"]
