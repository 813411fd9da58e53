"""Pulse-level quantum machine learning models: simulation, training and diagnostics."""
from .errors import (
    BudgetExceededError,
    DegenerateObservableError,
    InvalidArgumentError,
    NumericalIntegrityError,
    PulseQMLError,
    RangeViolationError,
    UnsupportedModelError,
)
from .operators import ModelSpec, pauli_string, spin_irrep
from .dynamics import PulseSchedule, predict, predict_batch, propagate
from .lie import dynamical_lie_algebra, expressivity_check, lie_closure, s_chain
from .fliess import fliess_series, iterated_integral
from .training import TrainConfig, train
from .diagnostics import FamilyKind, ModelFamily, build_family, gradient_variance

__version__ = "0.1.0"
