"""Simulation of detector-assisted versus data-pattern quantum state tomography."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateMeasurementError,
    DegenerateProjectionError,
    InformationallyIncompleteError,
    InvalidInputError,
    NumericalFailureError,
    SamplingExhaustedError,
    SingularStatisticsError,
    TomoError,
)
from .quantum import gell_mann_basis, square_root_povm, born_probs, fidelity  # noqa: E402
from .estimators import design_matrix, dqst_estimate, dpt_estimate, fisher_matrix, crlb  # noqa: E402
