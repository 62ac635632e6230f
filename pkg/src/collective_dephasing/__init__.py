"""Exact pure-dephasing dynamics of N two-level atoms in a common bosonic bath.

The engine evaluates the reduced density matrix and the collective
polarization j_x(t) for product and bath-correlated initial states, with and
without ideal pi-pulse decoupling sequences, and checks every closed form
against brute-force evolution and frequency quadrature.
"""

__version__ = "0.1.0"

from .bath import OhmicBath, QuadratureBath, TabulatedSpectralDensity, kernel_by_quadrature
from .dd import PulseSequence, bang_bang, bang_bang_interval, explicit, filter_f, jx_with_dd, udd
from .dynamics import (
    JxEvaluator,
    TimeSeries,
    X_of_t,
    correlation_timescale,
    jx,
    jx_series,
    reduced_density_matrix,
    rho_element_correlated,
    rho_element_factorized,
)
from .errors import AccuracyError, DegenerateStateError, DomainError, SizeError
from .spin import ProjectiveState, UnitaryPreparation, preparation_weights

__all__ = [
    "AccuracyError",
    "DegenerateStateError",
    "DomainError",
    "JxEvaluator",
    "OhmicBath",
    "ProjectiveState",
    "PulseSequence",
    "QuadratureBath",
    "SizeError",
    "TabulatedSpectralDensity",
    "TimeSeries",
    "UnitaryPreparation",
    "X_of_t",
    "bang_bang",
    "bang_bang_interval",
    "correlation_timescale",
    "explicit",
    "filter_f",
    "jx",
    "jx_series",
    "jx_with_dd",
    "kernel_by_quadrature",
    "preparation_weights",
    "reduced_density_matrix",
    "rho_element_correlated",
    "rho_element_factorized",
    "udd",
]
