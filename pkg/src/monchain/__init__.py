"""Monitored spin-1/2 XXZ chain simulator.

Quantum-trajectory evolution of an anisotropic Heisenberg chain under
periodic local Z measurements, built on a TEBD matrix-product-state engine
with an exact dense backend for cross-validation at small sizes.  Analysis
tools cover domain-wall spreading exponents, smoothing-spline regime
diagnostics, scaling collapses and entanglement-entropy scaling.
"""

__version__ = "0.1.0"

from .model import ChainSpec, TwoSiteGate, TrotterSchedule, bond_hamiltonian, bond_gate, trotter_schedule
from .mps import MpsState, TruncationReport
from .monitor import MonitorSpec, MeasurementRecord, make_rng, rate_to_step, step_to_rate
from .oracle import DenseState, ExactEvolver
from .trajectory import (
    RunConfig,
    TrajectoryResult,
    EnsembleSeries,
    TruncationBlowupError,
    EnsembleAbortError,
    run_trajectory,
    run_ensemble,
)
from .observables import SpreadingSeries, spin_density, centered_coordinates, spreading, classify_regime
from .analysis import (
    SplineModel,
    spline_fit,
    derivative_series,
    fit_exponent,
    collapse_cost,
    optimize_collapse,
    entropy_collapse_cost,
    optimize_entropy_collapse,
    steady_state_entropy,
)

__all__ = [
    "ChainSpec",
    "TwoSiteGate",
    "TrotterSchedule",
    "bond_hamiltonian",
    "bond_gate",
    "trotter_schedule",
    "MpsState",
    "TruncationReport",
    "MonitorSpec",
    "MeasurementRecord",
    "make_rng",
    "rate_to_step",
    "step_to_rate",
    "DenseState",
    "ExactEvolver",
    "RunConfig",
    "TrajectoryResult",
    "EnsembleSeries",
    "TruncationBlowupError",
    "EnsembleAbortError",
    "run_trajectory",
    "run_ensemble",
    "SpreadingSeries",
    "spin_density",
    "centered_coordinates",
    "spreading",
    "classify_regime",
    "SplineModel",
    "spline_fit",
    "derivative_series",
    "fit_exponent",
    "collapse_cost",
    "optimize_collapse",
    "entropy_collapse_cost",
    "optimize_entropy_collapse",
    "steady_state_entropy",
]
