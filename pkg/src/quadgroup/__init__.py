"""Bandwidth-limited optimal control of triple-quantum excitation in spin-3/2 nuclei."""

from .spinops import SpinOperators, angular_momentum_operators, three_quantum_target, thermal_state
from .hamiltonian import (
    Orientation,
    QuadFrequencies,
    QuadrupoleParams,
    SpinSystemParams,
    drift_hamiltonian,
    quad_frequencies,
    total_hamiltonian,
)
from .powder import EnsembleMember, PowderSpec, build_ensemble, repulsion_orientations
from .propagation import (
    PulseShape,
    StepEigenDecomposition,
    Trajectory,
    commutator_series_derivative,
    evolve,
    propagator_derivative,
    step_propagator,
)
from .objective import (
    CostReport,
    EnsembleProblem,
    Normalization,
    ensemble_cost_gradient,
    fidelity,
    member_cost_gradient,
)
from .groupbasis import GroupParametrization, ResponseMatrix, expand, fourier_response, project_gradient
from .optimizer import OptimizationRun, OptimizerOptions, minimize, multistart, random_initial
from .analysis import (
    PulseSpectrum,
    QuartileSummary,
    average_spectrum,
    linear_fit_r2,
    pulse_spectrum,
    quartile_stats,
    spectral_energy_fraction,
)

__version__ = "0.1.0"
