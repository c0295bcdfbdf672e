"""Piecewise-constant propagation and exact step-propagator derivatives.

These are straightforward dense-matrix implementations. They are used for
single-member evaluations and as the reference the fused ensemble kernel in
``quadgroup._kernel`` is tested against.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .hamiltonian import drift_diagonals
from .spinops import SpinOperators, angular_momentum_operators

DEGENERATE_PHASE = 1e-9


@dataclass(frozen=True)
class PulseShape:
    """Two-channel piecewise-constant control, ``values[j] = (ux_j, uy_j)`` in rad/s."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 2 or values.shape[0] < 1:
            raise ValueError(f"pulse values must have shape (N, 2), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("pulse values must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def ux(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def uy(self) -> np.ndarray:
        return self.values[:, 1]

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt


@dataclass(frozen=True)
class StepEigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    propagator: np.ndarray
    dt: float


@dataclass
class Trajectory:
    forward: list
    backward: list
    steps: list

    @property
    def final_state(self) -> np.ndarray:
        return self.forward[-1]


def _check_hermitian(h, tol=1e-12):
    h = np.asarray(h)
    scale = max(1.0, float(np.abs(h).max()))
    if np.abs(h - h.conj().T).max() > tol * scale:
        raise ValueError("matrix is not Hermitian")


def step_propagator(h: np.ndarray, dt: float) -> StepEigenDecomposition:
    """Eigendecomposition of ``h`` and the exact step ``exp(-i h dt)``."""
    _check_hermitian(h)
    energies, vecs = np.linalg.eigh(h)
    prop = (vecs * np.exp(-1j * energies * dt)) @ vecs.conj().T
    return StepEigenDecomposition(energies, vecs, prop, dt)


def phase_kernel(energies: np.ndarray, dt: float) -> np.ndarray:
    """Matrix ``G`` with ``G_mn = (exp(i theta) - 1) / (i theta)``, ``theta = (E_m - E_n) dt``.

    Evaluated as ``exp(i theta / 2) sinc(theta / 2)`` to avoid cancellation;
    pairs with ``|theta| < 1e-9`` are treated as degenerate and get 1.
    """
    theta = (energies[:, None] - energies[None, :]) * dt
    g = np.exp(0.5j * theta) * np.sinc(theta / (2 * np.pi))
    g[np.abs(theta) < DEGENERATE_PHASE] = 1.0
    return g


def propagator_derivative(step: StepEigenDecomposition, control_op: np.ndarray, dt: float) -> np.ndarray:
    """``D`` such that ``dU/du = U @ D`` for the control multiplying ``control_op``."""
    v = step.eigenvectors
    inner = v.conj().T @ (-1j * dt * control_op) @ v
    return v @ (inner * phase_kernel(step.eigenvalues, dt)) @ v.conj().T


def commutator_series_derivative(h: np.ndarray, control_op: np.ndarray, dt: float, order: int) -> np.ndarray:
    """Truncated nested-commutator form of ``dU/du``.

    ``-i dt U sum_{l<=order} (i dt)^l / (l+1)! [h, control_op]_l``.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    u = step_propagator(h, dt).propagator
    nested = np.asarray(control_op, dtype=complex)
    total = np.zeros_like(nested)
    for level in range(order + 1):
        total = total + (1j * dt) ** level / factorial(level + 1) * nested
        nested = h @ nested - nested @ h
    return -1j * dt * u @ total


def step_hamiltonians(pulse: PulseShape, member, ops: SpinOperators | None = None) -> list[np.ndarray]:
    """Hamiltonian of every step, sampled at the step midpoint, rf scaled by the member."""
    ops = ops or angular_momentum_operators(member.params.spin)
    o = member.orient
    diag = drift_diagonals(member.params, ops.m_values, o.alpha, o.beta, o.gamma, pulse.midpoints())
    s = member.rf_scale
    return [np.diag(d) + s * (ux * ops.ix + uy * ops.iy) for d, (ux, uy) in zip(diag, pulse.values)]


def evolve(pulse: PulseShape, member, initial: np.ndarray, target: np.ndarray, ops: SpinOperators | None = None) -> Trajectory:
    """Forward-propagate ``initial`` and backward-propagate ``target^dagger``.

    ``forward[j]`` is the state at ``t_j = j dt``; ``backward[j]`` is
    ``M_j^dagger target^dagger M_j`` with ``M_j = U_{N-1} ... U_j``, so that
    ``Tr[backward[j] forward[j]]`` is the same overlap for every ``j``.
    """
    ops = ops or angular_momentum_operators(member.params.spin)
    steps = [step_propagator(h, pulse.dt) for h in step_hamiltonians(pulse, member, ops)]
    rho = np.asarray(initial, dtype=complex)
    forward = [rho]
    for st in steps:
        rho = st.propagator @ rho @ st.propagator.conj().T
        forward.append(rho)
    lam = np.asarray(target, dtype=complex).conj().T
    backward = [lam]
    for st in reversed(steps):
        lam = st.propagator.conj().T @ lam @ st.propagator
        backward.append(lam)
    backward.reverse()
    return Trajectory(forward, backward, steps)
