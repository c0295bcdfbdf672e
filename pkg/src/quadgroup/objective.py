"""Fidelity, cost and exact GRAPE gradients for single members and ensembles."""

from dataclasses import dataclass

import numpy as np

from ._kernel import ensemble_kernel
from .hamiltonian import drift_diagonals
from .propagation import PulseShape, evolve, propagator_derivative
from .spinops import angular_momentum_operators, three_quantum_target, thermal_state


@dataclass(frozen=True)
class Normalization:
    n_factor: float = 9 / 4

    def __post_init__(self):
        if not self.n_factor > 0:
            raise ValueError(f"n_factor must be > 0, got {self.n_factor}")

    @classmethod
    def for_initial(cls, initial: np.ndarray) -> "Normalization":
        """Largest attainable ``|rho_rc|**2`` (r != c) over the unitary orbit of ``initial``."""
        ev = np.linalg.eigvalsh(initial)
        return cls(((ev[-1] - ev[0]) / 2) ** 2)


@dataclass
class CostReport:
    cost: float
    fidelity: float
    gradient: np.ndarray
    member_fidelities: np.ndarray | None = None


def fidelity(rho_final: np.ndarray, target: np.ndarray, norm: Normalization = Normalization()) -> float:
    """``|Tr[target^dagger rho_final]|**2 / n_factor``."""
    rho_final = np.asarray(rho_final)
    target = np.asarray(target)
    if rho_final.shape != target.shape:
        raise ValueError(f"shape mismatch {rho_final.shape} vs {target.shape}")
    overlap = np.trace(target.conj().T @ rho_final)
    return float(abs(overlap) ** 2 / norm.n_factor)


def member_cost_gradient(
    pulse: PulseShape,
    member,
    norm: Normalization = Normalization(),
    initial: np.ndarray | None = None,
    target: np.ndarray | None = None,
) -> CostReport:
    """Cost and exact gradient for one ensemble member (dense reference path)."""
    ops = angular_momentum_operators(member.params.spin)
    initial = thermal_state(member.params.spin) if initial is None else np.asarray(initial, dtype=complex)
    target = three_quantum_target(member.params.spin) if target is None else np.asarray(target, dtype=complex)
    traj = evolve(pulse, member, initial, target, ops)
    overlap = np.trace(target.conj().T @ traj.final_state)
    fid = abs(overlap) ** 2 / norm.n_factor
    controls = (member.rf_scale * ops.ix, member.rf_scale * ops.iy)
    grad = np.empty((pulse.n_steps, 2))
    for j, step in enumerate(traj.steps):
        rho = traj.forward[j]
        lam = traj.backward[j]
        for k, hk in enumerate(controls):
            d = propagator_derivative(step, hk, pulse.dt)
            dover = np.trace(lam @ (d @ rho + rho @ d.conj().T))
            grad[j, k] = -2.0 / norm.n_factor * (dover * np.conj(overlap)).real
    return CostReport(1.0 - fid, fid, grad)


def _single_entry(target):
    nz = np.argwhere(np.abs(target) > 0)
    if len(nz) != 1:
        return None
    r, c = (int(x) for x in nz[0])
    return r, c, complex(target[r, c])


class EnsembleProblem:
    """Expected cost ``sum_l p_l J_l`` and its gradient for a fixed time grid.

    Drift Hamiltonians at the step midpoints are computed once. Members are
    reduced in ensemble order, so results do not depend on scheduling.
    """

    def __init__(self, ensemble, n_steps: int, dt: float, norm: Normalization = Normalization(),
                 initial: np.ndarray | None = None, target: np.ndarray | None = None):
        if not ensemble:
            raise ValueError("ensemble must be nonempty")
        if n_steps < 1 or not dt > 0:
            raise ValueError("need n_steps >= 1 and dt > 0")
        spins = {m.params.spin for m in ensemble}
        if len(spins) != 1:
            raise ValueError("all members must share one spin")
        spin = spins.pop()
        self.ensemble = list(ensemble)
        self.n_steps = n_steps
        self.dt = float(dt)
        self.norm = norm
        self.ops = angular_momentum_operators(spin)
        self.initial = thermal_state(spin) if initial is None else np.asarray(initial, dtype=complex)
        self.target = three_quantum_target(spin) if target is None else np.asarray(target, dtype=complex)
        self.weights = np.array([m.weight for m in self.ensemble], dtype=float)
        self.scales = np.array([m.rf_scale for m in self.ensemble], dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights sum to {self.weights.sum()}, expected 1")
        times = (np.arange(n_steps) + 0.5) * self.dt
        m = self.ops.m_values
        self.drift = np.empty((len(self.ensemble), n_steps, self.ops.dim))
        for i, member in enumerate(self.ensemble):
            o = member.orient
            self.drift[i] = drift_diagonals(member.params, m, o.alpha, o.beta, o.gamma, times)
        self._ix_off = np.real(np.diag(self.ops.ix, 1)).copy()
        self._entry = _single_entry(self.target)

    def evaluate(self, values: np.ndarray) -> CostReport:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_steps, 2):
            raise ValueError(f"pulse values must have shape {(self.n_steps, 2)}, got {values.shape}")
        if self._entry is None:
            return self._evaluate_dense(values)
        r, c, tau = self._entry
        grad = np.zeros((self.n_steps, 2))
        fids = np.zeros(len(self.ensemble))
        cost = ensemble_kernel(
            self.drift, self.scales, self.weights,
            np.ascontiguousarray(values[:, 0]), np.ascontiguousarray(values[:, 1]),
            self.dt, self.ops.m_values, self._ix_off, self.initial,
            r, c, tau, self.norm.n_factor, grad, fids,
        )
        return CostReport(float(cost), float(1.0 - cost), grad, fids)

    def _evaluate_dense(self, values):
        pulse = PulseShape(self.dt, values)
        cost = 0.0
        grad = np.zeros((self.n_steps, 2))
        fids = np.empty(len(self.ensemble))
        for i, member in enumerate(self.ensemble):
            rep = member_cost_gradient(pulse, member, self.norm, self.initial, self.target)
            fids[i] = rep.fidelity
            cost += member.weight * rep.cost
            grad += member.weight * rep.gradient
        return CostReport(cost, 1.0 - cost, grad, fids)


def ensemble_cost_gradient(pulse: PulseShape, ensemble, norm: Normalization = Normalization(), **kwargs) -> CostReport:
    """One-shot expected cost and gradient over ``ensemble``."""
    if not ensemble:
        raise ValueError("ensemble must be nonempty")
    return EnsembleProblem(ensemble, pulse.n_steps, pulse.dt, norm, **kwargs).evaluate(pulse.values)
