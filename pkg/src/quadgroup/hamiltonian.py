"""Secular Hamiltonian of a quadrupolar spin under magic-angle spinning.

Conventions
-----------
* Zeeman interaction frame of ``H_Z = -omega_0 Iz`` with ``omega_0 > 0`` (positive
  gyromagnetic ratio). The second-order terms then push the central transition
  to lower frequency, as in the usual textbook result.
* Rank-2 spherical components transform as ``V'_m = sum_k V_k D_{k m}(a, b, g)``
  with ``D_{k m}(a, b, g) = exp(-i k a) d_{k m}(b) exp(-i m g)``.
  The chain is principal axis frame -> rotor frame with ``(alpha, beta, gamma)``,
  then rotor -> lab with ``(omega_r t, arccos(1/sqrt 3), 0)``.
* Tensor components are in units of ``eq`` so that ``V_{2,0} = sqrt(3/2)`` and
  ``V_{2,+-2} = eta / 2`` in the principal axis frame.

With ``omega_Q = 2 pi 3 C_Q / (2I (2I - 1))`` the coefficients are::

    w1  =  omega_Q / (3 sqrt 6)          * Re V_{2,0}
    w21 = -(omega_Q / 3)**2 / (2 omega_0) * Re V_{2,1} V_{2,-1}
    w22 = -(omega_Q / 3)**2 / (2 omega_0) * Re V_{2,2} V_{2,-2}
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .spinops import SpinOperators

MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))
_M2 = np.arange(2, -3, -1)


@dataclass(frozen=True)
class QuadrupoleParams:
    cq: float
    eta: float
    spin: float = 1.5

    def __post_init__(self):
        if not np.isfinite(self.cq) or self.cq < 0:
            raise ValueError(f"quad.cq must be >= 0 Hz, got {self.cq}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"quad.eta must lie in [0, 1], got {self.eta}")
        if self.spin < 1:
            raise ValueError(f"quad.spin must be >= 1 for a quadrupole coupling, got {self.spin}")

    @property
    def omega_q(self) -> float:
        """Quadrupole frequency 2 pi 3 C_Q / (2I(2I-1)) in rad/s."""
        i = self.spin
        return 2 * np.pi * 3 * self.cq / (2 * i * (2 * i - 1))


@dataclass(frozen=True)
class SpinSystemParams:
    quad: QuadrupoleParams
    larmor_frequency: float
    isotropic_shift: float = 0.0
    rotor_frequency: float = 0.0
    second_order: bool = True

    def __post_init__(self):
        if not self.larmor_frequency > 0 and self.second_order:
            raise ValueError("larmor_frequency must be > 0 when second-order terms are enabled")
        if self.larmor_frequency < 0:
            raise ValueError(f"larmor_frequency must be >= 0, got {self.larmor_frequency}")
        if self.rotor_frequency < 0:
            raise ValueError(f"rotor_frequency must be >= 0, got {self.rotor_frequency}")

    @property
    def spin(self) -> float:
        return self.quad.spin


@dataclass(frozen=True)
class Orientation:
    alpha: float
    beta: float
    gamma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= np.pi + 1e-12:
            raise ValueError(f"beta must lie in [0, pi], got {self.beta}")


@dataclass(frozen=True)
class QuadFrequencies:
    w1: float
    w21: float
    w22: float


def wigner_small_d(j: int, beta) -> np.ndarray:
    """Reduced Wigner matrix ``d^j_{m' m}(beta)``, rows/columns ordered m = j ... -j.

    ``beta`` may be an array; the matrix axes are appended.
    """
    beta = np.asarray(beta, dtype=float)
    c = np.cos(beta / 2)
    s = np.sin(beta / 2)
    ms = range(j, -j - 1, -1)
    out = np.zeros(beta.shape + (2 * j + 1, 2 * j + 1))
    for a, mp in enumerate(ms):
        for b, m in enumerate(ms):
            pref = np.sqrt(
                factorial(j + mp) * factorial(j - mp) * factorial(j + m) * factorial(j - m)
            )
            total = 0.0
            for k in range(max(0, m - mp), min(j + m, j - mp) + 1):
                den = factorial(j + m - k) * factorial(k) * factorial(mp - m + k) * factorial(j - mp - k)
                total = total + (
                    (-1) ** (mp - m + k)
                    * c ** (2 * j + m - mp - 2 * k)
                    * s ** (mp - m + 2 * k)
                    / den
                )
            out[..., a, b] = pref * total
    return out


_D_MAGIC = wigner_small_d(2, MAGIC_ANGLE)


def _rotor_frame_components(eta, alpha, beta, gamma) -> np.ndarray:
    """Rank-2 EFG components in the rotor frame, shape ``alpha.shape + (5,)``."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (alpha, beta, gamma)))
    pas = np.array([eta / 2, 0.0, np.sqrt(1.5), 0.0, eta / 2], dtype=complex)
    d = wigner_small_d(2, beta)
    left = np.exp(-1j * alpha[..., None] * _M2) * pas
    right = np.exp(-1j * gamma[..., None] * _M2)
    return np.einsum("...k,...km->...m", left, d) * right


def _coefficients(params: SpinSystemParams, lab: np.ndarray):
    quad = params.quad
    wq = quad.omega_q
    w1 = wq / (3 * np.sqrt(6)) * lab[..., 2].real
    if params.second_order and quad.cq > 0:
        pref = -((wq / 3) ** 2) / (2 * 2 * np.pi * params.larmor_frequency)
        w21 = pref * (lab[..., 1] * lab[..., 3]).real
        w22 = pref * (lab[..., 0] * lab[..., 4]).real
    else:
        w21 = np.zeros_like(w1)
        w22 = np.zeros_like(w1)
    return w1, w21, w22


def quad_frequencies_grid(params: SpinSystemParams, alpha, beta, gamma, times):
    """Vectorised ``quad_frequencies``.

    Orientation arrays of shape ``(L,)`` and times of shape ``(N,)`` give three
    arrays of shape ``(L, N)``.
    """
    rotor = _rotor_frame_components(params.quad.eta, alpha, beta, gamma)
    times = np.asarray(times, dtype=float)
    phase = np.exp(-1j * 2 * np.pi * params.rotor_frequency * times[:, None] * _M2)
    lab = np.einsum("...k,nk,km->...nm", rotor, phase, _D_MAGIC)
    return _coefficients(params, lab)


def quad_frequencies(params: SpinSystemParams, orient: Orientation, t: float) -> QuadFrequencies:
    """Quadrupole coefficients (rad/s) for one crystallite at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w1, w21, w22 = quad_frequencies_grid(params, orient.alpha, orient.beta, orient.gamma, [t])
    return QuadFrequencies(float(w1[0]), float(w21[0]), float(w22[0]))


def secular_polynomials(m: np.ndarray, spin: float):
    """Diagonals of the three quadrupolar spin polynomials for magnetic numbers ``m``."""
    ii = spin * (spin + 1)
    first = 3 * m**2 - ii
    p21 = (-8 * m**2 + 4 * ii - 1) * m
    p22 = (-2 * m**2 + 2 * ii - 1) * m
    return first, p21, p22


def drift_diagonals(params: SpinSystemParams, m: np.ndarray, alpha, beta, gamma, times) -> np.ndarray:
    """Diagonal of the drift Hamiltonian on a grid, shape ``(L, N, 2I+1)``."""
    w1, w21, w22 = quad_frequencies_grid(params, alpha, beta, gamma, times)
    first, p21, p22 = secular_polynomials(m, params.spin)
    shift = 2 * np.pi * params.larmor_frequency * params.isotropic_shift * 1e-6
    return (
        shift * m
        + w1[..., None] * first
        + w21[..., None] * p21
        + w22[..., None] * p22
    )


def drift_hamiltonian(params: SpinSystemParams, orient: Orientation, ops: SpinOperators, t: float) -> np.ndarray:
    """Diagonal drift Hamiltonian (rad/s) in the Zeeman basis."""
    if ops.dim != int(round(2 * params.spin + 1)):
        raise ValueError(f"operators have dimension {ops.dim}, spin {params.spin} needs {int(2 * params.spin + 1)}")
    if t < 0:
        raise ValueError("t must be >= 0")
    diag = drift_diagonals(params, ops.m_values, orient.alpha, orient.beta, orient.gamma, [t])[0]
    return np.diag(diag).astype(complex)


def total_hamiltonian(drift: np.ndarray, ux: float, uy: float, ops: SpinOperators) -> np.ndarray:
    """``drift + ux Ix + uy Iy``."""
    drift = np.asarray(drift)
    if drift.shape != (ops.dim, ops.dim):
        raise ValueError(f"drift shape {drift.shape} does not match operator dimension {ops.dim}")
    return drift + ux * ops.ix + uy * ops.iy
