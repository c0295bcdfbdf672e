"""Spin angular-momentum operators in the Zeeman basis ordered m = +I ... -I."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class SpinOperators:
    spin: float
    ix: np.ndarray
    iy: np.ndarray
    iz: np.ndarray

    @property
    def dim(self) -> int:
        return self.iz.shape[0]

    @property
    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers along the diagonal of ``iz``."""
        return np.real(np.diag(self.iz)).copy()

    @property
    def casimir(self) -> float:
        """I(I+1)."""
        return self.spin * (self.spin + 1.0)


def _check_spin(spin) -> float:
    try:
        twice = Fraction(spin).limit_denominator(1000) * 2
    except (TypeError, ValueError) as exc:
        raise ValueError(f"spin must be a positive half-integer, got {spin!r}") from exc
    if twice.denominator != 1 or twice <= 0 or abs(float(twice) - 2 * float(spin)) > 1e-12:
        raise ValueError(f"spin must be a positive half-integer, got {spin!r}")
    return float(twice) / 2


def angular_momentum_operators(spin) -> SpinOperators:
    """Build Ix, Iy, Iz for a single spin from the ladder operators."""
    spin = _check_spin(spin)
    m = np.arange(spin, -spin - 1, -1.0)
    dim = m.size
    iplus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        iplus[k - 1, k] = np.sqrt(spin * (spin + 1) - m[k] * (m[k] + 1))
    iminus = iplus.conj().T
    ix = 0.5 * (iplus + iminus)
    iy = -0.5j * (iplus - iminus)
    iz = np.diag(m).astype(complex)
    for op in (ix, iy, iz):
        op.flags.writeable = False
    return SpinOperators(spin=spin, ix=ix, iy=iy, iz=iz)


def three_quantum_target(spin=1.5) -> np.ndarray:
    """Single-element operator |+3/2><-3/2| selecting the triple-quantum coherence."""
    if _check_spin(spin) != 1.5:
        raise ValueError("the triple-quantum target is only defined for spin 3/2")
    target = np.zeros((4, 4), dtype=complex)
    target[0, 3] = 1.0
    return target


def thermal_state(spin=1.5) -> np.ndarray:
    """Equilibrium polarisation with identity and prefactors dropped, i.e. Iz."""
    return angular_momentum_operators(spin).iz.copy()
