"""Reduced Fourier-sine parametrisation of the controls.

``u_{k,j} = sum_m c_{k,m} T_{m,j}`` with ``T_{m,j} = sin((m+1) pi j dt / T)``.
Both channels share the basis but have independent coefficients. Any other
linear map (e.g. a measured filter response) can be used by building a
``ResponseMatrix`` directly.
"""

from dataclasses import dataclass

import numpy as np

from .propagation import PulseShape


@dataclass(frozen=True)
class ResponseMatrix:
    entries: np.ndarray
    dt: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError("response entries must be a 2-D (M, N) array")
        object.__setattr__(self, "entries", entries)

    @property
    def basis_size(self) -> int:
        return self.entries.shape[0]

    @property
    def n_steps(self) -> int:
        return self.entries.shape[1]


@dataclass
class GroupParametrization:
    coefficients: np.ndarray
    duration: float
    n_steps: int
    shape: str = "constant"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != 2 or self.coefficients.shape[0] < 1:
            raise ValueError(f"coefficients must have shape (M, 2), got {self.coefficients.shape}")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")

    @property
    def basis_size(self) -> int:
        return self.coefficients.shape[0]

    @property
    def dt(self) -> float:
        return self.duration / self.n_steps


def fourier_response(basis_size: int, n_steps: int, dt: float) -> ResponseMatrix:
    """Sine basis sampled at the step start times ``j dt``."""
    if basis_size < 1:
        raise ValueError("basis_size must be >= 1")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    duration = n_steps * dt
    t = np.arange(n_steps) * dt
    m = np.arange(basis_size)[:, None]
    return ResponseMatrix(np.sin((m + 1) * np.pi * t[None, :] / duration), dt)


def expand(parametrization: GroupParametrization, response: ResponseMatrix) -> PulseShape:
    c = parametrization.coefficients
    if c.shape[0] != response.basis_size or parametrization.n_steps != response.n_steps:
        raise ValueError(
            f"coefficients ({c.shape[0]} x {parametrization.n_steps} steps) do not match "
            f"response ({response.basis_size} x {response.n_steps})"
        )
    return PulseShape(response.dt, response.entries.T @ c)


def project_gradient(grad_u: np.ndarray, response: ResponseMatrix) -> np.ndarray:
    """Chain rule ``dJ/dc_{k,m} = sum_j dJ/du_{k,j} T_{m,j}``."""
    grad_u = np.asarray(grad_u, dtype=float)
    if grad_u.shape != (response.n_steps, 2):
        raise ValueError(f"gradient shape {grad_u.shape} does not match response with {response.n_steps} steps")
    return response.entries @ grad_u
