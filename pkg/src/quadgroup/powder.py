"""Powder and rf-inhomogeneity ensembles."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hamiltonian import Orientation, SpinSystemParams


@dataclass(frozen=True)
class EnsembleMember:
    orient: Orientation
    rf_scale: float
    params: SpinSystemParams
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"weight must be > 0, got {self.weight}")
        if not self.rf_scale > 0:
            raise ValueError(f"rf_scale must be > 0, got {self.rf_scale}")


@dataclass(frozen=True)
class PowderSpec:
    n_alpha_beta: int = 50
    n_gamma: int = 3
    rf_scales: tuple = (0.95, 1.0, 1.05)
    repulsion_iterations: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "rf_scales", tuple(float(s) for s in self.rf_scales))
        if self.n_alpha_beta < 1:
            raise ValueError("n_alpha_beta must be >= 1")
        if self.n_gamma < 1:
            raise ValueError("n_gamma must be >= 1")
        if not self.rf_scales:
            raise ValueError("rf_scales must be nonempty")
        if any(s <= 0 for s in self.rf_scales):
            raise ValueError("rf_scales must be positive")
        if self.repulsion_iterations < 0:
            raise ValueError("repulsion_iterations must be >= 0")


def repulsion_potential(points: np.ndarray) -> float:
    """Sum over pairs of inverse chord distances."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    iu = np.triu_indices(len(points), 1)
    return float((1.0 / dist[iu]).sum())


def _forces(points):
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return (diff / dist[..., None] ** 3).sum(axis=1)


def repulsion_points(n: int, iterations: int = 2000, seed: int = 0, history: list | None = None) -> np.ndarray:
    """Unit vectors relaxed by mutual 1/r repulsion from a seeded random start.

    Each iteration moves every point along its total repulsive force with a
    step that decays as ``1 / (1 + k / 100)`` and projects back onto the sphere.
    A trial step that would raise the potential is halved until it does not,
    so the potential never increases. ``history`` (if given) receives the
    potential after every iteration, starting with the initial configuration.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    if n == 1:
        return pts
    spacing = np.sqrt(4 * np.pi / n)
    energy = repulsion_potential(pts)
    if history is not None:
        history.append(energy)
    for k in range(iterations):
        force = _forces(pts)
        step = 0.1 * spacing / (1 + k / 100) / np.abs(force).max()
        for _ in range(30):
            trial = pts + step * force
            trial /= np.linalg.norm(trial, axis=1, keepdims=True)
            trial_energy = repulsion_potential(trial)
            if trial_energy <= energy:
                pts, energy = trial, trial_energy
                break
            step /= 2
        if history is not None:
            history.append(energy)
    return pts


def repulsion_orientations(n: int, iterations: int = 2000, seed: int = 0) -> list[tuple[float, float]]:
    """(alpha, beta) pairs of a REPULSION point set on the full sphere."""
    pts = repulsion_points(n, iterations, seed)
    beta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    alpha = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    return [(float(a), float(b)) for a, b in zip(alpha, beta)]


def build_ensemble(spec: PowderSpec, params: SpinSystemParams, seed: int = 0) -> list[EnsembleMember]:
    """Cartesian product of (alpha, beta) pairs, equidistant gamma and rf scales.

    Ordering is rf scale outermost, then orientation pair, then gamma.
    Weights are uniform.
    """
    pairs = repulsion_orientations(spec.n_alpha_beta, spec.repulsion_iterations, seed)
    gammas = [2 * np.pi * k / spec.n_gamma for k in range(spec.n_gamma)]
    total = len(pairs) * len(gammas) * len(spec.rf_scales)
    weight = 1.0 / total
    return [
        EnsembleMember(Orientation(a, b, g), scale, params, weight)
        for scale in spec.rf_scales
        for a, b in pairs
        for g in gammas
    ]


def ensemble_to_records(ensemble) -> list[dict]:
    return [
        {
            "alpha": m.orient.alpha,
            "beta": m.orient.beta,
            "gamma": m.orient.gamma,
            "rf_scale": m.rf_scale,
            "weight": m.weight,
        }
        for m in ensemble
    ]


def save_ensemble(ensemble, path) -> None:
    """Write orientations, rf scales and weights as CSV with 17 significant digits."""
    lines = ["alpha_rad,beta_rad,gamma_rad,rf_scale,weight"]
    for rec in ensemble_to_records(ensemble):
        lines.append(",".join(f"{rec[k]:.17g}" for k in ("alpha", "beta", "gamma", "rf_scale", "weight")))
    Path(path).write_text("\n".join(lines) + "\n")


def load_ensemble(path, params: SpinSystemParams) -> list[EnsembleMember]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    out = []
    for row in rows:
        a, b, g, s, w = (float(x) for x in row.split(","))
        out.append(EnsembleMember(Orientation(a, b, g), s, params, w))
    return out
