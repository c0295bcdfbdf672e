"""Pulse spectra, fidelity statistics and linear-fit tooling for multistart results."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .propagation import PulseShape


@dataclass(frozen=True)
class PulseSpectrum:
    """Magnitude of the centred DFT of ``u_x + i u_y``.

    ``frequencies`` are in Hz and run over ``[-1/(2 dt), 1/(2 dt))``;
    ``magnitude`` carries the units of the controls (rad/s).
    """

    frequencies: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        if np.shape(self.frequencies) != np.shape(self.magnitude):
            raise ValueError("frequencies and magnitude must have equal length")


@dataclass(frozen=True)
class QuartileSummary:
    q25: float
    median: float
    q75: float
    max: float
    min: float
    count: int = 0

    def as_row(self):
        return [self.min, self.q25, self.median, self.q75, self.max]


def pulse_spectrum(pulse: PulseShape) -> PulseSpectrum:
    """Unwindowed DFT with 1/N normalisation, zero frequency centred."""
    if pulse.n_steps < 2:
        raise ValueError("need at least 2 steps for a spectrum")
    z = pulse.ux + 1j * pulse.uy
    spec = np.fft.fftshift(np.fft.fft(z)) / pulse.n_steps
    freqs = np.fft.fftshift(np.fft.fftfreq(pulse.n_steps, pulse.dt))
    return PulseSpectrum(freqs, np.abs(spec))


def average_spectrum(pulses) -> PulseSpectrum:
    """Elementwise mean of the magnitude spectra of pulses sharing one grid."""
    pulses = list(pulses)
    if not pulses:
        raise ValueError("need at least one pulse")
    n, dt = pulses[0].n_steps, pulses[0].dt
    for p in pulses[1:]:
        if p.n_steps != n or p.dt != dt:
            raise ValueError(f"mixed time grids: ({n}, {dt}) vs ({p.n_steps}, {p.dt})")
    spectra = [pulse_spectrum(p) for p in pulses]
    mags = np.stack([s.magnitude for s in spectra])
    return PulseSpectrum(spectra[0].frequencies, mags.mean(axis=0))


def spectral_energy_fraction(spectrum: PulseSpectrum, f_cut: float) -> float:
    """Share of ``sum |S|**2`` carried by bins with ``|f| <= f_cut``."""
    if f_cut < 0:
        raise ValueError("f_cut must be >= 0")
    power = spectrum.magnitude**2
    total = power.sum()
    if total == 0:
        return 1.0
    return float(power[np.abs(spectrum.frequencies) <= f_cut].sum() / total)


def band_limit(basis_size: int, duration: float) -> float:
    """Highest frequency (Hz) present in the sine basis of size ``basis_size``."""
    return (basis_size + 1) / (2 * duration)


def quartile_stats(values) -> QuartileSummary:
    """Quartiles by linear interpolation between order statistics."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("quartile_stats needs at least one value")
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return QuartileSummary(float(q25), float(med), float(q75), float(v.max()), float(v.min()), int(v.size))


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = slope x + intercept`` and ``R^2 = 1 - SS_res / SS_tot``.

    A constant ``y`` has no variance to explain and yields ``R^2 = 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("x and y must be 1-D with equal length >= 2")
    if np.ptp(x) == 0:
        raise ValueError("x values are all equal; slope is undefined")
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 0.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def write_spectrum(path, spectrum: PulseSpectrum) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack([spectrum.frequencies, spectrum.magnitude]),
               fmt="%.12g", delimiter=",", header="frequency_hz,magnitude_rad_s", comments="")
    return path


def read_spectrum(path) -> PulseSpectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PulseSpectrum(data[:, 0], data[:, 1])


def write_quartile_table(path, rows) -> Path:
    """``rows`` is an iterable of ``(mode, basis_size or None, QuartileSummary)``."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("mode,basis_size,count,min,q25,median,q75,max\n")
        for mode, basis, q in rows:
            vals = ",".join(f"{v:.12g}" for v in q.as_row())
            fh.write(f"{mode},{'' if basis is None else basis},{q.count},{vals}\n")
    return path


def write_energy_table(path, rows) -> Path:
    """``rows`` is an iterable of ``(group label, f_cut Hz, fraction)``."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("group,f_cut_hz,fraction\n")
        for label, f_cut, frac in rows:
            fh.write(f"{label},{f_cut:.12g},{frac:.12g}\n")
    return path
