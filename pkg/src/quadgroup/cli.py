"""Configuration-driven optimisation sweeps, analysis and pulse export.

Configs are JSON with physical units in the key names::

    {
      "spin_system": {"cq_hz": 3.2e6, "eta": 0.2, "larmor_hz": 130.9e6,
                      "shift_ppm": 0.0, "rotor_hz": 30e3},
      "pulse_grid": {"n_steps": 1331, "dt_s": 1e-7},
      "powder": {"n_alpha_beta": 50, "n_gamma": 3, "rf_scales": [0.95, 1.0, 1.05]},
      "modes": ["GRAPE", "GROUP"],
      "basis_sizes": [10, 50, 100, 200],
      "n_starts": 20,
      "base_seed": 0,
      "output_dir": "runs/desk"
    }

Missing blocks take their defaults; unknown keys are errors.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    average_spectrum,
    band_limit,
    pulse_spectrum,
    quartile_stats,
    spectral_energy_fraction,
    write_energy_table,
    write_quartile_table,
    write_spectrum,
)
from .hamiltonian import QuadrupoleParams, SpinSystemParams
from .objective import EnsembleProblem
from .optimizer import GRAPE, GROUP, ControlProblem, OptimizationRun, OptimizerOptions, multistart
from .powder import PowderSpec, build_ensemble
from .propagation import PulseShape

log = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
MANIFEST = "manifest.json"
CHECKPOINT_EVERY = 10
TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class SpinSystemConfig:
    cq_hz: float = 3.2e6
    eta: float = 0.2
    larmor_hz: float = 130.9e6
    shift_ppm: float = 0.0
    rotor_hz: float = 30e3
    spin: float = 1.5
    second_order: bool = True

    def build(self) -> SpinSystemParams:
        quad = QuadrupoleParams(self.cq_hz, self.eta, self.spin)
        return SpinSystemParams(quad, self.larmor_hz, self.shift_ppm, self.rotor_hz, self.second_order)


@dataclass(frozen=True)
class PulseGridConfig:
    n_steps: int = 1331
    dt_s: float = 1e-7


@dataclass(frozen=True)
class PowderConfig:
    n_alpha_beta: int = 50
    n_gamma: int = 3
    rf_scales: tuple = (0.95, 1.0, 1.05)
    repulsion_iterations: int = 2000
    seed: int = 0

    def build(self) -> PowderSpec:
        return PowderSpec(self.n_alpha_beta, self.n_gamma, self.rf_scales, self.repulsion_iterations)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = OptimizerOptions.max_iterations
    gradient_tolerance: float = OptimizerOptions.gradient_tolerance
    cost_tolerance: float = OptimizerOptions.cost_tolerance
    memory: int = OptimizerOptions.memory
    sufficient_decrease: float = OptimizerOptions.sufficient_decrease
    curvature: float = OptimizerOptions.curvature
    penalty_weight: float = OptimizerOptions.penalty_weight
    init_scale_hz: float = 20e3

    def build(self) -> OptimizerOptions:
        kw = {f.name: getattr(self, f.name) for f in fields(OptimizerOptions)}
        return OptimizerOptions(**kw)


@dataclass(frozen=True)
class RunConfig:
    spin_system: SpinSystemConfig = field(default_factory=SpinSystemConfig)
    pulse_grid: PulseGridConfig = field(default_factory=PulseGridConfig)
    powder: PowderConfig = field(default_factory=PowderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    modes: tuple = (GRAPE,)
    basis_sizes: tuple = ()
    n_starts: int = 1
    base_seed: int = 0
    threads: int = 1
    output_dir: str = "runs"

    @property
    def duration(self) -> float:
        return self.pulse_grid.n_steps * self.pulse_grid.dt_s

    def groups(self) -> list[tuple[str, int | None]]:
        out = []
        for mode in self.modes:
            if mode == GRAPE:
                out.append((GRAPE, None))
            else:
                out.extend((GROUP, m) for m in self.basis_sizes)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["powder"]["rf_scales"] = list(self.powder.rf_scales)
        d["modes"] = list(self.modes)
        d["basis_sizes"] = list(self.basis_sizes)
        return d


_SECTIONS = {
    "spin_system": SpinSystemConfig,
    "pulse_grid": PulseGridConfig,
    "powder": PowderConfig,
    "optimizer": OptimizerConfig,
}


def _number(path, value, kind):
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected {kind.__name__}, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{path}: must be finite, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"{path}: expected integer, got {value!r}")
        return int(value)
    return float(value)


def _section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key (allowed: {', '.join(known)})")
    values = {}
    for key, value in raw.items():
        default = getattr(cls(), key)
        path = f"{name}.{key}"
        if isinstance(default, tuple):
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{path}: expected a nonempty list")
            values[key] = tuple(_number(f"{path}[{i}]", v, float) for i, v in enumerate(value))
        else:
            values[key] = _number(path, value, type(default))
    return cls(**values)


def _check(cond, path, message):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _check_ranges(cfg: RunConfig):
    s = cfg.spin_system
    _check(s.cq_hz >= 0, "spin_system.cq_hz", f"must be >= 0, got {s.cq_hz}")
    _check(0 <= s.eta <= 1, "spin_system.eta", f"must lie in [0, 1], got {s.eta}")
    _check(s.larmor_hz > 0, "spin_system.larmor_hz", f"must be > 0, got {s.larmor_hz}")
    _check(s.rotor_hz >= 0, "spin_system.rotor_hz", f"must be >= 0, got {s.rotor_hz}")
    _check(s.spin == 1.5, "spin_system.spin", f"only spin 3/2 targets are supported, got {s.spin}")
    g = cfg.pulse_grid
    _check(g.n_steps >= 2, "pulse_grid.n_steps", f"must be >= 2, got {g.n_steps}")
    _check(g.dt_s > 0, "pulse_grid.dt_s", f"must be > 0, got {g.dt_s}")
    p = cfg.powder
    _check(p.n_alpha_beta >= 1, "powder.n_alpha_beta", f"must be >= 1, got {p.n_alpha_beta}")
    _check(p.n_gamma >= 1, "powder.n_gamma", f"must be >= 1, got {p.n_gamma}")
    _check(all(x > 0 for x in p.rf_scales), "powder.rf_scales", "entries must be > 0")
    _check(p.repulsion_iterations >= 0, "powder.repulsion_iterations", "must be >= 0")
    o = cfg.optimizer
    _check(o.max_iterations >= 1, "optimizer.max_iterations", f"must be >= 1, got {o.max_iterations}")
    _check(o.gradient_tolerance > 0, "optimizer.gradient_tolerance", "must be > 0")
    _check(o.cost_tolerance > 0, "optimizer.cost_tolerance", "must be > 0")
    _check(o.memory >= 1, "optimizer.memory", "must be >= 1")
    _check(0 < o.sufficient_decrease < o.curvature < 1, "optimizer.curvature",
           "need 0 < sufficient_decrease < curvature < 1")
    _check(o.penalty_weight >= 0, "optimizer.penalty_weight", "must be >= 0")
    _check(o.init_scale_hz >= 0, "optimizer.init_scale_hz", "must be >= 0")
    _check(cfg.modes and all(m in (GRAPE, GROUP) for m in cfg.modes), "modes",
           f"entries must be GRAPE or GROUP, got {list(cfg.modes)}")
    _check(len(set(cfg.modes)) == len(cfg.modes), "modes", "duplicate entries")
    if GROUP in cfg.modes:
        _check(len(cfg.basis_sizes) > 0, "basis_sizes", "GROUP mode needs at least one basis size")
    _check(all(m >= 1 for m in cfg.basis_sizes), "basis_sizes", "entries must be >= 1")
    _check(len(set(cfg.basis_sizes)) == len(cfg.basis_sizes), "basis_sizes", "duplicate entries")
    _check(cfg.n_starts >= 1, "n_starts", f"must be >= 1, got {cfg.n_starts}")
    _check(cfg.threads >= 1, "threads", f"must be >= 1, got {cfg.threads}")
    # the home-module constructors are the final authority
    try:
        s.build()
        p.build()
        o.build()
    except ValueError as exc:
        raise ConfigError(f"spin_system/powder/optimizer: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"<root>: expected an object, got {type(raw).__name__}")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key (allowed: {', '.join(sorted(known))})")
    kw = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kw[key] = _section(key, _SECTIONS[key], value)
        elif key == "modes":
            if isinstance(value, str):
                value = [value]
            _check(isinstance(value, list) and all(isinstance(v, str) for v in value), "modes",
                   "expected a list of strings")
            kw[key] = tuple(v.upper() for v in value)
        elif key == "basis_sizes":
            _check(isinstance(value, list), "basis_sizes", "expected a list of integers")
            kw[key] = tuple(_number(f"basis_sizes[{i}]", v, int) for i, v in enumerate(value))
        elif key == "output_dir":
            _check(isinstance(value, str) and value, "output_dir", "expected a nonempty string")
            kw[key] = value
        else:
            kw[key] = _number(key, value, int)
    cfg = RunConfig(**kw)
    _check_ranges(cfg)
    return cfg


def validate_config(text: str) -> RunConfig:
    """Parse JSON config text into a normalised ``RunConfig`` with defaults filled."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: not valid JSON ({exc})") from exc
    return config_from_dict(raw)


# pulse files -------------------------------------------------------------

def write_pulse(path, pulse: PulseShape) -> Path:
    """Full-precision pulse file with nutation frequencies in Hz."""
    path = Path(path)
    t = np.arange(pulse.n_steps) * pulse.dt
    with open(path, "w") as fh:
        fh.write(f"# n_steps={pulse.n_steps} dt_s={pulse.dt!r}\n")
        fh.write("time_s,ux_hz,uy_hz\n")
        np.savetxt(fh, np.column_stack([t, pulse.values / TWO_PI]), fmt="%.17g", delimiter=",")
    return path


def read_pulse(path) -> PulseShape:
    """Inverse of ``write_pulse``; returns controls in rad/s."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing pulse header line")
    meta = dict(item.split("=", 1) for item in first[1:].split())
    try:
        n, dt = int(meta["n_steps"]), float(meta["dt_s"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed pulse header {first.strip()!r}") from exc
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.shape != (n, 3):
        raise ValueError(f"{path}: expected {n} rows of 3 columns, got {data.shape}")
    return PulseShape(dt, data[:, 1:] * TWO_PI)


def _write_coefficients(path, coefficients):
    np.savetxt(path, coefficients / TWO_PI, fmt="%.17g", delimiter=",",
               header="cx_hz,cy_hz", comments="")


def _write_history(path, history):
    with open(path, "w") as fh:
        fh.write("iteration,cost,gradient_inf,step\n")
        for k, (c, g, s) in enumerate(history):
            fh.write(f"{k},{c!r},{g!r},{s!r}\n")


# optimisation ------------------------------------------------------------

def _run_record(run: OptimizationRun, out: Path) -> dict:
    run_dir = out / run.label
    run_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    if run.pulse is not None:
        files["pulse"] = str(write_pulse(run_dir / "pulse.csv", run.pulse).relative_to(out))
    if run.coefficients is not None:
        _write_coefficients(run_dir / "coefficients.csv", run.coefficients)
        files["coefficients"] = str((run_dir / "coefficients.csv").relative_to(out))
    _write_history(run_dir / "history.csv", run.history)
    files["history"] = str((run_dir / "history.csv").relative_to(out))
    return {
        "label": run.label,
        "mode": run.mode,
        "basis_size": run.basis_size,
        "seed": run.seed,
        "final_fidelity": run.final_fidelity,
        "final_cost": None if not np.isfinite(run.final_cost) else run.final_cost,
        "status": run.status,
        "converged": run.success,
        "failed": run.error is not None,
        "error": run.error,
        "iterations": max(len(run.history) - 1, 0),
        "evaluations": run.n_evaluations,
        "wall_time_s": run.wall_time,
        "files": files,
    }


def _write_manifest(out: Path, cfg: RunConfig, records, timings, complete: bool):
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "package_version": __version__,
        "complete": complete,
        "config": cfg.to_dict(),
        "runs": records,
        "timings": timings,
    }
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2))
    tmp.replace(out / MANIFEST)
    return manifest


def run_optimize(cfg: RunConfig) -> dict:
    """Run every (mode, basis size) group of ``cfg`` and persist the results.

    Returns the manifest dict, also written to ``<output_dir>/manifest.json``.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    params = cfg.spin_system.build()
    ensemble = build_ensemble(cfg.powder.build(), params, seed=cfg.powder.seed)
    problem = EnsembleProblem(ensemble, cfg.pulse_grid.n_steps, cfg.pulse_grid.dt_s)
    timings = {"setup_s": time.perf_counter() - t0, "groups": {}}
    log.info("ensemble of %d members ready in %.1fs", len(ensemble), timings["setup_s"])
    opts = cfg.optimizer.build()
    scale = TWO_PI * cfg.optimizer.init_scale_hz
    records = []

    def completed(run):
        records.append(_run_record(run, out))
        if len(records) % CHECKPOINT_EVERY == 0:
            _write_manifest(out, cfg, records, timings, complete=False)

    for mode, basis in cfg.groups():
        cp = ControlProblem(problem, mode, basis, penalty_weight=opts.penalty_weight)
        g0 = time.perf_counter()
        multistart(cp, cfg.n_starts, cfg.base_seed, opts, scale, workers=cfg.threads, on_complete=completed)
        name = mode if basis is None else f"{mode}_M{basis:03d}"
        timings["groups"][name] = time.perf_counter() - g0
    timings["total_s"] = time.perf_counter() - t0
    return _write_manifest(out, cfg, records, timings, complete=True)


def load_manifest(run_dir) -> tuple[dict, RunConfig]:
    path = Path(run_dir) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {run_dir}")
    try:
        manifest = json.loads(path.read_text())
        cfg = config_from_dict(manifest["config"])
        manifest["runs"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt manifest ({exc})") from exc
    return manifest, cfg


# analysis ----------------------------------------------------------------

def group_name(mode, basis_size) -> str:
    return GRAPE if basis_size is None else f"{mode}_M{basis_size:03d}"


def run_analyze(run_dir) -> dict[str, Path]:
    """Quartile, spectrum and energy-fraction tables under ``<run_dir>/analysis``."""
    run_dir = Path(run_dir)
    manifest, cfg = load_manifest(run_dir)
    out = run_dir / "analysis"
    out.mkdir(exist_ok=True)
    duration = cfg.duration
    groups: dict[tuple, list] = {}
    for rec in manifest["runs"]:
        groups.setdefault((rec["mode"], rec["basis_size"]), []).append(rec)
    order = sorted(groups, key=lambda k: (k[0] != GRAPE, k[1] or 0))

    written = {}
    q_rows = []
    for key in order:
        fids = [r["final_fidelity"] for r in groups[key] if r["final_fidelity"] is not None]
        if fids:
            q_rows.append((key[0], key[1], quartile_stats(fids)))
    written["quartiles"] = write_quartile_table(out / "quartiles.csv", q_rows)

    cutoffs = sorted({band_limit(m, duration) for m in cfg.basis_sizes})
    energy_rows = []
    with open(out / "pulse_energy.csv", "w") as fh:
        fh.write("label,group,f_cut_hz,fraction\n")
        for key in order:
            name = group_name(*key)
            pulses = [read_pulse(run_dir / r["files"]["pulse"]) for r in groups[key] if "pulse" in r["files"]]
            if not pulses:
                continue
            spec = average_spectrum(pulses)
            written[f"spectrum_{name}"] = write_spectrum(out / f"spectrum_{name}.csv", spec)
            for f_cut in cutoffs:
                energy_rows.append((name, f_cut, spectral_energy_fraction(spec, f_cut)))
            if key[1] is not None:
                f_cut = band_limit(key[1], duration)
                for r, p in zip((r for r in groups[key] if "pulse" in r["files"]), pulses):
                    frac = spectral_energy_fraction(pulse_spectrum(p), f_cut)
                    fh.write(f"{r['label']},{name},{f_cut:.12g},{frac:.12g}\n")
    written["pulse_energy"] = out / "pulse_energy.csv"
    written["energy"] = write_energy_table(out / "energy_fractions.csv", energy_rows)
    return written


# export ------------------------------------------------------------------

def export_shape(pulse_path, fmt: str = "csv", output=None) -> Path:
    """Write a pulse as 12-digit CSV (Hz) or as vendor amplitude-percent/phase-degree text."""
    pulse = read_pulse(pulse_path)
    if fmt not in ("csv", "vendor"):
        raise ValueError(f"unknown export format {fmt!r}")
    suffix = ".shape.csv" if fmt == "csv" else ".shape.txt"
    output = Path(output) if output else Path(pulse_path).with_suffix(suffix)
    hz = pulse.values / TWO_PI
    if fmt == "csv":
        t = np.arange(pulse.n_steps) * pulse.dt
        np.savetxt(output, np.column_stack([t, hz]), fmt="%.12g", delimiter=",",
                   header="time_s,ux_hz,uy_hz", comments="")
        return output
    amp = np.hypot(hz[:, 0], hz[:, 1])
    peak = amp.max()
    with open(output, "w") as fh:
        fh.write(f"# N={pulse.n_steps}\n# dt_s={pulse.dt:.12g}\n# max_nutation_hz={peak:.12g}\n")
        for (x, y), a in zip(hz, amp):
            fh.write("%s %s\n" % _amplitude_phase(x, y, a, peak))
    return output


def _amplitude_phase(x, y, a, peak):
    if peak == 0 or a == 0:
        return 0.0, 0.0
    pct = round(100.0 * a / peak, 6) + 0.0
    phase = round(float(np.degrees(np.arctan2(y, x))) % 360.0, 6) % 360.0 + 0.0
    return pct, phase


def read_shape_csv(path) -> PulseShape:
    """Load a CSV written by ``export_shape``; controls returned in rad/s."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if len(data) < 2:
        raise ValueError("shape file needs at least two rows to infer dt")
    return PulseShape(float(data[1, 0] - data[0, 0]), data[:, 1:] * TWO_PI)


# entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadgroup", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    opt = sub.add_parser("optimize", help="run a multistart sweep from a JSON config")
    opt.add_argument("config")
    opt.add_argument("--seed", type=int, help="override base_seed")
    opt.add_argument("--threads", type=int, help="concurrent runs per multistart")
    opt.add_argument("--output", help="override output_dir")
    ana = sub.add_parser("analyze", help="tabulate fidelities and spectra of a run directory")
    ana.add_argument("run_dir")
    exp = sub.add_parser("export", help="convert a pulse file to a shape file")
    exp.add_argument("pulse")
    exp.add_argument("--format", choices=("csv", "vendor"), default="csv")
    exp.add_argument("--output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "optimize":
            cfg = validate_config(Path(args.config).read_text())
            overrides = {}
            if args.seed is not None:
                overrides["base_seed"] = args.seed
            if args.threads is not None:
                overrides["threads"] = args.threads
            if args.output is not None:
                overrides["output_dir"] = args.output
            cfg = config_from_dict({**cfg.to_dict(), **overrides}) if overrides else cfg
            manifest = run_optimize(cfg)
            failed = [r["label"] for r in manifest["runs"] if r["failed"]]
            if failed:
                log.error("%d run(s) failed: %s", len(failed), ", ".join(failed))
                return 1
            return 0
        if args.command == "analyze":
            for name, path in run_analyze(args.run_dir).items():
                print(f"{name}: {path}")
            return 0
        print(export_shape(args.pulse, args.format, args.output))
        return 0
    except (ConfigError, FileNotFoundError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
