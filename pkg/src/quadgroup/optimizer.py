"""L-BFGS minimisation of the expected cost, in GRAPE or GROUP variables."""

import logging
import time
import warnings
from collections import OrderedDict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .groupbasis import ResponseMatrix, fourier_response
from .objective import EnsembleProblem
from .propagation import PulseShape

log = logging.getLogger(__name__)

GRAPE = "GRAPE"
GROUP = "GROUP"


@dataclass(frozen=True)
class OptimizerOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-7
    cost_tolerance: float = 1e-10
    memory: int = 20
    sufficient_decrease: float = 1e-4
    curvature: float = 0.9
    penalty_weight: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.gradient_tolerance > 0 or not self.cost_tolerance > 0:
            raise ValueError("tolerances must be > 0")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.sufficient_decrease < self.curvature < 1:
            raise ValueError("line search needs 0 < sufficient_decrease < curvature < 1")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be >= 0")


@dataclass
class OptimizationRun:
    x: np.ndarray
    final_cost: float
    history: list
    status: str
    success: bool
    n_evaluations: int
    seed: int | None = None
    mode: str | None = None
    basis_size: int | None = None
    initial: np.ndarray | None = None
    pulse: PulseShape | None = None
    coefficients: np.ndarray | None = None
    final_fidelity: float | None = None
    wall_time: float = 0.0
    error: str | None = None

    @property
    def label(self) -> str:
        if self.mode == GROUP:
            return f"GROUP_M{self.basis_size:03d}_seed{self.seed}"
        return f"{self.mode}_seed{self.seed}"


class _Cache:
    """Remembers recent (cost, gradient) pairs; the line search asks for both at one point."""

    def __init__(self, fun, size=4):
        self.fun = fun
        self.size = size
        self.store = OrderedDict()
        self.calls = 0

    def __call__(self, x):
        key = x.tobytes()
        if key not in self.store:
            f, g = self.fun(x)
            f = float(f)
            g = np.asarray(g, dtype=float)
            self.calls += 1
            if not np.isfinite(f) or not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite cost/gradient at evaluation {self.calls}: cost={f}, "
                    f"|x|_inf={np.abs(x).max():.3e}, non-finite gradient entries={int((~np.isfinite(g)).sum())}"
                )
            self.store[key] = (f, g)
            if len(self.store) > self.size:
                self.store.popitem(last=False)
        return self.store[key]


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / y.dot(s)
        a = rho * s.dot(q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def _steepest(g, x):
    # unit trial step would be ||g|| long, which is meaningless on flat starts
    length = max(1.0, 0.1 * np.linalg.norm(x))
    return -g * (length / np.linalg.norm(g))


def minimize(problem, x0, opts: OptimizerOptions = OptimizerOptions()) -> OptimizationRun:
    """Limited-memory BFGS with a strong-Wolfe line search.

    Every search starts from a unit step. Quasi-Newton directions carry their
    own scale; steepest-descent directions (first iteration, after a memory
    reset) are normalised to length ``max(1, 0.1 |x|)``.

    ``problem(x)`` returns ``(cost, gradient)``. ``history`` holds one
    ``(cost, gradient inf-norm, step length)`` tuple per accepted iterate,
    the first being the starting point with step 0.
    """
    fun = _Cache(problem)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    f, g = fun(x)
    history = [(f, float(np.abs(g).max()), 0.0)]
    s_hist = deque(maxlen=opts.memory)
    y_hist = deque(maxlen=opts.memory)
    status, success = "maximum iterations reached", False

    def cost(z):
        return fun(z)[0]

    def grad(z):
        return fun(z)[1]

    def search(direction):
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="The line search algorithm")
            alpha, _, _, f_new, _, _ = line_search(
                cost, grad, x, direction, gfk=g, old_fval=f,
                c1=opts.sufficient_decrease, c2=opts.curvature,
            )
        return alpha, f_new

    for _ in range(opts.max_iterations):
        if np.abs(g).max() <= opts.gradient_tolerance:
            status, success = "gradient tolerance reached", True
            break
        p = _two_loop(g, s_hist, y_hist) if s_hist else _steepest(g, x)
        if g.dot(p) >= 0:
            s_hist.clear()
            y_hist.clear()
            p = _steepest(g, x)
        alpha, f_new = search(p)
        if alpha is None and s_hist:
            s_hist.clear()
            y_hist.clear()
            p = _steepest(g, x)
            alpha, f_new = search(p)
        if alpha is None or not f_new < f:
            status, success = "line search failed", False
            break
        x_new = x + alpha * p
        f_new, g_new = fun(x_new)
        s = x_new - x
        y = g_new - g
        if s.dot(y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
        old_f, f = f, f_new
        x, g = x_new, g_new
        history.append((f, float(np.abs(g).max()), float(alpha * np.linalg.norm(p))))
        log.debug("iteration %d: cost=%.10f |g|=%.3e evaluations=%d", len(history) - 1, f, history[-1][1], fun.calls)
        if old_f - f <= opts.cost_tolerance * max(abs(old_f), abs(f), 1.0):
            status, success = "cost tolerance reached", True
            break
    return OptimizationRun(x=x, final_cost=f, history=history, status=status,
                           success=success, n_evaluations=fun.calls)


class ControlProblem:
    """Expected cost as a function of optimiser variables.

    GRAPE variables are the flattened ``(N, 2)`` controls, GROUP variables the
    flattened ``(M, 2)`` coefficients. Internally the optimiser works in units
    of ``unit`` rad/s so that unit steps are physically sensible.
    """

    def __init__(self, ensemble_problem: EnsembleProblem, mode=GRAPE, basis_size: int | None = None,
                 response: ResponseMatrix | None = None, penalty_weight: float = 0.0,
                 unit: float = 2 * np.pi * 1e3):
        if mode not in (GRAPE, GROUP):
            raise ValueError(f"mode must be GRAPE or GROUP, got {mode!r}")
        self.ensemble_problem = ensemble_problem
        self.mode = mode
        self.unit = float(unit)
        self.penalty_weight = float(penalty_weight)
        n, dt = ensemble_problem.n_steps, ensemble_problem.dt
        if mode == GROUP:
            if response is None:
                if basis_size is None:
                    raise ValueError("GROUP mode needs basis_size or a response matrix")
                response = fourier_response(basis_size, n, dt)
            if response.n_steps != n:
                raise ValueError("response matrix does not match the time grid")
            self.response = response
            self.basis_size = response.basis_size
        else:
            self.response = None
            self.basis_size = None

    @property
    def n_variables(self) -> int:
        rows = self.basis_size if self.mode == GROUP else self.ensemble_problem.n_steps
        return 2 * rows

    def controls(self, physical: np.ndarray) -> np.ndarray:
        """Pulse values (N, 2) in rad/s from physical-unit variables."""
        if self.mode == GROUP:
            return self.response.entries.T @ physical.reshape(-1, 2)
        return physical.reshape(-1, 2)

    def evaluate_physical(self, physical: np.ndarray):
        """(cost, gradient w.r.t. physical variables, report)."""
        u = self.controls(physical)
        rep = self.ensemble_problem.evaluate(u)
        cost = rep.cost
        grad_u = rep.gradient
        if self.penalty_weight:
            dt = self.ensemble_problem.dt
            cost += self.penalty_weight * dt * float((u**2).sum())
            grad_u = grad_u + 2 * self.penalty_weight * dt * u
        if self.mode == GROUP:
            grad = self.response.entries @ grad_u
        else:
            grad = grad_u
        return cost, grad.ravel(), rep

    def __call__(self, x):
        cost, grad, _ = self.evaluate_physical(x * self.unit)
        return cost, grad * self.unit


def random_initial(mode, scale: float, n_steps: int, seed: int, basis_size: int | None = None) -> np.ndarray:
    """Uniform random start; GROUP coefficients are scaled by ``1/sqrt(M)``."""
    rng = np.random.default_rng(seed)
    if mode == GRAPE:
        return scale * rng.uniform(-1.0, 1.0, 2 * n_steps)
    if mode == GROUP:
        if not basis_size or basis_size < 1:
            raise ValueError("GROUP mode needs basis_size >= 1")
        return scale / np.sqrt(basis_size) * rng.uniform(-1.0, 1.0, 2 * basis_size)
    raise ValueError(f"unknown mode {mode!r}")


def run_single(problem: ControlProblem, seed: int, opts: OptimizerOptions = OptimizerOptions(),
               scale: float = 2 * np.pi * 20e3) -> OptimizationRun:
    """One seeded optimisation of ``problem``; failures are captured in the run."""
    start = time.perf_counter()
    x0 = random_initial(problem.mode, scale, problem.ensemble_problem.n_steps, seed, problem.basis_size)
    try:
        run = minimize(problem, x0 / problem.unit, opts)
    except FloatingPointError as exc:
        log.warning("run seed=%d failed: %s", seed, exc)
        run = OptimizationRun(x=x0 / problem.unit, final_cost=np.nan, history=[], status="aborted",
                              success=False, n_evaluations=0, error=str(exc))
    physical = run.x * problem.unit
    run.x = physical
    run.seed = seed
    run.mode = problem.mode
    run.basis_size = problem.basis_size
    run.initial = x0
    run.history = [(c, gn / problem.unit, st * problem.unit) for c, gn, st in run.history]
    if run.error is None:
        cost, _, rep = problem.evaluate_physical(physical)
        run.final_cost = cost
        run.final_fidelity = rep.fidelity
        run.pulse = PulseShape(problem.ensemble_problem.dt, problem.controls(physical))
        if problem.mode == GROUP:
            run.coefficients = physical.reshape(-1, 2)
    run.wall_time = time.perf_counter() - start
    log.info("%s: fidelity=%s iterations=%d evaluations=%d (%s, %.1fs)", run.label, run.final_fidelity,
             len(run.history) - 1, run.n_evaluations, run.status, run.wall_time)
    return run


def multistart(problem: ControlProblem, n_starts: int, base_seed: int = 0,
               opts: OptimizerOptions = OptimizerOptions(), scale: float = 2 * np.pi * 20e3,
               workers: int = 1, on_complete=None) -> list[OptimizationRun]:
    """Independent runs with seeds ``base_seed + i``, best fidelity first."""
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    seeds = [base_seed + i for i in range(n_starts)]
    if workers <= 1:
        runs = []
        for seed in seeds:
            runs.append(run_single(problem, seed, opts, scale))
            if on_complete:
                on_complete(runs[-1])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_single, problem, seed, opts, scale) for seed in seeds]
            runs = []
            for fut in futures:
                runs.append(fut.result())
                if on_complete:
                    on_complete(runs[-1])
    return sorted(runs, key=_rank_key)


def _rank_key(run):
    fid = run.final_fidelity
    return (0 if fid is not None and np.isfinite(fid) else 1, -(fid or 0.0), run.seed)
