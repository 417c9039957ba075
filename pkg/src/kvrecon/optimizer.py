"""Fletcher-Reeves conjugate gradient reconstruction loop.

Iteration:  q_{n+1} = clip(q_n - beta_n P_n)  with directions

    P_0 = g_0,   P_n = g_n + gamma_n P_{n-1},
    gamma_n = ||g_n||^2 / ||g_{n-1}||^2   (mass-weighted L2 norms),

where g_n is the nodal objective gradient.  The step size minimizes the
cubic model of the objective along the direction, whose stationarity
condition is the quadratic

    -3 A_n beta^2 + 2 B_n beta - C_n = 0,

built from the states, the sensitivities at dq = P_n, and the regularization
(coefficients below).  Accepted roots are polished by a few Newton steps on
a central-difference derivative of the true line function (full re-solves),
and only steps that decrease the objective are kept; otherwise the
backtracking Armijo rule takes over.  Nodewise box projection onto
[lower, upper] is applied inside every trial evaluation, so the recorded
objective history is non-increasing by construction.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .forward import SolverError
from .mesh import BoundaryData, Potential, SpaceMesh, boundary_l2_inner
from .objective import eval_kv, eval_ls, grad_kv, grad_ls
from .sensitivity import solve_sensitivity_dirichlet, solve_sensitivity_neumann
from .timegrid import TimeGrid

GRADIENT_FLOOR = 1e-12
POLISH_TARGET = 1e-6     # |psi'(beta)| / |psi'(0)| aimed for by Newton polish
QUALITY_GATE = 1e-3      # quadratic branch is abandoned above this ratio


class LineSearchError(RuntimeError):
    """Armijo backtracking exhausted without sufficient decrease."""


@dataclass
class ArmijoParams:
    sigma: float = 1e-4
    shrink: float = 0.5
    beta_init: float = 1.0
    max_backtracks: int = 40


@dataclass
class StepSizeCoefficients:
    """Coefficients of the line-search quadratic -3A b^2 + 2B b - C = 0."""
    A: float
    B: float
    C: float


@dataclass
class StepSelection:
    beta: float
    value: float
    branch: str                 # 'quadratic' | 'armijo' | 'closed-form'
    psi_prime_ratio: float = np.nan  # |psi'(beta)|/|psi'(0)| by re-solve oracle
    n_evals: int = 0


@dataclass
class CgState:
    """Internal iteration state (exposed for tests and diagnostics)."""
    q: Potential
    gradient: np.ndarray
    direction: np.ndarray
    gamma: float
    beta: float
    iteration: int


@dataclass
class ReconstructionReport:
    """Per-iteration history of one reconstruction run."""
    k_rho: np.ndarray
    grad_norm: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    rel_error: np.ndarray
    q_final: np.ndarray
    status: str
    n_iterations: int
    wall_time: float
    method: str
    branches: list = field(default_factory=list)
    psi_prime_ratio: np.ndarray = None
    clamped: np.ndarray = None
    step_consistency: float = 0.0   # max rel gap between C_n and <g_n, P_n>
    config_echo: Optional[dict] = None


def fletcher_reeves_gamma(g_new: np.ndarray, g_old: np.ndarray,
                          mesh: SpaceMesh) -> float:
    """Conjugacy coefficient ||g_new||^2 / ||g_old||^2 in L2(Omega)."""
    denom = mesh.inner(g_old, g_old)
    if denom < 1e-30:
        return 0.0  # restart
    return mesh.inner(g_new, g_new) / denom


def step_coefficients(q: Potential, p: np.ndarray, u_n, u_d, big_u_n, big_u_d,
                      rho: float, mesh: SpaceMesh,
                      grid: TimeGrid) -> StepSizeCoefficients:
    """Assemble A, B, C from states and sensitivities at dq = P_n.

    With e = u_N - u_D and W = U_N - U_D:

        A = int int P |W|^2
        B = int int |grad W|^2 + q |W|^2 + 2 P e W   + rho int |P|^2
        C = 2 int int grad e . grad W + q e W + int int P e^2 + 2 rho int P q

    C equals the directional derivative <K_rho'(q), P>; the test suite
    validates both identities against independent oracles.  (The signs of
    the rho terms and the q-weighted cross term differ from the printed
    source; the derivative oracle fixes them.)
    """
    e = u_n.values - u_d.values
    w_fields = big_u_n.values - big_u_d.values
    wt = grid.trapezoid_weights()
    op = mesh.stiffness + mesh.coeff_mass(q.values)

    a = float(p @ mesh.coeff_mass_pair(w_fields, w_fields, wt))
    b = (float(np.einsum("it,t,it->", w_fields, wt, op @ w_fields))
         + 2.0 * float(p @ mesh.coeff_mass_pair(e, w_fields, wt))
         + rho * mesh.inner(p, p))
    c = (2.0 * float(np.einsum("it,t,it->", e, wt, op @ w_fields))
         + float(p @ mesh.coeff_mass_pair(e, e, wt))
         + 2.0 * rho * mesh.inner(q.values, p))
    return StepSizeCoefficients(a, b, c)


def _quadratic_roots(coeffs: StepSizeCoefficients):
    """Positive real roots of -3A b^2 + 2B b - C = 0, stably computed."""
    a3, b2, c = 3.0 * coeffs.A, coeffs.B, coeffs.C
    scale = max(abs(a3), abs(b2), abs(c))
    if scale == 0.0:
        return []
    if abs(a3) <= 1e-14 * scale:
        if abs(b2) <= 1e-14 * scale:
            return []
        roots = [c / (2.0 * b2)]
    else:
        disc = b2 * b2 - a3 * c
        if disc < 0.0:
            return []
        sq = np.sqrt(disc)
        roots = [(b2 - sq) / a3, (b2 + sq) / a3]
    return [r for r in roots if np.isfinite(r) and r > 0.0]


def _polish_root(beta: float, value: float, line_eval: Callable, slope0: float,
                 coeffs: StepSizeCoefficients):
    """Newton refinement of the line minimum: central differences of the true
    line function for the derivative, cubic-model curvature for the step
    (finite-difference curvature would drown in evaluation noise).
    Returns (beta, value, ratio, n_evals)."""
    evals = 0
    ratio = np.inf
    for _ in range(6):
        h = min(1e-3 * (1.0 + abs(beta)), 0.5 * beta)
        vp, vm = line_eval(beta + h), line_eval(beta - h)
        evals += 2
        dpsi = (vp - vm) / (2.0 * h)
        ratio = abs(dpsi) / max(abs(slope0), 1e-300)
        if ratio <= POLISH_TARGET:
            break
        curv = 2.0 * coeffs.B - 6.0 * coeffs.A * beta
        if not np.isfinite(curv) or curv <= 0.0:
            curv = (vp - 2.0 * value + vm) / (h * h)
            if not np.isfinite(curv) or curv <= 0.0:
                break
        new_beta = beta - dpsi / curv
        if not np.isfinite(new_beta) or new_beta <= 0.0:
            break
        new_value = line_eval(new_beta)
        evals += 1
        if new_value > value + 1e-12 * (1.0 + abs(value)):
            break
        beta, value = new_beta, new_value
    return beta, value, ratio, evals


def _armijo(line_eval: Callable, k_current: float, decrease_model: Callable,
            params: ArmijoParams):
    """Backtracking with the sufficient-decrease test
    psi(beta) <= psi(0) - sigma * D(beta), where D defaults to beta*<g, P>
    and, under an active box projection, to <g, q - clip(q - beta*P)>."""
    beta = params.beta_init
    for _ in range(params.max_backtracks):
        value = line_eval(beta)
        if value <= k_current - params.sigma * decrease_model(beta):
            return beta, value
        beta *= params.shrink
    raise LineSearchError(
        f"no sufficient decrease after {params.max_backtracks} backtracks")


def select_step(coeffs: StepSizeCoefficients, line_eval: Callable,
                armijo: ArmijoParams = ArmijoParams(),
                k_current: Optional[float] = None,
                slope: Optional[float] = None,
                polish: bool = True,
                decrease_model: Optional[Callable] = None) -> StepSelection:
    """Pick the step size: best admissible quadratic root (polished), with
    Armijo backtracking as the fallback.

    ``line_eval`` maps beta to the objective at the projected trial point;
    ``k_current`` is the objective at beta = 0 and ``slope`` the directional
    derivative <g, P> (defaults to C).  ``decrease_model`` is the Armijo
    decrease predictor D(beta), defaulting to beta*slope (the projected form
    is supplied by the optimizer loop when bounds are active).  Steps that
    fail to decrease the objective are rejected, which keeps the recorded
    history monotone.
    """
    if slope is None:
        slope = coeffs.C
    if k_current is None:
        k_current = line_eval(0.0)
    if decrease_model is None:
        decrease_model = lambda b: b * slope
    roots = _quadratic_roots(coeffs)
    n_evals = 0
    if roots:
        values = [line_eval(r) for r in roots]
        n_evals += len(roots)
        i = int(np.argmin(values))
        beta, value = roots[i], values[i]
        ratio = np.nan
        if polish:
            beta, value, ratio, used = _polish_root(beta, value, line_eval,
                                                    slope, coeffs)
            n_evals += used
        ok_quality = (not polish) or (ratio <= QUALITY_GATE)
        if value <= k_current and ok_quality:
            return StepSelection(beta, value, "quadratic", ratio, n_evals)
    beta, value = _armijo(line_eval, k_current, decrease_model, armijo)
    return StepSelection(beta, value, "armijo", np.nan, n_evals)


class KvProblem:
    """Kohn-Vogelius objective bound to one data set."""

    method = "kv"

    def __init__(self, neumann_data, observed, rho, mesh, grid):
        self.neumann_data = neumann_data
        self.observed = observed
        self.rho = rho
        self.mesh = mesh
        self.grid = grid

    def evaluate(self, q: Potential) -> float:
        return eval_kv(q, self.neumann_data, self.observed, self.rho,
                       self.mesh, self.grid).k_rho_value

    def gradient(self, q: Potential):
        ev = grad_kv(q, self.neumann_data, self.observed, self.rho,
                     self.mesh, self.grid)
        return ev.k_rho_value, ev.gradient, (ev.u_n, ev.u_d)

    def step(self, q, p, states, line_eval, k_current, slope, armijo,
             decrease_model=None):
        u_n, u_d = states
        big_u_n = solve_sensitivity_neumann(q, p, u_n, self.mesh, self.grid)
        big_u_d = solve_sensitivity_dirichlet(q, p, u_d, self.mesh, self.grid)
        coeffs = step_coefficients(q, p, u_n, u_d, big_u_n, big_u_d, self.rho,
                                   self.mesh, self.grid)
        consistency = abs(coeffs.C - slope) / max(abs(coeffs.C), abs(slope), 1e-300)
        sel = select_step(coeffs, line_eval, armijo, k_current, slope,
                          decrease_model=decrease_model)
        return sel, consistency


class LsProblem:
    """Boundary least-squares objective with the closed-form step size."""

    method = "ls"

    def __init__(self, neumann_data, observed, mu, mesh, grid):
        self.neumann_data = neumann_data
        self.observed = observed
        self.mu = mu
        self.mesh = mesh
        self.grid = grid

    def evaluate(self, q: Potential) -> float:
        return eval_ls(q, self.neumann_data, self.observed, self.mu,
                       self.mesh, self.grid).k_rho_value

    def gradient(self, q: Potential):
        ev = grad_ls(q, self.neumann_data, self.observed, self.mu,
                     self.mesh, self.grid)
        return ev.k_rho_value, ev.gradient, (ev.u_n,)

    def step(self, q, p, states, line_eval, k_current, slope, armijo,
             decrease_model=None):
        (u,) = states
        big_u = solve_sensitivity_neumann(q, p, u, self.mesh, self.grid)
        mism = BoundaryData(u.values[self.mesh.boundary_idx] - self.observed.values,
                            "dirichlet")
        u_tr = BoundaryData(big_u.values[self.mesh.boundary_idx], "dirichlet")
        num = (boundary_l2_inner(mism, u_tr, self.mesh, self.grid)
               + self.mu * self.mesh.inner(p, q.values))
        den = (boundary_l2_inner(u_tr, u_tr, self.mesh, self.grid)
               + self.mu * self.mesh.inner(p, p))
        if den > 0.0 and np.isfinite(num / den) and num / den > 0.0:
            beta = num / den
            value = line_eval(beta)
            if value <= k_current:
                return StepSelection(beta, value, "closed-form"), 0.0
        if decrease_model is None:
            decrease_model = lambda b: b * slope
        beta, value = _armijo(line_eval, k_current, decrease_model, armijo)
        return StepSelection(beta, value, "armijo"), 0.0


def run_cgm(problem, q0: Potential, tol: float = 1e-7, max_it: int = 100,
            q_true: Optional[np.ndarray] = None,
            armijo: ArmijoParams = ArmijoParams()) -> ReconstructionReport:
    """Run the conjugate gradient reconstruction until the relative change
    of the iterate drops below ``tol`` (or max_it / line-search failure).

    q_true, when given, is the target used for the per-iteration relative
    error column (mass-weighted L2).  All failures end up in the report
    status, never as exceptions.
    """
    mesh = problem.mesh
    t0 = time.perf_counter()
    hist = {k: [] for k in ("k_rho", "grad_norm", "beta", "gamma", "rel_error")}
    branches, ratios, clamped = [], [], []
    consistency = 0.0

    def rel_err(qv):
        if q_true is None:
            return np.nan
        return mesh.norm(q_true - qv) / mesh.norm(q_true)

    q = q0.clipped()
    status = "max_iterations"
    prev: Optional[CgState] = None  # state of the last completed iteration
    n = 0

    def projected_gradient(qv, g):
        # feasible-cone gradient: at an active bound, keep only the
        # component pointing back into the box (update is q - beta*g)
        gp = g.copy()
        at_lower = qv <= q0.lower
        at_upper = qv >= q0.upper
        gp[at_lower] = np.minimum(gp[at_lower], 0.0)
        gp[at_upper] = np.maximum(gp[at_upper], 0.0)
        return gp

    try:
        while True:
            k_rho, g, states = problem.gradient(q)
            gnorm = mesh.norm(g)
            hist["k_rho"].append(k_rho)
            hist["grad_norm"].append(gnorm)
            hist["rel_error"].append(rel_err(q.values))

            gp = projected_gradient(q.values, g)
            if mesh.norm(gp) <= GRADIENT_FLOOR * max(1.0, mesh.norm(q.values)):
                hist["beta"].append(0.0)
                hist["gamma"].append(0.0)
                status = "stationary"
                break
            if n >= max_it:
                hist["beta"].append(0.0)
                hist["gamma"].append(0.0)
                break

            gamma = 0.0 if prev is None else fletcher_reeves_gamma(
                g, prev.gradient, mesh)
            p = g if prev is None else g + gamma * prev.direction
            slope = mesh.inner(g, p)
            if slope <= 0.0:
                gamma, p, slope = 0.0, g, mesh.inner(g, g)  # restart

            sel = None
            for attempt in range(2):
                def line_eval(beta, _q=q, _p=p):
                    trial = _q.with_values(_q.values - beta * _p).clipped()
                    return problem.evaluate(trial)

                def decrease_model(beta, _q=q, _p=p, _g=g):
                    # projected sufficient-decrease predictor: reduces to
                    # beta*<g, P> while the box constraints stay inactive
                    moved = _q.values - np.clip(_q.values - beta * _p,
                                                _q.lower, _q.upper)
                    return mesh.inner(_g, moved)

                try:
                    sel, cons = problem.step(q, p, states, line_eval, k_rho,
                                             slope, armijo, decrease_model)
                    break
                except LineSearchError:
                    if attempt == 0 and gamma != 0.0:
                        # conjugate direction blocked by the active bounds:
                        # restart along the projected gradient
                        gamma, p = 0.0, gp
                        slope = max(mesh.inner(g, p), 1e-300)
                        continue
                    # no measurable decrease along the steepest feasible
                    # direction; below the evaluation noise floor this is
                    # convergence at a projected-stationary point
                    if armijo.sigma * armijo.beta_init * slope <= 1e-9 * (
                            1.0 + abs(k_rho)) or mesh.norm(gp) <= 1e-7 * gnorm:
                        hist["beta"].append(0.0)
                        hist["gamma"].append(gamma)
                        status = "stationary"
                        break
                    raise
            if sel is None:
                break
            consistency = max(consistency, cons)
            q_next = q.with_values(q.values - sel.beta * p).clipped()
            hit_bounds = bool(np.any(q_next.values != q.values - sel.beta * p))

            hist["beta"].append(sel.beta)
            hist["gamma"].append(gamma)
            branches.append(sel.branch)
            ratios.append(sel.psi_prime_ratio)
            clamped.append(hit_bounds)

            change = mesh.norm(q_next.values - q.values) / max(
                mesh.norm(q.values), 1e-300)
            prev = CgState(q=q, gradient=g, direction=p, gamma=gamma,
                           beta=sel.beta, iteration=n)
            q = q_next
            n += 1
            if change <= tol:
                k_rho, g, _ = problem.gradient(q)
                hist["k_rho"].append(k_rho)
                hist["grad_norm"].append(mesh.norm(g))
                hist["rel_error"].append(rel_err(q.values))
                hist["beta"].append(0.0)
                hist["gamma"].append(0.0)
                status = "converged"
                break
    except LineSearchError:
        status = "line_search_failure"
        if len(hist["beta"]) < len(hist["k_rho"]):
            hist["beta"].append(0.0)
            hist["gamma"].append(0.0)
    except SolverError as err:
        status = f"solver_failure: {err}"
        if len(hist["beta"]) < len(hist["k_rho"]):
            hist["beta"].append(0.0)
            hist["gamma"].append(0.0)

    return ReconstructionReport(
        k_rho=np.array(hist["k_rho"]),
        grad_norm=np.array(hist["grad_norm"]),
        beta=np.array(hist["beta"]),
        gamma=np.array(hist["gamma"]),
        rel_error=np.array(hist["rel_error"]),
        q_final=q.values.copy(),
        status=status,
        n_iterations=n,
        wall_time=time.perf_counter() - t0,
        method=problem.method,
        branches=branches,
        psi_prime_ratio=np.array(ratios) if ratios else np.zeros(0),
        clamped=np.array(clamped, dtype=bool) if clamped else np.zeros(0, bool),
        step_consistency=consistency,
    )
