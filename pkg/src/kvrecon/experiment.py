"""Benchmark problems: synthetic data generation, noise injection, error
metrics, single reconstructions, parameter sweeps, and report persistence.

Configs are plain JSON documents mirroring ExperimentConfig field for field;
unknown keys are rejected.  All randomness flows through a seeded generator,
so identical config + seed reproduces reports bit for bit (wall time aside).
"""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .forward import solve_neumann
from .mesh import (DEFAULT_LOWER_BOUND, DEFAULT_UPPER_BOUND, BoundaryData,
                   Potential, SpaceMesh, build_interval_mesh,
                   build_square_mesh)
from .optimizer import (KvProblem, LsProblem, ReconstructionReport, run_cgm)
from .timegrid import TimeGrid, build_time_grid


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# restricted namespace for target / excitation expressions from configs
_EXPR_GLOBALS = {
    "__builtins__": {},
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "pi": np.pi,
    "where": np.where, "minimum": np.minimum, "maximum": np.maximum,
    "tanh": np.tanh,
}

NAMED_TARGETS = ("linear", "exp-cos", "pi2-sin", "hat", "piecewise",
                 "disk2d", "diamond2d")


@dataclass
class ExperimentConfig:
    """Everything one reconstruction run needs; mirrors the JSON schema."""

    dim: int = 1
    domain: tuple = (0.0, 2.0)          # 1D only; 2D is the unit square
    n_cells: Union[int, tuple] = 90     # per axis in 2D
    n_steps: int = 71
    alpha: float = 0.45
    T: float = 1.0
    rho: float = 1e-4
    mu: float = 1e-4
    epsilon: float = 0.0
    seed: int = 42
    q_true: str = "linear"
    neumann_expr: str = "20*t**2"
    q0: Union[float, str] = 1.0
    tol: float = 1e-7
    max_it: int = 200
    lower: float = DEFAULT_LOWER_BOUND
    upper: float = DEFAULT_UPPER_BOUND
    data_grid_refinement: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.epsilon < 0:
            raise ConfigError(f"noise level must be >= 0, got {self.epsilon}")
        if self.rho < 0 or self.mu < 0:
            raise ConfigError("regularization parameters must be >= 0")
        if self.data_grid_refinement < 1:
            raise ConfigError("data_grid_refinement must be >= 1")
        if not (0 < self.lower <= self.upper):
            raise ConfigError("bounds must satisfy 0 < lower <= upper")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = dict(data)
        if "domain" in cfg:
            cfg["domain"] = tuple(cfg["domain"])
        if "n_cells" in cfg and isinstance(cfg["n_cells"], (list, tuple)):
            cfg["n_cells"] = tuple(cfg["n_cells"])
        try:
            return cls(**cfg)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["domain"] = list(out["domain"])
        if isinstance(out["n_cells"], tuple):
            out["n_cells"] = list(out["n_cells"])
        return out

    def cells(self) -> tuple:
        if self.dim == 1:
            return (int(self.n_cells),)
        if isinstance(self.n_cells, (tuple, list)):
            return tuple(int(c) for c in self.n_cells)
        return (int(self.n_cells), int(self.n_cells))


def build_discretization(config: ExperimentConfig, refinement: int = 1):
    """Mesh and time grid of the config, optionally uniformly refined."""
    cells = tuple(c * refinement for c in config.cells())
    if config.dim == 1:
        mesh = build_interval_mesh(config.domain[0], config.domain[1], cells[0])
    else:
        mesh = build_square_mesh(cells[0], cells[1])
    grid = build_time_grid(config.T, config.n_steps * refinement, config.alpha)
    return mesh, grid


def _eval_expr(expr: str, **variables):
    try:
        return eval(compile(expr, "<config expression>", "eval"),
                    _EXPR_GLOBALS, variables)
    except Exception as err:
        raise ConfigError(f"cannot evaluate expression {expr!r}: {err}") from err


def make_target(name: str, mesh: SpaceMesh,
                lower: float = DEFAULT_LOWER_BOUND,
                upper: float = DEFAULT_UPPER_BOUND) -> Potential:
    """Evaluate a named benchmark target (or a custom expression) nodally."""
    if mesh.dim == 1:
        x = mesh.nodes
        y = None
    else:
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if name == "linear":
        vals = x.copy()
    elif name == "exp-cos":
        vals = np.exp(-2.0 * x) * np.cos(2.0 * np.pi * x)
    elif name == "pi2-sin":
        vals = np.pi ** 2 * np.sin(np.pi * x)
    elif name == "hat":
        vals = np.where(x < 1.0, x, 2.0 - x)
    elif name == "piecewise":
        vals = np.where((x >= 0.45) & (x < 1.5), 1.0, 2.0)
    elif name == "disk2d":
        if mesh.dim != 2:
            raise ConfigError("disk2d target needs a 2D mesh")
        inside = (x - 0.5) ** 2 + (y - 0.5) ** 2 <= 0.03
        vals = 1.0 + inside.astype(float)
    elif name == "diamond2d":
        if mesh.dim != 2:
            raise ConfigError("diamond2d target needs a 2D mesh")
        inside = np.abs(x - 0.5) + np.abs(y - 0.5) < 0.3
        vals = 1.0 + inside.astype(float)
    else:
        vals = np.asarray(_eval_expr(name, x=x, y=y), dtype=float)
        vals = np.broadcast_to(vals, x.shape).copy()
    return Potential(vals, lower, upper)


def build_excitation(config: ExperimentConfig, mesh: SpaceMesh,
                     grid: TimeGrid) -> BoundaryData:
    """Evaluate the configured Neumann excitation on boundary x time nodes."""
    t = grid.times[None, :]
    if mesh.dim == 1:
        x = mesh.nodes[mesh.boundary_idx][:, None]
        vals = _eval_expr(config.neumann_expr, x=x, t=t, y=None)
    else:
        bx = mesh.nodes[mesh.boundary_idx, 0][:, None]
        by = mesh.nodes[mesh.boundary_idx, 1][:, None]
        vals = _eval_expr(config.neumann_expr, x=bx, y=by, t=t)
    vals = np.broadcast_to(np.asarray(vals, dtype=float),
                           (len(mesh.boundary_idx), grid.n_steps + 1)).copy()
    return BoundaryData(vals, "neumann")


def _initial_guess(config: ExperimentConfig, mesh: SpaceMesh) -> Potential:
    if isinstance(config.q0, str):
        pot = make_target(config.q0, mesh, config.lower, config.upper)
    else:
        pot = Potential(np.full(mesh.n_nodes, float(config.q0)),
                        config.lower, config.upper)
    return pot.clipped()


def generate_observation(config: ExperimentConfig) -> BoundaryData:
    """Noise-free boundary trace from a forward solve with the true target.

    With data_grid_refinement > 1 the forward problem is solved on a
    uniformly refined space-time grid and the trace restricted back to the
    working grid, avoiding the inverse crime of sharing the discretization.
    """
    r = config.data_grid_refinement
    mesh_f, grid_f = build_discretization(config, refinement=r)
    q_true = make_target(config.q_true, mesh_f, config.lower, config.upper)
    flux = build_excitation(config, mesh_f, grid_f)
    u = solve_neumann(q_true, flux, None, mesh_f, grid_f)
    trace = u.trace().values
    if r == 1:
        return BoundaryData(trace, "dirichlet")

    mesh_c, grid_c = build_discretization(config)
    trace = trace[:, ::r]  # fine time nodes contain the coarse ones
    fine_b = mesh_f.nodes[mesh_f.boundary_idx]
    coarse_b = mesh_c.nodes[mesh_c.boundary_idx]
    if config.dim == 1:
        keep = [int(np.argmin(np.abs(fine_b - xc))) for xc in coarse_b]
    else:
        keep = [int(np.argmin(np.sum((fine_b - xc) ** 2, axis=1)))
                for xc in coarse_b]
    return BoundaryData(trace[keep], "dirichlet")


def add_noise(phi: BoundaryData, epsilon: float, seed: int) -> BoundaryData:
    """Uniform perturbation phi + epsilon*(2*rand - 1), reproducible by seed."""
    if epsilon < 0:
        raise ValueError(f"noise level must be >= 0, got {epsilon}")
    if epsilon == 0.0:
        return BoundaryData(phi.values.copy(), phi.kind)
    rng = np.random.default_rng(seed)
    noise = 2.0 * rng.random(phi.values.shape) - 1.0
    return BoundaryData(phi.values + epsilon * noise, phi.kind)


def relative_error(q_n: Potential, q_true: Potential, mesh: SpaceMesh) -> float:
    """Mass-weighted L2 norm ratio ||q_true - q_n|| / ||q_true||."""
    denom = mesh.norm(q_true.values)
    if denom <= 0.0:
        raise ValueError("target potential has zero norm")
    return mesh.norm(q_true.values - q_n.values) / denom


def run_experiment(config: ExperimentConfig, method: str = "kv",
                   observed: Optional[BoundaryData] = None) -> ReconstructionReport:
    """Data generation -> noise -> CGM reconstruction -> report."""
    if method not in ("kv", "ls"):
        raise ConfigError(f"method must be 'kv' or 'ls', got {method!r}")
    mesh, grid = build_discretization(config)
    q_true = make_target(config.q_true, mesh, config.lower, config.upper)
    flux = build_excitation(config, mesh, grid)
    if observed is None:
        observed = add_noise(generate_observation(config), config.epsilon,
                             config.seed)
    if method == "kv":
        problem = KvProblem(flux, observed, config.rho, mesh, grid)
    else:
        problem = LsProblem(flux, observed, config.mu, mesh, grid)
    report = run_cgm(problem, _initial_guess(config, mesh), tol=config.tol,
                     max_it=config.max_it, q_true=q_true.values)
    report.config_echo = config.to_dict()
    report.config_echo["method"] = method
    return report


def compare_methods(config: ExperimentConfig) -> dict:
    """Run both objectives on identical data (same noise realization)."""
    observed = add_noise(generate_observation(config), config.epsilon,
                         config.seed)
    return {m: run_experiment(config, method=m, observed=observed)
            for m in ("kv", "ls")}


def sweep(config: ExperimentConfig, parameter: str, values,
          method: str = "kv") -> list:
    """Vary one of rho / alpha / epsilon with a shared seed; returns the
    reports in parameter order.  A failing member does not abort the rest."""
    if parameter not in ("rho", "alpha", "epsilon"):
        raise ConfigError(f"sweep parameter must be rho|alpha|epsilon, "
                          f"got {parameter!r}")
    reports = []
    for v in values:
        cfg = dataclasses.replace(config, **{parameter: float(v)})
        try:
            reports.append(run_experiment(cfg, method=method))
        except Exception as err:  # keep partial sweep results
            reports.append(err)
    return reports


# ---- persistence ---------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def report_to_dict(report: ReconstructionReport) -> dict:
    return {
        "status": report.status,
        "method": report.method,
        "n_iterations": int(report.n_iterations),
        "wall_time_s": float(report.wall_time),
        "e_final": float(report.rel_error[-1]) if len(report.rel_error) else None,
        "history": {
            "k_rho": report.k_rho.tolist(),
            "grad_norm": report.grad_norm.tolist(),
            "beta": report.beta.tolist(),
            "gamma": report.gamma.tolist(),
            "rel_error": report.rel_error.tolist(),
        },
        "q_final": report.q_final.tolist(),
        "config": report.config_echo,
    }


def write_report(report: ReconstructionReport, outdir,
                 config: Optional[ExperimentConfig] = None,
                 observed: Optional[BoundaryData] = None) -> None:
    """Write report.json plus history/potential/boundary CSV companions."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)

    with open(outdir / "history.csv", "w") as fh:
        fh.write("iter,k_rho,grad_norm,beta,gamma,rel_error\n")
        for i in range(len(report.k_rho)):
            fh.write(",".join([str(i), _fmt(report.k_rho[i]),
                               _fmt(report.grad_norm[i]), _fmt(report.beta[i]),
                               _fmt(report.gamma[i]),
                               _fmt(report.rel_error[i])]) + "\n")

    if config is None and report.config_echo:
        cfg_dict = {k: v for k, v in report.config_echo.items() if k != "method"}
        config = ExperimentConfig.from_dict(cfg_dict)
    if config is not None:
        mesh, grid = build_discretization(config)
        q_true = make_target(config.q_true, mesh, config.lower, config.upper)
        with open(outdir / "potential.csv", "w") as fh:
            if config.dim == 1:
                fh.write("x,q_true,q_final\n")
                for x, qt, qf in zip(mesh.nodes, q_true.values, report.q_final):
                    fh.write(f"{_fmt(x)},{_fmt(qt)},{_fmt(qf)}\n")
            else:
                fh.write("x,y,q_true,q_final\n")
                for (x, y), qt, qf in zip(mesh.nodes, q_true.values,
                                          report.q_final):
                    fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(qt)},{_fmt(qf)}\n")
        if observed is not None:
            bxy = mesh.nodes[mesh.boundary_idx]
            with open(outdir / "boundary.csv", "w") as fh:
                if config.dim == 1:
                    fh.write("t,x,phi\n")
                else:
                    fh.write("t,x,y,phi\n")
                for j, tval in enumerate(grid.times):
                    for b in range(observed.values.shape[0]):
                        coords = ([_fmt(bxy[b])] if config.dim == 1 else
                                  [_fmt(bxy[b, 0]), _fmt(bxy[b, 1])])
                        fh.write(",".join([_fmt(tval)] + coords +
                                          [_fmt(observed.values[b, j])]) + "\n")
