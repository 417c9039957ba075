"""Command-line entry point: forward solves, reconstructions, sweeps.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .experiment import (ConfigError, ExperimentConfig, add_noise,
                         build_discretization, build_excitation,
                         generate_observation, make_target, run_experiment,
                         sweep, write_report, _fmt)
from .forward import SolverError, solve_dirichlet, solve_neumann

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_config(path, seed_override):
    cfg = ExperimentConfig.from_json(path)
    if seed_override is not None:
        cfg = dataclasses.replace(cfg, seed=seed_override)
    return cfg


def _write_field_csv(path, mesh, grid, values):
    with open(path, "w") as fh:
        cols = "x," if mesh.dim == 1 else "x,y,"
        fh.write(cols + ",".join(f"t{j}" for j in range(grid.n_steps + 1)) + "\n")
        for i in range(mesh.n_nodes):
            coords = ([_fmt(mesh.nodes[i])] if mesh.dim == 1 else
                      [_fmt(mesh.nodes[i, 0]), _fmt(mesh.nodes[i, 1])])
            fh.write(",".join(coords + [_fmt(v) for v in values[i]]) + "\n")


def cmd_forward(args) -> int:
    cfg = _load_config(args.config, args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh, grid = build_discretization(cfg)
    q_true = make_target(cfg.q_true, mesh, cfg.lower, cfg.upper)
    flux = build_excitation(cfg, mesh, grid)
    u_n = solve_neumann(q_true, flux, None, mesh, grid)
    _write_field_csv(outdir / "field_neumann.csv", mesh, grid, u_n.values)
    u_d = solve_dirichlet(q_true, u_n.trace(), None, mesh, grid)
    _write_field_csv(outdir / "field_dirichlet.csv", mesh, grid, u_d.values)
    trace = u_n.trace()
    with open(outdir / "trace.csv", "w") as fh:
        cols = "t,x,phi\n" if mesh.dim == 1 else "t,x,y,phi\n"
        fh.write(cols)
        bxy = mesh.nodes[mesh.boundary_idx]
        for j, t in enumerate(grid.times):
            for b in range(trace.values.shape[0]):
                coords = ([_fmt(bxy[b])] if mesh.dim == 1 else
                          [_fmt(bxy[b, 0]), _fmt(bxy[b, 1])])
                fh.write(",".join([_fmt(t)] + coords +
                                  [_fmt(trace.values[b, j])]) + "\n")
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = _load_config(args.config, args.seed)
    observed = add_noise(generate_observation(cfg), cfg.epsilon, cfg.seed)
    report = run_experiment(cfg, method=args.method, observed=observed)
    write_report(report, args.out, config=cfg, observed=observed)
    print(f"status={report.status} iterations={report.n_iterations} "
          f"e_final={report.rel_error[-1]:.6e}")
    if report.status == "line_search_failure" or report.status.startswith(
            "solver_failure"):
        print(f"reconstruction ended with status {report.status}",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.seed)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --values list: {err}") from err
    if not values:
        raise ConfigError("--values must list at least one number")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    reports = sweep(cfg, args.param, values, method=args.method)
    failed = 0
    with open(outdir / "summary.csv", "w") as fh:
        fh.write(f"{args.param},status,n_iterations,e_final\n")
        for v, rep in zip(values, reports):
            sub = outdir / f"{args.param}_{v:g}"
            if isinstance(rep, Exception):
                failed += 1
                fh.write(f"{_fmt(v)},error,0,nan\n")
                print(f"{args.param}={v:g} failed: {rep}", file=sys.stderr)
                continue
            member_cfg = dataclasses.replace(cfg, **{args.param: v})
            member_obs = add_noise(generate_observation(member_cfg),
                                   member_cfg.epsilon, member_cfg.seed)
            write_report(rep, sub, config=member_cfg, observed=member_obs)
            fh.write(",".join([_fmt(v), rep.status, str(rep.n_iterations),
                               _fmt(rep.rel_error[-1])]) + "\n")
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvrecon",
        description="Potential reconstruction in subdiffusion by "
                    "Kohn-Vogelius minimization")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed (default: config value)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="solve the direct problems, dump fields")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("invert", help="run one reconstruction")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("kv", "ls"), default="kv")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("sweep", help="vary one parameter, shared seed")
    p.add_argument("config")
    p.add_argument("--param", choices=("rho", "alpha", "epsilon"), required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("kv", "ls"), default="kv")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
