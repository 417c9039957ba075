"""Reconstruction of a space-dependent potential in time-fractional
subdiffusion from lateral boundary data, by conjugate-gradient minimization
of a Tikhonov-regularized Kohn-Vogelius functional."""

from .adjoint import solve_xi_d, solve_xi_n, solve_zeta_ls
from .experiment import (ExperimentConfig, add_noise, compare_methods,
                         generate_observation, make_target, relative_error,
                         run_experiment, sweep)
from .forward import (Field, SolverError, adjoint_pairing, solve_backward,
                      solve_dirichlet, solve_neumann, spacetime_inner)
from .mesh import (BoundaryData, Potential, SpaceMesh, boundary_l2_inner,
                   build_interval_mesh, build_square_mesh)
from .objective import (ObjectiveEvaluation, eval_kv, eval_ls, grad_kv,
                        grad_ls)
from .optimizer import (ArmijoParams, KvProblem, LsProblem,
                        ReconstructionReport, StepSizeCoefficients,
                        fletcher_reeves_gamma, run_cgm, select_step,
                        step_coefficients)
from .sensitivity import (solve_sensitivity_dirichlet,
                          solve_sensitivity_neumann)
from .timegrid import TimeGrid, build_time_grid, caputo_apply, time_reverse

__version__ = "0.1.0"
