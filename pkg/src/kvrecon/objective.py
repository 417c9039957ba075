"""Kohn-Vogelius functional, its Tikhonov-regularized form and adjoint
gradient, and the boundary least-squares baseline.

The Kohn-Vogelius value is the energy discrepancy between the flux-driven
and trace-driven solutions sharing the same potential:

    K(q) = int_0^T int_Omega |grad(u_N - u_D)|^2 + q |u_N - u_D|^2,
    K_rho(q) = K(q) + rho * ||q||_{L2}^2.

Its gradient combines the two states with the two backward adjoint states:
the flux-type adjoint pairs with u_N and the trace-type adjoint with u_D,

    K_rho'(q)(x) = int |u_N - u_D|^2 dt + int u_N xi_N dt
                   + int u_D xi_D dt + 2 rho q(x),

with xi_N solving the zero-flux backward problem with source -2J and xi_D
the zero-trace backward problem with source +2J.  All gradients are returned
as nodal functions (the L2-Riesz representative: assembled dual vectors are
mass-inverted), so norms and inner products downstream use the mass matrix.
The central-difference tests pin every sign in this file.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adjoint import solve_xi_d, solve_xi_n, solve_zeta_ls
from .forward import Field, solve_dirichlet, solve_neumann
from .mesh import BoundaryData, Potential, SpaceMesh, boundary_l2_inner
from .timegrid import TimeGrid


@dataclass
class ObjectiveEvaluation:
    """Value (and optionally gradient) of an objective at one potential."""

    k_value: float
    k_rho_value: float
    gradient: Optional[np.ndarray]
    u_n: Field
    u_d: Optional[Field] = None


def _kv_states(q, neumann_data, observed, mesh, grid):
    u_n = solve_neumann(q, neumann_data, None, mesh, grid)
    u_d = solve_dirichlet(q, observed, None, mesh, grid)
    return u_n, u_d


def kv_energy(q: Potential, u_n: Field, u_d: Field, mesh: SpaceMesh,
              grid: TimeGrid) -> float:
    """Energy quadrature sum_n w_n e^n.(K + M_q).e^n with e = u_N - u_D."""
    e = u_n.values - u_d.values
    op = mesh.stiffness + mesh.coeff_mass(q.values)
    w = grid.trapezoid_weights()
    return float(np.einsum("it,t,it->", e, w, op @ e))


def eval_kv(q: Potential, neumann_data: BoundaryData, observed: BoundaryData,
            rho: float, mesh: SpaceMesh, grid: TimeGrid) -> ObjectiveEvaluation:
    """Evaluate K and K_rho (no gradient)."""
    if rho < 0.0:
        raise ValueError(f"regularization parameter must be >= 0, got {rho}")
    u_n, u_d = _kv_states(q, neumann_data, observed, mesh, grid)
    k = kv_energy(q, u_n, u_d, mesh, grid)
    k_rho = k + rho * mesh.inner(q.values, q.values)
    return ObjectiveEvaluation(k, k_rho, None, u_n, u_d)


def grad_kv(q: Potential, neumann_data: BoundaryData, observed: BoundaryData,
            rho: float, mesh: SpaceMesh, grid: TimeGrid) -> ObjectiveEvaluation:
    """Evaluate K_rho and its nodal gradient via the adjoint states."""
    if rho < 0.0:
        raise ValueError(f"regularization parameter must be >= 0, got {rho}")
    u_n, u_d = _kv_states(q, neumann_data, observed, mesh, grid)
    k = kv_energy(q, u_n, u_d, mesh, grid)
    k_rho = k + rho * mesh.inner(q.values, q.values)

    xi_n = solve_xi_n(q, u_n, u_d, mesh, grid)
    xi_d = solve_xi_d(q, u_n, u_d, mesh, grid)

    e = u_n.values - u_d.values
    w = grid.trapezoid_weights()
    dual = mesh.coeff_mass_pair(e, e, w)
    # backward fields pair one step behind the states (discrete adjoint
    # staggering; see forward.adjoint_pairing)
    dual += mesh.coeff_mass_pair(xi_n.values[:, :-1], u_n.values[:, 1:])
    dual += mesh.coeff_mass_pair(xi_d.values[:, :-1], u_d.values[:, 1:])
    gradient = mesh.mass_solve(dual) + 2.0 * rho * q.values
    return ObjectiveEvaluation(k, k_rho, gradient, u_n, u_d)


def eval_ls(q: Potential, neumann_data: BoundaryData, observed: BoundaryData,
            mu: float, mesh: SpaceMesh, grid: TimeGrid) -> ObjectiveEvaluation:
    """Least-squares boundary misfit J(q) = ||trace(u[q]) - observed||^2
    + mu*||q||^2 (one flux-driven solve)."""
    if mu < 0.0:
        raise ValueError(f"regularization parameter must be >= 0, got {mu}")
    u = solve_neumann(q, neumann_data, None, mesh, grid)
    mismatch = BoundaryData(u.values[mesh.boundary_idx] - observed.values,
                            "dirichlet")
    j = boundary_l2_inner(mismatch, mismatch, mesh, grid)
    j_mu = j + mu * mesh.inner(q.values, q.values)
    return ObjectiveEvaluation(j, j_mu, None, u)


def grad_ls(q: Potential, neumann_data: BoundaryData, observed: BoundaryData,
            mu: float, mesh: SpaceMesh, grid: TimeGrid) -> ObjectiveEvaluation:
    """Least-squares value and nodal gradient J'(q) = int u*zeta dt + 2*mu*q."""
    if mu < 0.0:
        raise ValueError(f"regularization parameter must be >= 0, got {mu}")
    u = solve_neumann(q, neumann_data, None, mesh, grid)
    mismatch = BoundaryData(u.values[mesh.boundary_idx] - observed.values,
                            "dirichlet")
    j = boundary_l2_inner(mismatch, mismatch, mesh, grid)
    j_mu = j + mu * mesh.inner(q.values, q.values)

    zeta = solve_zeta_ls(q, u, observed, mesh, grid)
    dual = mesh.coeff_mass_pair(zeta.values[:, :-1], u.values[:, 1:])
    gradient = mesh.mass_solve(dual) + 2.0 * mu * q.values
    return ObjectiveEvaluation(j, j_mu, gradient, u)
