"""Adjoint states for the Kohn-Vogelius functional and the least-squares
baseline.

The adjoint sources are assembled as the discrete weak-form image
(K + M_q) w of the state mismatch w = u_N - u_D, and they carry the
trapezoid time-quadrature weights of the objective.  Together with the
transpose property of solve_backward this makes the assembled gradient the
exact derivative of the discrete objective, which the finite-difference
oracle in the test suite pins down.
"""

import numpy as np

from .forward import Field, solve_backward
from .mesh import Potential, SpaceMesh
from .timegrid import TimeGrid


def _kv_adjoint_loads(q: Potential, u_n: Field, u_d: Field, mesh: SpaceMesh,
                      grid: TimeGrid) -> np.ndarray:
    """Weighted weak image 2*w_n*(K + M_q)(u_N - u_D) per time node."""
    diff = u_n.values - u_d.values
    op = mesh.stiffness + mesh.coeff_mass(q.values)
    return 2.0 * grid.trapezoid_weights()[None, :] * (op @ diff)


def solve_xi_d(q: Potential, u_n: Field, u_d: Field, mesh: SpaceMesh,
               grid: TimeGrid) -> Field:
    """Dirichlet-type adjoint: backward solve, zero trace, source +2J."""
    return solve_backward(q, _kv_adjoint_loads(q, u_n, u_d, mesh, grid),
                          "dirichlet", mesh, grid)


def solve_xi_n(q: Potential, u_n: Field, u_d: Field, mesh: SpaceMesh,
               grid: TimeGrid) -> Field:
    """Neumann-type adjoint: backward solve, zero flux, source -2J."""
    return solve_backward(q, -_kv_adjoint_loads(q, u_n, u_d, mesh, grid),
                          "neumann", mesh, grid)


def solve_zeta_ls(q: Potential, u: Field, observed, mesh: SpaceMesh,
                  grid: TimeGrid) -> Field:
    """Least-squares adjoint: backward solve with the boundary flux
    -2*(trace(u) - observed) and no volumetric source."""
    mismatch = u.values[mesh.boundary_idx] - observed.values
    flux = -2.0 * grid.trapezoid_weights()[None, :] * mismatch
    loads = mesh.boundary_load(flux)
    return solve_backward(q, loads, "neumann", mesh, grid)
