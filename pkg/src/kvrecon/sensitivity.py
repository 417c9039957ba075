"""Directional derivatives of the forward maps with respect to the potential.

The sensitivity in direction dq solves the same subdiffusion problem with
homogeneous boundary data and the volumetric source -dq * u[q], assembled as
the coefficient-mass image M_dq u[q].  That image is the exact derivative of
the per-step system matrix, so the discrete linearization matches the
discrete forward map to machine precision (second-order Taylor remainder).
"""

import numpy as np

from .forward import Field, solve_dirichlet, solve_neumann
from .mesh import BoundaryData, Potential, SpaceMesh
from .timegrid import TimeGrid


def _sensitivity_loads(delta_q: np.ndarray, state: Field,
                       mesh: SpaceMesh) -> np.ndarray:
    return -(mesh.coeff_mass(np.asarray(delta_q, dtype=float)) @ state.values)


def solve_sensitivity_neumann(q: Potential, delta_q: np.ndarray, u_n: Field,
                              mesh: SpaceMesh, grid: TimeGrid) -> Field:
    """Derivative of the flux-driven solution map: homogeneous-Neumann solve
    with source -dq * u_N[q]."""
    loads = _sensitivity_loads(delta_q, u_n, mesh)
    return solve_neumann(q, None, None, mesh, grid, weak_loads=loads)


def solve_sensitivity_dirichlet(q: Potential, delta_q: np.ndarray, u_d: Field,
                                mesh: SpaceMesh, grid: TimeGrid) -> Field:
    """Derivative of the trace-driven solution map: homogeneous-Dirichlet
    solve with source -dq * u_D[q]."""
    loads = _sensitivity_loads(delta_q, u_d, mesh)
    zero = np.zeros((len(mesh.boundary_idx), grid.n_steps + 1))
    return solve_dirichlet(q, BoundaryData(zero, "dirichlet"), None, mesh,
                           grid, weak_loads=loads)
