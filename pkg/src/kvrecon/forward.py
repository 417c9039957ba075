"""Implicit L1 time-stepping solver for the subdiffusion operator

    d_t^alpha u - Lap(u) + q u = f

with Neumann flux data or Dirichlet trace data and zero initial state.

Every step solves the SPD system (s*M + K + M_q) u^n = RHS where s is the L1
scale; 1D systems go through a banded Cholesky factorization reused across
steps, 2D systems through Jacobi-preconditioned conjugate gradients.

Backward (right Riemann-Liouville) problems reuse the forward stepper under
time reversal.  The reversal is applied at the step level (backward step m
consumes the load of time node n_steps+1-m), which makes the discrete
backward solution operator the exact transpose of the forward one: the
returned backward field, paired one step behind the forward field, satisfies
the discrete duality identity to solver precision.  See adjoint_pairing.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cholesky_banded, cho_solve_banded

from .mesh import BoundaryData, Potential, SpaceMesh, _tridiag_to_banded
from .timegrid import TimeGrid, l1_history_combination, time_reverse

CG_RTOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a per-step linear solve fails to converge."""


@dataclass
class Field:
    """Space-time array u(x_i, t_n), shape (n_nodes, n_steps+1)."""

    values: np.ndarray
    mesh: SpaceMesh
    grid: TimeGrid

    def trace(self) -> BoundaryData:
        """Restriction to the boundary nodes, as a Dirichlet trace."""
        return BoundaryData(self.values[self.mesh.boundary_idx].copy(),
                            kind="dirichlet")

    def time_reversed(self) -> "Field":
        return Field(time_reverse(self.values), self.mesh, self.grid)


class LinearSystemWorkspace:
    """Factorization / preconditioner for the per-step matrix, reusable
    across time steps while q is fixed.  SPD for q > 0."""

    def __init__(self, matrix: sp.spmatrix, dim: int, n_nodes_total: int):
        self.dim = dim
        if dim == 1:
            self._chol = cholesky_banded(_tridiag_to_banded(matrix), lower=False)
            self._matrix = None
        else:
            a = matrix.tocsr()
            self._matrix = a
            self._precond = spla.LinearOperator(
                a.shape, matvec=lambda v, d=1.0 / a.diagonal(): d * v)
            self._maxiter = 10 * n_nodes_total

    def solve(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        if self.dim == 1:
            return cho_solve_banded((self._chol, False), rhs)
        x, info = spla.cg(self._matrix, rhs, x0=x0, rtol=CG_RTOL, atol=0.0,
                          maxiter=self._maxiter, M=self._precond)
        if info != 0:
            res = np.linalg.norm(self._matrix @ x - rhs)
            raise SolverError(
                f"per-step CG did not converge (info={info}, residual={res:.3e})")
        return x


def _march(q: Potential, mesh: SpaceMesh, grid: TimeGrid, kind: str,
           boundary_values: Optional[np.ndarray],
           nodal_source: Optional[np.ndarray],
           weak_loads) -> np.ndarray:
    """March the implicit L1 scheme from the zero initial state.

    boundary_values: (n_boundary, n_steps+1) flux (neumann) or trace
    (dirichlet); nodal_source: source density f(x_i, t_n), mass-weighted
    internally; weak_loads: already-assembled load vectors, as an
    (n_nodes, n_steps+1) array or a callable n -> vector.
    """
    n_nodes, nt = mesh.n_nodes, grid.n_steps
    s = grid.l1_scale
    mass, stiff = mesh.mass, mesh.stiffness
    a_full = (s * mass + stiff + mesh.coeff_mass(q.values)).tocsr()

    dirichlet = kind == "dirichlet"
    if dirichlet:
        ii, bb = mesh.interior_idx, mesh.boundary_idx
        a_ib = a_full[np.ix_(ii, bb)].tocsr()
        work = LinearSystemWorkspace(a_full[np.ix_(ii, ii)], mesh.dim, n_nodes)
    else:
        work = LinearSystemWorkspace(a_full, mesh.dim, n_nodes)

    u = np.zeros((n_nodes, nt + 1))
    if dirichlet and boundary_values is not None:
        # zero initial state; an incompatible nonzero trace at t=0 is kept as
        # given so that trace(u) reproduces the data exactly
        u[mesh.boundary_idx, 0] = boundary_values[:, 0]

    x_prev = None
    for n in range(1, nt + 1):
        rhs = s * (mass @ l1_history_combination(u, grid, n))
        if nodal_source is not None:
            rhs = rhs + mass @ nodal_source[:, n]
        if weak_loads is not None:
            rhs = rhs + (weak_loads(n) if callable(weak_loads) else weak_loads[:, n])
        if dirichlet:
            ub = boundary_values[:, n] if boundary_values is not None else 0.0
            r = rhs[mesh.interior_idx]
            if boundary_values is not None:
                r = r - a_ib @ boundary_values[:, n]
            x_prev = work.solve(r, x0=x_prev)
            u[mesh.interior_idx, n] = x_prev
            if boundary_values is not None:
                u[mesh.boundary_idx, n] = ub
        else:
            if boundary_values is not None:
                rhs = rhs + mesh.boundary_load(boundary_values[:, n])
            x_prev = work.solve(rhs, x0=x_prev)
            u[:, n] = x_prev
    return u


def solve_neumann(q: Potential, flux: Optional[BoundaryData],
                  source: Optional[Field], mesh: SpaceMesh, grid: TimeGrid,
                  weak_loads=None) -> Field:
    """Solve the flux-driven problem: d_t^alpha u - Lap u + q u = f,
    du/dnu = flux on the lateral boundary, u(.,0) = 0."""
    bv = flux.values if flux is not None else None
    src = source.values if isinstance(source, Field) else source
    values = _march(q, mesh, grid, "neumann", bv, src, weak_loads)
    return Field(values, mesh, grid)


def solve_dirichlet(q: Potential, trace: Optional[BoundaryData],
                    source: Optional[Field], mesh: SpaceMesh, grid: TimeGrid,
                    weak_loads=None) -> Field:
    """Solve the trace-driven problem: boundary rows are eliminated and the
    trace values imposed strongly at every step."""
    bv = trace.values if trace is not None else None
    src = source.values if isinstance(source, Field) else source
    values = _march(q, mesh, grid, "dirichlet", bv, src, weak_loads)
    return Field(values, mesh, grid)


def solve_backward(q: Potential, loads: Union[np.ndarray, Callable],
                   boundary_kind: str, mesh: SpaceMesh, grid: TimeGrid) -> Field:
    """Solve a backward (right Riemann-Liouville) problem with homogeneous
    boundary data of the given kind and zero terminal condition.

    ``loads`` are weak-form load vectors per time node, (n_nodes, n_steps+1).
    The loads are consumed in reversed step order (backward step m takes the
    load of node n_steps+1-m) and the computed field is reversed back, so
    the returned field has xi(.,T) = 0 and the solve is the exact transpose
    of the forward stepper under the staggered pairing of adjoint_pairing.
    """
    if callable(loads):
        loads = np.column_stack([loads(n) for n in range(grid.n_steps + 1)])
    nt = grid.n_steps
    reversed_loads = np.empty_like(loads)
    reversed_loads[:, 0] = 0.0
    reversed_loads[:, 1:] = loads[:, :0:-1]  # step m <- load at node nt+1-m
    if boundary_kind == "dirichlet":
        zero = np.zeros((len(mesh.boundary_idx), nt + 1))
        v = _march(q, mesh, grid, "dirichlet", zero, None, reversed_loads)
    elif boundary_kind == "neumann":
        v = _march(q, mesh, grid, "neumann", None, None, reversed_loads)
    else:
        raise ValueError(f"unknown boundary kind {boundary_kind!r}")
    return Field(time_reverse(v), mesh, grid)


def spacetime_inner(a: Field, b: Field) -> float:
    """Space-time L2(Q_T) quadrature dt * sum_{n>=1} a^n . M b^n.

    The n=0 node is omitted: all forward problems start from zero, so this is
    the rectangle rule matched to the stepping (and the quadrature under
    which solve_backward is the exact transpose of the forward solves).
    """
    m = a.mesh.mass
    return a.grid.dt * float(np.einsum("it,it->", a.values[:, 1:],
                                       (m @ b.values)[:, 1:]))


def adjoint_pairing(forward: Field, backward: Field) -> float:
    """Duality pairing dt * sum_{n=1}^{N} f^n . M xi^{n-1}.

    Backward fields are staggered one step behind forward ones (the discrete
    transpose of an implicit stepper lands between nodes); this pairing is
    the one under which <S f, g> = <f, S* g> holds to solver precision.
    """
    m = forward.mesh.mass
    return forward.grid.dt * float(
        np.einsum("it,it->", forward.values[:, 1:], (m @ backward.values)[:, :-1]))
