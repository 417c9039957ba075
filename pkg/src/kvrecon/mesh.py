"""Spatial discretization: P1 finite elements on an interval, structured
five-point scheme on the unit square, and the boundary bookkeeping shared by
all solvers.

1D uses the consistent (tridiagonal) mass matrix; 2D uses lumped (diagonal)
mass so every per-step system stays cheap and symmetric positive definite.
The coefficient mass matrix M_q (weak form of the zeroth-order term q*u*v) is
assembled exactly for piecewise-linear q in 1D and lumped in 2D; in both cases
it is linear in the nodal values of q, which makes the discrete gradient of
any objective an exact pairing through dM_q/dq_j.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cholesky_banded, cho_solve_banded

from .timegrid import TimeGrid

DEFAULT_LOWER_BOUND = 1e-3
DEFAULT_UPPER_BOUND = 10.0


@dataclass
class SpaceMesh:
    """Nodes, boundary index sets and assembled matrices for one domain."""

    dim: int
    nodes: np.ndarray            # (n_nodes,) in 1D, (n_nodes, 2) in 2D
    h: tuple
    interior_idx: np.ndarray
    boundary_idx: np.ndarray
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    boundary_weights: np.ndarray  # quadrature weight of each boundary node
    grid_shape: Optional[tuple] = None   # (nx+1, ny+1) in 2D
    lumped_mass: Optional[np.ndarray] = None  # diagonal of mass when lumped
    _mass_chol: object = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    # ---- inner products -------------------------------------------------

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Mass-weighted L2(Omega) inner product of nodal vectors."""
        return float(u @ (self.mass @ v))

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def integrate(self, v: np.ndarray) -> float:
        """Quadrature of the P1 interpolant of v over Omega."""
        return float(np.sum(self.mass @ v))

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply M^{-1}; maps an assembled dual vector to nodal values."""
        if self.lumped_mass is not None:
            if rhs.ndim == 1:
                return rhs / self.lumped_mass
            return rhs / self.lumped_mass[:, None]
        if self._mass_chol is None:
            self._mass_chol = cholesky_banded(_tridiag_to_banded(self.mass),
                                              lower=False)
        return cho_solve_banded((self._mass_chol, False), rhs)

    # ---- coefficient-dependent assembly ----------------------------------

    def coeff_mass(self, q: np.ndarray) -> sp.csr_matrix:
        """Weak form of (q u, v): exact for P1 q in 1D, lumped in 2D."""
        q = np.asarray(q, dtype=float)
        if self.dim == 2:
            return sp.diags(self.lumped_mass * q).tocsr()
        h = self.h[0]
        n = self.n_nodes
        ql, qr = q[:-1], q[1:]
        # element [i, i+1]:  int q*phi_i*phi_j with q = ql*phi_i + qr*phi_{i+1}
        d_main = np.zeros(n)
        d_main[:-1] += h * (3.0 * ql + qr) / 12.0
        d_main[1:] += h * (ql + 3.0 * qr) / 12.0
        d_off = h * (ql + qr) / 12.0
        return sp.diags([d_off, d_main, d_off], [-1, 0, 1]).tocsr()

    def coeff_mass_pair(self, a: np.ndarray, b: np.ndarray,
                        weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Dual vector t with t_j = sum_n w_n * a^n . (dM_q/dq_j) b^n.

        ``a`` and ``b`` are (n_nodes, n_times) space-time arrays (or single
        vectors).  This is the exact q-derivative of sum_n w_n a^n.M_q.b^n,
        the pairing every objective gradient reduces to.
        """
        a = np.atleast_2d(a.T).T
        b = np.atleast_2d(b.T).T
        if weights is None:
            prod = np.einsum("it,it->i", a, b)
        else:
            prod = np.einsum("it,t,it->i", a, weights, b)
        if self.dim == 2:
            return self.lumped_mass * prod
        h = self.h[0]
        if weights is None:
            p00 = np.einsum("it,it->i", a[:-1], b[:-1])
            p11 = np.einsum("it,it->i", a[1:], b[1:])
            pcr = np.einsum("it,it->i", a[:-1], b[1:]) + np.einsum(
                "it,it->i", a[1:], b[:-1])
        else:
            p00 = np.einsum("it,t,it->i", a[:-1], weights, b[:-1])
            p11 = np.einsum("it,t,it->i", a[1:], weights, b[1:])
            pcr = np.einsum("it,t,it->i", a[:-1], weights, b[1:]) + np.einsum(
                "it,t,it->i", a[1:], weights, b[:-1])
        out = np.zeros(self.n_nodes)
        out[:-1] += h * (3.0 * p00 + pcr + p11) / 12.0
        out[1:] += h * (p00 + pcr + 3.0 * p11) / 12.0
        return out

    def boundary_load(self, flux_values: np.ndarray) -> np.ndarray:
        """Assemble the weak Neumann load int_dOmega flux * v ds.

        ``flux_values`` is indexed like boundary_idx; may carry extra trailing
        axes (e.g. time).
        """
        out_shape = (self.n_nodes,) + flux_values.shape[1:]
        out = np.zeros(out_shape)
        w = self.boundary_weights
        if flux_values.ndim > 1:
            w = w.reshape((-1,) + (1,) * (flux_values.ndim - 1))
        out[self.boundary_idx] = w * flux_values
        return out


@dataclass
class Potential:
    """Nodal coefficient values with box bounds [lower, upper]."""

    values: np.ndarray
    lower: float = DEFAULT_LOWER_BOUND
    upper: float = DEFAULT_UPPER_BOUND

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not (0.0 < self.lower <= self.upper):
            raise ValueError(
                f"bounds must satisfy 0 < lower <= upper, got [{self.lower}, {self.upper}]")

    def clipped(self) -> "Potential":
        return Potential(np.clip(self.values, self.lower, self.upper),
                         self.lower, self.upper)

    def with_values(self, values: np.ndarray) -> "Potential":
        return Potential(values, self.lower, self.upper)


@dataclass
class BoundaryData:
    """Values on (boundary node, time node); either a flux or a trace."""

    values: np.ndarray
    kind: str  # 'neumann' (flux) or 'dirichlet' (trace)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown boundary data kind {self.kind!r}")


def build_interval_mesh(a: float, b: float, n_cells: int) -> SpaceMesh:
    """P1 mesh on (a, b): tridiagonal stiffness and consistent mass."""
    if not a < b:
        raise ValueError(f"need a < b, got ({a}, {b})")
    if n_cells < 2:
        raise ValueError(f"need at least 2 cells, got {n_cells}")
    n = n_cells + 1
    h = (b - a) / n_cells
    nodes = np.linspace(a, b, n)

    main_k = np.full(n, 2.0 / h)
    main_k[[0, -1]] = 1.0 / h
    stiffness = sp.diags([-np.ones(n - 1) / h, main_k, -np.ones(n - 1) / h],
                         [-1, 0, 1]).tocsr()

    main_m = np.full(n, 4.0 * h / 6.0)
    main_m[[0, -1]] = 2.0 * h / 6.0
    mass = sp.diags([np.full(n - 1, h / 6.0), main_m, np.full(n - 1, h / 6.0)],
                    [-1, 0, 1]).tocsr()

    boundary_idx = np.array([0, n - 1])
    interior_idx = np.arange(1, n - 1)
    mesh = SpaceMesh(dim=1, nodes=nodes, h=(h,), interior_idx=interior_idx,
                     boundary_idx=boundary_idx, mass=mass, stiffness=stiffness,
                     boundary_weights=np.ones(2))
    mesh._mass_chol = cholesky_banded(_tridiag_to_banded(mass), lower=False)
    return mesh


def build_square_mesh(n_x: int, n_y: int) -> SpaceMesh:
    """Structured mesh of the unit square: five-point stiffness, lumped mass.

    Node (ix, iy) maps to flat index ix*(n_y+1) + iy.
    """
    if n_x < 2 or n_y < 2:
        raise ValueError(f"need at least 2 cells per axis, got ({n_x}, {n_y})")
    hx, hy = 1.0 / n_x, 1.0 / n_y
    nx1, ny1 = n_x + 1, n_y + 1

    def stiff_1d(nc, h):
        main = np.full(nc + 1, 2.0 / h)
        main[[0, -1]] = 1.0 / h
        return sp.diags([-np.ones(nc) / h, main, -np.ones(nc) / h], [-1, 0, 1])

    def lump_1d(nc, h):
        m = np.full(nc + 1, h)
        m[[0, -1]] = h / 2.0
        return m

    mx, my = lump_1d(n_x, hx), lump_1d(n_y, hy)
    stiffness = (sp.kron(stiff_1d(n_x, hx), sp.diags(my)) +
                 sp.kron(sp.diags(mx), stiff_1d(n_y, hy))).tocsr()
    lumped = np.kron(mx, my)
    mass = sp.diags(lumped).tocsr()

    ix, iy = np.meshgrid(np.arange(nx1), np.arange(ny1), indexing="ij")
    nodes = np.column_stack([(ix * hx).ravel(), (iy * hy).ravel()])
    on_boundary = ((ix == 0) | (ix == n_x) | (iy == 0) | (iy == n_y)).ravel()
    boundary_idx = np.flatnonzero(on_boundary)
    interior_idx = np.flatnonzero(~on_boundary)

    # Each boundary node inherits the 1D lumped weight of every side it lies
    # on, so corners get hx/2 + hy/2.
    s = np.zeros(nx1 * ny1)
    flat = lambda i, j: i * ny1 + j
    for j in range(ny1):
        s[flat(0, j)] += my[j]
        s[flat(n_x, j)] += my[j]
    for i in range(nx1):
        s[flat(i, 0)] += mx[i]
        s[flat(i, n_y)] += mx[i]

    return SpaceMesh(dim=2, nodes=nodes, h=(hx, hy), interior_idx=interior_idx,
                     boundary_idx=boundary_idx, mass=mass, stiffness=stiffness,
                     boundary_weights=s[boundary_idx],
                     grid_shape=(nx1, ny1), lumped_mass=lumped)


def boundary_l2_inner(f: BoundaryData, g: BoundaryData, mesh: SpaceMesh,
                      grid: TimeGrid) -> float:
    """Trapezoid-in-time, lumped-in-space quadrature of the lateral-boundary
    integral int_0^T int_dOmega f g ds dt.

    In 1D the spatial part is the plain sum over the two endpoints.
    """
    expected = (len(mesh.boundary_idx), grid.n_steps + 1)
    if f.values.shape != expected or g.values.shape != expected:
        raise ValueError(
            f"boundary data shape mismatch: {f.values.shape} / {g.values.shape},"
            f" expected {expected}")
    wt = grid.trapezoid_weights()
    return float(np.einsum("bt,b,t,bt->", f.values, mesh.boundary_weights,
                           wt, g.values))


def _tridiag_to_banded(m: sp.spmatrix) -> np.ndarray:
    """Upper banded storage (2 x n) of a symmetric tridiagonal matrix."""
    md = m.todia()
    n = md.shape[0]
    ab = np.zeros((2, n))
    for off, data in zip(md.offsets, md.data):
        if off == 0:
            ab[1, :] = data
        elif off == 1:
            ab[0, :] = data
    return ab
