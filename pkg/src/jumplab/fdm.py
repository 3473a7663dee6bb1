"""Finite-difference discretization and solvers.

The local part delta*G - diag(V) is assembled in conservative flux form on a
tensor grid (cartesian for interval/rectangle, polar for disk/annulus).  The
redistribution term is a rank-one coupling v w^T: the intensity column times
the mu-quadrature row.  Dirichlet solves and the inverse-power eigenvalue
iteration both reuse one sparse factorization of the local part through a
rank-one update identity.

Grid resolution must resolve the boundary layer of width ~ sqrt(delta a / V);
assembly enforces h <= 0.5 * sqrt(delta a_min / V_max) unless overridden.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, ValidationError
from .fields import CoefficientSet
from .geometry import Domain

# Excised-core radius of polar disk grids, relative to the disk radius.  The
# core gets a reflecting closure; a controlled perturbation at this scale.
DISK_CORE_FRACTION = 1e-3


@dataclass(frozen=True)
class Grid:
    domain: Domain
    kind: str                 # interval | rectangle | polar
    axes: tuple               # node arrays per axis ((x,) | (x, y) | (r, theta))
    shape: tuple
    points: np.ndarray        # (N, d) cartesian coordinates
    interior: np.ndarray      # flat ids
    boundary: np.ndarray      # flat ids
    boundary_normals: np.ndarray
    cell_weights: np.ndarray  # (N,) trapezoid volume weights
    has_core_ring: bool = False  # polar disk: ring 0 is a reflecting closure

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def spacing(self):
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)


def build_grid(domain: Domain, n, n_angular=None) -> Grid:
    """Tensor grid with ``n`` nodes per principal axis.

    Polar grids take ``n`` radial nodes and ``n_angular`` angular nodes
    (default 64).  The disk excises a small core with a reflecting closure.
    """
    if domain.kind == "interval":
        a, b = domain.params
        n = int(n)
        if n < 3:
            raise ValueError("need at least 3 nodes per axis")
        x = np.linspace(a, b, n)
        pts = x.reshape(-1, 1)
        interior = np.arange(1, n - 1)
        boundary = np.array([0, n - 1])
        normals = np.array([[1.0], [-1.0]])
        w = np.full(n, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return Grid(domain, "interval", (x,), (n,), pts, interior, boundary, normals, w)

    if domain.kind == "rectangle":
        x0, y0, x1, y1 = domain.params
        nx, ny = (int(n[0]), int(n[1])) if isinstance(n, (tuple, list)) else (int(n), int(n))
        if nx < 3 or ny < 3:
            raise ValueError("need at least 3 nodes per axis")
        x = np.linspace(x0, x1, nx)
        y = np.linspace(y0, y1, ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        on_bdy = (I == 0) | (I == nx - 1) | (J == 0) | (J == ny - 1)
        boundary = np.flatnonzero(on_bdy.ravel())
        interior = np.flatnonzero(~on_bdy.ravel())
        normals = domain.inward_normal(pts[boundary])
        wx = np.full(nx, x[1] - x[0]); wx[0] *= 0.5; wx[-1] *= 0.5
        wy = np.full(ny, y[1] - y[0]); wy[0] *= 0.5; wy[-1] *= 0.5
        w = np.outer(wx, wy).ravel()
        return Grid(domain, "rectangle", (x, y), (nx, ny), pts, interior, boundary, normals, w)

    # polar grids
    if domain.kind == "disk":
        cx, cy, ro = domain.params
        ri = DISK_CORE_FRACTION * ro
        core = True
    else:
        cx, cy, ri, ro = domain.params
        core = False
    nr = int(n)
    nth = int(n_angular) if n_angular else 64
    if nr < 3 or nth < 8:
        raise ValueError("polar grids need nr >= 3 and n_angular >= 8")
    r = np.linspace(ri, ro, nr)
    th = 2 * math.pi * np.arange(nth) / nth
    R, TH = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([cx + R.ravel() * np.cos(TH.ravel()),
                    cy + R.ravel() * np.sin(TH.ravel())], axis=1)
    ids = np.arange(nr * nth).reshape(nr, nth)
    if core:
        boundary = ids[-1].ravel()
    else:
        boundary = np.concatenate([ids[0].ravel(), ids[-1].ravel()])
    mask = np.zeros(nr * nth, dtype=bool)
    mask[boundary] = True
    interior = np.flatnonzero(~mask)
    normals = domain.inward_normal(pts[boundary])
    dr = r[1] - r[0]
    wr = np.full(nr, dr); wr[0] *= 0.5; wr[-1] *= 0.5
    w = np.outer(wr * r, np.full(nth, 2 * math.pi / nth)).ravel()
    return Grid(domain, "polar", (r, th), (nr, nth), pts, interior, boundary,
                normals, w, has_core_ring=core)


def layer_scale(coeffs: CoefficientSet, grid: Grid):
    """sqrt(delta-free layer scale) ingredients: (a_min, V_max) over the grid."""
    pts = grid.points
    if len(pts) > 20000:
        pts = pts[:: len(pts) // 20000 + 1]
    amin = float(np.min(np.linalg.eigvalsh(coeffs.diffusion(pts))))
    vmax = float(np.max(coeffs.intensity(grid.points)))
    return amin, vmax


def suggest_resolution(domain: Domain, delta, coeffs: CoefficientSet,
                       factor=0.25, cap=400001):
    """Nodes per axis so the spacing is ``factor`` times the layer width scale.

    Acceptance runs use factor <= 0.25; smaller factors cut the O(h^2)
    discretization error further.
    """
    probe = build_grid(domain, 11, 16)
    amin, vmax = layer_scale(coeffs, probe)
    h = factor * math.sqrt(delta * amin / vmax)
    if domain.kind == "interval":
        a, b = domain.params
        length = b - a
    elif domain.kind == "rectangle":
        x0, y0, x1, y1 = domain.params
        length = max(x1 - x0, y1 - y0)
    elif domain.kind == "disk":
        length = domain.params[2] * (1.0 - DISK_CORE_FRACTION)
    else:
        length = domain.params[3] - domain.params[2]
    return int(min(cap, max(11, math.ceil(length / h) + 1)))


def _check_layer_resolution(delta, coeffs, grid, allow_coarse):
    amin, vmax = layer_scale(coeffs, grid)
    if vmax <= 0:
        return
    h = grid.spacing[0]  # layer sits along the first (normal) axis
    limit = 0.5 * math.sqrt(delta * amin / vmax)
    if h > limit:
        msg = (f"grid spacing {h:.3e} does not resolve the boundary layer "
               f"(limit {limit:.3e} = 0.5*sqrt(delta*a_min/V_max))")
        if allow_coarse:
            warnings.warn(msg)
        else:
            raise ValidationError(msg + "; pass allow_coarse=True to override")


def _eval(fieldobj, pts):
    return fieldobj.eval(np.atleast_2d(pts), (0,) * pts.shape[-1]) \
        if pts.ndim > 1 else fieldobj.eval(pts.reshape(-1, 1), (0,))


def assemble_local(delta, coeffs: CoefficientSet, grid: Grid, allow_coarse=False):
    """The sparse local operator delta*G_h - diag(V) over interior nodes.

    Returns (A_loc, B_bc): interior-to-interior matrix and the coupling of
    boundary values into interior rows.  Flux-form second order stencil;
    midpoint diffusion values by evaluation at face centers; centered drift.
    """
    _check_layer_resolution(delta, coeffs, grid, allow_coarse)
    N = grid.n_nodes
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.asarray(v).ravel())

    if grid.kind == "interval":
        x = grid.axes[0]
        n = len(x)
        h = x[1] - x[0]
        a = coeffs.diffusion.entry(0, 0)
        amid = a.eval(((x[:-1] + x[1:]) / 2).reshape(-1, 1), (0,))
        b = coeffs.drift.components[0].eval(x[1:-1].reshape(-1, 1), (0,))
        i = np.arange(1, n - 1)
        lo = delta * (0.5 * amid[:-1] / h**2 - b / (2 * h))
        hi = delta * (0.5 * amid[1:] / h**2 + b / (2 * h))
        diag = -delta * 0.5 * (amid[:-1] + amid[1:]) / h**2
        add(i, i - 1, lo)
        add(i, i + 1, hi)
        add(i, i, diag)

    elif grid.kind == "rectangle":
        x, y = grid.axes
        nx, ny = grid.shape
        hx, hy = grid.spacing
        ii, jj = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        gid = lambda i, j: i * ny + j
        me = gid(ii, jj)
        P = lambda i, j: np.stack([x[i], y[j]], axis=1)

        a11, a22 = coeffs.diffusion.entry(0, 0), coeffs.diffusion.entry(1, 1)
        a12 = coeffs.diffusion.entry(0, 1)
        zero2 = (0, 0)
        # x-direction flux
        axp = a11.eval(np.stack([(x[ii] + x[ii + 1]) / 2, y[jj]], axis=1), zero2)
        axm = a11.eval(np.stack([(x[ii] + x[ii - 1]) / 2, y[jj]], axis=1), zero2)
        add(me, gid(ii + 1, jj), delta * 0.5 * axp / hx**2)
        add(me, gid(ii - 1, jj), delta * 0.5 * axm / hx**2)
        add(me, me, -delta * 0.5 * (axp + axm) / hx**2)
        # y-direction flux
        ayp = a22.eval(np.stack([x[ii], (y[jj] + y[jj + 1]) / 2], axis=1), zero2)
        aym = a22.eval(np.stack([x[ii], (y[jj] + y[jj - 1]) / 2], axis=1), zero2)
        add(me, gid(ii, jj + 1), delta * 0.5 * ayp / hy**2)
        add(me, gid(ii, jj - 1), delta * 0.5 * aym / hy**2)
        add(me, me, -delta * 0.5 * (ayp + aym) / hy**2)
        # cross terms (symmetric a12) via centered difference of centered differences
        if a12.constant_value() != 0.0:
            c = delta * 0.5 / (4 * hx * hy)
            a12_px = a12.eval(P(ii + 1, jj), zero2)
            a12_mx = a12.eval(P(ii - 1, jj), zero2)
            a12_py = a12.eval(P(ii, jj + 1), zero2)
            a12_my = a12.eval(P(ii, jj - 1), zero2)
            # d_x(a12 d_y phi)
            add(me, gid(ii + 1, jj + 1), c * a12_px)
            add(me, gid(ii + 1, jj - 1), -c * a12_px)
            add(me, gid(ii - 1, jj + 1), -c * a12_mx)
            add(me, gid(ii - 1, jj - 1), c * a12_mx)
            # d_y(a12 d_x phi)
            add(me, gid(ii + 1, jj + 1), c * a12_py)
            add(me, gid(ii - 1, jj + 1), -c * a12_py)
            add(me, gid(ii + 1, jj - 1), -c * a12_my)
            add(me, gid(ii - 1, jj - 1), c * a12_my)
        # drift
        pme = P(ii, jj)
        b1 = coeffs.drift.components[0].eval(pme, zero2)
        b2 = coeffs.drift.components[1].eval(pme, zero2)
        if np.any(b1):
            add(me, gid(ii + 1, jj), delta * b1 / (2 * hx))
            add(me, gid(ii - 1, jj), -delta * b1 / (2 * hx))
        if np.any(b2):
            add(me, gid(ii, jj + 1), delta * b2 / (2 * hy))
            add(me, gid(ii, jj - 1), -delta * b2 / (2 * hy))

    else:  # polar
        if not coeffs.diffusion.is_isotropic():
            raise ValidationError("polar grids support isotropic diffusion only")
        alpha = coeffs.diffusion.entry(0, 0)
        r, th = grid.axes
        nr, nth = grid.shape
        dr = r[1] - r[0]
        dth = th[1] - th[0]
        cx, cy = grid.domain.params[0], grid.domain.params[1]
        i_lo = 0 if grid.has_core_ring else 1
        ii, jj = np.meshgrid(np.arange(i_lo, nr - 1), np.arange(nth), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        gid = lambda i, j: i * nth + np.mod(j, nth)
        me = gid(ii, jj)
        cart = lambda rr, tt: np.stack([cx + rr * np.cos(tt), cy + rr * np.sin(tt)], axis=1)
        zero2 = (0, 0)
        ri = r[ii]
        # radial flux, (1/r) d_r(r alpha d_r u) with face values
        rp = ri + dr / 2
        ap = alpha.eval(cart(rp, th[jj]), zero2)
        cp = delta * 0.5 * rp * ap / (ri * dr**2)
        add(me, gid(ii + 1, jj), cp)
        add(me, me, -cp)
        inner = ii > 0  # ring 0 of a core grid has a reflecting inner face
        if np.any(inner):
            rm = ri[inner] - dr / 2
            am = alpha.eval(cart(rm, th[jj[inner]]), zero2)
            cm = delta * 0.5 * rm * am / (ri[inner] * dr**2)
            add(me[inner], gid(ii[inner] - 1, jj[inner]), cm)
            add(me[inner], me[inner], -cm)
        # angular flux, (1/r^2) d_th(alpha d_th u), periodic
        atp = alpha.eval(cart(ri, th[jj] + dth / 2), zero2)
        atm = alpha.eval(cart(ri, th[jj] - dth / 2), zero2)
        ct = delta * 0.5 / (ri**2 * dth**2)
        add(me, gid(ii, jj + 1), ct * atp)
        add(me, gid(ii, jj - 1), ct * atm)
        add(me, me, -ct * (atp + atm))
        # drift in polar frame
        pme = grid.points[me]
        bvals = np.stack([c.eval(pme, zero2) for c in coeffs.drift.components], axis=1)
        if np.any(bvals):
            ct_, st_ = np.cos(th[jj]), np.sin(th[jj])
            br = bvals[:, 0] * ct_ + bvals[:, 1] * st_
            bt = -bvals[:, 0] * st_ + bvals[:, 1] * ct_
            rad = ii > 0
            add(me[rad], gid(ii[rad] + 1, jj[rad]), delta * br[rad] / (2 * dr))
            add(me[rad], gid(ii[rad] - 1, jj[rad]), -delta * br[rad] / (2 * dr))
            if np.any(~rad):  # forward difference at the core ring
                add(me[~rad], gid(ii[~rad] + 1, jj[~rad]), delta * br[~rad] / dr)
                add(me[~rad], me[~rad], -delta * br[~rad] / dr)
            add(me, gid(ii, jj + 1), delta * bt / (ri * 2 * dth))
            add(me, gid(ii, jj - 1), -delta * bt / (ri * 2 * dth))

    # -V on the diagonal
    vint = coeffs.intensity.eval(grid.points[grid.interior], (0,) * grid.points.shape[1])
    add(grid.interior, grid.interior, -vint)

    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N)).tocsr()
    Mi = M[grid.interior]
    A_loc = Mi.tocsc()[:, grid.interior].tocsc()
    B_bc = Mi.tocsc()[:, grid.boundary].tocsr()
    return A_loc, B_bc


def mu_quadrature_weights(coeffs: CoefficientSet, grid: Grid):
    """Trapezoid weights times the redistribution density, normalized to sum 1."""
    w = grid.cell_weights * coeffs.redistribution.eval(grid.points, (0,) * grid.points.shape[1])
    total = w.sum()
    if not total > 0:
        raise ValidationError("mu quadrature weights are all zero")
    return w / total


@dataclass(frozen=True)
class DiscreteOperator:
    """delta*G_h - diag(V) plus the rank-one redistribution coupling v w^T."""

    grid: Grid
    delta: float
    A_loc: sp.csc_matrix   # interior x interior
    B_bc: sp.csr_matrix    # interior x boundary
    v: np.ndarray          # intensity at interior nodes
    w_all: np.ndarray      # mu weights over all nodes, sum 1

    @property
    def w_interior(self):
        return self.w_all[self.grid.interior]

    @property
    def w_boundary(self):
        return self.w_all[self.grid.boundary]


def assemble_operator(delta, coeffs: CoefficientSet, grid: Grid,
                      allow_coarse=False) -> DiscreteOperator:
    A_loc, B_bc = assemble_local(delta, coeffs, grid, allow_coarse=allow_coarse)
    v = coeffs.intensity.eval(grid.points[grid.interior], (0,) * grid.points.shape[1])
    w = mu_quadrature_weights(coeffs, grid)
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValidationError("discrete mu weights do not sum to 1")
    return DiscreteOperator(grid, float(delta), A_loc, B_bc, v, w)


@dataclass(frozen=True)
class SolverOptions:
    method: str = "direct"   # direct | ilu
    rtol: float = 1e-12
    max_krylov: int = 2000


class _LocalSolver:
    """Solves A x = rhs with the configured method."""

    def __init__(self, A, options: SolverOptions):
        self.options = options
        if options.method == "direct":
            self.lu = spla.splu(A.tocsc())
        elif options.method == "ilu":
            self.A = A.tocsc()
            self.ilu = spla.spilu(self.A, drop_tol=1e-5, fill_factor=20)
            self.M = spla.LinearOperator(A.shape, self.ilu.solve)
        else:
            raise ValueError(f"unknown solver method {options.method!r}")

    def solve(self, rhs):
        if self.options.method == "direct":
            return self.lu.solve(rhs)
        x, info = spla.bicgstab(self.A, rhs, M=self.M, rtol=self.options.rtol,
                                atol=0.0, maxiter=self.options.max_krylov)
        if info != 0:
            raise SolverError(f"bicgstab failed to reach rtol={self.options.rtol:g} (info={info})")
        return x


class RankOneSolver:
    """Solves (A + v w^T) x = rhs, reusing one factorization of A.

    Two solves with A per right-hand side; when the rank-one denominator
    1 + w^T A^{-1} v degenerates, falls back to a bordered sparse solve of
    [[A, v], [w^T, -1]].
    """

    DENOM_TOL = 1e-12

    def __init__(self, A, v, w, options: SolverOptions | None = None):
        self.options = options or SolverOptions()
        self.local = _LocalSolver(A, self.options)
        self.v = np.asarray(v, dtype=float)
        self.w = np.asarray(w, dtype=float)
        self.z = self.local.solve(self.v)
        self.denom = 1.0 + self.w @ self.z
        self.bordered = None
        if abs(self.denom) < self.DENOM_TOL:
            n = A.shape[0]
            B = sp.bmat([[A, sp.csc_matrix(self.v.reshape(-1, 1))],
                         [sp.csc_matrix(self.w.reshape(1, -1)), sp.csc_matrix([[-1.0]])]],
                        format="csc")
            self.bordered = spla.splu(B)

    def solve(self, rhs):
        if self.bordered is not None:
            sol = self.bordered.solve(np.concatenate([rhs, [0.0]]))
            return sol[:-1]
        y = self.local.solve(rhs)
        return y - self.z * (self.w @ y) / self.denom


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray  # (N,)

    def interior_values(self):
        return self.values[self.grid.interior]

    def at(self, x):
        """Value at an arbitrary point by multilinear interpolation."""
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        g = self.grid
        if g.kind == "interval":
            return float(np.interp(pt[0], g.axes[0], self.values))
        if g.kind == "rectangle":
            xax, yax = g.axes
            vals = self.values.reshape(g.shape)
            i = np.clip(np.searchsorted(xax, pt[0]) - 1, 0, len(xax) - 2)
            j = np.clip(np.searchsorted(yax, pt[1]) - 1, 0, len(yax) - 2)
            tx = (pt[0] - xax[i]) / (xax[i + 1] - xax[i])
            ty = (pt[1] - yax[j]) / (yax[j + 1] - yax[j])
            return float((1 - tx) * (1 - ty) * vals[i, j] + tx * (1 - ty) * vals[i + 1, j]
                         + (1 - tx) * ty * vals[i, j + 1] + tx * ty * vals[i + 1, j + 1])
        rax, thax = g.axes
        cx, cy = g.domain.params[0], g.domain.params[1]
        rho = math.hypot(pt[0] - cx, pt[1] - cy)
        theta = math.atan2(pt[1] - cy, pt[0] - cx) % (2 * math.pi)
        vals = self.values.reshape(g.shape)
        nr, nth = g.shape
        i = int(np.clip(np.searchsorted(rax, rho) - 1, 0, nr - 2))
        dth = thax[1] - thax[0]
        j = int(theta // dth) % nth
        tr = (rho - rax[i]) / (rax[i + 1] - rax[i])
        tt = (theta - thax[j]) / dth
        jp = (j + 1) % nth
        return float((1 - tr) * (1 - tt) * vals[i, j] + tr * (1 - tt) * vals[i + 1, j]
                     + (1 - tr) * tt * vals[i, jp] + tr * tt * vals[i + 1, jp])

    def to_csv(self, path):
        d = self.grid.points.shape[1]
        header = ",".join([f"x{i}" for i in range(d)] + ["value"])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for p, v in zip(self.grid.points, self.values):
                fh.write(",".join(repr(float(c)) for c in p) + f",{v!r}\n")


def solve_no_jump_prob(delta, coeffs: CoefficientSet, grid: Grid,
                       options: SolverOptions | None = None,
                       allow_coarse=False) -> GridFunction:
    """Probability of reaching the boundary before the exponential clock rings.

    Solves delta*G u = V u in the domain with u = 1 on the boundary; the
    discrete maximum principle keeps interior values in (0, 1].
    """
    A_loc, B_bc = assemble_local(delta, coeffs, grid, allow_coarse=allow_coarse)
    local = _LocalSolver(A_loc, options or SolverOptions())
    rhs = -(B_bc @ np.ones(len(grid.boundary)))
    ui = local.solve(rhs)
    if not np.all(np.isfinite(ui)):
        raise SolverError("singular or ill-conditioned local solve")
    values = np.empty(grid.n_nodes)
    values[grid.interior] = ui
    values[grid.boundary] = 1.0
    return GridFunction(grid, values)


def solve_exit_functional(delta, coeffs: CoefficientSet, grid: Grid, f=None,
                          options: SolverOptions | None = None,
                          allow_coarse=False) -> GridFunction:
    """Expected boundary data at the exit point, via the nonlocal Dirichlet solve.

    The redistribution integral couples every interior row to all nodes;
    boundary-node contributions of that integral move to the right-hand side.
    """
    op = assemble_operator(delta, coeffs, grid, allow_coarse=allow_coarse)
    f = coeffs.boundary_data if f is None else f
    fb = f.eval(grid.points[grid.boundary], (0,) * grid.points.shape[1])
    rhs = -(op.B_bc @ fb) - op.v * (op.w_boundary @ fb)
    solver = RankOneSolver(op.A_loc, op.v, op.w_interior, options)
    phi_i = solver.solve(rhs)
    values = np.empty(grid.n_nodes)
    values[grid.interior] = phi_i
    values[grid.boundary] = fb
    return GridFunction(grid, values)


@dataclass(frozen=True)
class EigenResult:
    lambda0: float
    eigenfunction: GridFunction
    iterations: int
    residual: float


def principal_eigenvalue(delta, coeffs: CoefficientSet, grid: Grid,
                         options: SolverOptions | None = None,
                         allow_coarse=False, rtol=1e-12, residual_tol=1e-10,
                         max_iterations=10_000) -> EigenResult:
    """Smallest decay rate of the killed process, by inverse power iteration.

    Homogeneous Dirichlet data: the redistribution row is restricted to
    interior nodes without renormalization (boundary values contribute
    nothing to the integral of a function vanishing there).  Each iteration
    reuses the rank-one solve.
    """
    op = assemble_operator(delta, coeffs, grid, allow_coarse=allow_coarse)
    solver = RankOneSolver(op.A_loc, op.v, op.w_interior, options)
    apply_negM = lambda psi: -(op.A_loc @ psi + op.v * (op.w_interior @ psi))

    psi = np.ones(len(grid.interior))
    psi /= np.linalg.norm(psi)
    # Rayleigh quotients of a tiny eigenvalue carry cancellation noise of
    # order eps * ||M||; the relative-change test bottoms out there.
    noise_floor = 32 * np.finfo(float).eps * float(np.max(np.abs(op.A_loc.diagonal())))
    lam_prev = None
    lam = None
    res = math.inf
    for it in range(1, max_iterations + 1):
        y = solver.solve(-psi)          # (-M) y = psi
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0.0:
            raise SolverError("inverse iteration produced a degenerate vector")
        psi = y / norm
        if psi.sum() < 0:
            psi = -psi
        negM_psi = apply_negM(psi)
        lam = float(psi @ negM_psi)
        res = float(np.linalg.norm(negM_psi - lam * psi))
        if (lam_prev is not None and res <= residual_tol
                and abs(lam - lam_prev) <= rtol * abs(lam) + noise_floor):
            break
        lam_prev = lam
    else:
        raise SolverError(f"inverse power iteration did not converge in {max_iterations} steps "
                          f"(residual {res:.3e})")
    if lam <= 0:
        raise SolverError(f"nonpositive Rayleigh quotient {lam:.3e}: discretization failure")
    if np.min(psi) < -1e-8 * np.max(psi):
        raise SolverError("principal eigenfunction changed sign; discretization failure")
    values = np.zeros(grid.n_nodes)
    values[grid.interior] = psi
    return EigenResult(lambda0=lam, eigenfunction=GridFunction(grid, values),
                       iterations=it, residual=res)


@dataclass(frozen=True)
class BoundaryFlux:
    nodes: np.ndarray
    normals: np.ndarray
    values: np.ndarray  # n . a grad(u) at each boundary node


def boundary_flux(u: GridFunction, coeffs: CoefficientSet) -> BoundaryFlux:
    """n . a grad(u) at the boundary nodes.

    The normal derivative uses the one-sided second-order 3-point stencil
    along the inward grid axis; tangential derivatives come from the boundary
    values themselves (they vanish for constant Dirichlet data).
    """
    g = u.grid
    vals = u.values
    if g.kind == "interval":
        x = g.axes[0]
        h = x[1] - x[0]
        a = coeffs.diffusion.entry(0, 0)
        dn_left = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
        dn_right = (-3 * vals[-1] + 4 * vals[-2] - vals[-3]) / (2 * h)
        flux = np.array([a.eval(x[:1].reshape(-1, 1), (0,))[0] * dn_left,
                         a.eval(x[-1:].reshape(-1, 1), (0,))[0] * dn_right])
        return BoundaryFlux(g.points[g.boundary], g.boundary_normals, flux)

    if g.kind == "polar":
        r, th = g.axes
        nr, nth = g.shape
        dr = r[1] - r[0]
        V = vals.reshape(nr, nth)
        alpha = coeffs.diffusion.entry(0, 0)
        out = []
        nodes = g.points[g.boundary]
        avals = alpha.eval(nodes, (0, 0))
        k = 0
        if not g.has_core_ring:  # inner ring first in the boundary order
            dn = (-3 * V[0] + 4 * V[1] - V[2]) / (2 * dr)
            out.append(avals[k:k + nth] * dn)
            k += nth
        dn = (-3 * V[-1] + 4 * V[-2] - V[-3]) / (2 * dr)
        out.append(avals[k:k + nth] * dn)
        return BoundaryFlux(nodes, g.boundary_normals, np.concatenate(out))

    # rectangle: normal derivative one-sided, tangential from boundary values
    x, y = g.axes
    nx, ny = g.shape
    hx, hy = g.spacing
    V = vals.reshape(nx, ny)
    nodes = g.points[g.boundary]
    normals = g.boundary_normals
    amat = coeffs.diffusion(nodes)
    flux = np.empty(len(nodes))

    def tang(line, h):
        d = np.gradient(line, h)
        return d

    for idx, (node, nvec) in enumerate(zip(nodes, normals)):
        i = int(round((node[0] - x[0]) / hx))
        j = int(round((node[1] - y[0]) / hy))
        if abs(nvec[0]) > 0.5:  # left or right edge
            s = 1 if nvec[0] > 0 else -1
            dn = (-3 * V[i, j] + 4 * V[i + s, j] - V[i + 2 * s, j]) / (2 * hx)
            grad = np.array([s * dn, 0.0])
            if 0 < j < ny - 1:
                grad[1] = (V[i, j + 1] - V[i, j - 1]) / (2 * hy)
        else:
            s = 1 if nvec[1] > 0 else -1
            dn = (-3 * V[i, j] + 4 * V[i, j + s] - V[i, j + 2 * s]) / (2 * hy)
            grad = np.array([0.0, s * dn])
            if 0 < i < nx - 1:
                grad[0] = (V[i + 1, j] - V[i - 1, j]) / (2 * hx)
        flux[idx] = nvec @ amat[idx] @ grad
    return BoundaryFlux(nodes, normals, flux)
