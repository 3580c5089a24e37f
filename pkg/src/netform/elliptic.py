"""Pressure solve for ``-div[(I + m m^T) grad p] = S`` with ``p = 0`` on the boundary.

The operator is assembled matrix-free in flux form.  The identity part is the
standard 3-/5-point Laplacian on cell edges.  The rank-one part ``m m^T`` lives
on cells: ``m`` is averaged arithmetically over the cell corners, the cell
gradient of ``p`` is taken from the corner values, and the resulting flux
``m (m . grad p)`` is returned to the nodes by the exact adjoint of the cell
gradient.  In 2D this gives a symmetric 9-point stencil; in 1D it reduces to
the 3-point stencil with edge coefficient ``1 + mbar^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import solve_banded

from . import grid as gr
from .errors import SolverFailure
from .grid import Grid, ScalarField, VectorField

logger = logging.getLogger(__name__)

Array = np.ndarray


@dataclass(frozen=True)
class EllipticSolveReport:
    iterations: int
    final_residual: float
    grad_p: VectorField
    target: float = 0.0
    preconditioner: str = "jacobi"


@dataclass(frozen=True)
class W1qAuditRecord:
    q: float
    ell: float
    lhs: float
    w_norm: float
    rhs_core: float
    s1: float
    implied_c: float

    CSV_HEADER = ("q", "ell", "s1", "lhs", "w_norm", "rhs_core", "implied_c")

    def csv_row(self) -> tuple[float, ...]:
        return (self.q, self.ell, self.s1, self.lhs, self.w_norm, self.rhs_core, self.implied_c)


# ---------------------------------------------------------------------------
# stencils on raw arrays (full node arrays, boundary ring included)


def _cell_average(a: Array, dim: int) -> Array:
    if dim == 1:
        return 0.5 * (a[..., :-1] + a[..., 1:])
    return 0.25 * (a[..., :-1, :-1] + a[..., 1:, :-1] + a[..., :-1, 1:] + a[..., 1:, 1:])


def _cell_gradient(p: Array, grid: Grid) -> Array:
    if grid.dim == 1:
        return ((p[1:] - p[:-1]) / grid.h[0])[None]
    hx, hy = grid.h
    px = (p[1:, :-1] - p[:-1, :-1] + p[1:, 1:] - p[:-1, 1:]) / (2.0 * hx)
    py = (p[:-1, 1:] - p[:-1, :-1] + p[1:, 1:] - p[1:, :-1]) / (2.0 * hy)
    return np.stack([px, py])


def _cell_gradient_adjoint(F: Array, grid: Grid) -> Array:
    """Nodal array ``r`` with ``sum(r * p) == sum(F . cell_gradient(p))``."""
    out = np.zeros(grid.shape)
    if grid.dim == 1:
        f = F[0] / grid.h[0]
        out[:-1] -= f
        out[1:] += f
        return out
    hx, hy = grid.h
    fx = F[0] / (2.0 * hx)
    fy = F[1] / (2.0 * hy)
    out[:-1, :-1] += -fx - fy
    out[1:, :-1] += fx - fy
    out[:-1, 1:] += -fx + fy
    out[1:, 1:] += fx + fy
    return out


def neg_laplacian(u: Array, grid: Grid) -> Array:
    """``-Delta_h u`` at interior nodes (3- or 5-point), zero on the boundary ring."""
    out = np.zeros(grid.shape)
    if grid.dim == 1:
        h2 = grid.h[0] ** 2
        out[1:-1] = (2.0 * u[1:-1] - u[:-2] - u[2:]) / h2
        return out
    hx2, hy2 = grid.h[0] ** 2, grid.h[1] ** 2
    c = u[1:-1, 1:-1]
    out[1:-1, 1:-1] = (2.0 * c - u[:-2, 1:-1] - u[2:, 1:-1]) / hx2 + (2.0 * c - u[1:-1, :-2] - u[1:-1, 2:]) / hy2
    return out


class PressureOperator:
    """Matrix-free ``A p = -div[(I + m m^T) grad p]`` for a frozen coefficient ``m``."""

    def __init__(self, m: Array, grid: Grid):
        self.grid = grid
        self.mc = _cell_average(np.asarray(m, dtype=float), grid.dim)
        self._interior_mask = ~grid.boundary_mask()
        self._diag: Array | None = None
        self._banded: Array | None = None

    def __call__(self, p: Array) -> Array:
        g = self.grid
        out = neg_laplacian(p, g)
        w = np.sum(self.mc * _cell_gradient(p, g), axis=0)
        out += _cell_gradient_adjoint(self.mc * w, g)
        out[~self._interior_mask] = 0.0
        return out

    def diagonal(self) -> Array:
        if self._diag is None:
            g = self.grid
            d = np.zeros(g.shape)
            if g.dim == 1:
                a2 = self.mc[0] ** 2 / g.h[0] ** 2
                d[:-1] += a2
                d[1:] += a2
                d += 2.0 / g.h[0] ** 2
            else:
                hx, hy = g.h
                m1, m2 = self.mc
                for sx, sy, sl in ((-1, -1, np.s_[:-1, :-1]), (1, -1, np.s_[1:, :-1]),
                                   (-1, 1, np.s_[:-1, 1:]), (1, 1, np.s_[1:, 1:])):
                    d[sl] += (m1 * sx / (2.0 * hx) + m2 * sy / (2.0 * hy)) ** 2
                d += 2.0 / hx**2 + 2.0 / hy**2
            d[~self._interior_mask] = 1.0
            self._diag = d
        return self._diag

    def banded(self) -> Array:
        """Tridiagonal band (``solve_banded`` layout) of the interior system; 1D only."""
        if self.grid.dim != 1:
            raise ValueError("banded form exists only in 1D")
        if self._banded is None:
            h2 = self.grid.h[0] ** 2
            edge = (1.0 + self.mc[0] ** 2) / h2  # n+1 edges
            ab = np.zeros((3, self.grid.n[0]))
            ab[1] = edge[:-1] + edge[1:]
            ab[0, 1:] = -edge[1:-1]
            ab[2, :-1] = -edge[1:-1]
            self._banded = ab
        return self._banded


def tridiagonal_preconditioner(ab: Array) -> Callable[[Array], Array]:
    def apply(r: Array) -> Array:
        z = np.zeros_like(r)
        z[1:-1] = solve_banded((1, 1), ab, r[1:-1], check_finite=False)
        return z

    return apply


def jacobi_preconditioner(diag: Array) -> Callable[[Array], Array]:
    inv = 1.0 / diag

    def apply(r: Array) -> Array:
        return r * inv

    return apply


def pcg(
    apply_A: Callable[[Array], Array],
    rhs: Array,
    precond: Callable[[Array], Array],
    x0: Array,
    target: float,
    max_iter: int,
    weight: float,
) -> tuple[Array, int, float]:
    """Preconditioned conjugate gradients on node arrays.

    Stops when the weighted residual ``sqrt(weight * sum(r^2))`` is at most
    ``target``; raises :class:`SolverFailure` otherwise.  Arrays keep a zero
    boundary ring throughout.
    """
    x = x0.copy()
    r = rhs - apply_A(x)
    res = math.sqrt(weight * float(np.vdot(r, r)))
    it = 0
    while res > target:
        z = precond(r)
        d = z.copy()
        rz = float(np.vdot(r, z))
        while it < max_iter:
            q = apply_A(d)
            dq = float(np.vdot(d, q))
            if not dq > 0.0:
                raise SolverFailure("conjugate gradients broke down (operator not positive)", res, it)
            alpha = rz / dq
            x += alpha * d
            r -= alpha * q
            it += 1
            res = math.sqrt(weight * float(np.vdot(r, r)))
            if res <= target:
                break
            z = precond(r)
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
        if it >= max_iter and res > target:
            raise SolverFailure("conjugate gradients did not converge", res, it)
        # guard against drift of the recursive residual
        r = rhs - apply_A(x)
        res = math.sqrt(weight * float(np.vdot(r, r)))
        if it >= max_iter and res > target:
            raise SolverFailure("conjugate gradients did not converge", res, it)
    return x, it, res


def _choose_preconditioner(name: str, dim: int) -> str:
    if name == "auto":
        return "tridiagonal" if dim == 1 else "jacobi"
    if name not in ("jacobi", "tridiagonal"):
        raise ValueError(f"unknown preconditioner {name!r}")
    if name == "tridiagonal" and dim != 1:
        raise ValueError("tridiagonal preconditioner needs a 1D grid")
    return name


def _check_same_grid(*fields) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("grid mismatch between fields")
    return g


def apply_operator(m: VectorField, p: ScalarField) -> ScalarField:
    """``-div[(I + m m^T) grad p]`` at interior nodes (zero on the boundary ring)."""
    g = _check_same_grid(m, p)
    return ScalarField(g, PressureOperator(m.values, g)(p.values))


def coefficient_tensor(m: VectorField) -> Array:
    """Nodal ``I + m m^T`` as an array of shape ``(dim, dim, *shape)``."""
    dim = m.grid.dim
    eye = np.eye(dim).reshape((dim, dim) + (1,) * dim)
    return eye + m.values[:, None] * m.values[None, :]


def dirichlet_energy(p: ScalarField) -> float:
    """Edge-difference energy ``sum_edges |dp/h|^2 * cell_volume``; the identity part of ``<Ap, p>``."""
    g = p.grid
    total = 0.0
    for k in range(g.dim):
        d = np.diff(p.values, axis=k) / g.h[k]
        total += float(np.sum(d**2))
    return total * g.cell_volume


def solve_pressure(
    m: VectorField,
    S: ScalarField,
    tol: float = 1e-10,
    x0: ScalarField | None = None,
    preconditioner: str = "auto",
    max_iter: int | None = None,
) -> tuple[ScalarField, EllipticSolveReport]:
    """Solve the anisotropic pressure problem by PCG.

    Converged means the discrete L2 residual of ``A p - S`` is at most
    ``tol * ||S||_2`` (interior nodes).  Raises :class:`SolverFailure` with the
    last residual when ``max_iter`` (default ``50 * max(n)``) is exhausted.
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    g = _check_same_grid(m, S)
    op = PressureOperator(m.values, g)
    rhs = np.array(S.values, copy=True)
    rhs[g.boundary_mask()] = 0.0
    w = g.cell_volume
    target = tol * math.sqrt(w * float(np.vdot(rhs, rhs)))
    kind = _choose_preconditioner(preconditioner, g.dim)
    if target == 0.0:
        p = ScalarField.zeros(g)
        return p, EllipticSolveReport(0, 0.0, gr.gradient(p), 0.0, kind)
    pc = tridiagonal_preconditioner(op.banded()) if kind == "tridiagonal" else jacobi_preconditioner(op.diagonal())
    start = np.zeros(g.shape) if x0 is None else np.array(x0.values, copy=True)
    start[g.boundary_mask()] = 0.0
    it_max = max_iter if max_iter is not None else 50 * max(g.n)
    x, it, res = pcg(op, rhs, pc, start, target, it_max, w)
    x[g.boundary_mask()] = 0.0
    p = ScalarField(g, x)
    return p, EllipticSolveReport(it, res, gr.gradient(p), target, kind)


def pressure_1d_oracle(m: ScalarField, S: ScalarField) -> ScalarField:
    """Exact 1D gradient ``p_x = (C - int_0^x S) / (1 + m^2)`` by the trapezoid rule.

    ``C`` is fixed by ``int_0^1 p_x dx = 0``, i.e. ``p(0) = p(1) = 0``.
    """
    g = _check_same_grid(m, S)
    if g.dim != 1:
        raise ValueError("the exact gradient formula is one-dimensional")
    x = g.axis(0)
    cumS = cumulative_trapezoid(S.values, x, initial=0.0)
    k = 1.0 / (1.0 + m.values**2)
    C = trapezoid(cumS * k, x) / trapezoid(k, x)
    return ScalarField(g, (C - cumS) * k)


def audit_w1q(w: VectorField, S: ScalarField, q: float, ell: float, tol: float = 1e-10) -> W1qAuditRecord:
    """Measure both sides of the weighted W^{1,q} estimate and report the implied constant.

    Uses ``N = grid.dim``.  The implied constant is
    ``||grad p||_q / ((1 + ||w||_{W^{1,ell}})^{s1} (||grad p||_1 + ||S||_{Nq/(N+q)}))``,
    evaluated in the log domain.
    """
    from .bounds import s1_exponent

    g = _check_same_grid(w, S)
    N = g.dim
    if not ell > N:
        raise ValueError(f"need ell > N = {N}, got ell = {ell}")
    if N < 2 or not q > N / (N - 1):
        raise ValueError(f"need q > N/(N-1) with N = {N}, got q = {q}")
    s1 = s1_exponent(N, q, ell)
    _, rep = solve_pressure(w, S, tol)
    lhs = gr.norm_lq(rep.grad_p, q)
    w_norm = gr.norm_w1l(w, ell)
    rhs_core = gr.norm_lq(rep.grad_p, 1.0) + gr.norm_lq(S, N * q / (N + q))
    if lhs == 0.0:
        implied = 0.0
    else:
        implied = math.exp(math.log(lhs) - s1 * math.log1p(w_norm) - math.log(rhs_core))
    return W1qAuditRecord(q, ell, lhs, w_norm, rhs_core, s1, implied)
