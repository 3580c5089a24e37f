"""Uniform tensor grids, nodal fields and the discrete calculus built on them.

Nodes are stored with an explicit boundary ring: an axis with ``n`` interior
nodes holds ``n + 2`` values, the first and last being boundary nodes, and
``h = extent / (n + 1)``.  Integrals and norms use the rectangle rule over
all stored nodes (weight ``prod(h)`` per node).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Interval (``dim=1``) or rectangle (``dim=2``) with uniform spacing."""

    dim: int
    n: tuple[int, ...]
    extent: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = tuple(int(k) for k in np.broadcast_to(self.n, (self.dim,)))
        extent = tuple(float(e) for e in np.broadcast_to(self.extent, (self.dim,)))
        if any(k < 3 for k in n):
            raise ValueError(f"need at least 3 interior nodes per axis, got {n}")
        if any(not (e > 0.0 and math.isfinite(e)) for e in extent):
            raise ValueError(f"extent must be positive and finite, got {extent}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", extent)

    @classmethod
    def uniform(cls, dim: int, n: int, extent: float = 1.0) -> "Grid":
        return cls(dim, (n,) * dim, (extent,) * dim)

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple(e / (k + 1) for e, k in zip(self.extent, self.n))

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(k + 2 for k in self.n)

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis(self, k: int) -> np.ndarray:
        return np.linspace(0.0, self.extent[k], self.n[k] + 2)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates as arrays of ``self.shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij"))

    @cached_property
    def _boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        mask.flags.writeable = False
        return mask

    def boundary_mask(self) -> np.ndarray:
        """Read-only boolean mask of the boundary ring."""
        return self._boundary_mask

    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": list(self.n), "extent": list(self.extent)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(int(d["dim"]), tuple(np.atleast_1d(d["n"])), tuple(np.atleast_1d(d.get("extent", 1.0))))


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


def _zero_boundary(grid: Grid, arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr[..., grid.boundary_mask()] = 0.0
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.values) != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {np.shape(self.values)}")
        object.__setattr__(self, "values", _frozen(self.values))

    @classmethod
    def dirichlet(cls, grid: Grid, values: np.ndarray) -> "ScalarField":
        """Field with boundary nodes overwritten by zero."""
        return cls(grid, _zero_boundary(grid, values))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def sample(cls, grid: Grid, fn: Callable[..., np.ndarray], dirichlet: bool = False) -> "ScalarField":
        vals = np.broadcast_to(np.asarray(fn(*grid.coords()), dtype=float), grid.shape)
        return cls.dirichlet(grid, vals) if dirichlet else cls(grid, vals)

    def is_dirichlet(self) -> bool:
        return bool(np.all(self.values[self.grid.boundary_mask()] == 0.0))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (dim, *grid.shape)

    def __post_init__(self) -> None:
        expected = (self.grid.dim,) + self.grid.shape
        if np.shape(self.values) != expected:
            raise ValueError(f"expected shape {expected}, got {np.shape(self.values)}")
        object.__setattr__(self, "values", _frozen(self.values))

    @classmethod
    def dirichlet(cls, grid: Grid, values: np.ndarray) -> "VectorField":
        return cls(grid, _zero_boundary(grid, values))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def sample(
        cls, grid: Grid, fns: Sequence[Callable[..., np.ndarray]], dirichlet: bool = False
    ) -> "VectorField":
        if len(fns) != grid.dim:
            raise ValueError(f"need {grid.dim} component functions, got {len(fns)}")
        xs = grid.coords()
        vals = np.stack([np.broadcast_to(np.asarray(f(*xs), dtype=float), grid.shape) for f in fns])
        return cls.dirichlet(grid, vals) if dirichlet else cls(grid, vals)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))

    def is_dirichlet(self) -> bool:
        return bool(np.all(self.values[:, self.grid.boundary_mask()] == 0.0))


Field = ScalarField | VectorField


def partial(values: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """Derivative along axis ``k``: centred inside, one-sided second order on the boundary."""
    axis = values.ndim - grid.dim + k
    return np.gradient(values, grid.h[k], axis=axis, edge_order=2)


def gradient(u: ScalarField) -> VectorField:
    g = u.grid
    return VectorField(g, np.stack([partial(u.values, g, k) for k in range(g.dim)]))


def jacobian(F: VectorField) -> np.ndarray:
    """Array ``J[i, k] = d F_i / d x_k`` of shape ``(dim, dim, *grid.shape)``."""
    g = F.grid
    return np.stack([np.stack([partial(F.values[i], g, k) for k in range(g.dim)]) for i in range(g.dim)])


def divergence(F: VectorField) -> ScalarField:
    """Sum of component derivatives with the same stencil as :func:`gradient`.

    For ``u`` and ``F`` both vanishing on the boundary ring,
    ``inner(divergence(F), u) == -inner(F, gradient(u))`` up to roundoff.
    """
    g = F.grid
    return ScalarField(g, sum(partial(F.values[k], g, k) for k in range(g.dim)))


def _pointwise_abs(u: Field | np.ndarray, grid: Grid | None = None) -> np.ndarray:
    if isinstance(u, VectorField):
        return u.magnitude()
    if isinstance(u, ScalarField):
        return np.abs(u.values)
    arr = np.asarray(u, dtype=float)
    if grid is not None and arr.ndim > grid.dim:
        # trailing grid axes, leading component axes
        comp_axes = tuple(range(arr.ndim - grid.dim))
        return np.sqrt(np.sum(arr**2, axis=comp_axes))
    return np.abs(arr)


def integrate(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


def inner(a: Field, b: Field) -> float:
    """Rectangle-rule L2 inner product of two scalar or two vector fields."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return integrate(np.sum(a.values * b.values, axis=0) if isinstance(a, VectorField) else a.values * b.values, a.grid)


def norm_lq(u: Field, q: float, grid: Grid | None = None) -> float:
    """Discrete L^q norm ``(sum |u_i|^q h^dim)^(1/q)``; vector fields use the Euclidean norm per node."""
    if not q >= 1.0:
        raise ValueError(f"norm exponent must be >= 1, got {q}")
    grid = grid if grid is not None else u.grid
    a = _pointwise_abs(u, grid)
    amax = float(np.max(a)) if a.size else 0.0
    if amax == 0.0:
        return 0.0
    if math.isinf(q):
        return amax
    # scale by the max to keep large exponents finite
    return amax * float(np.sum((a / amax) ** q) * grid.cell_volume) ** (1.0 / q)


def norm_linf(u: Field) -> float:
    a = _pointwise_abs(u, u.grid)
    return float(np.max(a)) if a.size else 0.0


def norm_w1l(u: Field, ell: float) -> float:
    """``norm_lq(u, ell) + norm_lq(grad u, ell)``; the gradient of a vector field uses the Frobenius norm."""
    if isinstance(u, ScalarField):
        grad = gradient(u).values
    else:
        grad = jacobian(u)
    return norm_lq(u, ell) + norm_lq(grad, ell, grid=u.grid)


def field_rows(field: Field) -> tuple[list[str], np.ndarray]:
    """Header and row-major table ``x[,y],value...`` used for CSV dumps."""
    g = field.grid
    coords = [c.ravel() for c in g.coords()]
    names = ["x", "y"][: g.dim]
    if isinstance(field, ScalarField):
        cols = [field.values.ravel()]
        names = names + ["value"]
    else:
        cols = [field.values[k].ravel() for k in range(g.dim)]
        names = names + [f"value{k}" for k in range(g.dim)]
    return names, np.column_stack(coords + cols)
