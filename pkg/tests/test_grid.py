from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netform import grid as gr
from netform.grid import Grid, ScalarField, VectorField

from conftest import random_dirichlet_scalar, random_dirichlet_vector


def test_grid_spacing_and_shape():
    g = Grid(2, (7, 15), (1.0, 2.0))
    assert g.h == (1.0 / 8, 2.0 / 16)
    assert g.shape == (9, 17)
    assert g.cell_volume == pytest.approx(1.0 / 8 * 2.0 / 16)
    x, y = g.coords()
    assert x[-1, 0] == 1.0 and y[0, -1] == 2.0


@pytest.mark.parametrize("kwargs", [dict(dim=3, n=5, extent=1.0), dict(dim=1, n=2, extent=1.0), dict(dim=1, n=5, extent=0.0)])
def test_grid_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        Grid(kwargs["dim"], kwargs["n"], kwargs["extent"])


def test_grid_dict_roundtrip():
    g = Grid(2, (5, 9), (1.0, 0.5))
    assert Grid.from_dict(g.to_dict()) == g


def test_boundary_mask_counts():
    g = Grid.uniform(2, 5)
    assert g.boundary_mask().sum() == 7 * 7 - 5 * 5
    assert not g.boundary_mask().flags.writeable


def test_fields_are_immutable_and_checked(grid1d):
    u = ScalarField.zeros(grid1d)
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(grid1d, np.zeros(3))
    with pytest.raises(ValueError):
        VectorField(grid1d, np.zeros((2,) + grid1d.shape))


def test_dirichlet_constructor_zeroes_boundary(grid2d, rng):
    F = VectorField.dirichlet(grid2d, rng.normal(size=(2,) + grid2d.shape))
    assert F.is_dirichlet()
    assert np.all(F.values[:, grid2d.boundary_mask()] == 0.0)


def test_gradient_quadratic_1d():
    g = Grid.uniform(1, 255)
    u = ScalarField.sample(g, lambda x: x * (1 - x) / 2)
    (x,) = g.coords()
    err = np.max(np.abs(gr.gradient(u).values[0] - (0.5 - x)))
    assert err <= 10 * g.h[0] ** 2


def test_gradient_of_constant_is_zero(grid2d):
    u = ScalarField(grid2d, np.full(grid2d.shape, 3.7))
    assert np.max(np.abs(gr.gradient(u).values)) < 1e-12


def test_gradient_bilinear_2d(grid2d):
    u = ScalarField.sample(grid2d, lambda x, y: x * y)
    x, y = grid2d.coords()
    gu = gr.gradient(u).values
    assert np.allclose(gu[0], y, atol=1e-12)
    assert np.allclose(gu[1], x, atol=1e-12)


def test_gradient_convergence_order():
    errs, hs = [], []
    for n in (31, 63, 127, 255):
        g = Grid.uniform(2, n)
        u = ScalarField.sample(g, lambda x, y: np.sin(2 * x) * np.exp(y))
        x, y = g.coords()
        exact = np.stack([2 * np.cos(2 * x) * np.exp(y), np.sin(2 * x) * np.exp(y)])
        errs.append(np.max(np.abs(gr.gradient(u).values - exact)))
        hs.append(g.h[0])
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_divergence_of_constant_and_linear():
    g = Grid.uniform(1, 31)
    assert np.max(np.abs(gr.divergence(VectorField(g, np.full((1,) + g.shape, 2.0))).values)) < 1e-12
    F = VectorField.sample(g, [lambda x: x])
    assert np.max(np.abs(gr.divergence(F).values - 1.0)) <= 1e-12


def test_discrete_divergence_theorem(grid2d, rng):
    # compactly supported: zero within three nodes of the boundary
    vals = rng.normal(size=(2,) + grid2d.shape)
    vals[:, :3, :] = vals[:, -3:, :] = 0.0
    vals[:, :, :3] = vals[:, :, -3:] = 0.0
    div = gr.divergence(VectorField(grid2d, vals)).values
    assert abs(np.sum(div) * grid2d.cell_volume) <= 1e-10


@pytest.mark.parametrize("dim", [1, 2])
def test_summation_by_parts(dim, rng):
    g = Grid.uniform(dim, 17 if dim == 2 else 65)
    for _ in range(20):
        F = random_dirichlet_vector(g, rng)
        u = random_dirichlet_scalar(g, rng)
        lhs = gr.inner(gr.divergence(F), u) + gr.inner(F, gr.gradient(u))
        scale = math.sqrt(gr.inner(F, F) * gr.inner(u, u))
        assert abs(lhs) <= 1e-10 * scale


def test_norm_examples():
    g = Grid.uniform(1, 255)
    one = ScalarField(g, np.ones(g.shape))
    assert gr.norm_lq(one, 2) == pytest.approx(1.0, abs=2 * g.h[0])
    zero = ScalarField.zeros(g)
    assert gr.norm_lq(zero, 2) == gr.norm_linf(zero) == gr.norm_w1l(zero, 3) == 0.0
    lin = ScalarField.sample(g, lambda x: x)
    assert abs(gr.norm_lq(lin, 2) - 1 / math.sqrt(3)) <= 2 * g.h[0]


def test_norm_rejects_q_below_one(grid1d):
    with pytest.raises(ValueError):
        gr.norm_lq(ScalarField.zeros(grid1d), 0.5)


def test_norm_large_exponent_stays_finite(grid1d):
    u = ScalarField(grid1d, np.full(grid1d.shape, 1e3))
    assert math.isfinite(gr.norm_lq(u, 400.0))


def test_vector_norm_uses_euclidean_length(grid1d):
    g = Grid.uniform(2, 9)
    F = VectorField(g, np.stack([np.full(g.shape, 3.0), np.full(g.shape, 4.0)]))
    assert gr.norm_linf(F) == pytest.approx(5.0)


def test_w1l_definition(grid2d):
    u = ScalarField.sample(grid2d, lambda x, y: np.sin(x + 2 * y))
    expected = gr.norm_lq(u, 3) + gr.norm_lq(gr.gradient(u), 3)
    assert gr.norm_w1l(u, 3) == pytest.approx(expected)


@settings(max_examples=60, deadline=None)
@given(
    q=st.floats(min_value=1.0, max_value=50.0),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_norm_monotone_in_field(q, seed):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(1, 15)
    u = rng.normal(size=g.shape)
    v = np.abs(u) + rng.uniform(0, 1, size=g.shape)
    assert gr.norm_lq(ScalarField(g, u), q) <= gr.norm_lq(ScalarField(g, v), q) * (1 + 1e-12)


def test_field_rows_layout():
    g = Grid.uniform(2, 3)
    F = VectorField.sample(g, [lambda x, y: x, lambda x, y: y])
    header, table = gr.field_rows(F)
    assert header == ["x", "y", "value0", "value1"]
    assert table.shape == (25, 4)
    # row-major: y varies fastest
    assert table[1, 0] == 0.0 and table[1, 1] == g.h[1]
    np.testing.assert_array_equal(table[:, 2], table[:, 0])
