from __future__ import annotations

import math

import numpy as np
import pytest

from netform import elliptic
from netform import grid as gr
from netform.errors import SolverFailure
from netform.grid import Grid, ScalarField, VectorField

from conftest import random_dirichlet_scalar, smooth_random_profile


def _sample_m_2d(grid, rng, amplitude=1.0):
    a, b = rng.normal(size=2) * amplitude
    return VectorField.sample(
        grid, [lambda x, y: a * np.sin(np.pi * x + b) * y, lambda x, y: b * np.cos(2 * x * y) + 0.3]
    )


def test_zero_conductance_gives_negative_laplacian(grid2d, rng):
    p = random_dirichlet_scalar(grid2d, rng)
    out = elliptic.apply_operator(VectorField.zeros(grid2d), p)
    np.testing.assert_allclose(out.values, elliptic.neg_laplacian(p.values, grid2d), atol=1e-9)


def test_unit_conductance_1d_quadratic():
    errs = []
    for n in (63, 127):
        g = Grid.uniform(1, n)
        m = VectorField(g, np.ones((1,) + g.shape))
        p = ScalarField.sample(g, lambda x: x * (1 - x) / 2)
        out = elliptic.apply_operator(m, p).values[1:-1]
        errs.append(np.max(np.abs(out - 2.0)))
    # exact for quadratics with constant coefficient: only roundoff remains
    assert max(errs) < 1e-8


@pytest.mark.parametrize("dim", [1, 2])
def test_operator_symmetric(dim, rng):
    g = Grid.uniform(dim, 21 if dim == 2 else 101)
    m = VectorField(g, rng.normal(size=(dim,) + g.shape))
    for _ in range(10):
        p = random_dirichlet_scalar(g, rng)
        v = random_dirichlet_scalar(g, rng)
        Ap = elliptic.apply_operator(m, p)
        Av = elliptic.apply_operator(m, v)
        a, b = gr.inner(Ap, v), gr.inner(p, Av)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_operator_rejects_grid_mismatch():
    with pytest.raises(ValueError):
        elliptic.apply_operator(VectorField.zeros(Grid.uniform(1, 7)), ScalarField.zeros(Grid.uniform(1, 9)))


def test_ellipticity_of_coefficient(grid2d, rng):
    m = VectorField(grid2d, 3.0 * rng.normal(size=(2,) + grid2d.shape))
    A = elliptic.coefficient_tensor(m)
    m2 = np.sum(m.values**2, axis=0)
    for _ in range(20):
        xi = rng.normal(size=2)
        quad = np.einsum("i,ij...,j->...", xi, A, xi)
        xi2 = float(xi @ xi)
        assert np.all(quad >= xi2 * (1 - 1e-12))
        assert np.all(quad <= (1 + m2) * xi2 * (1 + 1e-12))


def test_energy_lower_bound(grid2d, rng):
    m = VectorField(grid2d, rng.normal(size=(2,) + grid2d.shape))
    for _ in range(10):
        p = random_dirichlet_scalar(grid2d, rng)
        quad = gr.inner(elliptic.apply_operator(m, p), p)
        assert quad >= elliptic.dirichlet_energy(p) - 1e-10 * quad


def test_weak_form_balance(grid2d, rng):
    m = _sample_m_2d(grid2d, rng, 2.0)
    S = ScalarField.sample(grid2d, lambda x, y: 1 + np.sin(3 * x) * y)
    p, _ = elliptic.solve_pressure(m, S, 1e-12)
    assert elliptic.dirichlet_energy(p) <= gr.inner(S, p) * (1 + 1e-8)


def test_poisson_1d():
    g = Grid.uniform(1, 1023)
    p, rep = elliptic.solve_pressure(VectorField.zeros(g), ScalarField(g, np.ones(g.shape)))
    (x,) = g.coords()
    assert np.max(np.abs(p.values - x * (1 - x) / 2)) <= 1e-6
    assert p.values[0] == p.values[-1] == 0.0
    assert rep.final_residual <= rep.target


def test_zero_source_gives_zero(grid2d, rng):
    m = _sample_m_2d(grid2d, rng)
    p, rep = elliptic.solve_pressure(m, ScalarField.zeros(grid2d))
    assert np.all(p.values == 0.0) and rep.iterations == 0


def test_residual_meets_tolerance_2d(grid2d, rng):
    m = _sample_m_2d(grid2d, rng, 3.0)
    S = ScalarField.sample(grid2d, lambda x, y: np.exp(x - y))
    tol = 1e-9
    p, rep = elliptic.solve_pressure(m, S, tol)
    r = elliptic.apply_operator(m, p).values - S.values
    r[grid2d.boundary_mask()] = 0.0
    S_in = S.values.copy()
    S_in[grid2d.boundary_mask()] = 0.0
    assert math.sqrt(np.sum(r**2) * grid2d.cell_volume) <= tol * math.sqrt(np.sum(S_in**2) * grid2d.cell_volume) * 1.0001
    assert rep.preconditioner == "jacobi"


def test_preconditioners_agree_1d(rng):
    g = Grid.uniform(1, 127)
    m = VectorField.sample(g, [smooth_random_profile(rng)])
    S = ScalarField.sample(g, smooth_random_profile(rng))
    p1, r1 = elliptic.solve_pressure(m, S, 1e-12, preconditioner="tridiagonal")
    p2, r2 = elliptic.solve_pressure(m, S, 1e-12, preconditioner="jacobi")
    assert r1.iterations <= 2 < r2.iterations
    np.testing.assert_allclose(p1.values, p2.values, atol=1e-9)


def test_solver_failure_reports_residual(grid2d, rng):
    m = _sample_m_2d(grid2d, rng, 3.0)
    S = ScalarField(grid2d, np.ones(grid2d.shape))
    with pytest.raises(SolverFailure) as info:
        elliptic.solve_pressure(m, S, 1e-12, max_iter=2)
    assert info.value.residual > 0 and info.value.iterations == 2


def test_oracle_constant_conductance():
    g = Grid.uniform(1, 255)
    (x,) = g.coords()
    px = elliptic.pressure_1d_oracle(ScalarField.zeros(g), ScalarField(g, np.ones(g.shape)))
    np.testing.assert_allclose(px.values, 0.5 - x, atol=1e-12)


def test_oracle_linear_conductance_matches_closed_form_and_solver():
    g = Grid.uniform(1, 1023)
    (x,) = g.coords()
    m = ScalarField.sample(g, lambda x: x)
    S = ScalarField(g, np.ones(g.shape))
    px = elliptic.pressure_1d_oracle(m, S)
    C = (0.5 * math.log(2.0)) / (math.pi / 4)
    closed = (C - x) / (1 + x**2)
    assert np.max(np.abs(px.values - closed)) <= 10 * g.h[0] ** 2
    _, rep = elliptic.solve_pressure(VectorField(g, m.values[None]), S)
    assert np.max(np.abs(rep.grad_p.values[0] - px.values)) <= 10 * g.h[0]


def test_1d_gradient_bound(rng):
    g = Grid.uniform(1, 255)
    h = g.h[0]
    for _ in range(10):
        m = VectorField.sample(g, [smooth_random_profile(rng)])
        S = ScalarField.sample(g, smooth_random_profile(rng))
        _, rep = elliptic.solve_pressure(m, S)
        assert gr.norm_linf(rep.grad_p) <= gr.norm_lq(S, 1) + 5 * h
        px = elliptic.pressure_1d_oracle(ScalarField(g, m.values[0]), S)
        assert gr.norm_linf(px) <= gr.norm_lq(S, 1) + 5 * h


def test_oracle_rejects_2d(grid2d):
    with pytest.raises(ValueError):
        elliptic.pressure_1d_oracle(ScalarField.zeros(grid2d), ScalarField.zeros(grid2d))


def test_audit_baseline_finite_positive(grid2d):
    rec = elliptic.audit_w1q(VectorField.zeros(grid2d), ScalarField(grid2d, np.ones(grid2d.shape)), 3.0, 4.0)
    assert math.isfinite(rec.implied_c) and rec.implied_c > 0
    assert rec.w_norm == 0.0
    assert len(rec.csv_row()) == len(elliptic.W1qAuditRecord.CSV_HEADER)


def test_audit_zero_source(grid2d, rng):
    rec = elliptic.audit_w1q(_sample_m_2d(grid2d, rng), ScalarField.zeros(grid2d), 3.0, 4.0)
    assert rec.lhs == 0.0 and rec.implied_c == 0.0


def test_audit_ensemble_finite(rng):
    g = Grid.uniform(2, 15)
    S = ScalarField(g, np.ones(g.shape))
    base = elliptic.audit_w1q(VectorField.zeros(g), S, 3.0, 4.0).implied_c
    ratios = []
    for _ in range(50):
        w = _sample_m_2d(g, rng, rng.uniform(0, 2))
        rec = elliptic.audit_w1q(w, S, 3.0, 4.0)
        assert all(math.isfinite(v) and v >= 0 for v in rec.csv_row())
        ratios.append(rec.implied_c / base)
    assert math.isfinite(max(ratios))


def test_audit_weight_scaling_does_not_decrease_factor(grid2d, rng):
    w = _sample_m_2d(grid2d, rng)
    S = ScalarField(grid2d, np.ones(grid2d.shape))
    r1 = elliptic.audit_w1q(w, S, 3.0, 4.0)
    r2 = elliptic.audit_w1q(VectorField(grid2d, 2 * w.values), S, 3.0, 4.0)
    assert r2.w_norm >= r1.w_norm


@pytest.mark.parametrize("q, ell", [(1.5, 4.0), (3.0, 2.0), (3.0, 1.5)])
def test_audit_rejects_bad_exponents(grid2d, q, ell):
    with pytest.raises(ValueError):
        elliptic.audit_w1q(VectorField.zeros(grid2d), ScalarField.zeros(grid2d), q, ell)


def test_audit_rejects_1d():
    g = Grid.uniform(1, 15)
    with pytest.raises(ValueError):
        elliptic.audit_w1q(VectorField.zeros(g), ScalarField.zeros(g), 3.0, 4.0)
