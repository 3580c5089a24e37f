from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from netform import bounds, calibration
from netform.calibration import HeatCase


@pytest.fixture(scope="module")
def exps():
    return bounds.exponents(2, 3.0, 4.0, 1.0)


def test_zero_data_stays_zero(exps):
    m = calibration.run_heat(HeatCase(g0=0.0, f0=0.0, F0=0.0, u0=0.0, T=0.05, n=15), exps.q)
    assert m.sup_u == 0.0 and m.u_l1 == 0.0 and m.grad_u_inf == 0.0
    assert m.needed_c(exps) == 0.0 and m.needed_c_gradient() == 0.0


def test_pure_decay_below_initial_sup(exps):
    m = calibration.run_heat(HeatCase(g0=0.0, f0=0.0, F0=0.0, u0=1.0, T=0.1, n=15), exps.q)
    assert m.sup_u == pytest.approx(m.sup_u0)
    assert m.needed_c(exps) == 0.0  # 4 sup u0 already dominates


def test_linear_in_forcing(exps):
    case = HeatCase(g0=8.0, f0=1.0, F0=0.0, u0=0.0, T=0.2, D=0.3, n=15)
    a = calibration.run_heat(case, exps.q)
    b = calibration.run_heat(dataclasses.replace(case, f0=3.0), exps.q)
    assert b.sup_u == pytest.approx(3 * a.sup_u, rel=1e-12)
    assert b.needed_c(exps) == pytest.approx(a.needed_c(exps), rel=1e-10)


def test_measured_norms_follow_definitions(exps):
    case = HeatCase(g0=2.0, f0=1.0, F0=0.0, u0=0.0, T=0.25, n=15)
    m = calibration.run_heat(case, exps.q)
    from netform.grid import Grid
    from netform import grid as gr

    g = Grid.uniform(2, 15)
    g_prof, f_prof, _, _ = calibration._profiles(g)
    assert m.g_q == pytest.approx(gr.norm_lq(2.0 * g_prof, exps.q, g) * 0.25 ** (1 / exps.q))
    assert m.f_2q == pytest.approx(gr.norm_lq(f_prof, 2 * exps.q, g) * 0.25 ** (1 / (2 * exps.q)))


def test_needed_c_makes_bound_tight(exps):
    m = calibration.run_heat(HeatCase(g0=9.0, f0=2.0, F0=0.0, u0=0.0, T=0.5, D=0.3, n=15), exps.q)
    c = m.needed_c(exps)
    assert c > 0
    bound = bounds.degiorgi_bound(m.sup_u0, m.g_q, m.u_l1, m.f_q, m.F_2q, m.case.T, exps, c)
    assert bound == pytest.approx(m.sup_u, rel=1e-12)


def test_design_covers_box():
    cases = calibration.design_cases(np.random.default_rng(0), 10, n=15)
    g0 = [c.g0 for c in cases]
    assert g0[0] == calibration.BOX["g0"][0] and g0[-1] == calibration.BOX["g0"][1]
    lo, hi = calibration.BOX["f0"]
    assert all(lo <= c.f0 <= hi for c in cases)


def test_calibrate_small_and_deterministic(exps):
    a = calibration.calibrate(5, exps, n_cal=4, n_test=4, n=15, dt=2e-3)
    b = calibration.calibrate(5, exps, n_cal=4, n_test=4, n=15, dt=2e-3)
    assert a.summary() == b.summary()
    assert a.c_star > 0 and a.passed
    assert len(a.held_out) == 4 and len(a.calibration) == 4
