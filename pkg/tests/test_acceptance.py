"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

from __future__ import annotations

import filecmp
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

from netform import artifacts, bounds, calibration, cli, elliptic, energy, lemma_suites
from netform import grid as gr
from netform.dynamics import COMPLETED, SimConfig, simulate
from netform.grid import Grid, ScalarField, VectorField
from netform.params import PhysParams

from conftest import ACCEPTANCE_LINES, smooth_random_profile

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEED = 20240917


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)


def benchmark_config(n: int, dt: float, t_end: float, stride: int = 10**7) -> SimConfig:
    g = Grid.uniform(1, n)
    m0 = VectorField.sample(g, [lambda x: np.sin(np.pi * x)], dirichlet=True)
    S = ScalarField(g, np.ones(g.shape))
    return SimConfig(g, PhysParams(1.0, 1.0, 1.0), m0, S, dt, t_end, output_stride=stride)


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    g = Grid.uniform(1, 1023)
    h = g.h[0]
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        m = ScalarField.sample(g, smooth_random_profile(rng))
        S = ScalarField.sample(g, smooth_random_profile(rng))
        _, rep = elliptic.solve_pressure(VectorField(g, m.values[None]), S)
        oracle = elliptic.pressure_1d_oracle(m, S)
        worst = max(worst, float(np.max(np.abs(rep.grad_p.values[0] - oracle.values))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 10 * h and elapsed < 5.0
    report(1, "1D oracle equivalence", ok, f"sup error {worst:.3e} <= 10h = {10 * h:.3e}, {elapsed:.2f} s < 5 s")
    assert ok


def test_criterion_2_one_dimensional_pressure_bound():
    cfg = benchmark_config(255, 1e-4, 10.0)
    t0 = time.perf_counter()
    traj = simulate(cfg)
    elapsed = time.perf_counter() - t0
    bound = gr.norm_lq(cfg.S, 1) + 5 * cfg.grid.h[0]
    gp = traj.series["grad_p_inf"]
    m_inf = traj.series["m_inf"]
    ok = (
        traj.outcome == COMPLETED
        and traj.n_steps == 100_000
        and bool(np.all(gp <= bound))
        and bool(np.all(np.isfinite(m_inf)))
        and float(np.max(m_inf)) < cfg.blowup_cap
        and elapsed < 120.0
    )
    report(
        2, "1D pressure bound", ok,
        f"{traj.outcome}, {traj.n_steps} steps, max |p_x| {np.max(gp):.6f} <= {bound:.6f}, "
        f"max |m| {np.max(m_inf):.4f}, {elapsed:.1f} s < 120 s",
    )
    assert ok


def _mms_problem():
    x, y = sp.symbols("x y")
    p = sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
    m = sp.Matrix([1 + x * y, sp.cos(sp.pi * x) * sp.exp(y)])
    A = sp.eye(2) + m * m.T
    flux = A * sp.Matrix([sp.diff(p, x), sp.diff(p, y)])
    S = -(sp.diff(flux[0], x) + sp.diff(flux[1], y))
    lam = lambda e: sp.lambdify((x, y), e, "numpy")  # noqa: E731
    return lam(p), [lam(c) for c in m], lam(S)


def test_criterion_3_manufactured_solution():
    p_fn, m_fns, S_fn = _mms_problem()
    ns = (31, 63, 127)
    errs, hs = [], []
    for n in ns:
        g = Grid.uniform(2, n)
        m = VectorField.sample(g, [lambda x, y, f=f: f(x, y) + 0 * x for f in m_fns])
        p, _ = elliptic.solve_pressure(m, ScalarField.sample(g, S_fn), 1e-12)
        err = p.values - ScalarField.sample(g, p_fn).values
        errs.append(gr.norm_lq(ScalarField(g, err), 2))
        hs.append(g.h[0])
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(2)]
    ok = min(orders) >= 1.8
    report(3, "manufactured-solution order", ok, f"L2 errors {', '.join(f'{e:.3e}' for e in errs)}; orders {orders[0]:.3f}, {orders[1]:.3f} >= 1.8")
    assert ok


def test_criterion_4_energy_identity_refinement():
    levels = ((255, 1e-4), (511, 5e-5), (1023, 2.5e-5))
    me1, f5 = [], []
    for n, dt in levels:
        traj = simulate(benchmark_config(n, dt, 1.0))
        me1.append(abs(energy.audit_me1(traj, 1.0).residual))
        f5.append(abs(energy.audit_f5(traj, 1.0).residual))
    shrink_me1 = [me1[i] / me1[i + 1] for i in range(2)]
    shrink_f5 = [f5[i] / f5[i + 1] for i in range(2)]
    ok = min(shrink_me1 + shrink_f5) >= 1.5
    report(
        4, "energy identity refinement", ok,
        f"me1 residuals {', '.join(f'{v:.3e}' for v in me1)} (factors {shrink_me1[0]:.2f}, {shrink_me1[1]:.2f}); "
        f"f5 residuals {', '.join(f'{v:.3e}' for v in f5)} (factors {shrink_f5[0]:.2f}, {shrink_f5[1]:.2f}); need >= 1.5",
    )
    assert ok


def test_criterion_5_exponent_algebra():
    N, q, ell, gamma = (Fraction(v) for v in (3, 3, 6, 1))
    s0 = q * (N + 2) / (2 * q - N - 2)
    alpha = (2 * q - N - 2) / ((q - 1) * (N + 2))
    s1 = 5 * N * (2 * ell - N + N * ell) * (N * q - N) / (q * (ell - N))
    s4 = max(s0 + 2, s0 * (2 * gamma - 1))
    want = (s0, alpha, s1, s4, s1 * s4)
    e = bounds.exponents(3, 3.0, 6.0, 1.0)
    got = (e.s0, e.alpha, e.s1, e.s4, e.s5)
    ok = want == (15, Fraction(1, 10), 270, 17, 4590) and all(g == float(w) for g, w in zip(got, want))
    report(5, "exponent algebra", ok, f"(s0, alpha, s1, s4, s5) = {got}")
    assert ok


def test_criterion_6_tmax_solver():
    t0 = time.perf_counter()
    toy = bounds.solve_phi_root(lambda u: u, lambda u: u, 2.0, 1.0, tol=1e-12)
    toy_err = abs(toy.T - 0.5)
    exps = bounds.exponents(3, 3.0, 6.0, 1.0)
    unit = bounds.EstimateInputs(1.0, 1.0, 1.0, 1.0, exps)
    res = bounds.tmax_solve(unit, tol=1e-12)
    values = (0.5, 1.0, 2.0)
    table = np.empty((3, 3, 3))
    for i, s in enumerate(values):
        for j, gm in enumerate(values):
            for k, c in enumerate(values):
                table[i, j, k] = bounds.tmax_solve(unit.replace(norm_S=s, norm_grad_m0_inf=gm, c=c)).log_T
    antitone = all(bool(np.all(np.diff(table, axis=a) < 0)) for a in range(3))
    elapsed = time.perf_counter() - t0
    ok = toy_err <= 1e-12 and res.phi_residual <= 1e-12 and antitone and elapsed < 1.0
    report(
        6, "T_max solver", ok,
        f"toy |T - 1/2| = {toy_err:.1e}, unit |Phi - 1| = {res.phi_residual:.1e} at log T = {res.log_T:.4f}, "
        f"3x3x3 antitone {antitone}, {elapsed:.2f} s < 1 s",
    )
    assert ok


def test_criterion_7_lemma_suites():
    t0 = time.perf_counter()
    rep = lemma_suites.run_all(SEED, trials=100_000)
    elapsed = time.perf_counter() - t0
    plap_pairs = sum(s.passed + s.failed for s in rep.suites if s.name.startswith("plap"))
    cont = next(s for s in rep.suites if s.name == "continuation")
    ys = bounds.ynb_iterate(1.0, 2.0, 1.0, bounds.ynb_threshold(1.0, 2.0, 1.0), 60)
    ynb_ok = bool(np.min(ys) < 1e-10)
    ok = rep.ok and plap_pairs == 6 * 100_000 and cont.passed == 100 and ynb_ok and elapsed < 30.0
    report(7, "lemma suites", ok, f"{'; '.join(rep.lines())}; {elapsed:.1f} s < 30 s")
    assert ok


def test_criterion_8_degiorgi_calibration():
    exps = bounds.exponents(*cli.CALIBRATION_EXPONENTS)
    rep = calibration.calibrate(SEED, exps, n_cal=10, n_test=10)
    disjoint = not ({m.case for m in rep.calibration} & {m.case for m in rep.held_out})
    ok = rep.passed and len(rep.held_out_ok) == 10 and len(rep.calibration) == 10 and disjoint
    report(8, "De Giorgi calibration", ok, f"c* = {rep.c_star:.6e}, held-out {sum(rep.held_out_ok)}/10 dominated")
    assert ok


def _same_run(a: Path, b: Path) -> list[str]:
    """Names of files that differ between two run directories (manifest compared without wall time)."""
    diffs = []
    ma, mb = artifacts.load_manifest(a), artifacts.load_manifest(b)
    if artifacts.without_timing(ma) != artifacts.without_timing(mb):
        diffs.append(artifacts.MANIFEST_NAME)
    names = sorted(set(ma["files"]) | set(mb["files"]))
    for name in names:
        if not filecmp.cmp(a / name, b / name, shallow=False):
            diffs.append(name)
    return diffs


def test_criterion_9_determinism(tmp_path):
    bench = json.loads((CONFIGS / "bench1d.json").read_text())
    bench.update(t_end=0.5, output_stride=1000)
    bench_path = tmp_path / "bench_short.json"
    bench_path.write_text(json.dumps(bench))
    runs = {
        "simulate": ["simulate", str(bench_path), "--seed", str(SEED)],
        "tmax": ["tmax", str(CONFIGS / "unit_tmax.json"), "--seed", str(SEED)],
        "audit-elliptic": ["audit-elliptic", str(CONFIGS / "elliptic1d.json"), "--seed", str(SEED)],
        "lemmas": ["lemmas", "--seed", str(SEED), "--calibrate"],
        "sweep": ["sweep", str(CONFIGS / "sweep_norm_S.json"), "--seed", str(SEED), "--workers", "2"],
    }
    failures = {}
    checked = 0
    for name, argv in runs.items():
        dirs = [tmp_path / f"{name}_{k}" for k in "ab"]
        codes = [cli.main([*argv, "--out", str(d)]) for d in dirs]
        diffs = _same_run(*dirs)
        checked += len(artifacts.load_manifest(dirs[0])["files"]) + 1
        if codes[0] != 0 or codes[0] != codes[1] or diffs:
            failures[name] = (codes, diffs)
    energy_dirs = [tmp_path / f"energy_{k}" for k in "ab"]
    for d in energy_dirs:
        cli.main(["audit-energy", str(tmp_path / "simulate_a"), "--out", str(d)])
    if _same_run(*energy_dirs):
        failures["audit-energy"] = _same_run(*energy_dirs)
    ok = not failures
    report(9, "determinism", ok, f"{len(runs) + 1} commands run twice, {checked} files byte-identical" if ok else f"differences: {failures}")
    assert ok
