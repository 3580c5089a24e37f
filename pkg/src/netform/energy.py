"""Both sides of the two energy identities, evaluated along a discrete trajectory.

The identities hold for the continuous system only; the residuals reported
here are discretisation diagnostics that should shrink under refinement.
Time integrals use the left rectangle rule over the stepper's own steps,
``int_0^tau X dt ~ sum_{k < K} X(t_k) dt``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import elliptic
from . import grid as gr
from .dynamics import Trajectory
from .elliptic import EllipticSolveReport
from .grid import ScalarField, VectorField

logger = logging.getLogger(__name__)

ME1_LHS = ("half_m_l2sq", "D2_grad_m", "E2_mgp", "m_pow2g", "two_E2_grad_p")
ME1_RHS = ("half_m0_l2sq", "two_E2_S_p")
F5_LHS = ("dmdt", "half_D2_grad_m", "half_E2_mgp", "half_E2_grad_p", "inv2g_m_pow2g")
F5_RHS = ("half_D2_grad_m0", "half_E2_m0gp0", "inv2g_m0_pow2g", "half_E2_grad_p0")


@dataclass(frozen=True, eq=False)
class P0Solution:
    p0: ScalarField
    report: EllipticSolveReport


@dataclass(frozen=True)
class LedgerEntry:
    identity: str  # "me1" or "f5"
    tau: float
    lhs: dict[str, float]
    rhs: dict[str, float]

    @property
    def lhs_sum(self) -> float:
        return float(sum(self.lhs.values()))

    @property
    def rhs_sum(self) -> float:
        return float(sum(self.rhs.values()))

    @property
    def residual(self) -> float:
        return self.lhs_sum - self.rhs_sum

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.rhs_sum if self.rhs_sum > 0 else abs(self.residual)


def solve_p0(m0: VectorField, S: ScalarField, tol: float = 1e-10) -> P0Solution:
    p0, rep = elliptic.solve_pressure(m0, S, tol)
    return P0Solution(p0, rep)


def audit_me1(traj: Trajectory, tau: float) -> LedgerEntry:
    K = traj.index_of(tau)
    s = traj.series
    ph = traj.config.phys
    dt = traj.config.dt
    D2, E2 = ph.D**2, ph.E**2

    def cum(key: str) -> float:
        return float(np.sum(s[key][:K])) * dt

    lhs = {
        "half_m_l2sq": 0.5 * float(s["m_l2sq"][K]),
        "D2_grad_m": D2 * cum("grad_m_l2sq"),
        "E2_mgp": E2 * cum("mgp_l2sq"),
        "m_pow2g": cum("m_pow2g"),
        "two_E2_grad_p": 2.0 * E2 * cum("grad_p_l2sq"),
    }
    rhs = {
        "half_m0_l2sq": 0.5 * gr.inner(traj.config.m0, traj.config.m0),
        "two_E2_S_p": 2.0 * E2 * cum("S_p"),
    }
    if np.all(traj.config.S.values >= 0.0) and np.any(s["p_min"][: K + 1] < 0.0):
        logger.info("discrete pressure took negative values for S >= 0 (min %.3e)", float(np.min(s["p_min"][: K + 1])))
    return LedgerEntry("me1", tau, lhs, rhs)


def f5_rhs(traj: Trajectory, p0: P0Solution | None = None) -> dict[str, float]:
    """Right side of the second identity; depends only on ``m0`` and ``p0``."""
    cfg = traj.config
    ph = cfg.phys
    if p0 is None:
        p0 = solve_p0(cfg.m0, cfg.S, cfg.elliptic_tol)
    vol = cfg.grid.cell_volume
    m0 = cfg.m0.values
    gp0 = p0.report.grad_p.values
    m0sq = np.sum(m0 * m0, axis=0)
    return {
        "half_D2_grad_m0": 0.5 * ph.D**2 * float(np.sum(gr.jacobian(cfg.m0) ** 2)) * vol,
        "half_E2_m0gp0": 0.5 * ph.E**2 * float(np.sum(np.sum(m0 * gp0, axis=0) ** 2)) * vol,
        "inv2g_m0_pow2g": float(np.sum(m0sq**ph.gamma)) * vol / (2.0 * ph.gamma),
        "half_E2_grad_p0": 0.5 * ph.E**2 * float(np.sum(gp0**2)) * vol,
    }


def audit_f5(traj: Trajectory, tau: float, p0: P0Solution | None = None) -> LedgerEntry:
    K = traj.index_of(tau)
    s = traj.series
    ph = traj.config.phys
    dt = traj.config.dt
    lhs = {
        "dmdt": float(np.sum(s["dmdt_l2sq"][1 : K + 1])) * dt,
        "half_D2_grad_m": 0.5 * ph.D**2 * float(s["grad_m_l2sq"][K]),
        "half_E2_mgp": 0.5 * ph.E**2 * float(s["mgp_l2sq"][K]),
        "half_E2_grad_p": 0.5 * ph.E**2 * float(s["grad_p_l2sq"][K]),
        "inv2g_m_pow2g": float(s["m_pow2g"][K]) / (2.0 * ph.gamma),
    }
    return LedgerEntry("f5", tau, lhs, f5_rhs(traj, p0))


def ledger(traj: Trajectory, taus) -> list[tuple[LedgerEntry, LedgerEntry]]:
    cfg = traj.config
    p0 = solve_p0(cfg.m0, cfg.S, cfg.elliptic_tol)
    return [(audit_me1(traj, t), audit_f5(traj, t, p0)) for t in taus]


LEDGER_HEADER = ("tau",) + tuple(f"me1_{k}" for k in ME1_LHS + ME1_RHS) + tuple(
    f"f5_{k}" for k in F5_LHS + F5_RHS
) + ("me1_res", "f5_res")


def ledger_rows(entries: list[tuple[LedgerEntry, LedgerEntry]]) -> list[list[float]]:
    rows = []
    for me1, f5 in entries:
        row = [me1.tau]
        row += [me1.lhs[k] for k in ME1_LHS] + [me1.rhs[k] for k in ME1_RHS]
        row += [f5.lhs[k] for k in F5_LHS] + [f5.rhs[k] for k in F5_RHS]
        row += [me1.residual, f5.residual]
        rows.append(row)
    return rows


def write_ledger_csv(path: Path, entries: list[tuple[LedgerEntry, LedgerEntry]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_HEADER)
        for row in ledger_rows(entries):
            w.writerow([repr(float(v)) for v in row])
