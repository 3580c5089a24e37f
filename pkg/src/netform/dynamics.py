"""IMEX time stepping of the conductance equation coupled to the pressure solve.

One step from ``m``:

1. ``p`` solves ``-div[(I + m m^T) grad p] = S`` (warm-started from the previous ``p``);
2. every component solves ``(I - dt D^2 Lap) m_next = m + dt [E^2 (m.grad p) grad p - a(m) m]``

with ``a(m) = |m|^{2(gamma-1)}`` for ``gamma >= 1`` and
``(|m|^2 + reg_eps)^{gamma-1}`` for ``1/2 < gamma < 1``.  Diffusion is
implicit, activation and absorption explicit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import elliptic
from . import grid as gr
from .elliptic import jacobi_preconditioner, neg_laplacian, pcg, tridiagonal_preconditioner
from .errors import ConfigError, SolverFailure
from .grid import Grid, ScalarField, VectorField
from .params import PhysParams

logger = logging.getLogger(__name__)

__all__ = [
    "PhysParams",
    "SimConfig",
    "Snapshot",
    "Trajectory",
    "step",
    "simulate",
    "measure_grad_p_4q",
]

COMPLETED = "completed"
BLOWUP = "blowup_detected"
SOLVER_FAILURE = "solver_failure"


@dataclass(frozen=True, eq=False)
class SimConfig:
    grid: Grid
    phys: PhysParams
    m0: VectorField
    S: ScalarField
    dt: float
    t_end: float
    elliptic_tol: float = 1e-10
    blowup_cap: float = 1e6
    reg_eps: float = 1e-12
    output_stride: int = 1000
    helmholtz_tol: float = 1e-12
    preconditioner: str = "auto"
    record_q: tuple[float, ...] = (3.0,)
    stability_factor: float = 1.0
    source: dict | None = None  # how m0 and S were specified, echoed in manifests

    def __post_init__(self) -> None:
        if self.m0.grid != self.grid:
            raise ConfigError("m0", "lives on a different grid")
        if self.S.grid != self.grid:
            raise ConfigError("S", "lives on a different grid")
        if not self.m0.is_dirichlet():
            raise ConfigError("m0", "must vanish on the boundary")
        if not np.all(np.isfinite(self.m0.values)):
            raise ConfigError("m0", "must be finite")
        if not np.all(np.isfinite(self.S.values)):
            raise ConfigError("S", "must be finite")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigError("dt", f"must be positive, got {self.dt}")
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end", f"must be >= 0, got {self.t_end}")
        for name in ("elliptic_tol", "blowup_cap", "helmholtz_tol", "stability_factor"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        if not self.reg_eps >= 0.0:
            raise ConfigError("reg_eps", f"must be >= 0, got {self.reg_eps}")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ConfigError("output_stride", f"must be a positive integer, got {self.output_stride}")
        if any(not q >= 0.25 for q in self.record_q):
            raise ConfigError("record_q", "exponents must satisfy 4q >= 1")
        object.__setattr__(self, "record_q", tuple(float(q) for q in self.record_q))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9)) if self.t_end > 0 else 0

    def echo(self) -> dict[str, Any]:
        return {
            "grid": self.grid.to_dict(),
            "phys": self.phys.to_dict(),
            "dt": self.dt,
            "t_end": self.t_end,
            "elliptic_tol": self.elliptic_tol,
            "blowup_cap": self.blowup_cap,
            "reg_eps": self.reg_eps,
            "output_stride": self.output_stride,
            "helmholtz_tol": self.helmholtz_tol,
            "preconditioner": self.preconditioner,
            "record_q": list(self.record_q),
            "stability_factor": self.stability_factor,
            "source": self.source,
        }


@dataclass(frozen=True, eq=False)
class Snapshot:
    index: int
    time: float
    m: VectorField
    p: ScalarField
    diagnostics: dict[str, float] = field(default_factory=dict)


SERIES_KEYS = (
    "m_inf",
    "grad_m_inf",
    "grad_p_inf",
    "m_l2sq",
    "grad_m_l2sq",
    "mgp_l2sq",
    "m_pow2g",
    "grad_p_l2sq",
    "S_p",
    "dmdt_l2sq",
    "p_min",
)


def grad_p_key(q: float) -> str:
    return f"grad_p_pow4q[q={q:g}]"


@dataclass(eq=False)
class Trajectory:
    """Per-step scalars for ``t_k = k dt`` plus snapshots every ``output_stride`` steps.

    ``series["dmdt_l2sq"][k]`` is ``int |(m_k - m_{k-1}) / dt|^2`` (zero at ``k = 0``).
    """

    config: SimConfig
    times: np.ndarray
    series: dict[str, np.ndarray]
    snapshots: list[Snapshot]
    outcome: str
    outcome_time: float | None = None
    message: str = ""

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def index_of(self, tau: float) -> int:
        k = int(round(tau / self.config.dt))
        if k < 0 or k > self.n_steps or abs(k * self.config.dt - tau) > 1e-9 * max(1.0, abs(tau)):
            raise ValueError(f"tau={tau} is not a step time within [0, {self.times[-1]}]")
        return k


# ---------------------------------------------------------------------------


def _regularized_power(m2: np.ndarray, gamma: float, reg_eps: float) -> np.ndarray:
    return (m2 + reg_eps) ** (gamma - 1.0)


def absorption_coefficient(m2: np.ndarray, gamma: float, reg_eps: float) -> np.ndarray:
    """``|m|^{2(gamma-1)}`` given ``m2 = |m|^2``; regularised only for ``gamma < 1``."""
    if gamma == 1.0:
        return np.ones_like(m2)
    if gamma > 1.0:
        return m2 ** (gamma - 1.0)
    return _regularized_power(m2, gamma, reg_eps)


class _Helmholtz:
    """``(I - dt D^2 Lap_h)`` with Dirichlet data, solved by PCG."""

    def __init__(self, grid: Grid, coeff: float, tol: float, preconditioner: str):
        self.grid = grid
        self.coeff = coeff
        self.tol = tol
        self.mask = grid.boundary_mask()
        kind = elliptic._choose_preconditioner(preconditioner, grid.dim)
        if kind == "tridiagonal":
            n = grid.n[0]
            a = coeff / grid.h[0] ** 2
            ab = np.zeros((3, n))
            ab[1] = 1.0 + 2.0 * a
            ab[0, 1:] = -a
            ab[2, :-1] = -a
            self.precond = tridiagonal_preconditioner(ab)
        else:
            d = np.full(grid.shape, 1.0 + coeff * sum(2.0 / h**2 for h in grid.h))
            d[self.mask] = 1.0
            self.precond = jacobi_preconditioner(d)
        self.max_iter = 50 * max(grid.n)

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = u + self.coeff * neg_laplacian(u, self.grid)
        out[self.mask] = 0.0
        return out

    def solve(self, rhs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        w = self.grid.cell_volume
        target = self.tol * math.sqrt(w * float(np.vdot(rhs, rhs)))
        if target == 0.0:
            return np.zeros_like(rhs)
        x, _, _ = pcg(self.apply, rhs, self.precond, x0, target, self.max_iter, w)
        x[self.mask] = 0.0
        return x


_HELMHOLTZ_CACHE: dict[tuple, _Helmholtz] = {}


def _helmholtz_for(config: SimConfig) -> _Helmholtz:
    key = (config.grid, config.dt * config.phys.D**2, config.helmholtz_tol, config.preconditioner)
    op = _HELMHOLTZ_CACHE.get(key)
    if op is None:
        if len(_HELMHOLTZ_CACHE) > 32:
            _HELMHOLTZ_CACHE.clear()
        op = _Helmholtz(config.grid, config.dt * config.phys.D**2, config.helmholtz_tol, config.preconditioner)
        _HELMHOLTZ_CACHE[key] = op
    return op


def _pressure(m: VectorField, config: SimConfig, p_guess: ScalarField | None):
    return elliptic.solve_pressure(
        m, config.S, config.elliptic_tol, x0=p_guess, preconditioner=config.preconditioner
    )


def _update(m: np.ndarray, grad_p: np.ndarray, config: SimConfig) -> np.ndarray:
    ph = config.phys
    m_dot_gp = np.sum(m * grad_p, axis=0)
    absorb = absorption_coefficient(np.sum(m * m, axis=0), ph.gamma, config.reg_eps)
    rhs = m + config.dt * (ph.E**2 * m_dot_gp * grad_p - absorb * m)
    rhs[:, config.grid.boundary_mask()] = 0.0
    helm = _helmholtz_for(config)
    return np.stack([helm.solve(rhs[i], m[i]) for i in range(config.grid.dim)])


def step(m: VectorField, config: SimConfig, p_guess: ScalarField | None = None) -> tuple[VectorField, ScalarField]:
    """Advance ``m`` by one time step; returns ``(m_next, p)`` where ``p`` belongs to ``m``."""
    if not m.is_dirichlet():
        raise ValueError("m must vanish on the boundary")
    p, rep = _pressure(m, config, p_guess)
    m_next = _update(m.values, rep.grad_p.values, config)
    return VectorField(config.grid, m_next), p


def holder_modulus(m: VectorField, theta: float = 0.5) -> float:
    """``max |m_i - m_j| / |x_i - x_j|^theta`` over grid neighbours."""
    g = m.grid
    best = 0.0
    for k in range(g.dim):
        d = np.sqrt(np.sum(np.diff(m.values, axis=k + 1) ** 2, axis=0))
        best = max(best, float(np.max(d)) / g.h[k] ** theta)
    return best


def check_stability(config: SimConfig, grad_p0: VectorField) -> float:
    """Explicit-reaction rate ``E^2 |grad p0|_inf^2 + |m0|_inf^{2(gamma-1)}`` times ``dt``.

    The absorption contribution is only counted for ``gamma >= 1``; for
    ``gamma < 1`` it is a sublinear sink that cannot amplify.
    """
    ph = config.phys
    rate = ph.E**2 * gr.norm_linf(grad_p0) ** 2
    if ph.gamma >= 1.0:
        rate += gr.norm_linf(config.m0) ** (2.0 * (ph.gamma - 1.0))
    ratio = config.dt * rate
    if ratio > config.stability_factor:
        raise ConfigError(
            "dt",
            f"explicit reaction too stiff: dt * rate = {ratio:.3g} exceeds stability_factor {config.stability_factor}",
        )
    return ratio


def _not_below(value: float, cap: float) -> bool:
    return not (value <= cap)


def simulate(config: SimConfig) -> Trajectory:
    """Run until ``t_end``, the first cap crossing of ``|m|_inf`` or ``|grad m|_inf``, or a solver failure."""
    g = config.grid
    K = config.n_steps
    ph = config.phys
    vol = g.cell_volume
    S = config.S.values
    series = {k: np.zeros(K + 1) for k in SERIES_KEYS}
    for q in config.record_q:
        series[grad_p_key(q)] = np.zeros(K + 1)
    snapshots: list[Snapshot] = []

    m = config.m0
    p_prev: ScalarField | None = None
    m_prev_vals: np.ndarray | None = None
    outcome, t_out, message = COMPLETED, None, ""
    last = -1
    for k in range(K + 1):
        t = k * config.dt
        grad_m = gr.jacobian(m)
        m_inf = gr.norm_linf(m)
        grad_m_inf = float(np.max(np.sqrt(np.sum(grad_m**2, axis=(0, 1)))))
        crossed = _not_below(m_inf, config.blowup_cap) or _not_below(grad_m_inf, config.blowup_cap)
        try:
            p, rep = _pressure(m, config, p_prev)
        except SolverFailure as exc:
            outcome = BLOWUP if crossed else SOLVER_FAILURE
            t_out, message = t, str(exc)
            break
        if k == 0:
            check_stability(config, rep.grad_p)
        gp = rep.grad_p.values
        mv = m.values
        m2 = np.sum(mv * mv, axis=0)
        gp2 = np.sum(gp * gp, axis=0)
        series["m_inf"][k] = m_inf
        series["grad_m_inf"][k] = grad_m_inf
        series["grad_p_inf"][k] = math.sqrt(float(np.max(gp2)))
        series["m_l2sq"][k] = float(np.sum(m2)) * vol
        series["grad_m_l2sq"][k] = float(np.sum(grad_m**2)) * vol
        series["mgp_l2sq"][k] = float(np.sum(np.sum(mv * gp, axis=0) ** 2)) * vol
        series["m_pow2g"][k] = float(np.sum(m2**ph.gamma)) * vol
        series["grad_p_l2sq"][k] = float(np.sum(gp2)) * vol
        series["S_p"][k] = float(np.sum(S * p.values)) * vol
        series["p_min"][k] = float(np.min(p.values))
        if m_prev_vals is not None:
            series["dmdt_l2sq"][k] = float(np.sum((mv - m_prev_vals) ** 2)) * vol / config.dt**2
        for q in config.record_q:
            series[grad_p_key(q)][k] = float(np.sum(gp2 ** (2.0 * q))) * vol
        last = k
        last_state = (k, t, m, p)

        if k % config.output_stride == 0 or k == K or crossed:
            snapshots.append(Snapshot(k, t, m, p, {"holder_half": holder_modulus(m)}))
        if crossed:
            outcome, t_out = BLOWUP, t
            message = f"|m|_inf={m_inf:.3e}, |grad m|_inf={grad_m_inf:.3e} vs cap {config.blowup_cap:.3e}"
            break
        if k == K:
            break
        try:
            m_next = _update(mv, gp, config)
        except SolverFailure as exc:
            outcome, t_out, message = SOLVER_FAILURE, t, str(exc)
            break
        m_prev_vals = mv
        m = VectorField(g, m_next)
        p_prev = p

    n = last + 1
    if n and snapshots[-1].index != last:
        ks, ts, ms, ps = last_state
        snapshots.append(Snapshot(ks, ts, ms, ps, {"holder_half": holder_modulus(ms)}))
    trimmed = {k: v[:n].copy() for k, v in series.items()}
    times = np.arange(n) * config.dt
    if outcome != COMPLETED:
        logger.info("simulation stopped: %s at t=%s (%s)", outcome, t_out, message)
    return Trajectory(config, times, trimmed, snapshots, outcome, t_out, message)


def measure_grad_p_4q(traj: Trajectory, q: float) -> float:
    """Space-time ``L^{4q}`` norm of ``grad p`` over ``[0, t_last]`` (left rectangle rule in time).

    Uses the per-step record when ``q`` was requested in ``record_q``;
    otherwise falls back to the snapshots with their own spacing.
    """
    key = grad_p_key(float(q))
    if key in traj.series:
        vals = traj.series[key][:-1]
        total = float(np.sum(vals)) * traj.config.dt
    else:
        snaps = traj.snapshots
        total = 0.0
        for a, b in zip(snaps[:-1], snaps[1:]):
            gp = gr.gradient(a.p)
            total += gr.norm_lq(gp, 4 * q) ** (4 * q) * (b.time - a.time)
    return total ** (1.0 / (4.0 * q)) if total > 0.0 else 0.0
