"""Closed-form estimates for the network-formation system and the life-span equation.

Everything that involves the large exponents ``s1`` and ``s5`` is evaluated
in the log domain; public functions return floats that saturate to ``inf``
instead of overflowing.  For the life-span solver the natural variable is
``log T``: with unit data the root already sits near ``T = e^-2245``, far
below the smallest double.

The generic constant of the estimates is a single calibration scalar ``c``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .params import PhysParams

NEG_INF = -math.inf
_LOG_MAX = math.log(np.finfo(float).max)
_LOG_MIN = math.log(np.finfo(float).tiny)
S0_DIVERGENCE_GUARD = 1e12


def _log(x: float) -> float:
    if x < 0.0:
        raise ValueError(f"expected a non-negative number, got {x}")
    return math.log(x) if x > 0.0 else NEG_INF


def _exp(u: float) -> float:
    if u > _LOG_MAX:
        return math.inf
    return math.exp(u)


def _lse(*terms: float) -> float:
    finite = [t for t in terms if t != NEG_INF]
    if not finite:
        return NEG_INF
    top = max(finite)
    if math.isinf(top):
        return top
    return top + math.log(sum(math.exp(t - top) for t in finite))


def _scaled(a: float, u: float) -> float:
    """``a * u`` for ``a > 0`` with ``u`` possibly ``-inf``."""
    return NEG_INF if u == NEG_INF else a * u


# ---------------------------------------------------------------------------
# exponents


def s0_exponent(N: int, q: float) -> float:
    return q * (N + 2) / (2 * q - N - 2)


def alpha_exponent(N: int, q: float) -> float:
    return (2 * q - N - 2) / ((q - 1) * (N + 2))


def s1_exponent(N: int, q: float, ell: float) -> float:
    return 5 * N * (2 * ell - N + N * ell) * (N * q - N) / (q * (ell - N))


@dataclass(frozen=True)
class ExponentSet:
    N: int
    q: float
    ell: float
    gamma: float
    s0: float
    alpha: float
    s1: float
    s4: float
    s5: float

    def to_dict(self) -> dict:
        return asdict(self)


def exponents(N: int, q: float, ell: float, gamma: float) -> ExponentSet:
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    N = int(N)
    if not q > 1 + N / 2:
        raise ValueError(f"q > 1 + N/2 violated: q = {q}, 1 + N/2 = {1 + N / 2}")
    if not ell > N:
        raise ValueError(f"ell > N violated: ell = {ell}, N = {N}")
    if not gamma > 0.5:
        raise ValueError(f"gamma > 1/2 violated: gamma = {gamma}")
    s0 = s0_exponent(N, q)
    if s0 > S0_DIVERGENCE_GUARD:
        raise ValueError(f"s0 = {s0:.3e} diverges: q is too close to 1 + N/2")
    s1 = s1_exponent(N, q, ell)
    s4 = max(s0 + 2.0, s0 * (2.0 * gamma - 1.0))
    return ExponentSet(N, float(q), float(ell), float(gamma), s0, alpha_exponent(N, q), s1, s4, s1 * s4)


# ---------------------------------------------------------------------------
# data entering the life-span equation


@dataclass(frozen=True)
class EstimateInputs:
    """Data norms and constants for the life-span estimate.

    ``norm_S`` is the norm of ``S`` in ``L^{4qN/(N+4q)}``.  ``norm_S_2`` is
    the ``L^2`` norm that enters ``F`` and ``G``; it defaults to ``norm_S``.
    """

    norm_S: float
    norm_m0_2: float
    norm_m0_inf: float
    norm_grad_m0_inf: float
    exps: ExponentSet
    c: float = 1.0
    norm_S_2: float | None = None
    phys: PhysParams = field(default_factory=PhysParams)

    def __post_init__(self) -> None:
        for name in ("norm_S", "norm_m0_2", "norm_m0_inf", "norm_grad_m0_inf"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.norm_S_2 is None:
            object.__setattr__(self, "norm_S_2", self.norm_S)
        elif not (self.norm_S_2 >= 0.0 and math.isfinite(self.norm_S_2)):
            raise ValueError(f"norm_S_2 must be finite and >= 0, got {self.norm_S_2}")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValueError(f"c must be positive, got {self.c}")

    def replace(self, **changes) -> "EstimateInputs":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "norm_S" in changes and "norm_S_2" not in changes and self.norm_S_2 == self.norm_S:
            changes["norm_S_2"] = None
        d.update(changes)
        return EstimateInputs(**d)

    def to_dict(self) -> dict:
        e = self.exps
        return {
            "N": e.N, "q": e.q, "ell": e.ell, "gamma": e.gamma, "c": self.c,
            "norm_S": self.norm_S, "norm_S_2": self.norm_S_2, "norm_m0_2": self.norm_m0_2,
            "norm_m0_inf": self.norm_m0_inf, "norm_grad_m0_inf": self.norm_grad_m0_inf,
            "D": self.phys.D, "E": self.phys.E,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateInputs":
        gamma = float(d.get("gamma", 1.0))
        exps = exponents(int(d["N"]), float(d["q"]), float(d["ell"]), gamma)
        phys = PhysParams(float(d.get("D", 1.0)), float(d.get("E", 1.0)), gamma)
        s2 = d.get("norm_S_2")
        return cls(
            norm_S=float(d["norm_S"]),
            norm_m0_2=float(d["norm_m0_2"]),
            norm_m0_inf=float(d["norm_m0_inf"]),
            norm_grad_m0_inf=float(d["norm_grad_m0_inf"]),
            exps=exps,
            c=float(d.get("c", 1.0)),
            norm_S_2=None if s2 is None else float(s2),
            phys=phys,
        )


# ---------------------------------------------------------------------------
# F, G, F1, G1 as functions of log T


def log_F(logT: float, inp: EstimateInputs) -> float:
    e = inp.exps
    lm2, lminf, lS2 = _log(inp.norm_m0_2), _log(inp.norm_m0_inf), _log(inp.norm_S_2)
    r = 2.0 * e.gamma - 1.0
    half = _scaled(0.5, logT)
    mass = _lse(half + lm2, logT + lS2)  # T^1/2 |m0|_2 + T |S|_2
    line1 = _scaled(e.s0 / (4 * e.q), logT) + mass
    line2 = _lse(lminf, mass)
    line3 = _scaled((e.s0 * r + 2.0) / (4 * e.q), logT) + _lse(
        _scaled(r / 2.0, logT) + _scaled(r, lm2), _scaled(r, logT) + _scaled(r, lS2)
    )
    return _lse(line1, line2, line3)


def log_G(logT: float, inp: EstimateInputs) -> float:
    e = inp.exps
    r = 2.0 * e.gamma - 1.0
    lm2, lminf, lS2 = _log(inp.norm_m0_2), _log(inp.norm_m0_inf), _log(inp.norm_S_2)
    tail = _scaled(1.0 / (2 * e.q), logT) + _lse(
        _scaled(r, lminf), _scaled(r / 2.0, logT) + _scaled(r, lm2), _scaled(r, logT) + _scaled(r, lS2)
    )
    return _lse(_log(inp.norm_grad_m0_inf), log_F(logT, inp), tail)


def log_F1(logT: float, inp: EstimateInputs) -> float:
    e = inp.exps
    return _scaled(1.0 / (4 * e.q), logT) + _scaled(e.s1, log_F(logT, inp)) + _log(inp.norm_S)


def log_G1(logT: float, inp: EstimateInputs) -> float:
    e = inp.exps
    return _scaled(1.0 / (4 * e.q), logT) + _lse(_scaled(e.s1, log_G(logT, inp)), 0.0) + _log(inp.norm_S)


def F_of_T(T: float, inp: EstimateInputs) -> float:
    return _exp(log_F(_log(T), inp))


def G_of_T(T: float, inp: EstimateInputs) -> float:
    return _exp(log_G(_log(T), inp))


def F1_G1(T: float, inp: EstimateInputs) -> tuple[float, float]:
    lt = _log(T)
    return _exp(log_F1(lt, inp)), _exp(log_G1(lt, inp))


# ---------------------------------------------------------------------------
# minimum of g(h) = c F1 h^s5 - h + c G1 and the life-span equation


class NoInteriorMinimum(ValueError):
    """``F1 = 0``: ``g(h) = -h + c G1`` is affine and has no interior minimum."""


def gmin_value(F1: float, G1: float, s5: float, c: float) -> float:
    if F1 == 0.0:
        raise NoInteriorMinimum("F1 = 0, g is affine decreasing")
    lf = math.log(F1)
    first = math.log(s5 - 1.0) - math.log(s5) - (math.log(c) + math.log(s5) + lf) / (s5 - 1.0)
    return -_exp(first) + c * G1


def g_min(T: float, inp: EstimateInputs) -> float:
    F1, G1 = F1_G1(T, inp)
    return gmin_value(F1, G1, inp.exps.s5, inp.c)


def log_phi(logF1: float, logG1: float, s5: float, c: float) -> float:
    """``log`` of ``(s5-1) / (s5 (c s5 F1)^{1/(s5-1)} c G1)``."""
    lc = math.log(c)
    if logF1 == NEG_INF or logG1 == NEG_INF:
        return math.inf
    return math.log(s5 - 1.0) - math.log(s5) - (lc + math.log(s5) + logF1) / (s5 - 1.0) - lc - logG1


def phi_of_T(T: float, inp: EstimateInputs) -> float:
    lt = _log(T)
    return _exp(log_phi(log_F1(lt, inp), log_G1(lt, inp), inp.exps.s5, inp.c))


@dataclass(frozen=True)
class TmaxResult:
    log_T: float  # natural log of the root; +inf when unconstrained
    phi_residual: float  # |Phi(T_max) - 1|
    evaluations: int
    exps: ExponentSet | None = None

    @property
    def T(self) -> float:
        return _exp(self.log_T)

    @property
    def log10_T(self) -> float:
        return self.log_T / math.log(10.0)

    def to_dict(self) -> dict:
        return {
            "T_max": self.T,
            "log_T_max": self.log_T,
            "log10_T_max": self.log10_T,
            "phi_residual": self.phi_residual,
            "evaluations": self.evaluations,
            "exponents": None if self.exps is None else self.exps.to_dict(),
        }


def solve_phi_root(
    log_F1_fn: Callable[[float], float],
    log_G1_fn: Callable[[float], float],
    s5: float,
    c: float,
    tol: float = 1e-12,
    max_log_span: float = 1e6,
) -> TmaxResult:
    """Bisection in ``u = log T`` for ``Phi(e^u) = 1`` with ``Phi`` decreasing.

    The bracket is grown from ``T = 1`` by doubling or halving ``T``, with the
    step in ``log T`` itself doubled after every unsuccessful try.
    """
    evals = 0

    def f(u: float) -> float:
        nonlocal evals
        evals += 1
        return log_phi(log_F1_fn(u), log_G1_fn(u), s5, c)

    f0 = f(0.0)
    if f0 == 0.0:
        return TmaxResult(0.0, 0.0, evals)
    direction = 1.0 if f0 > 0.0 else -1.0
    lo = hi = 0.0
    step = math.log(2.0)
    u, fu = 0.0, f0
    while (fu > 0.0) == (f0 > 0.0) and fu != 0.0:
        if abs(u) > max_log_span:
            # Phi never crosses 1 in range: no finite constraint
            return TmaxResult(math.inf if direction > 0 else NEG_INF, math.nan, evals)
        u += direction * step
        step *= 2.0
        fu = f(u)
    if direction > 0:
        lo, hi = u - direction * step / 2.0, u
    else:
        lo, hi = u, u - direction * step / 2.0
    if fu == 0.0:
        return TmaxResult(u, 0.0, evals)
    best_u, best_res = u, abs(math.expm1(fu))
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        res = abs(math.expm1(fm))
        if res < best_res:
            best_u, best_res = mid, res
        if res <= tol or fm == 0.0:
            break
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    return TmaxResult(best_u, best_res, evals)


def tmax_solve(inp: EstimateInputs, tol: float = 1e-12) -> TmaxResult:
    """Root of the life-span equation for the given data; ``T = inf`` when ``norm_S = 0``."""
    if inp.norm_S == 0.0:
        return TmaxResult(math.inf, 0.0, 0, inp.exps)
    res = solve_phi_root(
        lambda u: log_F1(u, inp), lambda u: log_G1(u, inp), inp.exps.s5, inp.c, tol=tol
    )
    return TmaxResult(res.log_T, res.phi_residual, res.evaluations, inp.exps)


# ---------------------------------------------------------------------------
# intermediate estimates


def bound_grad_p(T: float, norm_grad_m_inf: float, inp: EstimateInputs) -> float:
    """``c T^{1/4q} (1 + ||grad m||_inf)^{s1} ||S||``."""
    e = inp.exps
    lt = _log(T)
    return _exp(
        math.log(inp.c) + _scaled(1.0 / (4 * e.q), lt) + e.s1 * math.log1p(norm_grad_m_inf) + _log(inp.norm_S)
    )


def bound_sup_m(T: float, grad_p_4q: float, inp: EstimateInputs) -> float:
    e = inp.exps
    lt = _log(T)
    mass = _lse(_scaled(0.5, lt) + _log(inp.norm_m0_2), lt + _log(inp.norm_S_2))
    first = _scaled(e.s0 / (4 * e.q), lt) + mass + _scaled(e.s0, _log(grad_p_4q))
    second = _lse(_log(inp.norm_m0_inf), mass)
    return _exp(math.log(inp.c) + _lse(first, second))


def bound_grad_m(T: float, grad_p_4q: float, inp: EstimateInputs) -> float:
    """``c G(T) + c F(T) ||grad p||^{s4}``."""
    lt = _log(T)
    lF, lG = log_F(lt, inp), log_G(lt, inp)
    return _exp(math.log(inp.c) + _lse(lG, lF + _scaled(inp.exps.s4, _log(grad_p_4q))))


def degiorgi_bound(
    sup_u0: float,
    g_q: float,
    u_l1: float,
    f_q: float,
    F_2q: float,
    T: float,
    exps: ExponentSet,
    c: float,
    variant: str = "u7",
    u_plus_norm: float | None = None,
) -> float:
    """Uniform bound for sub-solutions of ``u_t - D^2 Lap u = g u + f + div F``.

    ``variant="u7"``:  ``4 sup u0 + c (|g|_q^{s0} + 1) |u|_1 + 2 |f|_q T^{1/(2 s0)} + 2 |F|_{2q}``.

    ``variant="u6"`` takes ``u_plus_norm = |u^+|_{2q/(q-1)}`` instead of ``|u|_1``:
    ``2 sup u0 + c (|g|_q^{(q-1) s0 / 2q} + 1) |u^+| + |f|_q T^{1/(2 s0)} + |F|_{2q}``.
    """
    s0, q = exps.s0, exps.q
    t_factor = _exp(_scaled(1.0 / (2.0 * s0), _log(T)))
    if variant == "u7":
        gfac = _exp(_scaled(s0, _log(g_q))) + 1.0
        return 4.0 * sup_u0 + c * gfac * u_l1 + 2.0 * f_q * t_factor + 2.0 * F_2q
    if variant == "u6":
        if u_plus_norm is None:
            raise ValueError("variant u6 needs u_plus_norm")
        gfac = _exp(_scaled((q - 1.0) * s0 / (2.0 * q), _log(g_q))) + 1.0
        return 2.0 * sup_u0 + c * gfac * u_plus_norm + f_q * t_factor + F_2q
    raise ValueError(f"unknown variant {variant!r}")


def heat_gradient_bound(grad_u0_inf: float, f_2q: float, c: float) -> float:
    return c * grad_u0_inf + c * f_2q


# ---------------------------------------------------------------------------
# elementary lemmas


def _check_positive(**kw: float) -> None:
    for k, v in kw.items():
        if not v > 0.0:
            raise ValueError(f"{k} must be positive, got {v}")


def continuation_h0(eps: float, delta: float) -> float:
    """Barrier ``h0 = [eps (1 + delta)]^{-1/delta}``."""
    _check_positive(eps=eps, delta=delta)
    return _exp(-math.log(eps * (1.0 + delta)) / delta)


def continuation_threshold(delta: float, b: float) -> float:
    """Largest admissible ``eps``: ``delta^delta / ((b + delta)^delta (1 + delta)^{1+delta})``."""
    _check_positive(delta=delta, b=b)
    return math.exp(delta * math.log(delta) - delta * math.log(b + delta) - (1.0 + delta) * math.log1p(delta))


def continuation_ok(eps: float, delta: float, b: float, h_init: float) -> bool:
    _check_positive(eps=eps, delta=delta, b=b)
    return eps <= continuation_threshold(delta, b) and h_init <= continuation_h0(eps, delta)


def ynb_threshold(c: float, b: float, alpha: float) -> float:
    """``c^{-1/alpha} b^{-1/alpha^2}``."""
    if not b > 1.0:
        raise ValueError(f"b must exceed 1, got {b}")
    _check_positive(c=c, alpha=alpha)
    return _exp(-math.log(c) / alpha - math.log(b) / alpha**2)


def ynb_iterate(c: float, b: float, alpha: float, y0: float, n_max: int) -> np.ndarray:
    """``y_{n+1} = c b^n y_n^{1+alpha}`` for ``n < n_max``; saturates to ``inf``."""
    if not b > 1.0:
        raise ValueError(f"b must exceed 1, got {b}")
    _check_positive(c=c, alpha=alpha)
    # Direct products are used whenever they stay in range: at the threshold the
    # recursion is marginally stable and amplifies rounding by (1 + alpha) per
    # step, so the extra rounding of a log/exp round trip must be avoided.
    lc, lb = math.log(c), math.log(b)
    y = float(y0)
    out = [y]
    for n in range(n_max):
        if y == 0.0 or math.isinf(y):
            out.append(y)
            continue
        lv = lc + n * lb + (1.0 + alpha) * math.log(y)
        if lv > _LOG_MAX:
            y = math.inf
        elif lv < _LOG_MIN:
            y = 0.0
        else:
            try:
                y = c * b**n * y ** (1.0 + alpha)
            except OverflowError:
                y = math.exp(lv)
            if not (math.isfinite(y) and y > 0.0):
                y = math.exp(lv)
        out.append(y)
    return np.array(out)


def _signed_power(v: np.ndarray, norm: np.ndarray, expo: float) -> np.ndarray:
    """``|v|^expo v`` with the convention ``0^expo * 0 = 0``."""
    safe = np.where(norm > 0.0, norm, 1.0)
    return np.where(norm[..., None] > 0.0, (safe**expo)[..., None] * v, 0.0)


def plap_margin(x, y, gamma: float):
    """lhs - rhs of the monotonicity inequality for ``v -> |v|^{2 gamma - 2} v``.

    ``gamma >= 1``: ``(|x|^{2g-2}x - |y|^{2g-2}y).(x-y) - |x-y|^{2g} / 2^{2g-1}``.
    ``1/2 < gamma < 1``: ``(|x|+|y|)^{2-2g} (...).(x-y) - (2g-1) |x-y|^2``.
    Vectorised over leading axes; the last axis is the vector dimension.
    """
    if not gamma > 0.5:
        raise ValueError(f"gamma must exceed 1/2, got {gamma}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    d = x - y
    nd = np.linalg.norm(d, axis=-1)
    expo = 2.0 * gamma - 2.0
    mono = np.sum((_signed_power(x, nx, expo) - _signed_power(y, ny, expo)) * d, axis=-1)
    if gamma >= 1.0:
        out = mono - nd ** (2.0 * gamma) / 2.0 ** (2.0 * gamma - 1.0)
    else:
        out = (nx + ny) ** (2.0 - 2.0 * gamma) * mono - (2.0 * gamma - 1.0) * nd**2
    return float(out) if out.ndim == 0 else out


def plap_scale(x, y, gamma: float):
    """Roundoff scale ``(1 + |x| + |y|)^{2 gamma}`` for :func:`plap_margin`."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = (1.0 + np.linalg.norm(x, axis=-1) + np.linalg.norm(y, axis=-1)) ** (2.0 * gamma)
    return float(s) if s.ndim == 0 else s
