"""Seeded randomized checks of the elementary lemmas in :mod:`netform.bounds`.

Every suite draws from ``numpy.random.default_rng(seed)`` so a report is a pure
function of ``(seed, trials)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import bounds

PLAP_GAMMAS = (0.6, 0.75, 1.0, 1.5, 2.0, 3.0)
PLAP_DIMS = (1, 2, 3, 4)
PLAP_SLACK = 1e-12


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: int
    failed: int
    worst: float  # most adverse normalised margin seen (negative means violated)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{self.name}: {status} passed={self.passed} failed={self.failed} worst={self.worst:.3e}"

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_vectors(rng: np.random.Generator, count: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs with log-uniform magnitudes, plus near-coincident and zero cases mixed in."""
    def draw(k: int) -> np.ndarray:
        direction = rng.standard_normal((k, dim))
        direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
        radius = 10.0 ** rng.uniform(-3.0, 3.0, size=(k, 1))
        return direction * radius

    x = draw(count)
    y = draw(count)
    kind = rng.integers(0, 10, size=count)
    near = kind == 0
    y[near] = x[near] * (1.0 + 10.0 ** rng.uniform(-8.0, -1.0, size=(int(near.sum()), 1)))
    y[kind == 1] = 0.0
    y[kind == 2] = -x[kind == 2]
    return x, y


def plap_suite(seed: int, trials: int = 100_000) -> list[SuiteResult]:
    """``trials`` random pairs per gamma, spread evenly over dimensions 1 to 4."""
    rng = np.random.default_rng(seed)
    out = []
    for gamma in PLAP_GAMMAS:
        passed = failed = 0
        worst = math.inf
        per_dim = np.full(len(PLAP_DIMS), trials // len(PLAP_DIMS))
        per_dim[: trials % len(PLAP_DIMS)] += 1
        for dim, count in zip(PLAP_DIMS, per_dim):
            x, y = _sample_vectors(rng, int(count), dim)
            margin = bounds.plap_margin(x, y, gamma) / bounds.plap_scale(x, y, gamma)
            bad = margin < -PLAP_SLACK
            failed += int(bad.sum())
            passed += int((~bad).sum())
            worst = min(worst, float(np.min(margin)))
        out.append(SuiteResult(f"plap[gamma={gamma:g}]", passed, failed, worst))
    return out


def ynb_suite(seed: int, trials: int = 1000, n_iter: int = 60) -> SuiteResult:
    """Sequences started at or below threshold stay under ``threshold * b^{-n/alpha}``.

    The reference case ``(c, b, alpha) = (1, 2, 1)`` from the threshold must
    also be non-increasing and drop below ``1e-10`` within ``n_iter`` steps.
    """
    rng = np.random.default_rng(seed)
    passed = failed = 0
    worst = math.inf

    ys = bounds.ynb_iterate(1.0, 2.0, 1.0, bounds.ynb_threshold(1.0, 2.0, 1.0), n_iter)
    ref_ok = bool(np.all(np.diff(ys) <= 0.0) and np.min(ys) < 1e-10)
    passed, failed = (passed + 1, failed) if ref_ok else (passed, failed + 1)

    for _ in range(trials):
        c = 10.0 ** rng.uniform(-2.0, 2.0)
        b = 1.0 + 10.0 ** rng.uniform(-1.0, 1.0)
        alpha = 10.0 ** rng.uniform(-0.5, 0.5)
        thr = bounds.ynb_threshold(c, b, alpha)
        y0 = thr * rng.uniform(0.0, 1.0)
        ys = bounds.ynb_iterate(c, b, alpha, y0, n_iter)
        n = np.arange(n_iter + 1)
        envelope = np.exp(math.log(thr) - n * math.log(b) / alpha) if thr > 0.0 else np.zeros(n_iter + 1)
        # relative roundoff allowance per step of the recursion
        tol = envelope * 1e-12 * (n + 1)
        gap = (envelope + tol - ys) / np.maximum(envelope, 1e-300)
        worst = min(worst, float(np.min(gap)))
        if np.all(ys <= envelope + tol):
            passed += 1
        else:
            failed += 1
    return SuiteResult("ynb", passed, failed, worst)


def _smooth_curve(rng: np.random.Generator, tau: np.ndarray, modes: int = 6) -> np.ndarray:
    """Random continuous curve with values in ``[0, 1]``."""
    k = np.arange(1, modes + 1)
    coef = rng.standard_normal(modes) / k
    phase = rng.uniform(0.0, 2.0 * np.pi, modes)
    raw = np.sum(coef[:, None] * np.sin(np.pi * k[:, None] * tau[None, :] + phase[:, None]), axis=0)
    lo, hi = raw.min(), raw.max()
    return (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)


def _lower_root(eps: float, delta: float, b: float) -> float:
    """Smaller root of ``eps h^{1+delta} - h + b`` on ``[0, h0]`` by bisection."""
    h0 = bounds.continuation_h0(eps, delta)
    lo, hi = 0.0, h0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eps * mid ** (1.0 + delta) - mid + b > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def continuation_suite(seed: int, trials: int = 100, n_tau: int = 4001) -> SuiteResult:
    """Barrier check on synthetic curves.

    Admissible curves are random continuous functions below the smaller root
    of ``eps h^{1+delta} - h + b``; each is checked to satisfy the hypothesis
    pointwise and to stay below ``h0``.  Escaping curves, which start below
    ``h0`` and end above it, are checked to violate the hypothesis somewhere
    on the grid.  Each trial contributes one of each.
    """
    rng = np.random.default_rng(seed)
    tau = np.linspace(0.0, 1.0, n_tau)
    passed = failed = 0
    worst = math.inf
    for _ in range(trials):
        delta = 10.0 ** rng.uniform(-1.0, 1.0)
        b = 10.0 ** rng.uniform(-2.0, 1.0)
        eps = bounds.continuation_threshold(delta, b) * rng.uniform(0.05, 1.0)
        h0 = bounds.continuation_h0(eps, delta)
        root = _lower_root(eps, delta, b)

        h = root * _smooth_curve(rng, tau)
        hyp = eps * h ** (1.0 + delta) + b - h
        admissible = bool(np.all(hyp >= -1e-12 * (1.0 + h)))
        below = bool(np.max(h) <= h0)
        worst = min(worst, (h0 - float(np.max(h))) / h0)

        start = h0 * rng.uniform(0.0, 1.0)
        end = h0 * rng.uniform(1.05, 3.0)
        escape = start + (end - start) * _monotone_ramp(rng, tau)
        violated = bool(np.any(eps * escape ** (1.0 + delta) + b - escape < 0.0))

        if admissible and below and violated and bounds.continuation_ok(eps, delta, b, float(h[0])):
            passed += 1
        else:
            failed += 1
    return SuiteResult("continuation", passed, failed, worst)


def _monotone_ramp(rng: np.random.Generator, tau: np.ndarray) -> np.ndarray:
    """Random continuous non-decreasing map of ``[0, 1]`` onto ``[0, 1]``."""
    incr = rng.exponential(1.0, size=tau.size - 1)
    ramp = np.concatenate([[0.0], np.cumsum(incr)])
    return ramp / ramp[-1]


@dataclass(frozen=True)
class LemmaReport:
    seed: int
    trials: int
    suites: list[SuiteResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)

    def lines(self) -> list[str]:
        return [s.line() for s in self.suites]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "trials": self.trials, "ok": self.ok, "suites": [s.to_dict() for s in self.suites]}


def run_all(seed: int, trials: int = 100_000) -> LemmaReport:
    suites = plap_suite(seed, trials) + [ynb_suite(seed + 1), continuation_suite(seed + 2)]
    return LemmaReport(seed, trials, suites)
