"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

Per-step RDP at order a is ``log(A_a) / (a - 1)`` where ``A_a`` is the a-th
moment of the likelihood ratio between ``(1-q) N(0, z^2) + q N(1, z^2)`` and
``N(0, z^2)``.  Integer orders use the finite binomial expansion; fractional
orders use the two-sided erfc series.  Everything is evaluated in log space.
Composition over T steps multiplies by T.

Two RDP -> (eps, delta) conversions are offered:

``classic``   eps = rdp + log(1/delta) / (a - 1)
``improved``  eps = rdp + log1p(-1/a) - log(delta * a) / (a - 1)

The improved bound is the default; it is what current RDP accountants report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, log_ndtr

DEFAULT_ORDERS: tuple[float, ...] = (
    (1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5)
    + tuple(float(a) for a in range(5, 65))
    + (128.0, 256.0, 512.0)
)

CONVERSIONS = ("improved", "classic")


class AccountingError(ValueError):
    pass


@dataclass(frozen=True)
class AccountantInput:
    sampling_probability: float
    noise_multiplier: float
    steps: int
    orders: tuple[float, ...] = DEFAULT_ORDERS

    def __post_init__(self):
        if not 0.0 <= self.sampling_probability <= 1.0:
            raise AccountingError(f"sampling probability must be in [0, 1], got {self.sampling_probability}")
        if self.noise_multiplier < 0:
            raise AccountingError("noise multiplier must be >= 0")
        if self.steps < 1:
            raise AccountingError("steps must be >= 1")
        if any(a <= 1 for a in self.orders):
            raise AccountingError("all orders must be > 1")


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    optimal_order: float


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def _log_sub(a: float, b: float) -> float:
    """log(exp(a) - exp(b)) for a >= b."""
    if b == -math.inf:
        return a
    if a < b:
        raise AccountingError("log-space subtraction went negative")
    if a == b:
        return -math.inf
    return a + math.log(-math.expm1(b - a))


def _log_a_int(q: float, z: float, alpha: int) -> float:
    i = np.arange(alpha + 1, dtype=float)
    log_binom = gammaln(alpha + 1.0) - gammaln(i + 1.0) - gammaln(alpha - i + 1.0)
    terms = log_binom + i * math.log(q) + (alpha - i) * math.log1p(-q) + (i * i - i) / (2.0 * z * z)
    top = terms.max()
    return float(top + np.log(np.exp(terms - top).sum()))


def _log_a_frac(q: float, z: float, alpha: float, max_terms: int = 100_000) -> float:
    log_a0 = log_a1 = -math.inf
    z0 = z * z * math.log(1.0 / q - 1.0) + 0.5
    log_q, log_1q = math.log(q), math.log1p(-q)
    # log|C(alpha, i)| and its sign, updated incrementally
    log_coef, sign = 0.0, 1.0
    for i in range(max_terms):
        if i > 0:
            factor = alpha - (i - 1)
            if factor == 0:
                break
            log_coef += math.log(abs(factor)) - math.log(i)
            sign *= math.copysign(1.0, factor)
        j = alpha - i
        log_t0 = log_coef + i * log_q + j * log_1q
        log_t1 = log_coef + j * log_q + i * log_1q
        # log(erfc(x) / 2) == log_ndtr(-x * sqrt(2))
        log_e0 = float(log_ndtr((z0 - i) / z))
        log_e1 = float(log_ndtr((j - z0) / z))
        log_s0 = log_t0 + (i * i - i) / (2.0 * z * z) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2.0 * z * z) + log_e1
        if sign > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)
        if max(log_s0, log_s1) < -30:
            break
    else:
        raise AccountingError(f"fractional-order series did not converge at order {alpha}")
    return _log_add(log_a0, log_a1)


def _rdp_one_step(q: float, z: float, alpha: float) -> float:
    if q == 0:
        return 0.0
    if z == 0:
        return math.inf
    if q == 1.0:
        return alpha / (2.0 * z * z)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, z, int(alpha))
    else:
        log_a = _log_a_frac(q, z, float(alpha))
    return log_a / (alpha - 1.0)


def rdp_subsampled_gaussian(q: float, z: float, steps: int, orders: Sequence[float] = DEFAULT_ORDERS) -> np.ndarray:
    """RDP of ``steps`` compositions of the Poisson-subsampled Gaussian, one value per order."""
    if not 0.0 <= q <= 1.0:
        raise AccountingError(f"sampling probability must be in [0, 1], got {q}")
    if z < 0:
        raise AccountingError("noise multiplier must be >= 0")
    return np.array([_rdp_one_step(q, z, a) for a in orders]) * steps


def _eps_at(a: float, r: float, delta: float, method: str) -> float:
    if not math.isfinite(r):
        return math.inf
    if method == "classic":
        return r + math.log(1.0 / delta) / (a - 1.0)
    if delta * delta + math.expm1(-r) >= 0:
        # KL bound already gives delta at eps = 0
        return 0.0
    if a > 1.01:
        return r + math.log1p(-1.0 / a) - math.log(delta * a) / (a - 1.0)
    return math.inf


def epsilons(rdp: Sequence[float], orders: Sequence[float], delta: float, method: str = "improved") -> np.ndarray:
    if method not in CONVERSIONS:
        raise AccountingError(f"conversion must be one of {CONVERSIONS}, got {method!r}")
    if not 0.0 < delta < 1.0:
        raise AccountingError(f"delta must be in (0, 1), got {delta}")
    if len(rdp) != len(orders):
        raise AccountingError("rdp and orders differ in length")
    return np.array([_eps_at(float(a), float(r), delta, method) for a, r in zip(orders, rdp)])


def rdp_to_epsilon(rdp, orders, delta: float, method: str = "improved") -> PrivacySpec:
    """Smallest epsilon over the order grid, with the order that attains it."""
    eps = epsilons(rdp, orders, delta, method)
    if not np.any(np.isfinite(eps)):
        raise AccountingError("no order gives a finite epsilon")
    k = int(np.argmin(eps))
    return PrivacySpec(max(0.0, float(eps[k])), delta, float(orders[k]))


def compute_epsilon(q: float, z: float, steps: int, delta: float,
                    orders: Sequence[float] = DEFAULT_ORDERS, method: str = "improved") -> PrivacySpec:
    return rdp_to_epsilon(rdp_subsampled_gaussian(q, z, steps, orders), orders, delta, method)


def report_epsilon(run: AccountantInput, delta: float, method: str = "improved") -> PrivacySpec:
    return compute_epsilon(
        run.sampling_probability, run.noise_multiplier, run.steps, delta, run.orders, method
    )


def calibrate_noise(
    target_epsilon: float,
    delta: float,
    q: float,
    steps: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
    z_max: float = 100.0,
    z_min: float = 0.01,
    rel_tol: float = 1e-4,
    method: str = "improved",
) -> float:
    """Smallest noise multiplier (to ``rel_tol``) whose epsilon is <= ``target_epsilon``.

    Bisection on z, relying on epsilon being non-increasing in z.  Returns
    ``z_min`` when even the floor meets the target.
    """
    if not target_epsilon > 0:
        raise AccountingError("target epsilon must be > 0")

    def eps(z):
        return compute_epsilon(q, z, steps, delta, orders, method).epsilon

    hi_eps = eps(z_max)
    if hi_eps > target_epsilon:
        raise AccountingError(
            f"target epsilon {target_epsilon} unreachable: epsilon at z_max={z_max} is {hi_eps:.6g}"
        )
    if eps(z_min) <= target_epsilon:
        return z_min
    lo, hi = z_min, z_max
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if eps(mid) <= target_epsilon:
            hi = mid
        else:
            lo = mid
    return hi
