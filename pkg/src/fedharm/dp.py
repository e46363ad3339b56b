"""Central DP for federated averaging: clip each client delta, noise the sum.

Noise is added to the *sum* of clipped deltas and the result is divided by
the divisor.  With Poisson sampling the divisor defaults to the expected
cohort size, which keeps the estimator unbiased and the sensitivity fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DpError(ValueError):
    pass


@dataclass(frozen=True)
class AdaptiveClipParams:
    initial_clip: float = 0.1
    target_quantile: float = 0.5
    clip_learning_rate: float = 0.2
    quantile_noise: float | None = None  # None -> expected_cohort / 20

    def __post_init__(self):
        if not 0.0 < self.target_quantile < 1.0:
            raise DpError(f"target_quantile must be in (0, 1), got {self.target_quantile}")
        if not self.clip_learning_rate > 0:
            raise DpError("clip_learning_rate must be > 0")
        if not self.initial_clip > 0:
            raise DpError("initial_clip must be > 0")
        if self.quantile_noise is not None and self.quantile_noise < 0:
            raise DpError("quantile_noise must be >= 0")

    def noise_std(self, expected_cohort: float) -> float:
        return expected_cohort / 20.0 if self.quantile_noise is None else self.quantile_noise


@dataclass(frozen=True)
class AdaptiveClipState:
    current_clip: float
    round: int = 0


DIVISOR_MODES = ("auto", "expected_cohort", "actual_cohort")


@dataclass(frozen=True)
class DpConfig:
    noise_multiplier: float
    clip_norm: float = 1.0
    adaptive: AdaptiveClipParams | None = None
    delta: float = 1e-3
    divisor_mode: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if not self.noise_multiplier >= 0:
            raise DpError(f"noise_multiplier must be >= 0, got {self.noise_multiplier}")
        if not 0.0 < self.delta < 1.0:
            raise DpError(f"delta must be in (0, 1), got {self.delta}")
        if self.adaptive is None and not self.clip_norm > 0:
            raise DpError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.divisor_mode not in DIVISOR_MODES:
            raise DpError(f"divisor_mode must be one of {DIVISOR_MODES}")

    def initial_clip_state(self) -> AdaptiveClipState:
        c0 = self.adaptive.initial_clip if self.adaptive else self.clip_norm
        return AdaptiveClipState(c0, 0)


def clip_update(delta: np.ndarray, clip: float) -> tuple[np.ndarray, int]:
    """Scale ``delta`` into the L2 ball of radius ``clip``.

    The indicator is 1 when the norm was already within the bound.
    """
    if not clip > 0:
        raise DpError(f"clip norm must be > 0, got {clip}")
    norm = float(np.linalg.norm(delta))
    if not math.isfinite(norm):
        raise DpError("non-finite update norm")
    if norm <= clip:
        return delta.copy(), 1
    return delta * (clip / norm), 0


def dp_aggregate(
    clipped: list[np.ndarray],
    clip: float,
    noise_multiplier: float,
    divisor: float,
    rng: np.random.Generator,
    dimension: int | None = None,
) -> np.ndarray:
    """(sum of clipped deltas + N(0, (z*C)^2 I)) / divisor, summed in list order."""
    if not divisor > 0:
        raise DpError(f"divisor must be > 0, got {divisor}")
    if dimension is None:
        if not clipped:
            raise DpError("dimension required when there are no clipped updates")
        dimension = len(clipped[0])
    bound = clip * (1.0 + 1e-9)
    total = np.zeros(dimension)
    for k, c in enumerate(clipped):
        if len(c) != dimension:
            raise DpError(f"update {k} has dimension {len(c)}, expected {dimension}")
        if np.linalg.norm(c) > bound:
            raise DpError(f"update {k} has norm {np.linalg.norm(c):.6g} > clip {clip}")
        total += c
    if noise_multiplier > 0:
        total += rng.normal(0.0, noise_multiplier * clip, size=dimension)
    return total / divisor


def update_clip_norm(
    state: AdaptiveClipState,
    indicators,
    params: AdaptiveClipParams,
    expected_cohort: float,
    rng: np.random.Generator,
) -> AdaptiveClipState:
    """Geometric step of the clip norm towards the target quantile of update norms."""
    if not expected_cohort > 0:
        raise DpError("expected_cohort must be > 0")
    sigma_b = params.noise_std(expected_cohort)
    noise = rng.normal(0.0, sigma_b) if sigma_b > 0 else 0.0
    frac = (float(np.sum(indicators)) + noise) / expected_cohort
    new_clip = state.current_clip * math.exp(-params.clip_learning_rate * (frac - params.target_quantile))
    return AdaptiveClipState(new_clip, state.round + 1)
