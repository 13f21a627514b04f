"""Diffusion noise schedules.

A schedule fixes the per-step variances β_t for t = 1..T and the derived
cumulative signal coefficients ᾱ_t = ∏_{i<=t} (1 − β_i), stored with a
leading sentinel ᾱ_0 = 1 so that stepping down to t = 0 needs no special
case. A strictly increasing ``subsequence`` of base-step indices selects
the steps actually visited during accelerated sampling.

All schedule arithmetic is float64: the stochasticity factor σ and the
inversion coefficients are differences of near-equal quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "NoiseSchedule",
    "build_linear_schedule",
    "make_subsequence",
    "sigma",
    "format_table",
    "PRESETS",
]

# Linear β ∈ [1e-4, 0.02] over 1000 steps: the convention of the
# pretrained image backbones this engine mirrors at desk scale.
PRESETS: dict[str, tuple[int, float, float]] = {
    "default": (1000, 1e-4, 0.02),
}


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable β/ᾱ tables plus the accelerated-sampling subsequence.

    ``betas[i]`` is β_{i+1} (length T); ``alpha_bars[t]`` is ᾱ_t
    (length T+1, ᾱ_0 = 1). ``subsequence`` holds strictly increasing
    base-step indices in (0, T], ending at T when built by
    :func:`make_subsequence`.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray
    subsequence: tuple[int, ...] = field(default=())

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        alpha_bars = np.asarray(self.alpha_bars, dtype=np.float64)
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie in (0, 1)")
        if alpha_bars.shape != (betas.size + 1,):
            raise ValueError("alpha_bars must have length total_steps + 1")
        if alpha_bars[0] != 1.0:
            raise ValueError("alpha_bars[0] must be exactly 1")
        if np.any(np.diff(alpha_bars) >= 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        if alpha_bars[-1] <= 0.0:
            raise ValueError("alpha_bars must stay positive")
        sub = tuple(int(s) for s in self.subsequence)
        object.__setattr__(self, "subsequence", sub)
        if any(s2 <= s1 for s1, s2 in zip(sub, sub[1:])):
            raise ValueError("subsequence must be strictly increasing")
        if sub and (sub[0] < 1 or sub[-1] > self.total_steps):
            raise ValueError("subsequence indices must lie in (0, T]")

    @property
    def total_steps(self) -> int:
        return self.betas.size

    def alpha_bar(self, t: int) -> float:
        """ᾱ_t for a base-step index t ∈ [0, T]."""
        if not 0 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside [0, {self.total_steps}]")
        return float(self.alpha_bars[t])


def build_linear_schedule(total_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Build a schedule with β linearly interpolated over ``total_steps``.

    The subsequence defaults to every step 1..T.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if total_steps == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    alpha_bars = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    return NoiseSchedule(betas, alpha_bars, tuple(range(1, total_steps + 1)))


def make_subsequence(schedule: NoiseSchedule, count: int) -> NoiseSchedule:
    """Return a copy whose subsequence is ``count`` uniformly strided steps ending at T."""
    T = schedule.total_steps
    if not 1 <= count <= T:
        raise ValueError(f"count must lie in [1, {T}], got {count}")
    stride = T // count
    descending = list(range(T, 0, -stride))[:count]
    return replace(schedule, subsequence=tuple(reversed(descending)))


def sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """Stochasticity factor σ for the reverse step t → t_prev.

        σ = η · sqrt((1 − ᾱ_{t_prev}) / (1 − ᾱ_t)) · sqrt(1 − ᾱ_t / ᾱ_{t_prev})

    η = 0 gives the deterministic sampler; η = 1 matches the ancestral
    posterior standard deviation.
    """
    if eta < 0.0:
        raise ValueError("eta must be non-negative")
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must precede t ({t})")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t_prev)
    return eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)


def format_table(schedule: NoiseSchedule) -> str:
    """Two-column text table (t, ᾱ_t) for inspection."""
    lines = [f"{t}\t{schedule.alpha_bars[t]:.17g}" for t in range(schedule.total_steps + 1)]
    return "\n".join(lines) + "\n"
