"""Core stepping routines for the diffusion state.

Conventions (ᾱ_t from the governing :class:`~cowdiff.schedule.NoiseSchedule`):

* jump noising       x_t = sqrt(ᾱ_t/ᾱ_s)·x_s + sqrt(1 − ᾱ_t/ᾱ_s)·ε
* reverse step       x_p = sqrt(ᾱ_p)·x̂₀ + sqrt(1 − ᾱ_p − σ²)·ε̂ + σ·ε,
                     x̂₀ = (x_t − sqrt(1 − ᾱ_t)·ε̂) / sqrt(ᾱ_t)
* Euler inversion    x_n = sqrt(ᾱ_n)·( x_t/sqrt(ᾱ_t)
                         + ε̂·(sqrt((1 − ᾱ_n)/ᾱ_n) − sqrt((1 − ᾱ_t)/ᾱ_t)) )

ε̂ is evaluated once per step and reused in both the x̂₀ and direction
terms; inversion evaluates it at the current, lower-noise state, which is
the source of the first-order error the round-trip tests measure. η = 0
paths consume no random draws; stochastic steps consume one full canvas
of standard Gaussian draws in raster order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import schedule as sched
from .denoiser import UNCONDITIONAL, Condition, Denoiser, cfg_epsilon
from .schedule import NoiseSchedule

__all__ = [
    "LatentState",
    "RngStream",
    "TraceRecord",
    "Trace",
    "forward_noise",
    "ddim_step",
    "invert_step",
    "invert_trajectory",
    "denoise_range",
]


@dataclass(frozen=True)
class LatentState:
    """A canvas tensor tagged with its diffusion step (0 = clean data).

    The stored array is a private read-only copy; stepping functions are
    pure and never mutate their inputs.
    """

    data: np.ndarray
    step: int

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("canvas entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.step < 0:
            raise ValueError("step must be non-negative")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


class RngStream:
    """Seedable source of standard Gaussian canvas draws.

    Draw order is fully determined by (seed, draw index); ``split``
    derives independent child streams for concurrent trajectories.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        self._seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._gen = np.random.default_rng(self._seq)

    def normal(self, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def split(self, n: int) -> list["RngStream"]:
        return [RngStream(child) for child in self._seq.spawn(n)]

    @property
    def generator(self) -> np.random.Generator:
        """Underlying generator, for non-canvas draws (data generation)."""
        return self._gen


@dataclass(frozen=True)
class TraceRecord:
    """One noise-prediction event: stage tag, the base step the predictor
    saw, the η in force, a running call index, and an optional snapshot
    reference."""

    stage: str
    base_step: int
    eta: float
    call_index: int
    snapshot: str | None = None


class Trace:
    """Append-only record of denoiser evaluations during a run."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def record(self, stage: str, base_step: int, eta: float, snapshot: str | None = None) -> None:
        self.records.append(TraceRecord(stage, base_step, eta, len(self.records), snapshot))

    @property
    def denoiser_calls(self) -> int:
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "base_step", "call_index"])
            for rec in self.records:
                writer.writerow([rec.stage, rec.base_step, rec.call_index])


def _validate_canvas_match(state: LatentState, arr: np.ndarray) -> None:
    if np.asarray(arr).shape != state.shape:
        raise ValueError(f"shape mismatch: state {state.shape} vs {np.asarray(arr).shape}")


def forward_noise(state: LatentState, target_step: int, schedule: NoiseSchedule,
                  rng: RngStream) -> LatentState:
    """Jump the state forward to ``target_step`` with a single fresh draw."""
    if target_step <= state.step:
        raise ValueError(f"target step {target_step} must exceed current step {state.step}")
    ab_from = schedule.alpha_bar(state.step)
    ab_to = schedule.alpha_bar(target_step)
    ratio = ab_to / ab_from
    eps = rng.normal(state.shape)
    data = np.sqrt(ratio) * state.data + np.sqrt(1.0 - ratio) * eps
    return LatentState(data, target_step)


def ddim_step(state: LatentState, prev_step: int, epsilon_hat: np.ndarray, eta: float,
              schedule: NoiseSchedule, rng: RngStream | None = None) -> LatentState:
    """One reverse step from ``state.step`` down to ``prev_step``.

    A random draw is consumed only when σ > 0 (η > 0 and prev_step > 0).
    """
    if prev_step >= state.step:
        raise ValueError(f"prev step {prev_step} must precede current step {state.step}")
    _validate_canvas_match(state, epsilon_hat)
    ab_t = schedule.alpha_bar(state.step)
    ab_prev = schedule.alpha_bar(prev_step)
    sig = sched.sigma(schedule, state.step, prev_step, eta)
    direction_sq = 1.0 - ab_prev - sig * sig
    if direction_sq < 0.0:
        raise ValueError(f"eta {eta} invalid for steps {state.step}->{prev_step}: "
                         "sigma exceeds the direction budget")
    eps_hat = np.asarray(epsilon_hat, dtype=np.float64)
    x0_hat = (state.data - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    data = np.sqrt(ab_prev) * x0_hat + np.sqrt(direction_sq) * eps_hat
    if sig > 0.0:
        if rng is None:
            raise ValueError("stochastic step (sigma > 0) needs an RngStream")
        data = data + sig * rng.normal(state.shape)
    return LatentState(data, prev_step)


def invert_step(state: LatentState, next_step: int, epsilon_hat: np.ndarray,
                schedule: NoiseSchedule) -> LatentState:
    """One deterministic Euler inversion step up to ``next_step``."""
    if next_step <= state.step:
        raise ValueError(f"next step {next_step} must exceed current step {state.step}")
    _validate_canvas_match(state, epsilon_hat)
    ab_t = schedule.alpha_bar(state.step)
    ab_next = schedule.alpha_bar(next_step)
    if ab_t <= 0.0 or ab_next <= 0.0:
        raise ValueError("inversion undefined where alpha_bar reaches 0")
    eps_hat = np.asarray(epsilon_hat, dtype=np.float64)
    ramp = np.sqrt((1.0 - ab_next) / ab_next) - np.sqrt((1.0 - ab_t) / ab_t)
    data = np.sqrt(ab_next) * (state.data / np.sqrt(ab_t) + eps_hat * ramp)
    return LatentState(data, next_step)


def invert_trajectory(x0: LatentState, denoiser: Denoiser, condition: Condition,
                      schedule: NoiseSchedule, trace: Trace | None = None,
                      stage: str = "invert") -> list[LatentState]:
    """Invert clean data up the whole subsequence; entry i is the state at τ_{i+1}.

    ε̂ is evaluated at each current state and its base step, so the first
    step (from step 0) uses the predictor's clean-data limit.
    """
    if x0.step != 0:
        raise ValueError(f"inversion starts from step 0, got step {x0.step}")
    if not schedule.subsequence:
        raise ValueError("schedule has an empty subsequence")
    states = []
    current = x0
    for target in schedule.subsequence:
        eps_hat = denoiser.epsilon(current.data, current.step, condition)
        if trace is not None:
            trace.record(stage, current.step, 0.0)
        current = invert_step(current, target, eps_hat, schedule)
        states.append(current)
    return states


def denoise_range(state: LatentState, stop_step: int, denoiser: Denoiser,
                  condition: Condition, eta: float, guidance_scale: float,
                  schedule: NoiseSchedule, rng: RngStream | None = None,
                  hook: Callable[[LatentState], LatentState] | None = None,
                  trace: Trace | None = None, stage: str = "denoise") -> LatentState:
    """Chain reverse steps along the subsequence from ``state.step`` to ``stop_step``.

    Categorical conditions are applied through classifier-free guidance at
    ``guidance_scale``; the unconditional path calls the denoiser directly.
    ``hook``, if given, receives each post-step state and returns the state
    the chain continues from (enabling region replacement and tracing).
    """
    sub = schedule.subsequence
    if not sub:
        raise ValueError("schedule has an empty subsequence")
    anchors = (0,) + sub
    if state.step not in anchors:
        raise ValueError(f"start step {state.step} not on the subsequence")
    if stop_step not in anchors:
        raise ValueError(f"stop step {stop_step} not on the subsequence (or 0)")
    if stop_step >= state.step:
        raise ValueError(f"stop step {stop_step} must precede start step {state.step}")
    path = [s for s in anchors if stop_step <= s <= state.step]
    current = state
    for t, prev in zip(reversed(path[1:]), reversed(path[:-1])):
        if condition.is_conditional:
            eps_hat = cfg_epsilon(denoiser, current.data, t, condition, guidance_scale)
        else:
            eps_hat = denoiser.epsilon(current.data, t, UNCONDITIONAL)
        if trace is not None:
            trace.record(stage, t, eta)
        current = ddim_step(current, prev, eps_hat, eta, schedule, rng)
        if hook is not None:
            current = hook(current)
            if current.step != prev:
                raise ValueError("hook must preserve the state's step")
    return current
