"""Cyclic one-way diffusion: pixel-preserving region-conditioned generation.

The pipeline plants a visual condition as a high-concentration seed and
diffuses it outward while blocking the reverse flow:

1. compose the condition onto a uniform background and invert the
   composite up the whole subsequence (seed initialization);
2. denoise stochastically from the top step down to t1, overwriting the
   condition region with its inverted crop after every step;
3. run destroy/construct cycles: jump t1 → t2 with fresh noise, then
   denoise t2 → t1 with per-step region replacement;
4. denoise deterministically t1 → t0, paste the region once more at t0
   (identity preservation), and finish t0 → 0.

Replacement is a hard rectangular paste; the cycles themselves are the
harmonization mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import UNCONDITIONAL, Condition, Denoiser
from .sampler import LatentState, RngStream, Trace, denoise_range, forward_noise, invert_trajectory
from .schedule import NoiseSchedule

__all__ = [
    "RegionMask",
    "VisualSeed",
    "COWConfig",
    "compose_seed_canvas",
    "seed_initialize",
    "replace_region",
    "destroy",
    "construct",
    "cow_sample",
]


@dataclass(frozen=True)
class RegionMask:
    """Rectangular region: top-left ``origin`` (row, col) and ``size`` (h, w)."""

    origin: tuple[int, int]
    size: tuple[int, int]

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError("region size must be strictly positive")
        if self.origin[0] < 0 or self.origin[1] < 0:
            raise ValueError("region origin must be non-negative")

    @property
    def slices(self) -> tuple[slice, slice]:
        r, c = self.origin
        h, w = self.size
        return slice(r, r + h), slice(c, c + w)

    def check_fits(self, canvas_shape: tuple[int, ...]) -> None:
        if self.origin[0] + self.size[0] > canvas_shape[0] or \
                self.origin[1] + self.size[1] > canvas_shape[1]:
            raise ValueError(f"region {self.origin}+{self.size} exceeds canvas {canvas_shape[:2]}")


@dataclass(frozen=True)
class VisualSeed:
    """The visual condition, its placement, and the inverted trajectory of
    the composed canvas (step 0 plus every subsequence step)."""

    condition_image: np.ndarray
    mask: RegionMask
    trajectory: tuple[LatentState, ...]

    def __post_init__(self):
        img = np.array(self.condition_image, dtype=np.float64)
        img.setflags(write=False)
        object.__setattr__(self, "condition_image", img)
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        steps = [s.step for s in self.trajectory]
        if steps != sorted(steps) or len(set(steps)) != len(steps):
            raise ValueError("trajectory must be ordered by strictly increasing step")
        object.__setattr__(self, "_by_step", {s.step: s for s in self.trajectory})

    def state_at(self, step: int) -> LatentState:
        try:
            return self._by_step[step]
        except KeyError:
            raise ValueError(f"seed trajectory has no state at step {step}") from None

    def region_at(self, step: int) -> np.ndarray:
        rs, cs = self.mask.slices
        return self.state_at(step).data[rs, cs]


@dataclass(frozen=True)
class COWConfig:
    """Cycle endpoints, per-segment stochasticity, guidance, and layout.

    ``t0 < t1 < t2`` are base-schedule indices that must lie on the
    sampling subsequence. ``replace_stride`` controls how often the
    region is overwritten inside replacement segments (1 = every step;
    0 disables replacement entirely, the ablation baseline). Segment
    arrivals are always replaced when replacement is enabled.
    """

    t0: int
    t1: int
    t2: int
    cycles: int = 60
    eta_pre: float = 1.0
    eta_cycle: float = 1.0
    eta_post: float = 0.0
    guidance_scale: float = 7.5
    background_value: float = 0.0
    canvas_shape: tuple[int, ...] = (16, 16)
    replace_stride: int = 1
    invert_with_condition: bool = False

    def __post_init__(self):
        if not 0 < self.t0 < self.t1 < self.t2:
            raise ValueError("anchors must satisfy 0 < t0 < t1 < t2")
        if self.cycles < 0:
            raise ValueError("cycle count must be non-negative")
        if self.guidance_scale < 0:
            raise ValueError("guidance scale must be non-negative")
        if not -1.0 <= self.background_value <= 1.0:
            raise ValueError("background value must lie in [-1, 1]")
        if self.replace_stride < 0:
            raise ValueError("replace_stride must be non-negative")
        if min(self.eta_pre, self.eta_cycle, self.eta_post) < 0:
            raise ValueError("eta values must be non-negative")

    def validate_against(self, schedule: NoiseSchedule) -> None:
        sub = set(schedule.subsequence)
        for name, anchor in (("t0", self.t0), ("t1", self.t1), ("t2", self.t2)):
            if anchor not in sub:
                raise ValueError(f"anchor {name}={anchor} is not on the sampling subsequence")
        if self.t2 >= schedule.total_steps:
            raise ValueError("t2 must lie strictly below the top step")

    # Phase bands of the denoising trajectory, as (low, high] base steps.
    def chaos_band(self, schedule: NoiseSchedule) -> tuple[int, int]:
        return (self.t2, schedule.total_steps)

    def semantic_formation_band(self) -> tuple[int, int]:
        return (self.t1, self.t2)

    def quality_boosting_band(self) -> tuple[int, int]:
        return (0, self.t1)


def compose_seed_canvas(condition_image: np.ndarray, mask: RegionMask,
                        canvas_shape: tuple[int, ...], background_value: float) -> LatentState:
    """Stick the condition onto a uniform background canvas at step 0."""
    condition_image = np.asarray(condition_image, dtype=np.float64)
    mask.check_fits(canvas_shape)
    if condition_image.shape[:2] != mask.size:
        raise ValueError(f"condition image {condition_image.shape[:2]} does not match "
                         f"mask size {mask.size}")
    if condition_image.shape[2:] != tuple(canvas_shape[2:]):
        raise ValueError("condition image and canvas disagree on channels")
    if not -1.0 <= background_value <= 1.0:
        raise ValueError("background value must lie in [-1, 1]")
    canvas = np.full(canvas_shape, background_value, dtype=np.float64)
    rs, cs = mask.slices
    canvas[rs, cs] = condition_image
    return LatentState(canvas, 0)


def seed_initialize(condition_image: np.ndarray, mask: RegionMask, config: COWConfig,
                    denoiser: Denoiser, inversion_condition: Condition,
                    schedule: NoiseSchedule) -> VisualSeed:
    """Compose the seed canvas and invert it up the whole subsequence.

    The top trajectory state is the denoising start point; every stored
    state supplies the replacement crop for its step.
    """
    x0 = compose_seed_canvas(condition_image, mask, config.canvas_shape,
                             config.background_value)
    states = invert_trajectory(x0, denoiser, inversion_condition, schedule)
    return VisualSeed(condition_image, mask, (x0, *states))


def replace_region(state: LatentState, seed: VisualSeed) -> LatentState:
    """Overwrite the mask region with the seed trajectory crop at this step."""
    crop = seed.region_at(state.step)
    data = np.array(state.data)
    rs, cs = seed.mask.slices
    data[rs, cs] = crop
    return LatentState(data, state.step)


def destroy(state: LatentState, config: COWConfig, schedule: NoiseSchedule,
            rng: RngStream) -> LatentState:
    """Jump t1 → t2 with fresh noise, clearing space for the next construct."""
    if state.step != config.t1:
        raise ValueError(f"destroy starts at t1={config.t1}, state is at {state.step}")
    return forward_noise(state, config.t2, schedule, rng)


def _replacement_hook(seed: VisualSeed, stride: int, arrival_step: int):
    """Per-step hook: paste every ``stride``-th step and always at arrival."""
    if stride == 0:
        return None
    counter = {"i": 0}

    def hook(state: LatentState) -> LatentState:
        counter["i"] += 1
        if state.step == arrival_step or counter["i"] % stride == 0:
            return replace_region(state, seed)
        return state

    return hook


def construct(state: LatentState, seed: VisualSeed, config: COWConfig, denoiser: Denoiser,
              condition: Condition, schedule: NoiseSchedule, rng: RngStream,
              trace: Trace | None = None, stage: str = "construct") -> LatentState:
    """Denoise t2 → t1 with the region overwritten after every step."""
    if state.step != config.t2:
        raise ValueError(f"construct starts at t2={config.t2}, state is at {state.step}")
    return denoise_range(state, config.t1, denoiser, condition, config.eta_cycle,
                         config.guidance_scale, schedule, rng,
                         hook=_replacement_hook(seed, config.replace_stride, config.t1),
                         trace=trace, stage=stage)


def cow_sample(condition_image: np.ndarray, mask_or_placement, condition: Condition,
               config: COWConfig, denoiser: Denoiser, schedule: NoiseSchedule,
               rng: RngStream) -> tuple[LatentState, Trace]:
    """Run the full pipeline; returns the step-0 state and the run trace.

    ``mask_or_placement`` is a :class:`RegionMask` or a (row, col) origin,
    with the region size taken from the condition image. The trace holds
    one record per noise prediction made while denoising (seed inversion
    is preparation and is not counted).
    """
    condition_image = np.asarray(condition_image, dtype=np.float64)
    if isinstance(mask_or_placement, RegionMask):
        mask = mask_or_placement
    else:
        mask = RegionMask(tuple(mask_or_placement), condition_image.shape[:2])
    config.validate_against(schedule)

    inversion_condition = condition if config.invert_with_condition else UNCONDITIONAL
    seed = seed_initialize(condition_image, mask, config, denoiser,
                           inversion_condition, schedule)
    trace = Trace()
    top = seed.trajectory[-1]

    state = denoise_range(top, config.t1, denoiser, condition, config.eta_pre,
                          config.guidance_scale, schedule, rng,
                          hook=_replacement_hook(seed, config.replace_stride, config.t1),
                          trace=trace, stage="pre")
    for i in range(config.cycles):
        state = destroy(state, config, schedule, rng)
        state = construct(state, seed, config, denoiser, condition, schedule, rng,
                          trace=trace, stage=f"construct_{i}")
    state = denoise_range(state, config.t0, denoiser, condition, config.eta_post,
                          config.guidance_scale, schedule, rng,
                          trace=trace, stage="boost")
    if config.replace_stride > 0:
        state = replace_region(state, seed)
    state = denoise_range(state, 0, denoiser, condition, config.eta_post,
                          config.guidance_scale, schedule, rng,
                          trace=trace, stage="final")
    return state, trace
