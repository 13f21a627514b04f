"""Probe experiments quantifying how regions of a canvas influence each
other along the denoising trajectory.

* merge_and_regenerate — invert two images to a step, splice half of each
  into one canvas, denoise deterministically, and score each half against
  its own solo reconstruction (contamination).
* disturb_and_reconstruct — plant a partially inverted region into a
  noise canvas, denoise the composite for a while, then let the region
  finish reconstructing alone; similarity to the original measures how
  settled its content already was.
* condition_sensitivity — unconditional generation with a short window
  of conditional guidance; the component posterior of the final sample
  measures how much the window steered it.

Sweeps aggregate replicates into seed-averaged curves; monotonicity
claims are asserted on those averages, never on single runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .denoiser import UNCONDITIONAL, AnalyticDenoiser, Condition, cfg_epsilon
from .sampler import LatentState, RngStream, ddim_step, denoise_range, invert_trajectory
from .schedule import NoiseSchedule

__all__ = [
    "CurvePoint",
    "SummaryRow",
    "mse",
    "cosine_similarity",
    "merge_and_regenerate",
    "disturb_and_reconstruct",
    "condition_sensitivity",
    "merge_sweep",
    "disturb_sweep",
    "sensitivity_sweep",
    "summarize",
    "settle_step",
    "write_curve_csv",
    "nearest_subsequence_step",
]

LAYOUTS = ("top", "bottom", "left", "right")


@dataclass(frozen=True)
class CurvePoint:
    """One experiment observation: parameter value, metric value, replicate id."""

    x: float
    y: float
    replicate: int

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise ValueError("metric value must be finite")


@dataclass(frozen=True)
class SummaryRow:
    x: float
    mean: float
    stderr: float
    n: int


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for all-zero input")
    return float(a @ b) / (na * nb)


def nearest_subsequence_step(schedule: NoiseSchedule, target: float) -> int:
    """Subsequence step (or 0) closest to a real-valued target step."""
    candidates = np.array((0,) + schedule.subsequence)
    return int(candidates[np.argmin(np.abs(candidates - target))])


def _half_slices(shape: tuple[int, ...], layout: str) -> tuple[tuple[slice, slice], tuple[slice, slice]]:
    """Slices for (image_a's half, image_b's half) under the layout."""
    h, w = shape[0], shape[1]
    full = slice(None)
    if layout == "top":
        return (slice(0, h // 2), full), (slice(h // 2, h), full)
    if layout == "bottom":
        return (slice(h // 2, h), full), (slice(0, h // 2), full)
    if layout == "left":
        return (full, slice(0, w // 2)), (full, slice(w // 2, w))
    if layout == "right":
        return (full, slice(w // 2, w)), (full, slice(0, w // 2))
    raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")


def _state_at(trajectory: Sequence[LatentState], step: int) -> LatentState:
    for state in trajectory:
        if state.step == step:
            return state
    raise ValueError(f"no trajectory state at step {step}")


def merge_and_regenerate(image_a: np.ndarray, image_b: np.ndarray, replace_step: int,
                         layout: str, denoiser, schedule: NoiseSchedule,
                         ) -> tuple[np.ndarray, float, float]:
    """Splice two inverted images at ``replace_step`` and denoise to 0.

    Returns (final canvas, contamination_a, contamination_b): per-half MSE
    of the composite reconstruction against each source's solo
    reconstruction through the same round trip. Fully deterministic.
    """
    image_a = np.asarray(image_a, dtype=np.float64)
    image_b = np.asarray(image_b, dtype=np.float64)
    if image_a.shape != image_b.shape:
        raise ValueError("images must share one shape")
    sl_a, sl_b = _half_slices(image_a.shape, layout)
    if replace_step == 0:
        composite = np.array(image_a)
        composite[sl_b] = image_b[sl_b]
        return composite, 0.0, 0.0
    solos = []
    inverted = []
    for img in (image_a, image_b):
        traj = invert_trajectory(LatentState(img, 0), denoiser, UNCONDITIONAL, schedule)
        state_t = _state_at(traj, replace_step)
        inverted.append(state_t)
        solo = denoise_range(state_t, 0, denoiser, UNCONDITIONAL, 0.0, 0.0, schedule)
        solos.append(solo.data)
    composite = np.array(inverted[0].data)
    composite[sl_b] = inverted[1].data[sl_b]
    final = denoise_range(LatentState(composite, replace_step), 0, denoiser,
                          UNCONDITIONAL, 0.0, 0.0, schedule)
    cont_a = mse(final.data[sl_a], solos[0][sl_a])
    cont_b = mse(final.data[sl_b], solos[1][sl_b])
    return final.data, cont_a, cont_b


def disturb_and_reconstruct(image: np.ndarray, t: int, duration: int,
                            canvas_shape: tuple[int, ...], denoiser,
                            schedule: NoiseSchedule, rng: RngStream,
                            eta_window: float = 1.0, replicate: int = 0) -> CurvePoint:
    """Disturb a region's reconstruction at step ``t`` and measure recovery.

    The region image is inverted to ``t`` and planted centered in a
    Gaussian-noise canvas at step t (a gray canvas forward-noised to t,
    so the surround is plausible for that step). The composite is
    denoised stochastically for ``duration`` base steps — the same
    sampler the disturbance would meet in a real run — then the region
    continues its reconstruction alone, deterministically, to 0. Returns
    the cosine similarity to the original as a curve point at ``x = t``.
    """
    image = np.asarray(image, dtype=np.float64)
    if t - duration < 0:
        raise ValueError("disturb window extends below step 0")
    rh, rw = image.shape[0], image.shape[1]
    if rh > canvas_shape[0] or rw > canvas_shape[1]:
        raise ValueError("region does not fit the canvas")
    r0 = (canvas_shape[0] - rh) // 2
    c0 = (canvas_shape[1] - rw) // 2
    region = (slice(r0, r0 + rh), slice(c0, c0 + rw))

    if t == 0:
        return CurvePoint(0.0, cosine_similarity(image, image), replicate)
    traj = invert_trajectory(LatentState(image, 0), denoiser, UNCONDITIONAL, schedule)
    region_t = _state_at(traj, t)

    canvas = math.sqrt(1.0 - schedule.alpha_bar(t)) * rng.normal(tuple(canvas_shape))
    canvas[region] = region_t.data
    settle = nearest_subsequence_step(schedule, t - duration)
    if settle < t:
        composite = denoise_range(LatentState(canvas, t), settle, denoiser,
                                  UNCONDITIONAL, eta_window, 0.0, schedule, rng)
        region_out = composite.data[region]
        start = settle
    else:
        region_out = canvas[region]
        start = t
    if start > 0:
        solo = denoise_range(LatentState(region_out, start), 0, denoiser,
                             UNCONDITIONAL, 0.0, 0.0, schedule)
        region_out = solo.data
    return CurvePoint(float(t), cosine_similarity(region_out, image), replicate)


def condition_sensitivity(target: Condition, injection_start: int, injection_duration: int,
                          guidance_scale: float, denoiser: AnalyticDenoiser,
                          schedule: NoiseSchedule, rng: RngStream,
                          canvas_shape: tuple[int, ...] = (8, 8),
                          eta: float = 0.0, replicate: int = 0) -> CurvePoint:
    """Full generation with a short conditional-guidance window.

    The window covers base steps in (start − duration, start]; everything
    else runs unconditionally. The default η = 0 keeps the trajectory
    deterministic outside the random start canvas, so the measured effect
    is the window's alone rather than what later noise injection leaves
    of it. The response is the mixture posterior probability that the
    final sample belongs to the target label — a desk-scale stand-in for
    an encoder similarity score.
    """
    if not target.is_conditional:
        raise ValueError("condition_sensitivity needs a categorical target")
    if not isinstance(denoiser, AnalyticDenoiser):
        raise ValueError("condition response is defined by the analytic mixture posterior")
    total = schedule.total_steps
    if not (0 <= injection_start <= total and injection_duration >= 0):
        raise ValueError("injection window must lie within [0, T]")
    anchors = (0,) + schedule.subsequence
    state = LatentState(rng.normal(tuple(canvas_shape)), total)
    lo = injection_start - injection_duration
    for t, prev in zip(reversed(anchors[1:]), reversed(anchors[:-1])):
        if lo < t <= injection_start:
            eps = cfg_epsilon(denoiser, state.data, t, target, guidance_scale)
        else:
            eps = denoiser.epsilon(state.data, t, UNCONDITIONAL)
        state = ddim_step(state, prev, eps, eta, schedule, rng)
    response = denoiser.model.label_posterior(state.data, target.label)
    return CurvePoint(float(injection_start), response, replicate)


# ---------------------------------------------------------------------------
# sweeps

def smooth_field(shape: tuple[int, ...], gen: np.random.Generator,
                 scale: float = 0.5, knots: int = 3) -> np.ndarray:
    """Zero-mean smooth random field: bilinear upsampling of a coarse
    Gaussian grid, normalized to the given standard deviation.

    Probe images for the influence experiments are drawn from a far
    richer family than the mixture itself, matching the real setting
    where no single sample is an attractor of the denoiser.
    """
    coarse = gen.standard_normal((knots, knots))
    rows = np.linspace(0.0, knots - 1.0, shape[0])
    cols = np.linspace(0.0, knots - 1.0, shape[1])
    r0 = np.clip(rows.astype(int), 0, knots - 2)
    c0 = np.clip(cols.astype(int), 0, knots - 2)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    a = coarse[r0][:, c0]
    b = coarse[r0][:, c0 + 1]
    d = coarse[r0 + 1][:, c0]
    e = coarse[r0 + 1][:, c0 + 1]
    field = a * (1 - fr) * (1 - fc) + b * (1 - fr) * fc + d * fr * (1 - fc) + e * fr * fc
    field = field - field.mean()
    std = float(field.std())
    field = field / std * scale if std > 0 else field
    if len(shape) == 3:
        field = np.broadcast_to(field[..., None], shape).copy()
    return field


def _probe_image(probe: str, shape: tuple[int, ...], denoiser: AnalyticDenoiser,
                 gen: np.random.Generator) -> np.ndarray:
    if probe == "field":
        return smooth_field(shape, gen)
    if probe == "mixture":
        return denoiser.model.sample(tuple(shape), gen)
    raise ValueError(f"probe must be 'field' or 'mixture', got {probe!r}")


def merge_sweep(denoiser: AnalyticDenoiser, schedule: NoiseSchedule,
                canvas_shape: tuple[int, ...], grid: Sequence[int], seeds: Sequence[int],
                layout: str = "top", probe: str = "field") -> list[CurvePoint]:
    """Contamination (mean of both halves) over a replace-step grid.

    Each replicate draws a fresh probe-image pair; the regeneration
    itself is deterministic.
    """
    points = []
    for seed in seeds:
        gen = np.random.default_rng(seed)
        image_a = _probe_image(probe, canvas_shape, denoiser, gen)
        image_b = _probe_image(probe, canvas_shape, denoiser, gen)
        for t in grid:
            _, cont_a, cont_b = merge_and_regenerate(image_a, image_b, t, layout,
                                                     denoiser, schedule)
            points.append(CurvePoint(float(t), 0.5 * (cont_a + cont_b), seed))
    return points


def disturb_sweep(denoiser: AnalyticDenoiser, schedule: NoiseSchedule,
                  region_shape: tuple[int, ...], canvas_shape: tuple[int, ...],
                  grid: Sequence[int], seeds: Sequence[int],
                  duration: int | None = None, probe: str = "field") -> list[CurvePoint]:
    """Recovery similarity over a disturb-step grid.

    One probe image per replicate; within a replicate every grid point
    reuses the same background and disturbance noise (common random
    numbers), so curves are paired across the grid. Duration defaults to
    10% of the base chain.
    """
    if duration is None:
        duration = schedule.total_steps // 10
    points = []
    for seed in seeds:
        image = _probe_image(probe, region_shape,
                             denoiser, np.random.default_rng(seed))
        for t in grid:
            stream = RngStream(np.random.SeedSequence((int(seed), 1)))
            pt = disturb_and_reconstruct(image, t, min(duration, t), canvas_shape,
                                         denoiser, schedule, stream, replicate=seed)
            points.append(pt)
    return points


def sensitivity_sweep(target: Condition, denoiser: AnalyticDenoiser,
                      schedule: NoiseSchedule, grid: Sequence[int], runs: int,
                      guidance_scale: float = 2.0, duration: int | None = None,
                      canvas_shape: tuple[int, ...] = (8, 8), eta: float = 0.0,
                      base_seed: int = 0) -> list[CurvePoint]:
    """Condition response over an injection-start grid, ``runs`` replicates each."""
    if duration is None:
        duration = schedule.total_steps // 10
    points = []
    for start in grid:
        for r in range(runs):
            stream = RngStream(np.random.SeedSequence((base_seed, int(start), r)))
            pt = condition_sensitivity(target, start, duration, guidance_scale,
                                       denoiser, schedule, stream,
                                       canvas_shape=canvas_shape, eta=eta, replicate=r)
            points.append(pt)
    return points


def summarize(points: Sequence[CurvePoint]) -> list[SummaryRow]:
    """Seed-averaged curve: mean, standard error, and count per parameter value."""
    rows = []
    for x in sorted({p.x for p in points}):
        ys = np.array([p.y for p in points if p.x == x])
        stderr = float(ys.std(ddof=1) / math.sqrt(ys.size)) if ys.size > 1 else 0.0
        rows.append(SummaryRow(x, float(ys.mean()), stderr, int(ys.size)))
    return rows


def settle_step(rows: Sequence[SummaryRow], threshold: float = 0.9) -> int | None:
    """Largest grid step whose seed-mean similarity still exceeds the threshold.

    Scanning the grid in the order the denoising process encounters it
    (decreasing step), this is where the curve first crosses the
    threshold — the point at which the content is already settled.
    """
    for row in sorted(rows, key=lambda r: -r.x):
        if row.mean > threshold:
            return int(row.x)
    return None


def write_curve_csv(path, points: Sequence[CurvePoint],
                    summaries: Sequence[SummaryRow] | None = None) -> None:
    """One CSV holding the data rows and, below them, the summary rows.

    Data rows fill (parameter, metric, replicate); summary rows fill
    (parameter, mean, stderr, n).
    """
    if summaries is None:
        summaries = summarize(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "metric", "replicate", "mean", "stderr", "n"])
        for p in points:
            writer.writerow([repr(p.x), repr(p.y), p.replicate, "", "", ""])
        for s in summaries:
            writer.writerow([repr(s.x), "", "", repr(s.mean), repr(s.stderr), s.n])
