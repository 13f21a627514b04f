"""Desk-scale diffusion sampling engine: DDIM stepping, deterministic ODE
inversion, and a cyclic one-way diffusion pipeline for pixel-preserving
region-conditioned generation, verifiable against closed-form
Gaussian-mixture oracles."""

from .cow import (COWConfig, RegionMask, VisualSeed, compose_seed_canvas, construct,
                  cow_sample, destroy, replace_region, seed_initialize)
from .denoiser import (UNCONDITIONAL, AnalyticDenoiser, Condition, Denoiser,
                       GaussianMixtureModel, MixtureComponent, TinyDenoiser,
                       TrainingConfig, analytic_epsilon, cfg_epsilon, load_denoiser,
                       load_mixture_spec, parse_mixture_spec, render_pattern,
                       save_denoiser, train_tiny_denoiser)
from .diagnostics import (CurvePoint, condition_sensitivity, cosine_similarity,
                          disturb_and_reconstruct, merge_and_regenerate, mse,
                          settle_step, summarize)
from .sampler import (LatentState, RngStream, Trace, TraceRecord, ddim_step,
                      denoise_range, forward_noise, invert_step, invert_trajectory)
from .schedule import (PRESETS, NoiseSchedule, build_linear_schedule, format_table,
                       make_subsequence, sigma)

__version__ = "0.1.0"
