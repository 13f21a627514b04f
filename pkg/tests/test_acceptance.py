"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the line per
criterion. Empirical tolerances are stated inline; golden constants were
measured once on the reference configuration and are frozen here.
"""

import math

import numpy as np
import pytest

import cowdiff.cow as cow_mod
from cowdiff.cow import COWConfig, RegionMask, cow_sample, replace_region, seed_initialize
from cowdiff.denoiser import (UNCONDITIONAL, AnalyticDenoiser, Condition,
                              GaussianMixtureModel, MixtureComponent, TrainingConfig,
                              train_tiny_denoiser)
from cowdiff.diagnostics import (disturb_sweep, merge_sweep, mse, sensitivity_sweep,
                                 summarize)
from cowdiff.sampler import (LatentState, RngStream, ddim_step, denoise_range,
                             forward_noise, invert_step, invert_trajectory)
from cowdiff.schedule import build_linear_schedule, make_subsequence, sigma

# Round-trip relative L2 at S=1000 on the reference 16x16 mixture input,
# measured at first implementation and frozen; later runs may not regress
# by more than 10%.
GOLDEN_ROUND_TRIP_1000 = 5.485117e-3


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d}: {name}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def default_schedule():
    return make_subsequence(build_linear_schedule(1000, 1e-4, 0.02), 50)


def structured_mixture():
    return GaussianMixtureModel((
        MixtureComponent(0.5, "xgrad:-0.8,0.8", 0.04, label="ramp"),
        MixtureComponent(0.5, "checker:-0.5,0.5,4", 0.04, label="check"),
    ))


def monotone(rows, direction: str) -> bool:
    """Non-strict monotonicity of the seed means within one standard error."""
    for a, b in zip(rows, rows[1:]):
        tol = max(a.stderr, b.stderr)
        if direction == "non-increasing" and b.mean > a.mean + tol:
            return False
        if direction == "non-decreasing" and b.mean < a.mean - tol:
            return False
    return True


def test_criterion_01_golden_equation_values():
    pair = build_linear_schedule(2, 0.1, 0.1)  # alpha_bars [1, 0.9, 0.81]

    ddim = ddim_step(LatentState(np.array([[1.0]]), 2), 1, np.array([[0.5]]), 0.0, pair)
    inv = invert_step(LatentState(np.array([[1.0]]), 1), 2, np.array([[0.5]]), pair)
    sig = sigma(pair, 2, 1, 1.0)

    class ZeroRng:
        def normal(self, shape):
            return np.zeros(shape)

    fwd = forward_noise(LatentState(np.array([[1.0]]), 1), 2, pair, ZeroRng())
    checks = [
        abs(ddim.data[0, 0] - 0.982473) < 1e-6,
        abs(inv.data[0, 0] - 1.016628) < 1e-6,
        abs(sig - 0.229416) < 1e-6,
        abs(fwd.data[0, 0] - 0.948683) < 1e-6,
    ]
    _report(1, "golden equation values at 1e-6 absolute", all(checks))


def test_criterion_02_sigma_identity():
    schedule = default_schedule()
    rng = np.random.default_rng(123)
    ok = True
    for _ in range(100):
        t = int(rng.integers(2, 1001))
        t_prev = int(rng.integers(0, t))
        ab_t, ab_prev = schedule.alpha_bar(t), schedule.alpha_bar(t_prev)
        posterior_std = math.sqrt((1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev))
        got = sigma(schedule, t, t_prev, 1.0)
        if abs(got - posterior_std) > 1e-12 * posterior_std:
            ok = False
            break
    _report(2, "eta=1 sigma equals ancestral posterior std to 1e-12 relative", ok)


def test_criterion_03_round_trip_convergence():
    base = build_linear_schedule(1000, 1e-4, 0.02)
    model = structured_mixture()
    x0 = np.clip(model.sample((16, 16), np.random.default_rng(0)), -1, 1)
    errors = []
    for count in (125, 250, 500, 1000):
        sched = make_subsequence(base, count)
        den = AnalyticDenoiser(model, sched)
        states = invert_trajectory(LatentState(x0, 0), den, UNCONDITIONAL, sched)
        back = denoise_range(states[-1], 0, den, UNCONDITIONAL, 0.0, 0.0, sched)
        errors.append(float(np.linalg.norm(back.data - x0) / np.linalg.norm(x0)))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    no_regression = errors[-1] <= 1.1 * GOLDEN_ROUND_TRIP_1000
    _report(3, "inversion round trip converges, golden threshold holds",
            decreasing and no_regression,
            f"errors={['%.3e' % e for e in errors]}, orders={['%.2f' % o for o in orders]}")


def test_criterion_04_sampling_correctness():
    schedule = default_schedule()
    model = GaussianMixtureModel((
        MixtureComponent(0.7, "constant:0.6", 0.01, label="bright"),
        MixtureComponent(0.3, "constant:-0.6", 0.01, label="dark"),
    ))
    den = AnalyticDenoiser(model, schedule)
    shape = (2, 2)
    n = 10_000
    rng = RngStream(2024)
    finals = np.empty((n,) + shape)
    for i in range(n):
        state = LatentState(rng.normal(shape), 1000)
        finals[i] = denoise_range(state, 0, den, UNCONDITIONAL, 1.0, 0.0, schedule,
                                  rng).data
    canvas_means = finals.mean(axis=(1, 2))
    occupancy = float((canvas_means > 0).mean())
    occ_ok = abs(occupancy - 0.7) < 0.02

    mean_ok = True
    detail = [f"occ={occupancy:.4f}"]
    for target, sel in ((0.6, canvas_means > 0), (-0.6, canvas_means <= 0)):
        vals = finals[sel]
        got = float(vals.mean())
        se = float(vals.std()) / math.sqrt(vals.size)
        detail.append(f"mean[{target:+.1f}]={got:+.4f}±{se:.4f}")
        if abs(got - target) > 3 * se:
            mean_ok = False
    _report(4, "eta=1 sampling: occupancy within 2%, means within 3 se",
            occ_ok and mean_ok, ", ".join(detail))


def _paper_run(seed_val, cycles=60, stride=1, denoiser=None, schedule=None, image=None):
    schedule = schedule or default_schedule()
    denoiser = denoiser or AnalyticDenoiser(structured_mixture(), schedule)
    if image is None:
        image = denoiser.model.sample((8, 8), np.random.default_rng(7), Condition("ramp"))
    cfg = COWConfig(t0=400, t1=500, t2=700, cycles=cycles, canvas_shape=(16, 16),
                    replace_stride=stride)
    mask = RegionMask((4, 4), (8, 8))
    out, trace = cow_sample(image, mask, Condition("ramp"), cfg, denoiser, schedule,
                            RngStream(seed_val))
    return out, trace, mask, image


def test_criterion_05_determinism():
    schedule = default_schedule()
    den = AnalyticDenoiser(structured_mixture(), schedule)
    x = np.random.default_rng(5).normal(size=(8, 8))
    a = denoise_range(LatentState(x, 1000), 0, den, UNCONDITIONAL, 0.0, 0.0, schedule)
    b = denoise_range(LatentState(x, 1000), 0, den, UNCONDITIONAL, 0.0, 0.0, schedule)
    eta0_ok = np.array_equal(a.data, b.data)

    out1, _, _, _ = _paper_run(99)
    out2, _, _, _ = _paper_run(99)
    cow_ok = np.array_equal(out1.data, out2.data)
    _report(5, "eta=0 paths and seeded cow runs are bit-identical", eta0_ok and cow_ok)


def test_criterion_06_one_way_replacement_invariant():
    schedule = default_schedule()
    den = AnalyticDenoiser(structured_mixture(), schedule)
    image = den.model.sample((8, 8), np.random.default_rng(7), Condition("ramp"))
    mask = RegionMask((4, 4), (8, 8))
    rs, cs = mask.slices

    real_replace = cow_mod.replace_region
    violations = []
    replaced = []

    def checking(state, seed):
        out = real_replace(state, seed)
        outside = np.ones(state.shape, dtype=bool)
        outside[rs, cs] = False
        if not np.array_equal(out.data[outside], state.data[outside]):
            violations.append(("outside", state.step))
        if np.max(np.abs(out.data[rs, cs] - seed.region_at(state.step))) != 0.0:
            violations.append(("region", state.step))
        replaced.append(state.step)
        return out

    cow_mod.replace_region = checking
    try:
        cfg = COWConfig(t0=400, t1=500, t2=700, cycles=60, canvas_shape=(16, 16))
        cow_sample(image, mask, Condition("ramp"), cfg, den, schedule, RngStream(1))
    finally:
        cow_mod.replace_region = real_replace
    ok = not violations and len(replaced) == 25 + 60 * 10 + 1
    _report(6, "replacement is bit-exact inside mask, untouched outside", ok,
            f"replacements={len(replaced)}")


def test_criterion_07_pipeline_arithmetic():
    _, trace, _, _ = _paper_run(0)
    _report(7, "paper preset yields exactly 650 denoiser evaluations",
            trace.denoiser_calls == 650, f"calls={trace.denoiser_calls}")


def test_criterion_08_id_preservation_proxy():
    schedule = default_schedule()
    den = AnalyticDenoiser(structured_mixture(), schedule)
    wins = 0
    n = 20
    for seed in range(n):
        gen = np.random.default_rng((seed, 1))
        img = den.model.sample((8, 8), gen, Condition("ramp"))
        out_cow, _, mask, _ = _paper_run((seed, 2), denoiser=den, schedule=schedule,
                                         image=img)
        out_base, _, _, _ = _paper_run((seed, 2), stride=0, denoiser=den,
                                       schedule=schedule, image=img)
        rs, cs = mask.slices
        if mse(out_cow.data[rs, cs], img) < mse(out_base.data[rs, cs], img):
            wins += 1
    # one-sided sign test against p = 1/2
    p_value = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n
    _report(8, "region MSE beats no-replacement baseline (sign test p<0.05)",
            p_value < 0.05, f"wins={wins}/{n}, p={p_value:.2e}")


def test_criterion_09_disturb_monotonicity():
    schedule = default_schedule()
    den = AnalyticDenoiser(
        GaussianMixtureModel((MixtureComponent(1.0, "constant:0.0", 1.0),)), schedule)
    points = disturb_sweep(den, schedule, (8, 8), (16, 16), [100, 200, 300, 400, 500],
                           list(range(10)), duration=100)
    rows = summarize(points)
    ok = monotone(rows, "non-increasing")
    _report(9, "disturb similarity non-increasing in disturb step", ok,
            " ".join(f"{r.x:.0f}:{r.mean:.3f}" for r in rows))


def test_criterion_10_merge_monotonicity():
    schedule = default_schedule()
    den = AnalyticDenoiser(structured_mixture(), schedule)
    points = merge_sweep(den, schedule, (16, 16), [100, 300, 500, 700, 900],
                         list(range(10)))
    rows = summarize(points)
    ok = monotone(rows, "non-decreasing")
    _report(10, "merge contamination non-decreasing in replace step", ok,
            " ".join(f"{r.x:.0f}:{r.mean:.4f}" for r in rows))


def test_criterion_11_condition_sensitivity():
    schedule = default_schedule()
    den = AnalyticDenoiser(GaussianMixtureModel((
        MixtureComponent(0.5, "constant:0.6", 1.0, label="bright"),
        MixtureComponent(0.5, "constant:-0.6", 1.0, label="dark"),
    )), schedule)
    target = Condition("bright")
    runs = 1000
    points = sensitivity_sweep(target, den, schedule, [500, 400, 300, 240, 200],
                               runs=runs, guidance_scale=2.0, duration=100)
    # early injections (large start step) come first along the grid
    rows = summarize(points)[::-1]
    mono_ok = monotone(rows, "non-increasing")

    control = sensitivity_sweep(target, den, schedule, [500], runs=runs,
                                guidance_scale=2.0, duration=0)
    crow = summarize(control)[0]
    control_ok = abs(crow.mean - 0.5) <= 3 * max(crow.stderr, 1e-9)
    _report(11, "condition response non-increasing; zero-window matches weight",
            mono_ok and control_ok,
            " ".join(f"{r.x:.0f}:{r.mean:.3f}" for r in rows)
            + f" | control={crow.mean:.3f}±{crow.stderr:.3f}")


def test_criterion_12_size_effect():
    schedule = default_schedule()
    den = AnalyticDenoiser(structured_mixture(), schedule)
    grid = [20, 60, 100, 200, 300]
    stats = {}
    for shape in ((8, 8), (4, 4)):
        points = disturb_sweep(den, schedule, shape, (16, 16), grid, list(range(10)),
                               duration=100, probe="mixture")
        by_seed = {}
        for p in points:
            by_seed.setdefault(p.replicate, {})[p.x] = p.y
        settles = []
        for curve in by_seed.values():
            settle = 0
            for t in sorted(curve, reverse=True):
                if curve[t] > 0.9:
                    settle = t
                    break
            settles.append(settle)
        # steps elapsed from the noisy end before similarity first exceeds 0.9
        stats[shape] = schedule.total_steps - float(np.mean(settles))
    ok = stats[(8, 8)] <= stats[(4, 4)]
    _report(12, "25%-area region settles no later than 6.25%-area region", ok,
            f"steps-from-top: 25%={stats[(8, 8)]:.0f}, 6.25%={stats[(4, 4)]:.0f}")


def test_criterion_13_tiny_denoiser_cow_smoke():
    schedule = default_schedule()
    rng = np.random.default_rng(13)
    dataset = []
    for label, mu in (("bright", 0.5), ("dark", -0.5)):
        for _ in range(30):
            dataset.append((np.clip(mu + 0.1 * rng.standard_normal((16, 16)), -1, 1),
                            label))
    model = train_tiny_denoiser(dataset, schedule,
                                TrainingConfig(epochs=300, batch_size=32, hidden=96,
                                               learning_rate=2e-3, seed=0))
    assert model.loss_history[-1] < model.loss_history[0]

    cond_img = np.clip(0.5 + 0.1 * np.random.default_rng(77).standard_normal((8, 8)),
                       -1, 1)
    mask = RegionMask((4, 4), (8, 8))
    cfg = COWConfig(t0=400, t1=500, t2=700, cycles=60, canvas_shape=(16, 16),
                    guidance_scale=2.0)
    out1, trace = cow_sample(cond_img, mask, Condition("bright"), cfg, model, schedule,
                             RngStream(3))
    out2, _ = cow_sample(cond_img, mask, Condition("bright"), cfg, model, schedule,
                         RngStream(3))
    deterministic = np.array_equal(out1.data, out2.data)
    calls_ok = trace.denoiser_calls == 650

    seed = seed_initialize(cond_img, mask, cfg, model, UNCONDITIONAL, schedule)
    rs, cs = mask.slices
    state = LatentState(np.random.default_rng(5).normal(size=(16, 16)), 500)
    pasted = replace_region(state, seed)
    one_way_ok = np.max(np.abs(pasted.data[rs, cs] - seed.region_at(500))) == 0.0

    dataset_mean = np.mean([img for img, _ in dataset], axis=0)
    closer = (mse(out1.data[rs, cs], cond_img)
              < mse(out1.data[rs, cs], dataset_mean[rs, cs]))
    _report(13, "trained-denoiser cow run: deterministic, 650 calls, region tracks "
                "condition", deterministic and calls_ok and one_way_ok and closer)
