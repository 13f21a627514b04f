"""Command-line surface.

Subcommands: ``train``, ``sample``, ``invert``, ``cow``, and
``diagnose merge|disturb|sensitivity``. Every run is configured by a flat
key=value file plus the universal flags ``--config``, ``--seed``,
``--out`` (flags override file keys), and emits a ``manifest.txt``
echoing every resolved parameter so the run can be reproduced from one
file. Exit status is 0 iff all declared outputs were written.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import REQUIRED, parse_bool, parse_float_list, parse_int_pair, parse_shape
from .cow import COWConfig, RegionMask, cow_sample
from .denoiser import (UNCONDITIONAL, AnalyticDenoiser, Condition, TrainingConfig,
                       load_denoiser, load_mixture_spec, save_denoiser,
                       train_tiny_denoiser)
from .diagnostics import (disturb_sweep, merge_and_regenerate, merge_sweep,
                          nearest_subsequence_step, sensitivity_sweep, summarize,
                          write_curve_csv)
from .fileio import load_dataset, read_canvas, write_image, write_tensor
from .sampler import LatentState, RngStream, Trace, denoise_range, invert_trajectory
from .schedule import PRESETS, NoiseSchedule, build_linear_schedule, make_subsequence

_COMMON = {
    "seed": (int, 0),
    "out": (str, "run"),
    "schedule": (str, "default"),
    "sample_steps": (int, 50),
}

_DENOISER = {
    "mixture": (str, ""),
    "model": (str, ""),
}

_SCHEMAS: dict[str, dict] = {
    "train": {
        **_COMMON,
        "dataset": (str, REQUIRED),
        "epochs": (int, 200),
        "batch_size": (int, 32),
        "hidden": (int, 128),
        "learning_rate": (float, 1e-3),
        "cond_dropout": (float, 0.15),
    },
    "sample": {
        **_COMMON, **_DENOISER,
        "canvas": (parse_shape, (16, 16)),
        "init": (str, ""),
        "condition": (str, ""),
        "guidance": (float, 7.5),
        "eta": (float, 1.0),
    },
    "invert": {
        **_COMMON, **_DENOISER,
        "input": (str, REQUIRED),
        "condition": (str, ""),
    },
    "cow": {
        **_COMMON, **_DENOISER,
        "image": (str, REQUIRED),
        "canvas": (parse_shape, (16, 16)),
        "mask_origin": (parse_int_pair, (0, 0)),
        "mask_size": (str, ""),
        "background": (float, 0.0),
        "t0_pos": (int, 20),
        "t1_pos": (int, 25),
        "t2_pos": (int, 35),
        "cycles": (int, 60),
        "eta_pre": (float, 1.0),
        "eta_cycle": (float, 1.0),
        "eta_post": (float, 0.0),
        "guidance": (float, 7.5),
        "condition": (str, ""),
        "replace_stride": (int, 1),
        "invert_with_condition": (parse_bool, False),
    },
    "diagnose-merge": {
        **_COMMON, **_DENOISER,
        "canvas": (parse_shape, (16, 16)),
        "grid": (parse_float_list, (0.1, 0.3, 0.5, 0.7, 0.9)),
        "replicates": (int, 10),
        "layout": (str, "top"),
    },
    "diagnose-disturb": {
        **_COMMON, **_DENOISER,
        "region": (parse_shape, (8, 8)),
        "canvas": (parse_shape, (16, 16)),
        "grid": (parse_float_list, (0.1, 0.3, 0.5, 0.7, 0.9)),
        "replicates": (int, 10),
        "duration": (int, 0),
    },
    "diagnose-sensitivity": {
        **_COMMON, **_DENOISER,
        "target": (str, REQUIRED),
        "canvas": (parse_shape, (8, 8)),
        "grid": (parse_float_list, (0.5, 0.4, 0.3, 0.24, 0.2)),
        "runs": (int, 1000),
        "guidance": (float, 2.0),
        "duration": (int, 0),
    },
}


def _build_schedule(cfg: dict) -> NoiseSchedule:
    spec = cfg["schedule"]
    if spec in PRESETS:
        total, b0, b1 = PRESETS[spec]
    elif spec.startswith("linear:"):
        parts = spec.split(":")
        if len(parts) != 4:
            raise ValueError(f"schedule spec must be linear:T:BETA0:BETA1, got {spec!r}")
        total, b0, b1 = int(parts[1]), float(parts[2]), float(parts[3])
    else:
        raise ValueError(f"unknown schedule {spec!r} (presets: {sorted(PRESETS)})")
    return make_subsequence(build_linear_schedule(total, b0, b1), cfg["sample_steps"])


def _load_run_denoiser(cfg: dict, schedule: NoiseSchedule):
    if bool(cfg["mixture"]) == bool(cfg["model"]):
        raise ValueError("exactly one of 'mixture' and 'model' must be set")
    if cfg["mixture"]:
        return AnalyticDenoiser(load_mixture_spec(cfg["mixture"]), schedule)
    model = load_denoiser(cfg["model"])
    if model.total_steps != schedule.total_steps:
        raise ValueError(f"model was trained for T={model.total_steps}, "
                         f"schedule has T={schedule.total_steps}")
    return model


def _condition(cfg: dict) -> Condition:
    return Condition(cfg["condition"]) if cfg.get("condition") else UNCONDITIONAL


def _position_to_step(schedule: NoiseSchedule, pos: int) -> int:
    if not 1 <= pos <= len(schedule.subsequence):
        raise ValueError(f"subsequence position {pos} outside "
                         f"[1, {len(schedule.subsequence)}]")
    return schedule.subsequence[pos - 1]


def cmd_train(cfg: dict, out: Path) -> dict:
    schedule = _build_schedule(cfg)
    dataset = load_dataset(cfg["dataset"])
    train_cfg = TrainingConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                               hidden=cfg["hidden"], learning_rate=cfg["learning_rate"],
                               cond_dropout=cfg["cond_dropout"], seed=cfg["seed"])
    model = train_tiny_denoiser(dataset, schedule, train_cfg)
    model_path = out / "model.bin"
    save_denoiser(model, model_path)
    loss_path = out / "loss.csv"
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(model.loss_history):
            writer.writerow([epoch, repr(loss)])
    return {"model_file": model_path, "loss_file": loss_path,
            "epochs_run": len(model.loss_history),
            "final_loss": model.loss_history[-1] if model.loss_history else ""}


def cmd_sample(cfg: dict, out: Path) -> dict:
    schedule = _build_schedule(cfg)
    denoiser = _load_run_denoiser(cfg, schedule)
    rng = RngStream(cfg["seed"])
    top = schedule.subsequence[-1]
    if cfg["init"]:
        state = LatentState(read_canvas(cfg["init"]), top)
    else:
        state = LatentState(rng.normal(cfg["canvas"]), top)
    trace = Trace()
    result = denoise_range(state, 0, denoiser, _condition(cfg), cfg["eta"],
                           cfg["guidance"], schedule, rng, trace=trace, stage="sample")
    write_tensor(out / "sample.cnvt", result.data)
    write_image(out / "sample.png", result.data)
    trace.write_csv(out / "trace.csv")
    return {"sample_file": out / "sample.cnvt", "image_file": out / "sample.png",
            "trace_file": out / "trace.csv", "denoiser_calls": trace.denoiser_calls}


def cmd_invert(cfg: dict, out: Path) -> dict:
    schedule = _build_schedule(cfg)
    denoiser = _load_run_denoiser(cfg, schedule)
    image = read_canvas(cfg["input"])
    trace = Trace()
    states = invert_trajectory(LatentState(image, 0), denoiser, _condition(cfg),
                               schedule, trace=trace, stage="invert")
    write_tensor(out / "inverted.cnvt", states[-1].data)
    write_image(out / "inverted.png", np.clip(states[-1].data, -1.0, 1.0))
    trace.write_csv(out / "trace.csv")
    return {"inverted_file": out / "inverted.cnvt", "trace_file": out / "trace.csv",
            "top_step": states[-1].step, "denoiser_calls": trace.denoiser_calls}


def cmd_cow(cfg: dict, out: Path) -> dict:
    schedule = _build_schedule(cfg)
    denoiser = _load_run_denoiser(cfg, schedule)
    image = read_canvas(cfg["image"])
    cow_cfg = COWConfig(
        t0=_position_to_step(schedule, cfg["t0_pos"]),
        t1=_position_to_step(schedule, cfg["t1_pos"]),
        t2=_position_to_step(schedule, cfg["t2_pos"]),
        cycles=cfg["cycles"], eta_pre=cfg["eta_pre"], eta_cycle=cfg["eta_cycle"],
        eta_post=cfg["eta_post"], guidance_scale=cfg["guidance"],
        background_value=cfg["background"], canvas_shape=cfg["canvas"],
        replace_stride=cfg["replace_stride"],
        invert_with_condition=cfg["invert_with_condition"])
    if cfg["mask_size"]:
        declared = parse_shape(cfg["mask_size"])
        if declared != image.shape[:2]:
            raise ValueError(f"mask_size {declared} does not match the condition "
                             f"image {image.shape[:2]}")
    mask = RegionMask(cfg["mask_origin"], image.shape[:2])
    rng = RngStream(cfg["seed"])
    result, trace = cow_sample(image, mask, _condition(cfg), cow_cfg, denoiser,
                               schedule, rng)
    write_tensor(out / "cow.cnvt", result.data)
    write_image(out / "cow.png", np.clip(result.data, -1.0, 1.0))
    trace.write_csv(out / "trace.csv")
    return {"output_file": out / "cow.cnvt", "image_file": out / "cow.png",
            "trace_file": out / "trace.csv", "denoiser_calls": trace.denoiser_calls,
            "t0": cow_cfg.t0, "t1": cow_cfg.t1, "t2": cow_cfg.t2}


def _grid_steps(schedule: NoiseSchedule, fractions) -> list[int]:
    return [nearest_subsequence_step(schedule, f * schedule.total_steps) for f in fractions]


def cmd_diagnose(experiment: str, cfg: dict, out: Path) -> dict:
    schedule = _build_schedule(cfg)
    denoiser = _load_run_denoiser(cfg, schedule)
    if not isinstance(denoiser, AnalyticDenoiser):
        raise ValueError("diagnose experiments need the analytic mixture denoiser")
    seeds = [cfg["seed"] + i for i in range(cfg.get("replicates", 0))]
    if experiment == "merge":
        grid = _grid_steps(schedule, cfg["grid"])
        points = merge_sweep(denoiser, schedule, cfg["canvas"], grid, seeds,
                             layout=cfg["layout"])
        gen = np.random.default_rng(cfg["seed"])
        control_img = denoiser.model.sample(cfg["canvas"], gen)
        _, cont_a, cont_b = merge_and_regenerate(control_img, control_img, max(grid),
                                                 cfg["layout"], denoiser, schedule)
        extra = {"self_merge_contamination": 0.5 * (cont_a + cont_b)}
    elif experiment == "disturb":
        grid = _grid_steps(schedule, cfg["grid"])
        duration = cfg["duration"] or schedule.total_steps // 10
        points = disturb_sweep(denoiser, schedule, cfg["region"], cfg["canvas"],
                               grid, seeds, duration=duration)
        extra = {"duration": duration}
    elif experiment == "sensitivity":
        grid = _grid_steps(schedule, cfg["grid"])
        duration = cfg["duration"] or schedule.total_steps // 10
        points = sensitivity_sweep(Condition(cfg["target"]), denoiser, schedule, grid,
                                   cfg["runs"], guidance_scale=cfg["guidance"],
                                   duration=duration, canvas_shape=cfg["canvas"],
                                   base_seed=cfg["seed"])
        extra = {"duration": duration}
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    csv_path = out / f"{experiment}.csv"
    write_curve_csv(csv_path, points, summarize(points))
    return {"csv_file": csv_path, "data_rows": len(points), **extra}


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="cowdiff",
                                     description="Desk-scale cyclic one-way diffusion engine")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "sample", "invert", "cow"):
        p = sub.add_parser(name)
        _universal_flags(p)
    p = sub.add_parser("diagnose")
    p.add_argument("experiment", choices=["merge", "disturb", "sensitivity"])
    _universal_flags(p)
    return parser.parse_args(argv)


def _universal_flags(parser):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="override the rng seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")


def main(argv=None) -> int:
    args = _parse_args(argv)
    schema_name = args.command
    if args.command == "diagnose":
        schema_name = f"diagnose-{args.experiment}"
    schema = _SCHEMAS[schema_name]

    file_values = cfgmod.load_kv_file(args.config) if args.config else {}
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            print(f"--set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 1
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out

    manifest = {"command": schema_name}
    out = Path(overrides.get("out") or file_values.get("out")
               or schema["out"][1])
    try:
        cfg = cfgmod.resolve_config(schema, file_values, overrides)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        manifest.update(cfg)
        if args.command == "diagnose":
            extra = cmd_diagnose(args.experiment, cfg, out)
        elif args.command == "train":
            extra = cmd_train(cfg, out)
        elif args.command == "sample":
            extra = cmd_sample(cfg, out)
        elif args.command == "invert":
            extra = cmd_invert(cfg, out)
        else:
            extra = cmd_cow(cfg, out)
        manifest.update(extra)
        manifest["status"] = "ok"
        cfgmod.write_manifest(out / "manifest.txt", manifest)
        return 0
    except (ValueError, OSError) as exc:
        manifest["status"] = "failed"
        manifest["error"] = str(exc).replace("\n", " ")
        try:
            out.mkdir(parents=True, exist_ok=True)
            cfgmod.write_manifest(out / "manifest.txt", manifest)
        except OSError:
            pass
        print(f"cowdiff {schema_name}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
