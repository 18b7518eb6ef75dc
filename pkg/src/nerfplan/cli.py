"""Command-line entry point wiring all pipeline stages.

Verbs: segment, sample-plan, profile, plan, simulate, report. Structured
output is JSON (CSV for experiment matrices); logging goes to stderr and
stdout carries only requested data. Exit codes: 0 success, 1 domain
error (machine-readable JSON on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .core import (
    DEVICE_PRESETS,
    DeviceBudget,
    NerfplanError,
    device_preset,
    load_scene,
    read_json,
    save_plan,
    validate_scene,
    write_json,
)
from ._parallel import parallel_map

log = logging.getLogger("nerfplan")


def _parse_canvas(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"canvas must look like 800x600, got {text!r}")


def _parse_solvers(text: str) -> tuple[str, ...]:
    from .selector import SOLVERS

    names = tuple(s.strip() for s in text.split(",") if s.strip())
    for name in names:
        if name not in SOLVERS:
            raise argparse.ArgumentTypeError(f"unknown solver {name!r}; known: {sorted(SOLVERS)}")
    if not names:
        raise argparse.ArgumentTypeError("at least one solver required")
    return names


def _budget_from_args(args: argparse.Namespace) -> DeviceBudget:
    if args.device is not None:
        return device_preset(args.device)
    return DeviceBudget(name="custom", capacity_mb=args.budget_mb)


def _add_budget_flags(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--device", choices=sorted(DEVICE_PRESETS),
        help="device preset supplying the memory budget",
    )
    group.add_argument(
        "--budget-mb", type=float, help="memory budget in MB (alternative to --device)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerfplan",
        description="Plan per-object rendering configurations under a device memory budget.",
    )
    parser.add_argument("--version", action="version", version=f"nerfplan {__version__}")
    parser.add_argument(
        "-q", "--quiet", action="store_true", help="only log errors to stderr"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log debug detail to stderr"
    )
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser(
        "segment",
        help="score per-object spectral detail and extract training crops",
        description="Score detail frequency per object across training images, apply the "
        "threshold rule, and optionally write rescaled per-object crops.",
    )
    p.add_argument("--images", required=True, help="directory of <image_id>.ppm/.pgm files "
                   "with <image_id>.<object_id>.mask.pgm masks")
    p.add_argument("--scene", help="scene.json declaring object ids (masks for unknown ids fail)")
    p.add_argument("--out", required=True, help="output segments.json path")
    p.add_argument("--crops-dir", help="directory for per-object crop images (selected objects)")
    p.add_argument("--canvas", type=_parse_canvas, metavar="WxH",
                   help="crop canvas size (default: each source image's own size)")
    p.add_argument("--energy-fraction", type=float, default=0.95,
                   help="spectral energy fraction defining the detail frequency (default 0.95)")
    p.add_argument("--threshold-mode", choices=["auto_min", "fixed"], default="auto_min",
                   help="auto_min selects every object; fixed uses --threshold strictly")
    p.add_argument("--threshold", type=float,
                   help="frequency threshold (cycles/pixel), required with fixed mode")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser(
        "sample-plan",
        help="emit the variable-step sampling plan for each object",
        description="Generate the variable-step (g, p) sampling plan for every object "
        "in the scene.",
    )
    p.add_argument("--scene", required=True, help="scene.json with per-object config spaces")
    p.add_argument("--out", required=True, help="output plans.json path")
    p.add_argument("--step-multiplier", type=float, default=2.0,
                   help="g step as a multiple of the previous sample (default 2)")
    p.set_defaults(func=cmd_sample_plan)

    p = sub.add_parser(
        "profile",
        help="fit size/quality surface models from measured samples",
        description="Fit the closed-form size and quality surfaces per object from "
        "samples.json and write profiles.json.",
    )
    p.add_argument("--samples", required=True, help="samples.json with per-object observations")
    p.add_argument("--out", required=True, help="output profiles.json path")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser(
        "plan",
        help="select per-object configs maximizing quality under the budget",
        description="Solve the budgeted configuration selection problem over fitted "
        "profiles and write plan.json plus a human-readable table.",
    )
    p.add_argument("--profiles", required=True, help="profiles.json from the profile verb")
    _add_budget_flags(p)
    p.add_argument("--unit-mb", type=float, default=1.0,
                   help="size quantization unit in MB (default 1.0)")
    p.add_argument("--solver", choices=["dp", "fairness", "greedy", "oracle"], default="dp",
                   help="selection algorithm (default dp)")
    p.add_argument("--strict-filter", action="store_true",
                   help="drop configs whose size equals the feasibility headroom")
    p.add_argument("--out", required=True, help="output plan.json path")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser(
        "simulate",
        help="run seeded end-to-end experiments on synthetic scenes",
        description="Generate synthetic known-truth scenes, run the sampling/fitting/"
        "selection pipeline per solver, and write results.csv.",
    )
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--scenes", type=int, default=10, help="number of scenes (default 10)")
    p.add_argument("--objects", type=int, default=5, help="objects per scene (default 5)")
    p.add_argument("--profile", choices=["low", "high", "mixed", "random"], default="random",
                   help="scene complexity profile (default random)")
    p.add_argument("--solvers", type=_parse_solvers, default=("dp", "fairness", "greedy"),
                   help="comma-separated solver list (default dp,fairness,greedy)")
    _add_budget_flags(p)
    p.add_argument("--unit-mb", type=float, default=1.0,
                   help="size quantization unit in MB (default 1.0)")
    p.add_argument("--space", choices=["full", "small"], default="full",
                   help="config-space preset; small (5x5) keeps 5-object scenes within "
                   "the oracle enumeration guard")
    p.add_argument("--noise-sd-size", type=float, default=1.0,
                   help="measurement noise sd for size in MB (default 1.0)")
    p.add_argument("--noise-sd-quality", type=float, default=0.005,
                   help="measurement noise sd for quality (default 0.005)")
    p.add_argument("--timing", action="store_true",
                   help="record wall_time_ms in the CSV (makes output non-reproducible)")
    p.add_argument("--out", required=True, help="output results.csv path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "report",
        help="summarize experiment results and render figures",
        description="Aggregate results.csv into summary.csv and render matplotlib "
        "figures; optionally add allocation and fitted-profile figures.",
    )
    p.add_argument("--results", required=True, help="results.csv from the simulate verb")
    p.add_argument("--out-dir", required=True, help="directory for summary.csv and figures")
    p.add_argument("--plan", help="plan.json to render as an allocation figure")
    p.add_argument("--profiles", help="profiles.json to render fitted curves for")
    p.add_argument("--samples", help="samples.json to overlay observations on fitted curves")
    p.set_defaults(func=cmd_report)

    return parser


# ---------------------------------------------------------------------------
# Verb implementations
# ---------------------------------------------------------------------------

def cmd_segment(args: argparse.Namespace) -> int:
    from . import raster, segmentation

    known_ids = None
    if args.scene:
        scene = load_scene(args.scene)
        known_ids = set(scene.object_ids())
    if args.threshold_mode == "fixed" and args.threshold is None:
        raise NerfplanError("fixed threshold mode requires --threshold")

    inputs = segmentation.discover_inputs(args.images)
    images = []
    for image_id, image_path, mask_specs in inputs:
        if not mask_specs:
            continue
        image = raster.read_image(image_path)
        masks = [raster.read_mask(path, object_id, image_id) for object_id, path in mask_specs]
        images.append((image, masks))
    if not images:
        raise NerfplanError(f"no image/mask pairs found under {args.images}")
    log.info("scoring %d image/mask pairs", sum(len(m) for _, m in images))

    scores = segmentation.max_frequency_per_object(
        images, energy_fraction=args.energy_fraction, known_ids=known_ids
    )
    freq_report = segmentation.select_by_threshold(
        scores, threshold_mode=args.threshold_mode, threshold=args.threshold
    )

    crops: dict[str, list[str]] = {}
    if args.crops_dir:
        os.makedirs(args.crops_dir, exist_ok=True)
        selected = set(freq_report.selected)
        for image, masks in images:
            for mask in masks:
                if mask.object_id not in selected:
                    continue
                canvas_w, canvas_h = args.canvas or (image.width, image.height)
                crop = segmentation.crop_and_scale(image, mask, canvas_w, canvas_h)
                ext = "pgm" if crop.channels == 1 else "ppm"
                path = os.path.join(args.crops_dir, f"{mask.image_id}.{mask.object_id}.crop.{ext}")
                raster.write_image(path, crop)
                crops.setdefault(mask.object_id, []).append(path)

    payload = freq_report.to_dict()
    payload["energy_fraction"] = args.energy_fraction
    payload["crops"] = crops
    write_json(args.out, payload)
    log.info("selected %d/%d objects -> %s", len(freq_report.selected), len(scores), args.out)
    return 0


def cmd_sample_plan(args: argparse.Namespace) -> int:
    from .profiler import sampling_plan

    scene = load_scene(args.scene)
    violations = validate_scene(scene)
    if violations:
        raise NerfplanError("invalid scene: " + "; ".join(violations))
    plans = [sampling_plan(obj.space, args.step_multiplier) for obj in scene.objects]
    write_json(args.out, {"plans": [p.to_dict() for p in plans]})
    log.info("planned %d objects, %d total sample points -> %s",
             len(plans), sum(len(p.points) for p in plans), args.out)
    return 0


def cmd_profile(args: argparse.Namespace) -> int:
    from .core import ConfigSpace, SampleObservation
    from .profiler import fit_profile, profiles_to_dict

    raw = read_json(args.samples)
    work = []
    for rec in raw["objects"]:
        object_id = str(rec["id"])
        samples = [SampleObservation.from_dict(s) for s in rec["samples"]]
        if "space" in rec:
            space = ConfigSpace.from_dict(object_id, rec["space"])
        else:
            # Fall back to the grid spanned by the samples themselves.
            space = ConfigSpace.product(
                object_id,
                sorted({s.config.g for s in samples}),
                sorted({s.config.p for s in samples}),
            )
        work.append((object_id, samples, space))

    fitted = parallel_map(lambda w: (fit_profile(w[0], w[1], w[2]), w[2]), work)
    write_json(args.out, profiles_to_dict(fitted))
    for model, _ in fitted:
        log.info(
            "fit %s: rmse size %.3g MB, rmse quality %.3g (%d samples)",
            model.object_id, model.fit_stats.rmse_size_mb,
            model.fit_stats.rmse_quality, model.fit_stats.n_samples,
        )
    return 0


def _plan_table(plan) -> str:
    header = f"{'object':<16} {'g':>5} {'p':>5} {'size MB':>10} {'quality':>9} {'cum MB':>10}"
    lines = [header, "-" * len(header)]
    cum = 0.0
    for e in plan.entries:
        cum += e.predicted_size_mb
        lines.append(
            f"{e.object_id:<16} {e.config.g:>5} {e.config.p:>5} "
            f"{e.predicted_size_mb:>10.2f} {e.predicted_quality:>9.4f} {cum:>10.2f}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'total (' + plan.solver + ')':<16} {'':>5} {'':>5} "
        f"{plan.total_size_mb:>10.2f} {plan.total_quality:>9.4f} "
        f"{'<= ' + format(plan.budget_mb, '.0f'):>10}"
    )
    return "\n".join(lines)


def cmd_plan(args: argparse.Namespace) -> int:
    from .profiler import profiles_from_dict
    from .selector import (
        SOLVERS,
        capacity_units,
        candidates_from_profiles,
        feasibility_filter,
        quantize_groups,
    )

    profiles = profiles_from_dict(read_json(args.profiles))
    budget = _budget_from_args(args)
    groups = quantize_groups(candidates_from_profiles(profiles), args.unit_mb)
    h = capacity_units(budget.capacity_mb, args.unit_mb)
    groups, removed = feasibility_filter(groups, h, strict=args.strict_filter)
    dropped = sum(removed.values())
    if dropped:
        log.info("feasibility filter removed %d configs: %s", dropped,
                 {k: v for k, v in removed.items() if v})
    plan = SOLVERS[args.solver](groups, h, budget_mb=budget.capacity_mb, unit_mb=args.unit_mb)
    save_plan(args.out, plan)
    print(_plan_table(plan))
    log.info("budget %s (%.0f MB), solver %s -> %s",
             budget.name, budget.capacity_mb, args.solver, args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    from . import simharness

    if args.space == "small":
        g_values, p_values = simharness.SMALL_G_VALUES, simharness.SMALL_P_VALUES
    else:
        g_values, p_values = simharness.DEFAULT_G_VALUES, simharness.DEFAULT_P_VALUES
    budget = _budget_from_args(args)
    results = simharness.run_many(
        master_seed=args.seed,
        n_scenes=args.scenes,
        budget=budget,
        solvers=args.solvers,
        complexity_profile=args.profile,
        n_objects=args.objects,
        g_values=g_values,
        p_values=p_values,
        noise_sd_size_mb=args.noise_sd_size,
        noise_sd_quality=args.noise_sd_quality,
        unit_mb=args.unit_mb,
    )
    simharness.write_results_csv(args.out, results, include_timing=args.timing)
    n_rows = sum(len(r.per_solver) for r in results)
    log.info("%d experiments, %d rows -> %s", len(results), n_rows, args.out)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from . import report, simharness
    from .core import SampleObservation, load_plan
    from .profiler import profiles_from_dict

    rows = simharness.read_results_csv(args.results)
    if not rows:
        raise NerfplanError(f"no result rows in {args.results}")
    os.makedirs(args.out_dir, exist_ok=True)

    summary_path = os.path.join(args.out_dir, "summary.csv")
    report.write_summary_csv(summary_path, simharness.summary_table(simharness.summarize_csv(rows)))
    written = [summary_path]
    written += report.render_results_figures(rows, args.out_dir)

    if args.plan:
        written.append(report.render_plan_figure(load_plan(args.plan), args.out_dir))
    if args.profiles:
        profiles = profiles_from_dict(read_json(args.profiles))
        samples_by_object = None
        if args.samples:
            raw = read_json(args.samples)
            samples_by_object = {
                str(rec["id"]): [SampleObservation.from_dict(s) for s in rec["samples"]]
                for rec in raw["objects"]
            }
        written += report.render_profile_figures(profiles, args.out_dir, samples_by_object)

    for path in written:
        print(path)
    return 0


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.quiet:
        level = logging.ERROR
    elif args.verbose:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NerfplanError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
