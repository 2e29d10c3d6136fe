"""Command line interface.

Subcommands cover the whole workflow: gen-world makes a synthetic dataset,
precompute builds the descriptor cache for a map, localize runs the pipeline
over an observation log, eval aggregates run reports into a table, and
heatmap renders a saved score field.

Exit codes: 0 on success, 2 on bad input or malformed files, 3 when
localization finds no consistent alignment.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from aeroloc import harness, sim
from aeroloc.alignment import NotLocalizableError, RansacParams
from aeroloc.descriptor import (DescriptorParams, build_aerial_descriptors,
                                load_score_field, save_descriptor_set,
                                save_score_field)
from aeroloc.filter import FilterParams
from aeroloc.geomap import load_map, save_map
from aeroloc.ground import GroundParams, save_observations, save_trajectory


def _parse_kv_file(path) -> dict:
    """Flat key=value config; blank lines and # comments ignored."""
    cfg = {}
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ValueError(f"{path}:{lineno}: empty key or value")
            if key in cfg:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            cfg[key] = value
    return cfg


def _take(cfg: dict, key: str, conv, default):
    if key in cfg:
        return conv(cfg.pop(key))
    return default


def _reject_unknown(cfg: dict, context: str):
    if cfg:
        raise ValueError(f"unknown {context} config keys: {', '.join(sorted(cfg))}")


def _descriptor_params(cfg: dict) -> DescriptorParams:
    return DescriptorParams(
        n_lines=_take(cfg, "n_lines", int, 60),
        max_range=_take(cfg, "max_range", float, 40.0),
        range_tolerance=_take(cfg, "range_tolerance", float, 4.0),
    )


def _ground_params(cfg: dict) -> GroundParams:
    return GroundParams(
        grid_round=_take(cfg, "grid_round", float, 0.1),
        height_diff_threshold=_take(cfg, "height_diff_threshold", float, 0.2),
        camera_fov_deg=_take(cfg, "camera_fov", float, 90.0),
    )


def cmd_gen_world(args) -> int:
    cfg = _parse_kv_file(args.config)
    spec = sim.WorldSpec(
        width=_take(cfg, "width", int, 300),
        height=_take(cfg, "height", int, 300),
        resolution=_take(cfg, "resolution", float, 0.34),
        building_density=_take(cfg, "building_density", float, 0.25),
        vegetation_density=_take(cfg, "vegetation_density", float, 0.08),
        road_pitch=_take(cfg, "road_pitch", int, 40),
        road_width=_take(cfg, "road_width", int, 9),
        ground_roughness=_take(cfg, "ground_roughness", float, 0.02),
        seed=args.seed if args.seed is not None else _take(cfg, "seed", int, 0),
    )
    noise = sim.NoiseSpec(
        range_noise=_take(cfg, "range_noise", float, 0.1),
        label_flip_prob=_take(cfg, "label_flip_prob", float, 0.05),
        appearance_flip_prob=_take(cfg, "appearance_flip_prob", float, 0.0),
        add_blocks=_take(cfg, "add_blocks", int, 0),
        remove_blocks=_take(cfg, "remove_blocks", int, 0),
        odom_rot_drift=_take(cfg, "odom_rot_drift", float, 0.05),
        odom_scale_drift=_take(cfg, "odom_scale_drift", float, 0.0005),
    )
    n_steps = _take(cfg, "steps", int, 40)
    corridor_fraction = _take(cfg, "corridor_fraction", float, 0.0)
    dparams = _descriptor_params(cfg)
    gparams = _ground_params(cfg)
    _reject_unknown(cfg, "gen-world")

    dataset = sim.make_dataset(spec, noise, n_steps,
                               corridor_fraction=corridor_fraction,
                               dparams=dparams, gparams=gparams)
    os.makedirs(args.out, exist_ok=True)
    save_map(dataset.amap, os.path.join(args.out, "world.amap"))
    harness.save_truth(dataset.poses, os.path.join(args.out, "truth.csv"))
    save_trajectory(dataset.odometry, os.path.join(args.out, "trajectory.csv"))
    save_observations(dataset.observations,
                      os.path.join(args.out, "observations.obs"))
    print(f"wrote {spec.width}x{spec.height} world and {n_steps} steps to {args.out}")
    return 0


def cmd_precompute(args) -> int:
    amap = load_map(args.map)
    dparams = DescriptorParams(n_lines=args.n_lines, max_range=args.max_range)
    dset = build_aerial_descriptors(amap, dparams)
    save_descriptor_set(dset, args.out)
    print(f"cached {dset.n_cells} descriptors ({dset.n_lines} rays) to {args.out}")
    return 0


def parse_run_config(path) -> harness.RunConfig:
    """Read a localize config file into a RunConfig.

    Relative paths inside the file are taken relative to the file itself so a
    dataset directory stays relocatable.
    """
    cfg = _parse_kv_file(path)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    mode = _take(cfg, "mode", str, "range-semantic")
    map_path = cfg.pop("map", None)
    if map_path is None:
        raise ValueError("config must set map=<path>")
    obs_path = cfg.pop("observations", None)
    traj_path = cfg.pop("trajectory", None)
    if obs_path is None or traj_path is None:
        raise ValueError("config must set observations= and trajectory=")
    cache_path = cfg.pop("cache", None)
    truth_path = cfg.pop("truth", None)
    seed = _take(cfg, "seed", int, 0)
    iterations = _take(cfg, "iterations", int, 1)

    dparams = _descriptor_params(cfg)
    gparams = _ground_params(cfg)
    fparams = FilterParams(
        n_particles=_take(cfg, "n_particles", int, 500),
        jitter_radius=_take(cfg, "jitter_radius", float, 15.0),
        prior_sigma=_take(cfg, "prior_sigma", float, 15.0),
    )
    rparams = RansacParams(
        iterations=_take(cfg, "ransac_iterations", int, 200),
        sample_size=_take(cfg, "ransac_sample_size", int, 3),
        inlier_threshold=_take(cfg, "ransac_inlier_threshold", float, 15.0),
        min_inliers=_take(cfg, "ransac_min_inliers", int, 3),
    )
    _reject_unknown(cfg, "localize")
    return harness.RunConfig(
        mode=mode, map_path=resolve(map_path), cache_path=resolve(cache_path),
        observations_path=resolve(obs_path), trajectory_path=resolve(traj_path),
        truth_path=resolve(truth_path), seed=seed, iterations=iterations,
        dparams=dparams, gparams=gparams, fparams=fparams, rparams=rparams)


def cmd_localize(args) -> int:
    config = parse_run_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    for i in range(config.iterations):
        run = dataclasses.replace(config, seed=config.seed + i)
        on_field = None
        if args.dump_field is not None and i == 0:
            step = args.dump_field
            fld_path = os.path.join(args.out, f"field_{step}.sfld")

            def on_field(t, fld, _step=step, _path=fld_path):
                if t == _step:
                    save_score_field(fld, _path)

        report = harness.run_pipeline(run, on_field=on_field)
        report.save(os.path.join(args.out, f"report_{run.mode}_{run.seed}.json"))
        harness.write_estimate_log(
            report, os.path.join(args.out, f"estimates_{run.mode}_{run.seed}.csv"))
        if report.errors_online_m is not None:
            print(f"run seed={run.seed} mode={run.mode} "
                  f"mean_error_m={report.mean_error_m():.3f}")
        else:
            final = report.positions()[-1]
            print(f"run seed={run.seed} mode={run.mode} "
                  f"final_cell=({final[0]:.1f}, {final[1]:.1f})")
    return 0


def cmd_eval(args) -> int:
    names = sorted(n for n in os.listdir(args.runs)
                   if n.startswith("report_") and n.endswith(".json"))
    if not names:
        raise ValueError(f"no report_*.json files in {args.runs}")
    reports = [harness.RunReport.load(os.path.join(args.runs, n)) for n in names]
    stats = harness.eval_runs(reports)
    if args.out:
        harness.write_eval_table(stats, args.out)
    print(harness.format_eval_table(stats))
    return 0


def cmd_heatmap(args) -> int:
    fld = load_score_field(args.field)
    amap = load_map(args.map)
    truth_cell = None
    if args.truth:
        parts = args.truth.split(",")
        if len(parts) != 2:
            raise ValueError("--truth expects 'x,y'")
        truth_cell = (float(parts[0]), float(parts[1]))
    harness.export_heatmap(fld, amap, truth_cell, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aeroloc",
        description="Ground robot localization in a semantic aerial map.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="key=value world config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("precompute", help="build the descriptor cache for a map")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True, help="cache file to write")
    p.add_argument("--n-lines", type=int, default=60)
    p.add_argument("--max-range", type=float, default=40.0)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("localize", help="run localization from a config file")
    p.add_argument("--config", required=True, help="key=value run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-field", type=int, default=None, metavar="STEP",
                   help="save the score field of one step (first iteration)")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="aggregate run reports into a table")
    p.add_argument("--runs", required=True, help="directory of report_*.json")
    p.add_argument("--out", default=None, help="CSV table to write")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("heatmap", help="render a score field image")
    p.add_argument("--field", required=True, help="saved score field")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True, help="PPM image to write")
    p.add_argument("--truth", default=None, help="true cell as 'x,y'")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotLocalizableError as exc:
        print(f"not localizable: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
