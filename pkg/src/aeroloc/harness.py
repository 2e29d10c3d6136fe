"""End-to-end localization runs, reports, and evaluation outputs.

A run consumes an aerial map, its descriptor cache, a per-step observation
log, and the odometry trajectory, and produces per-step estimates: the
independent matching argmax, the alignment prior when available, and the
particle filter mean. Full variants refit the alignment on the whole history
and report transformed odometry instead of the filtered track.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from aeroloc.alignment import (NotLocalizableError, RansacParams,
                               predict_prior, ransac_align)
from aeroloc.descriptor import (AerialDescriptorSet, DescriptorParams,
                                ScoreField, independent_estimate, score_field)
from aeroloc.filter import (FilterParams, estimate, init_particles,
                            propagate, resample, weight)
from aeroloc.geomap import AerialMap, _format_float
from aeroloc.ground import (GroundParams, build_ground_descriptor,
                            predict_surface, surface_votes)

MODES = ("range", "range-full", "range-semantic", "range-semantic-full")


def _uses_semantics(mode: str) -> bool:
    return mode in ("range-semantic", "range-semantic-full")


def _is_full(mode: str) -> bool:
    return mode.endswith("-full")


@dataclass
class RunReport:
    """Everything a single localization run produced."""

    mode: str
    seed: int
    resolution: float
    xbar: np.ndarray            # (T, 2) particle filter means, cells
    xhat: np.ndarray            # (T, 2) independent matching argmax, cells
    xtilde: np.ndarray          # (T, 2) alignment priors, NaN rows when absent
    xfull: np.ndarray | None    # (T, 2) final-refit positions, None if refit failed
    errors_online_m: np.ndarray | None
    errors_full_m: np.ndarray | None
    timings: dict

    def positions(self) -> np.ndarray:
        """The track this run's mode reports as its output."""
        if _is_full(self.mode):
            if self.xfull is None:
                raise NotLocalizableError("full-mode report has no final transform")
            return self.xfull
        return self.xbar

    def errors_m(self) -> np.ndarray:
        err = self.errors_full_m if _is_full(self.mode) else self.errors_online_m
        if err is None:
            raise ValueError("run had no ground truth to compute errors against")
        return err

    def mean_error_m(self) -> float:
        return float(np.mean(self.errors_m()))

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {
            "mode": self.mode,
            "seed": self.seed,
            "resolution": self.resolution,
            "xbar": arr(self.xbar),
            "xhat": arr(self.xhat),
            "xtilde": arr(self.xtilde),
            "xfull": arr(self.xfull),
            "errors_online_m": arr(self.errors_online_m),
            "errors_full_m": arr(self.errors_full_m),
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        def arr(v, dtype=np.float64):
            return None if v is None else np.asarray(v, dtype=dtype)
        return cls(
            mode=d["mode"],
            seed=int(d["seed"]),
            resolution=float(d["resolution"]),
            xbar=arr(d["xbar"]),
            xhat=arr(d["xhat"]),
            xtilde=arr(d["xtilde"]),
            xfull=arr(d["xfull"]),
            errors_online_m=arr(d["errors_online_m"]),
            errors_full_m=arr(d["errors_full_m"]),
            timings=dict(d.get("timings", {})),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path, "r", encoding="ascii") as f:
            return cls.from_dict(json.load(f))


def write_estimate_log(report: RunReport, path) -> None:
    """Per-step estimate CSV; byte-stable for identical runs."""
    with open(path, "w", encoding="ascii") as f:
        f.write("t,xbar_x,xbar_y,xhat_x,xhat_y,xtilde_x,xtilde_y\n")
        for t in range(report.xbar.shape[0]):
            row = [report.xbar[t, 0], report.xbar[t, 1],
                   report.xhat[t, 0], report.xhat[t, 1],
                   report.xtilde[t, 0], report.xtilde[t, 1]]
            f.write(str(t) + "," + ",".join(_format_float(v) for v in row) + "\n")


def run_localization(amap: AerialMap, cache: AerialDescriptorSet,
                     observations, trajectory, mode: str, seed: int = 0,
                     truth=None,
                     dparams: DescriptorParams | None = None,
                     gparams: GroundParams | None = None,
                     fparams: FilterParams | None = None,
                     rparams: RansacParams | None = None,
                     on_field=None) -> RunReport:
    """Run the full pipeline over an observation sequence.

    trajectory is the odometry track (T, 2) in its local frame, aligned
    index-by-index with observations. truth, when given, is (T, 2+) true map
    cells and enables metric errors. on_field(t, ScoreField) is called for
    every step when provided.

    Full modes raise NotLocalizableError if the final refit finds no
    consensus; online modes always produce a filtered track.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    dparams = dparams or DescriptorParams()
    gparams = gparams or GroundParams()
    fparams = fparams or FilterParams()
    rparams = rparams or RansacParams()

    trajectory = np.asarray(trajectory, dtype=np.float64)
    t_total = len(observations)
    if trajectory.shape != (t_total, 2):
        raise ValueError("trajectory must be (T, 2) matching the observations")
    if cache.n_lines != dparams.n_lines:
        raise ValueError("descriptor cache does not match n_lines")
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        if truth.shape[0] != t_total:
            raise ValueError("truth length must match the observations")

    semantic_on = _uses_semantics(mode)
    rng = np.random.default_rng(seed)
    bounds = (amap.width, amap.height)

    xhat = np.zeros((t_total, 2))
    xbar = np.zeros((t_total, 2))
    xtilde = np.full((t_total, 2), np.nan)
    timings = {"descriptor_s": 0.0, "scoring_s": 0.0, "alignment_s": 0.0,
               "filter_s": 0.0}
    particles = None
    prior_prev = None

    for t, obs in enumerate(observations):
        tic = time.perf_counter()
        desc = build_ground_descriptor(obs, gparams, dparams, amap.resolution)
        surface = None
        if semantic_on:
            surface = predict_surface(surface_votes(desc, obs))
        else:
            desc = desc.without_labels()
        timings["descriptor_s"] += time.perf_counter() - tic

        tic = time.perf_counter()
        fld = score_field(desc, cache, dparams, surface=surface,
                          use_semantic=semantic_on)
        timings["scoring_s"] += time.perf_counter() - tic
        if on_field is not None:
            on_field(t, fld)
        xhat[t] = independent_estimate(fld)

        tic = time.perf_counter()
        prior = None
        if t >= rparams.sample_size:
            try:
                tf, _ = ransac_align(xhat[:t], trajectory[:t], rparams, rng)
                prior = predict_prior(tf, trajectory[t], bounds)
                xtilde[t] = prior
            except NotLocalizableError:
                prior = None
        timings["alignment_s"] += time.perf_counter() - tic

        tic = time.perf_counter()
        if particles is None:
            particles = init_particles(fparams, amap, rng)
        else:
            particles = propagate(particles, prior, prior_prev, fparams, bounds, rng)
        weighted = weight(particles, fld, prior, fparams, amap, rng)
        xbar[t] = estimate(weighted)
        particles = resample(weighted, rng)
        timings["filter_s"] += time.perf_counter() - tic
        prior_prev = prior

    tic = time.perf_counter()
    xfull = None
    try:
        tf, _ = ransac_align(xhat, trajectory, rparams, rng)
        xfull = np.stack([predict_prior(tf, trajectory[t], bounds)
                          for t in range(t_total)])
    except NotLocalizableError:
        if _is_full(mode):
            raise
    timings["alignment_s"] += time.perf_counter() - tic

    errors_online = None
    errors_full = None
    if truth is not None:
        errors_online = np.linalg.norm(xbar - truth[:, :2], axis=1) * amap.resolution
        if xfull is not None:
            errors_full = np.linalg.norm(xfull - truth[:, :2], axis=1) * amap.resolution

    return RunReport(mode=mode, seed=seed, resolution=amap.resolution,
                     xbar=xbar, xhat=xhat, xtilde=xtilde, xfull=xfull,
                     errors_online_m=errors_online, errors_full_m=errors_full,
                     timings=timings)


@dataclass(frozen=True)
class RunConfig:
    """File-based description of one localization run.

    Paths are used as given; resolve them against the config file's
    directory before constructing this if they are relative. iterations is
    carried for callers that schedule repeats; run_pipeline itself executes
    exactly one run at this seed.
    """

    mode: str
    map_path: str
    cache_path: str | None
    observations_path: str
    trajectory_path: str
    truth_path: str | None = None
    seed: int = 0
    iterations: int = 20
    dparams: DescriptorParams | None = None
    gparams: GroundParams | None = None
    fparams: FilterParams | None = None
    rparams: RansacParams | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


def run_pipeline(config: RunConfig, on_field=None) -> RunReport:
    """Load the inputs named by config and run localization once.

    A missing or stale descriptor cache is built from the map; when
    cache_path is set the built cache is saved there for reuse.
    """
    from aeroloc.descriptor import (build_aerial_descriptors,
                                    load_descriptor_set, save_descriptor_set)
    from aeroloc.geomap import load_map
    from aeroloc.ground import load_observations, load_trajectory

    dparams = config.dparams or DescriptorParams()
    amap = load_map(config.map_path)
    cache = None
    if config.cache_path is not None:
        try:
            cache = load_descriptor_set(config.cache_path, amap)
        except FileNotFoundError:
            cache = None
        if cache is not None and cache.n_lines != dparams.n_lines:
            raise ValueError("descriptor cache does not match n_lines")
    if cache is None:
        cache = build_aerial_descriptors(amap, dparams)
        if config.cache_path is not None:
            save_descriptor_set(cache, config.cache_path)
    observations = load_observations(config.observations_path)
    trajectory = load_trajectory(config.trajectory_path)
    truth = load_truth(config.truth_path) if config.truth_path else None
    return run_localization(
        amap, cache, observations, trajectory, config.mode, seed=config.seed,
        truth=truth, dparams=dparams, gparams=config.gparams,
        fparams=config.fparams, rparams=config.rparams, on_field=on_field)


def eval_runs(reports) -> dict:
    """Mean error and its standard error per mode.

    Returns {mode: (mean_m, stderr_m, n_runs)}; every mode present needs at
    least two runs for a defined standard error.
    """
    groups = {}
    for rep in reports:
        groups.setdefault(rep.mode, []).append(rep.mean_error_m())
    stats = {}
    for mode, means in groups.items():
        if len(means) < 2:
            raise ValueError(f"mode {mode!r} has {len(means)} run(s); need at least 2")
        arr = np.asarray(means)
        stats[mode] = (float(arr.mean()),
                       float(arr.std(ddof=1) / math.sqrt(arr.shape[0])),
                       arr.shape[0])
    return stats


def write_eval_table(stats: dict, path) -> None:
    """CSV table with one column per mode, mean and stderr rows (meters)."""
    modes = [m for m in MODES if m in stats]
    extras = [m for m in stats if m not in MODES]
    modes += sorted(extras)
    with open(path, "w", encoding="ascii") as f:
        f.write("metric," + ",".join(modes) + "\n")
        f.write("mean_m," + ",".join(_format_float(stats[m][0]) for m in modes) + "\n")
        f.write("stderr_m," + ",".join(_format_float(stats[m][1]) for m in modes) + "\n")
        f.write("runs," + ",".join(str(stats[m][2]) for m in modes) + "\n")


def format_eval_table(stats: dict) -> str:
    """Human-readable mean +/- stderr table, one mode per column."""
    modes = [m for m in MODES if m in stats] + sorted(m for m in stats if m not in MODES)
    cells = [f"{stats[m][0]:.2f} +/- {stats[m][1]:.2f} (n={stats[m][2]})" for m in modes]
    width = max(len(s) for s in modes + cells) + 2
    line1 = "".join(m.ljust(width) for m in modes)
    line2 = "".join(c.ljust(width) for c in cells)
    return line1.rstrip() + "\n" + line2.rstrip()


# Piecewise-linear heat colormap: dark blue -> blue -> yellow -> red.
_CMAP_T = (0.0, 0.35, 0.65, 1.0)
_CMAP_R = (0, 0, 255, 255)
_CMAP_G = (0, 90, 220, 0)
_CMAP_B = (128, 255, 0, 0)
_GRAY = (120, 120, 120)
_PINK = (255, 105, 180)


def export_heatmap(fld: ScoreField, amap: AerialMap, truth, path,
                   ring_radius: float = 5.0) -> None:
    """Render the score field over the map as a binary PPM image.

    Scores are normalized to the field maximum; non-traversable cells are
    gray. An optional pink ring marks the true position.
    """
    grid = fld.score_grid()
    if grid.shape != (amap.height, amap.width):
        raise ValueError("score field shape does not match the map")
    vmax = grid.max()
    t = grid / vmax if vmax > 0 else np.zeros_like(grid)
    img = np.empty((amap.height, amap.width, 3), dtype=np.uint8)
    img[..., 0] = np.interp(t, _CMAP_T, _CMAP_R).astype(np.uint8)
    img[..., 1] = np.interp(t, _CMAP_T, _CMAP_G).astype(np.uint8)
    img[..., 2] = np.interp(t, _CMAP_T, _CMAP_B).astype(np.uint8)
    img[~amap.traversable] = _GRAY

    if truth is not None:
        tx, ty = float(truth[0]), float(truth[1])
        yy, xx = np.mgrid[0:amap.height, 0:amap.width]
        ring = np.abs(np.hypot(xx - tx, yy - ty) - ring_radius) <= 0.8
        img[ring] = _PINK

    with open(path, "wb") as f:
        f.write(f"P6\n{amap.width} {amap.height}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def save_truth(poses, path) -> None:
    """True poses as CSV: t,x,y,heading_deg (cells and degrees)."""
    poses = np.asarray(poses, dtype=np.float64)
    with open(path, "w", encoding="ascii") as f:
        f.write("t,x,y,heading_deg\n")
        for t, row in enumerate(poses):
            heading = row[2] if row.shape[0] > 2 else 0.0
            f.write(f"{t},{_format_float(row[0])},{_format_float(row[1])},"
                    f"{_format_float(heading)}\n")


def load_truth(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        if header != "t,x,y,heading_deg":
            raise ValueError("truth file must start with 't,x,y,heading_deg'")
        rows = []
        for lineno, raw in enumerate(f, 2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected t,x,y,heading_deg")
            rows.append((float(parts[1]), float(parts[2]), float(parts[3])))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
