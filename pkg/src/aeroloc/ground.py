"""Ground-side processing: point clouds to descriptors, plus file I/O.

The robot observes a local 3-D point cloud (robot frame, meters) and sparse
camera labels along known azimuths. Points are downsampled onto a decimeter
lattice, obstacle points are flagged by comparing Delaunay-neighbor heights,
and the result is rasterized into a local occupancy grid from which the same
ray kernel used on the aerial side produces the ground descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, QhullError

from aeroloc.descriptor import Descriptor, DescriptorParams, compute_descriptor
from aeroloc.geomap import SemanticLabel, _format_float

INVALID_LABEL = 255

# Camera labels closer than this (meters) vote on the driving surface.
SURFACE_VOTE_RANGE = 3.0


@dataclass(frozen=True)
class GroundParams:
    grid_round: float = 0.1              # lattice pitch for point dedup, meters
    height_diff_threshold: float = 0.2   # neighbor step that marks an obstacle
    camera_fov_deg: float = 90.0         # labels exist only inside this forward cone

    def __post_init__(self):
        if self.grid_round <= 0:
            raise ValueError("grid_round must be positive")
        if self.height_diff_threshold <= 0:
            raise ValueError("height_diff_threshold must be positive")
        if not 0 < self.camera_fov_deg <= 360:
            raise ValueError("camera_fov_deg must be in (0, 360]")


@dataclass
class GroundObservation:
    """One time step of robot sensing.

    points are (x, y, h) in the robot frame, meters, h relative to the robot's
    ground plane. ray_labels maps an azimuth in degrees (robot frame, rounded
    to 1e-6) to a semantic code for the obstacle that ray hit. surface_label
    is the ground label directly under the robot, when the camera saw it.
    """

    t: int
    points: np.ndarray
    ray_labels: dict = field(default_factory=dict)
    surface_label: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be (P, 3)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts


def _label_key(azimuth_deg: float) -> float:
    return round(float(azimuth_deg) % 360.0, 6)


def downsample_points(points, params: GroundParams) -> np.ndarray:
    """Snap x, y to the lattice and keep the highest point per lattice cell.

    Output rows are sorted lexicographically by (x, y), which fixes the order
    regardless of input order.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return pts.reshape(0, 3)
    inv = 1.0 / params.grid_round
    keys = np.rint(pts[:, :2] * inv).astype(np.int64)
    order = np.lexsort((pts[:, 2], keys[:, 1], keys[:, 0]))
    ks = keys[order]
    hs = pts[order, 2]
    boundary = np.nonzero(np.any(ks[1:] != ks[:-1], axis=1))[0]
    last = np.append(boundary, ks.shape[0] - 1)
    out = np.empty((last.shape[0], 3), dtype=np.float64)
    out[:, 0] = ks[last, 0] * params.grid_round
    out[:, 1] = ks[last, 1] * params.grid_round
    out[:, 2] = hs[last]
    return out


def detect_obstacles_delaunay(points, params: GroundParams) -> np.ndarray:
    """Points standing above a Delaunay neighbor by more than the threshold.

    The higher endpoint of each offending edge is an obstacle point; the
    returned array is that subset of the input. Degenerate inputs (fewer
    than 3 points, or collinear) yield an empty subset.
    """
    pts = np.asarray(points, dtype=np.float64)
    flags = np.zeros(pts.shape[0], dtype=bool)
    if pts.shape[0] < 3:
        return pts[flags]
    try:
        tri = Delaunay(pts[:, :2])
    except QhullError:
        return pts[flags]
    simplices = tri.simplices
    edges = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [0, 2]]])
    a, b = edges[:, 0], edges[:, 1]
    diff = pts[a, 2] - pts[b, 2]
    thr = params.height_diff_threshold
    flags[a[diff > thr]] = True
    flags[b[-diff > thr]] = True
    return pts[flags]


def build_ground_obstacle_grid(obstacle_points, resolution: float, max_range: float = 40.0):
    """Rasterize obstacle points into a square local grid around the robot.

    Returns (grid bool (S, S), center (x, y)). The robot cell is at the
    center and is always kept free so rays can leave it.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    half = int(np.ceil(max_range / resolution))
    size = 2 * half + 1
    grid = np.zeros((size, size), dtype=bool)
    pts = np.asarray(obstacle_points, dtype=np.float64)
    if pts.shape[0]:
        ix = np.floor(pts[:, 0] / resolution + 0.5).astype(np.int64) + half
        iy = np.floor(pts[:, 1] / resolution + 0.5).astype(np.int64) + half
        keep = (ix >= 0) & (ix < size) & (iy >= 0) & (iy < size)
        grid[iy[keep], ix[keep]] = True
    grid[half, half] = False
    return grid, (half, half)


def _angular_offset(az_deg: float) -> float:
    """Unsigned offset of an azimuth from the forward (+x) axis, degrees."""
    d = az_deg % 360.0
    return min(d, 360.0 - d)


def build_ground_descriptor(obs: GroundObservation, gparams: GroundParams,
                            dparams: DescriptorParams,
                            resolution: float = 0.34) -> Descriptor:
    """Full ground pipeline for one observation.

    Ranges come from ray casting the local obstacle grid; a ray's label is
    taken from the camera readings when its azimuth lies inside the camera
    cone and the ray actually hit something.
    """
    pts = downsample_points(obs.points, gparams)
    obstacle_pts = detect_obstacles_delaunay(pts, gparams)
    grid, center = build_ground_obstacle_grid(obstacle_pts, resolution, dparams.max_range)
    semantic = np.full(grid.shape, INVALID_LABEL, dtype=np.uint8)
    ranges = compute_descriptor(grid, semantic, center, dparams, resolution).ranges

    labels = np.full(dparams.n_lines, INVALID_LABEL, dtype=np.uint8)
    half_fov = gparams.camera_fov_deg / 2.0
    for i in range(dparams.n_lines):
        az = 360.0 * i / dparams.n_lines
        if ranges[i] < 0 or _angular_offset(az) > half_fov:
            continue
        code = obs.ray_labels.get(_label_key(az))
        if code is not None:
            labels[i] = np.uint8(code)
    return Descriptor(ranges, labels)


def surface_votes(desc: Descriptor, obs: GroundObservation) -> list:
    """Labels near the robot that vote on the driving surface.

    Votes are nearby labeled rays (hit within SURFACE_VOTE_RANGE of the robot)
    plus the under-robot camera label when present.
    """
    votes = [
        int(desc.labels[i])
        for i in range(desc.n)
        if desc.labels[i] != INVALID_LABEL and 0 <= desc.ranges[i] < SURFACE_VOTE_RANGE
    ]
    if obs.surface_label is not None:
        votes.append(int(obs.surface_label))
    return votes


def predict_surface(votes) -> SemanticLabel | None:
    """Majority vote between road-like and grass labels.

    Road and bare-ground votes pool together (both read as drivable hard
    surface); ties and empty vote sets abstain.
    """
    road = 0
    grass = 0
    for v in votes:
        code = int(v)
        if code in (int(SemanticLabel.ROAD), int(SemanticLabel.GROUND)):
            road += 1
        elif code == int(SemanticLabel.GRASS):
            grass += 1
    if road > grass:
        return SemanticLabel.ROAD
    if grass > road:
        return SemanticLabel.GRASS
    return None


def save_observations(observations, path) -> None:
    """Write observations as a text log, one OBS block per time step."""
    with open(path, "w", encoding="ascii") as f:
        for obs in observations:
            f.write(f"OBS t={obs.t}\n")
            for x, y, h in obs.points:
                f.write(f"P {_format_float(x)} {_format_float(y)} {_format_float(h)}\n")
            for az in sorted(obs.ray_labels):
                f.write(f"L {_format_float(az)} {int(obs.ray_labels[az])}\n")
            if obs.surface_label is not None:
                f.write(f"U {int(obs.surface_label)}\n")


class ObservationFormatError(ValueError):
    """Raised when an observation log cannot be parsed."""


def load_observations(path) -> list:
    observations = []
    current = None

    def flush():
        if current is not None:
            observations.append(GroundObservation(
                t=current["t"],
                points=np.array(current["pts"], dtype=np.float64).reshape(-1, 3),
                ray_labels=current["labels"],
                surface_label=current["under"],
            ))

    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "OBS":
                    flush()
                    if len(tok) != 2 or not tok[1].startswith("t="):
                        raise ObservationFormatError(f"line {lineno}: bad OBS header")
                    current = {"t": int(tok[1][2:]), "pts": [], "labels": {}, "under": None}
                elif current is None:
                    raise ObservationFormatError(f"line {lineno}: record before OBS header")
                elif tok[0] == "P":
                    if len(tok) != 4:
                        raise ObservationFormatError(f"line {lineno}: bad point record")
                    current["pts"].append((float(tok[1]), float(tok[2]), float(tok[3])))
                elif tok[0] == "L":
                    if len(tok) != 3:
                        raise ObservationFormatError(f"line {lineno}: bad label record")
                    current["labels"][_label_key(float(tok[1]))] = int(tok[2])
                elif tok[0] == "U":
                    if len(tok) != 2:
                        raise ObservationFormatError(f"line {lineno}: bad surface record")
                    current["under"] = int(tok[1])
                else:
                    raise ObservationFormatError(f"line {lineno}: unknown record {tok[0]!r}")
            except ValueError as exc:
                if isinstance(exc, ObservationFormatError):
                    raise
                raise ObservationFormatError(f"line {lineno}: {exc}") from exc
    flush()
    return observations


def save_trajectory(trajectory, path) -> None:
    """Write local-frame positions as CSV with header t,x,y (meters)."""
    traj = np.asarray(trajectory, dtype=np.float64)
    with open(path, "w", encoding="ascii") as f:
        f.write("t,x,y\n")
        for t, (x, y) in enumerate(traj):
            f.write(f"{t},{_format_float(x)},{_format_float(y)}\n")


def load_trajectory(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        if header != "t,x,y":
            raise ObservationFormatError("trajectory file must start with 't,x,y'")
        rows = []
        expected = 0
        for lineno, raw in enumerate(f, 2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ObservationFormatError(f"line {lineno}: expected t,x,y")
            try:
                t = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ObservationFormatError(f"line {lineno}: {exc}") from exc
            if t != expected:
                raise ObservationFormatError(f"line {lineno}: time steps must be 0,1,2,...")
            expected += 1
            rows.append((x, y))
    return np.array(rows, dtype=np.float64).reshape(-1, 2)
