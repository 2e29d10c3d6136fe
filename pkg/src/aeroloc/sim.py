"""Synthetic world generation and sensor simulation.

Worlds are road lattices with building blocks and vegetation on a mostly
flat ground plane. The simulator produces everything a localization run
consumes: the aerial map, a road-following trajectory with ground truth,
per-step ground observations (point cloud plus camera labels), and drifting
odometry in a private local frame.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from aeroloc.descriptor import DescriptorParams
from aeroloc.geomap import AerialMap, SemanticLabel
from aeroloc.ground import GroundObservation, GroundParams, _label_key
from aeroloc.rays import ray_path_table

# Spacing of ground-return samples along each scan ray, meters.
GROUND_SAMPLE_STEP = 1.5


@dataclass(frozen=True)
class WorldSpec:
    width: int = 300
    height: int = 300
    resolution: float = 0.34
    building_density: float = 0.25
    vegetation_density: float = 0.08
    road_pitch: int = 40
    road_width: int = 9
    ground_roughness: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValueError("world must be at least 32x32 cells")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        for name in ("building_density", "vegetation_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.road_pitch < 8:
            raise ValueError("road_pitch must be at least 8")
        if not 1 <= self.road_width < self.road_pitch:
            raise ValueError("road_width must be in [1, road_pitch)")
        if self.ground_roughness < 0:
            raise ValueError("ground_roughness must be non-negative")


@dataclass(frozen=True)
class WorldInfo:
    """Landmarks of a generated world, in cell coordinates."""

    corridor_cell: tuple          # a road cell in the middle of the corridor
    corridor_rect: tuple          # (x0, y0, x1, y1) inclusive road span walled on both sides
    intersection_cell: tuple      # center of a road crossing
    road_cols: tuple              # x centers of vertical roads
    road_rows: tuple              # y centers of horizontal roads


@dataclass(frozen=True)
class NoiseSpec:
    range_noise: float = 0.1           # lidar range stddev, meters
    label_flip_prob: float = 0.05      # camera label corruption
    appearance_flip_prob: float = 0.0  # grass/vegetation appearance swaps in the live world
    add_blocks: int = 0                # new small obstacles absent from the map
    remove_blocks: int = 0             # mapped obstacles gone from the world
    odom_rot_drift: float = 0.05       # odometry heading drift, degrees per step
    odom_scale_drift: float = 0.0005   # odometry scale drift, fraction per step

    def __post_init__(self):
        if self.range_noise < 0:
            raise ValueError("range_noise must be non-negative")
        for name in ("label_flip_prob", "appearance_flip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.add_blocks < 0 or self.remove_blocks < 0:
            raise ValueError("block counts must be non-negative")

    @classmethod
    def clean(cls) -> "NoiseSpec":
        """All noise sources disabled."""
        return cls(range_noise=0.0, label_flip_prob=0.0, appearance_flip_prob=0.0,
                   add_blocks=0, remove_blocks=0, odom_rot_drift=0.0,
                   odom_scale_drift=0.0)


def _fill_block(rng, sem, elev, x0, y0, x1, y1, spec: WorldSpec):
    """Drop random buildings and vegetation into one block between roads."""
    bw = x1 - x0 + 1
    bh = y1 - y0 + 1
    if bw < 3 or bh < 3:
        return
    area = bw * bh

    target = spec.building_density * area
    placed = 0
    for _ in range(200):
        if placed >= target:
            break
        w = int(rng.integers(5, 16))
        h = int(rng.integers(5, 16))
        w = min(w, bw - 2)
        h = min(h, bh - 2)
        if w < 2 or h < 2:
            break
        px = int(rng.integers(x0 + 1, x1 - w + 2))
        py = int(rng.integers(y0 + 1, y1 - h + 2))
        sem[py:py + h, px:px + w] = int(SemanticLabel.BUILDING)
        elev[py:py + h, px:px + w] = rng.uniform(3.0, 10.0)
        placed += w * h

    target = spec.vegetation_density * area
    placed = 0
    for _ in range(200):
        if placed >= target:
            break
        w = int(rng.integers(2, 6))
        h = int(rng.integers(2, 6))
        px = int(rng.integers(x0, x1 - w + 2))
        py = int(rng.integers(y0, y1 - h + 2))
        region = sem[py:py + h, px:px + w]
        if np.all(region == int(SemanticLabel.GRASS)):
            region[:] = int(SemanticLabel.VEGETATION)
            elev[py:py + h, px:px + w] = rng.uniform(2.0, 4.0)
            placed += w * h


def generate_world(spec: WorldSpec):
    """Build a deterministic world from ``spec.seed``.

    Returns (AerialMap, WorldInfo). The map always contains a road
    intersection; when building_density > 0 one road segment is flanked with
    long buildings on both sides to form a corridor.
    """
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    half_rw = spec.road_width // 2

    sem = np.full((h, w), int(SemanticLabel.GRASS), dtype=np.uint8)
    elev = np.clip(rng.normal(0.0, spec.ground_roughness, size=(h, w)), -0.05, 0.05)

    cols = [x for x in range(spec.road_pitch // 2, w - half_rw, spec.road_pitch)]
    rows = [y for y in range(spec.road_pitch // 2, h - half_rw, spec.road_pitch)]
    if len(cols) < 2 or len(rows) < 1:
        raise ValueError("world too small for a corridor: needs two vertical roads")
    for cx in cols:
        sem[:, cx - half_rw:cx + half_rw + 1] = int(SemanticLabel.ROAD)
    for cy in rows:
        sem[cy - half_rw:cy + half_rw + 1, :] = int(SemanticLabel.ROAD)

    intersection = (cols[0], rows[0])

    # Corridor: wall the first horizontal road segment between the first two
    # vertical roads with buildings hugging both road edges.
    cy = rows[0]
    seg_x0 = cols[0] + half_rw + 1
    seg_x1 = cols[1] - half_rw - 1
    if seg_x1 - seg_x0 < 8:
        raise ValueError("road pitch leaves no room for a corridor segment")
    wall_x0 = seg_x0 + 2
    wall_x1 = seg_x1 - 2
    depth = 6
    corridor_rect = (wall_x0, cy - half_rw, wall_x1, cy + half_rw)
    if spec.building_density > 0:
        for wy0, wy1 in ((cy - half_rw - depth, cy - half_rw - 1),
                         (cy + half_rw + 1, cy + half_rw + depth)):
            wy0 = max(wy0, 0)
            wy1 = min(wy1, h - 1)
            sem[wy0:wy1 + 1, wall_x0:wall_x1 + 1] = int(SemanticLabel.BUILDING)
            elev[wy0:wy1 + 1, wall_x0:wall_x1 + 1] = rng.uniform(4.0, 8.0)
    corridor_cell = ((wall_x0 + wall_x1) // 2, cy)

    # Fill the remaining blocks between roads.
    x_edges = [-half_rw - 1] + cols + [w + half_rw]
    y_edges = [-half_rw - 1] + rows + [h + half_rw]
    for yi in range(len(y_edges) - 1):
        for xi in range(len(x_edges) - 1):
            bx0 = max(x_edges[xi] + half_rw + 1, 0)
            bx1 = min(x_edges[xi + 1] - half_rw - 1, w - 1)
            by0 = max(y_edges[yi] + half_rw + 1, 0)
            by1 = min(y_edges[yi + 1] - half_rw - 1, h - 1)
            if bx1 < bx0 or by1 < by0:
                continue
            if spec.building_density > 0 or spec.vegetation_density > 0:
                _fill_block(rng, sem, elev, bx0, by0, bx1, by1, spec)

    # A few bare-ground patches on grass, for label variety.
    for _ in range(3):
        gw = int(rng.integers(3, 9))
        gh = int(rng.integers(3, 9))
        px = int(rng.integers(0, w - gw + 1))
        py = int(rng.integers(0, h - gh + 1))
        region = sem[py:py + gh, px:px + gw]
        region[region == int(SemanticLabel.GRASS)] = int(SemanticLabel.GROUND)

    obstacle = (sem == int(SemanticLabel.BUILDING)) | (sem == int(SemanticLabel.VEGETATION))
    amap = AerialMap.build(elevation=elev.astype(np.float64), semantic=sem,
                           obstacle=obstacle, resolution=spec.resolution)
    info = WorldInfo(
        corridor_cell=corridor_cell,
        corridor_rect=corridor_rect,
        intersection_cell=intersection,
        road_cols=tuple(cols),
        road_rows=tuple(rows),
    )
    return amap, info


def _bfs_path(road: np.ndarray, start, goal):
    """Shortest 4-connected path between two cells of the road mask."""
    h, w = road.shape
    sx, sy = start
    gx, gy = goal
    if not (road[sy, sx] and road[gy, gx]):
        raise ValueError("path endpoints must be road cells")
    parent = np.full((h, w), -1, dtype=np.int64)
    parent[sy, sx] = sy * w + sx
    q = deque([(sx, sy)])
    while q:
        x, y = q.popleft()
        if (x, y) == (gx, gy):
            break
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and road[ny, nx] and parent[ny, nx] < 0:
                parent[ny, nx] = y * w + x
                q.append((nx, ny))
    if parent[gy, gx] < 0:
        raise ValueError("road cells are not connected")
    path = []
    x, y = gx, gy
    while True:
        path.append((x, y))
        p = parent[y, x]
        px, py = int(p % w), int(p // w)
        if (px, py) == (x, y):
            break
        x, y = px, py
    path.reverse()
    return path


def _quantize_heading(dx: float, dy: float, quantum: float) -> float:
    ang = math.degrees(math.atan2(dy, dx)) % 360.0
    return (round(ang / quantum) * quantum) % 360.0


def plan_trajectory(amap: AerialMap, info: WorldInfo, n_steps: int, rng,
                    corridor_fraction: float = 0.0, stride: int = 2,
                    heading_quantum: float = 3.0) -> np.ndarray:
    """Plan a road-following pose sequence (x, y, heading_deg) of n_steps.

    Poses advance at most `stride` cells per step. With corridor_fraction > 0
    the route shuttles through the corridor until at least that fraction of
    poses lies inside it. Headings are snapped to multiples of
    heading_quantum so simulated scans can reuse a fixed angle grid.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not 0.0 <= corridor_fraction <= 1.0:
        raise ValueError("corridor_fraction must be in [0, 1]")
    road = np.asarray(amap.semantic == int(SemanticLabel.ROAD)) & amap.traversable

    cells_needed = n_steps * stride + 1
    if corridor_fraction > 0:
        x0, y0, x1, y1 = info.corridor_rect
        cy = info.corridor_cell[1]
        west, east = (x0, cy), (x1, cy)
        path = _bfs_path(road, info.intersection_cell, west)
        lap = _bfs_path(road, west, east)
        forward = True
        in_rect = 0
        while len(path) < cells_needed or in_rect < corridor_fraction * cells_needed:
            seg = lap[1:] if forward else [c for c in reversed(lap)][1:]
            path.extend(seg)
            in_rect += sum(1 for (cx, cyy) in seg
                           if x0 <= cx <= x1 and y0 <= cyy <= y1)
            forward = not forward
            if len(path) > 100 * cells_needed:
                raise ValueError("corridor too small for requested fraction")
    else:
        ys, xs = np.nonzero(road)
        path = [info.intersection_cell]
        while len(path) < cells_needed:
            j = int(rng.integers(0, xs.shape[0]))
            seg = _bfs_path(road, path[-1], (int(xs[j]), int(ys[j])))
            path.extend(seg[1:])

    cells = path[::stride]
    while 1 < len(cells) < n_steps:
        cells = cells + cells[-2::-1]  # ping-pong extension
    if len(cells) == 1:
        cells = cells * n_steps
    cells = cells[:n_steps]

    poses = np.zeros((n_steps, 3), dtype=np.float64)
    heading = 0.0
    for k in range(n_steps):
        poses[k, 0], poses[k, 1] = cells[k]
        if k + 1 < n_steps:
            dx = cells[k + 1][0] - cells[k][0]
            dy = cells[k + 1][1] - cells[k][1]
            if dx or dy:
                heading = _quantize_heading(dx, dy, heading_quantum)
        poses[k, 2] = heading
    return poses


def _first_hits(obstacle: np.ndarray, origin, table):
    """First obstacle cell per table angle, from one origin.

    Returns (hit mask (A,), hit_x, hit_y int64, dist float64). Only hits whose
    cell center lies within the table range are reported, like the kernels.
    """
    h, w = obstacle.shape
    ox, oy = int(origin[0]), int(origin[1])
    n_angles = table.starts.shape[0] - 1
    hit = np.zeros(n_angles, dtype=bool)
    hx = np.zeros(n_angles, dtype=np.int64)
    hy = np.zeros(n_angles, dtype=np.int64)
    hd = np.zeros(n_angles, dtype=np.float64)
    for a in range(n_angles):
        s, e = table.starts[a], table.starts[a + 1]
        xs = table.dx[s:e].astype(np.int64) + ox
        ys = table.dy[s:e].astype(np.int64) + oy
        inb = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        occ = np.zeros(inb.shape, dtype=bool)
        occ[inb] = obstacle[ys[inb], xs[inb]]
        if occ.any():
            k = int(occ.argmax())
            hit[a] = True
            hx[a] = xs[k]
            hy[a] = ys[k]
            hd[a] = float(table.dist[s + k])
    return hit, hx, hy, hd


def simulate_scan(world: AerialMap, pose, noise: NoiseSpec, rng,
                  dparams: DescriptorParams | None = None,
                  gparams: GroundParams | None = None, t: int = 0,
                  angular_step: float | None = None) -> GroundObservation:
    """Simulate one lidar+camera observation from a pose in the live world.

    The scan samples the full circle at `angular_step` (default: half the
    descriptor ray spacing); the pose heading must be a multiple of that step
    so descriptor azimuths land exactly on scanned directions. Points are in
    the robot frame with x forward.
    """
    dparams = dparams or DescriptorParams()
    gparams = gparams or GroundParams()
    if angular_step is None:
        angular_step = dparams.angle_step / 2.0
    n_world = round(360.0 / angular_step)
    if abs(n_world * angular_step - 360.0) > 1e-9:
        raise ValueError("angular_step must divide 360")
    heading = float(pose[2]) % 360.0
    steps = heading / angular_step
    if abs(steps - round(steps)) > 1e-6:
        raise ValueError("pose heading must be a multiple of angular_step")

    cx, cy = int(round(pose[0])), int(round(pose[1]))
    if not world.in_bounds(cx, cy):
        raise ValueError("pose outside the world")
    res = world.resolution
    angles = tuple(angular_step * k for k in range(n_world))
    table = ray_path_table(angles, dparams.max_range, res)
    hit, hx, hy, hd = _first_hits(world.obstacle, (cx, cy), table)

    h_grid, w_grid = world.obstacle.shape
    obstacle_grid = world.obstacle
    elev = world.elevation
    z0 = float(elev[cy, cx])
    half_fov = gparams.camera_fov_deg / 2.0
    label_step_ratio = dparams.angle_step / angular_step

    points = [(0.0, 0.0, 0.0)]
    ray_labels = {}
    for k in range(n_world):
        phi = angles[k]
        az = (phi - heading) % 360.0
        c_r = math.cos(math.radians(az))
        s_r = math.sin(math.radians(az))
        if hit[k]:
            d_true = hd[k]
            if noise.range_noise > 0:
                d_meas = max(d_true + float(rng.normal(0.0, noise.range_noise)), 0.5 * res)
            else:
                d_meas = d_true
            # Hit point at the obstacle cell center, rotated into the robot
            # frame, stretched radially by the measured range.
            wx = (hx[k] - cx) * res
            wy = (hy[k] - cy) * res
            ch = math.cos(math.radians(-heading))
            sh = math.sin(math.radians(-heading))
            px = (ch * wx - sh * wy) * (d_meas / d_true)
            py = (sh * wx + ch * wy) * (d_meas / d_true)
            points.append((px, py, float(elev[hy[k], hx[k]]) - z0))
            d_stop = d_meas
        else:
            d_stop = dparams.max_range

        r = GROUND_SAMPLE_STEP
        dir_wx = math.cos(math.radians(phi))
        dir_wy = math.sin(math.radians(phi))
        while r < d_stop:
            gx = int(round(cx + (r / res) * dir_wx))
            gy = int(round(cy + (r / res) * dir_wy))
            if not (0 <= gx < w_grid and 0 <= gy < h_grid):
                break
            # a sample radius that rounds into an obstacle cell gives no
            # ground return; obstacles only ever appear as beam hit points
            if not obstacle_grid[gy, gx]:
                points.append((r * c_r, r * s_r, float(elev[gy, gx]) - z0))
            r += GROUND_SAMPLE_STEP

        # Camera label for descriptor azimuths inside the field of view.
        az_steps = az / angular_step
        if hit[k] and abs(az_steps / label_step_ratio - round(az_steps / label_step_ratio)) < 1e-9:
            off = min(az, 360.0 - az)
            if off <= half_fov:
                code = int(world.semantic[hy[k], hx[k]])
                if noise.label_flip_prob > 0 and rng.random() < noise.label_flip_prob:
                    others = [c for c in range(5) if c != code]
                    code = int(others[int(rng.integers(0, len(others)))])
                ray_labels[_label_key(az)] = code

    surface = int(world.semantic[cy, cx])
    if noise.label_flip_prob > 0 and rng.random() < noise.label_flip_prob:
        others = [c for c in range(5) if c != surface]
        surface = int(others[int(rng.integers(0, len(others)))])

    return GroundObservation(
        t=t,
        points=np.array(points, dtype=np.float64),
        ray_labels=ray_labels,
        surface_label=surface,
    )


def simulate_odometry(poses: np.ndarray, noise: NoiseSpec, rng,
                      resolution: float = 0.34) -> np.ndarray:
    """Integrate true motion into a drifting local frame (meters).

    The frame differs from the map by a hidden similarity transform (random
    rotation, scale in [0.8, 1.25], offset); per-step heading and scale drift
    accumulate on top. With zero drift the output is an exact similarity
    image of the true positions.
    """
    poses = np.asarray(poses, dtype=np.float64)
    t_total = poses.shape[0]
    theta0 = float(rng.uniform(0.0, 360.0))
    scale0 = float(rng.uniform(0.8, 1.25))
    offset = rng.uniform(-20.0, 20.0, size=2)

    local = np.zeros((t_total, 2), dtype=np.float64)
    local[0] = offset
    for k in range(1, t_total):
        delta = (poses[k, :2] - poses[k - 1, :2]) * resolution
        ang = math.radians(theta0 + k * noise.odom_rot_drift)
        scale = scale0 * (1.0 + noise.odom_scale_drift) ** k
        c, s = math.cos(ang), math.sin(ang)
        local[k, 0] = local[k - 1, 0] + scale * (c * delta[0] - s * delta[1])
        local[k, 1] = local[k - 1, 1] + scale * (s * delta[0] + c * delta[1])
    return local


def inject_changes(amap: AerialMap, noise: NoiseSpec, rng,
                   keep_clear=None) -> AerialMap:
    """Derive the live world from the mapped one.

    Adds small free-standing obstacle blocks (at most 3x3, never touching an
    existing obstacle or a protected cell), clears blocks around randomly
    chosen mapped obstacles, then applies grass/vegetation appearance flips
    to labels only. Geometry edits always keep protected cells traversable.
    """
    h, w = amap.obstacle.shape
    elev = amap.elevation.copy()
    sem = amap.semantic.copy()
    obst = amap.obstacle.copy()
    protected = set((int(x), int(y)) for x, y in keep_clear) if keep_clear is not None else set()

    for _ in range(noise.add_blocks):
        placed = False
        for _attempt in range(500):
            bw = int(rng.integers(1, 4))
            bh = int(rng.integers(1, 4))
            x0 = int(rng.integers(0, w - bw + 1))
            y0 = int(rng.integers(0, h - bh + 1))
            ring_x0, ring_y0 = max(x0 - 1, 0), max(y0 - 1, 0)
            ring_x1, ring_y1 = min(x0 + bw + 1, w), min(y0 + bh + 1, h)
            if obst[ring_y0:ring_y1, ring_x0:ring_x1].any():
                continue
            if any((x, y) in protected
                   for y in range(y0, y0 + bh) for x in range(x0, x0 + bw)):
                continue
            obst[y0:y0 + bh, x0:x0 + bw] = True
            sem[y0:y0 + bh, x0:x0 + bw] = int(SemanticLabel.BUILDING)
            elev[y0:y0 + bh, x0:x0 + bw] = rng.uniform(3.0, 6.0)
            placed = True
            break
        if not placed:
            raise RuntimeError("could not place a change block on this map")

    for _ in range(noise.remove_blocks):
        ys, xs = np.nonzero(obst)
        if xs.shape[0] == 0:
            raise ValueError("map has no obstacles left to remove")
        j = int(rng.integers(0, xs.shape[0]))
        x0, y0 = max(int(xs[j]) - 1, 0), max(int(ys[j]) - 1, 0)
        x1, y1 = min(int(xs[j]) + 2, w), min(int(ys[j]) + 2, h)
        region = obst[y0:y1, x0:x1]
        sem[y0:y1, x0:x1][region] = int(SemanticLabel.GRASS)
        elev[y0:y1, x0:x1][region] = 0.0
        region[:] = False

    if noise.appearance_flip_prob > 0:
        grass = sem == int(SemanticLabel.GRASS)
        veg = sem == int(SemanticLabel.VEGETATION)
        flip = rng.random(size=sem.shape) < noise.appearance_flip_prob
        sem[grass & flip] = int(SemanticLabel.VEGETATION)
        sem[veg & flip] = int(SemanticLabel.GRASS)

    return AerialMap.build(elevation=elev, semantic=sem, obstacle=obst,
                           resolution=amap.resolution)


@dataclass
class SimDataset:
    """Everything one localization run consumes, before any file I/O."""

    amap: AerialMap                  # the (possibly stale) reference map
    world: AerialMap                 # the live world observations come from
    info: WorldInfo
    poses: np.ndarray                # (T, 3) true x, y, heading_deg
    observations: list               # GroundObservation per step
    odometry: np.ndarray             # (T, 2) local-frame positions, meters


def make_dataset(spec: WorldSpec, noise: NoiseSpec, n_steps: int,
                 corridor_fraction: float = 0.0,
                 dparams: DescriptorParams | None = None,
                 gparams: GroundParams | None = None) -> SimDataset:
    """Generate a world and a full observation sequence from it.

    All randomness derives from spec.seed, so equal arguments reproduce the
    dataset exactly.
    """
    dparams = dparams or DescriptorParams()
    gparams = gparams or GroundParams()
    amap, info = generate_world(spec)
    rng = np.random.default_rng(spec.seed + 0x9E3779B9)
    poses = plan_trajectory(amap, info, n_steps, rng,
                            corridor_fraction=corridor_fraction)
    keep = [(int(round(p[0])), int(round(p[1]))) for p in poses]
    world = inject_changes(amap, noise, rng, keep_clear=keep)
    observations = [
        simulate_scan(world, poses[k], noise, rng, dparams, gparams, t=k)
        for k in range(n_steps)
    ]
    odometry = simulate_odometry(poses, noise, rng, amap.resolution)
    return SimDataset(amap=amap, world=world, info=info, poses=poses,
                      observations=observations, odometry=odometry)
