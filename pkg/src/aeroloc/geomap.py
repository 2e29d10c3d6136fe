"""2.5D aerial map: co-registered elevation / semantic / obstacle grids.

Grids are numpy arrays indexed ``[y, x]`` (row-major). Cell coordinates are
``(x, y)`` pairs; a cell's center sits at integer coordinates, so cell
``(x, y)`` covers the half-open square ``[x-0.5, x+0.5) x [y-0.5, y+0.5)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage


class MapFormatError(ValueError):
    """Raised for malformed map files (bad header, sizes, label codes)."""


class SemanticLabel(IntEnum):
    ROAD = 0
    GRASS = 1
    VEGETATION = 2
    BUILDING = 3
    GROUND = 4
    SHADOW = 5
    INVALID = 255  # descriptor-only marker, never stored in map grids


N_MAP_LABELS = 6

# Labels a refined map may carry on non-obstacle / obstacle cells.
TRAVERSABLE_LABELS = (SemanticLabel.ROAD, SemanticLabel.GRASS, SemanticLabel.GROUND)
OBSTACLE_LABELS = (SemanticLabel.BUILDING, SemanticLabel.VEGETATION)


@dataclass(frozen=True)
class ObstacleParams:
    """DEM obstacle extraction thresholds (meters / meters-per-cell)."""

    elevation_step_threshold: float = 0.2
    edge_gradient_threshold: float = 0.5

    def __post_init__(self):
        if self.elevation_step_threshold <= 0 or self.edge_gradient_threshold <= 0:
            raise ValueError("obstacle thresholds must be strictly positive")


@dataclass(frozen=True)
class AerialMap:
    """Immutable 2.5D map: elevation (m), semantic labels, obstacle mask.

    ``traversable`` is always the complement of ``obstacle``.
    """

    width: int
    height: int
    resolution: float  # meters per cell
    elevation: np.ndarray  # float64 (H, W)
    semantic: np.ndarray  # uint8 (H, W), codes 0..5
    obstacle: np.ndarray  # bool (H, W)
    traversable: np.ndarray = field(default=None)  # bool (H, W), derived

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        shape = (self.height, self.width)
        for name in ("elevation", "semantic", "obstacle"):
            grid = getattr(self, name)
            if grid.shape != shape:
                raise ValueError(
                    f"{name} grid is {grid.shape}, expected {shape}")
        if self.traversable is None:
            object.__setattr__(self, "traversable", ~self.obstacle)
        elif np.any(self.traversable & self.obstacle):
            raise ValueError("traversable cells must not be obstacles")
        for name in ("elevation", "semantic", "obstacle", "traversable"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def build(cls, elevation, semantic, obstacle, resolution=0.34):
        elevation = np.ascontiguousarray(elevation, dtype=np.float64)
        semantic = np.ascontiguousarray(semantic, dtype=np.uint8)
        obstacle = np.ascontiguousarray(obstacle, dtype=bool)
        h, w = elevation.shape
        return cls(width=w, height=h, resolution=float(resolution),
                   elevation=elevation, semantic=semantic, obstacle=obstacle)

    def in_bounds(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def traversable_cells(self):
        """(M, 2) int32 array of (x, y) traversable cells, row-major order."""
        ys, xs = np.nonzero(self.traversable)
        return np.column_stack([xs, ys]).astype(np.int32)


def compute_edge_map(elevation, params: ObstacleParams = ObstacleParams()):
    """Mark cells whose elevation jumps against any 8-neighbor.

    A cell is an edge iff the max absolute elevation difference to one of its
    existing 8-neighbors strictly exceeds ``edge_gradient_threshold`` (per
    one cell of separation, diagonals included unscaled).
    """
    elevation = np.asarray(elevation, dtype=np.float64)
    if elevation.size == 0:
        raise ValueError("empty elevation grid")
    h, w = elevation.shape
    max_diff = np.zeros((h, w), dtype=np.float64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            ys0, ys1 = max(0, dy), min(h, h + dy)
            xs0, xs1 = max(0, dx), min(w, w + dx)
            diff = np.abs(elevation[ys0:ys1, xs0:xs1]
                          - elevation[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx])
            region = max_diff[ys0:ys1, xs0:xs1]
            np.maximum(region, diff, out=region)
    return max_diff > params.edge_gradient_threshold


def extract_obstacles(elevation, edges, params: ObstacleParams = ObstacleParams()):
    """Grow the ground region from the cell farthest from any edge.

    The seed maximizes Chebyshev distance to the nearest edge cell (ties
    broken row-major). Ground expands over 4-neighbors whose elevation
    differs from the current cell by strictly less than
    ``elevation_step_threshold``; everything left out is an obstacle.
    """
    elevation = np.asarray(elevation, dtype=np.float64)
    edges = np.asarray(edges, dtype=bool)
    if elevation.shape != edges.shape:
        raise ValueError("elevation and edge grids differ in shape")
    if edges.all():
        raise ValueError("degenerate DEM: every cell is an edge")
    h, w = elevation.shape
    if edges.any():
        dist = ndimage.distance_transform_cdt(~edges, metric="chessboard")
        seed_flat = int(np.argmax(dist))  # argmax is row-major-first on ties
    else:
        seed_flat = 0
    sy, sx = divmod(seed_flat, w)

    ground = np.zeros((h, w), dtype=bool)
    ground[sy, sx] = True
    queue = deque([(sx, sy)])
    thr = params.elevation_step_threshold
    while queue:
        x, y = queue.popleft()
        e = elevation[y, x]
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and not ground[ny, nx] \
                    and abs(elevation[ny, nx] - e) < thr:
                ground[ny, nx] = True
                queue.append((nx, ny))
    return ~ground


# Refinement lookup tables indexed by raw label code 0..5.
_REFINE_ON_OBSTACLE = np.array([
    SemanticLabel.BUILDING,    # Road confused with Building
    SemanticLabel.VEGETATION,  # Grass confused with Vegetation
    SemanticLabel.VEGETATION,
    SemanticLabel.BUILDING,
    SemanticLabel.BUILDING,    # Ground cannot sit on an obstacle
    SemanticLabel.BUILDING,    # Shadow on obstacles reads as Building
], dtype=np.uint8)
_REFINE_ON_FREE = np.array([
    SemanticLabel.ROAD,
    SemanticLabel.GRASS,
    SemanticLabel.GRASS,       # Vegetation confused with Grass
    SemanticLabel.ROAD,        # Building confused with Road
    SemanticLabel.GROUND,
    SemanticLabel.GROUND,      # Shadow on free ground reads as Ground
], dtype=np.uint8)


def refine_segmentation(raw, obstacle):
    """Reconcile raw labels with the obstacle mask; drops Shadow entirely."""
    raw = np.asarray(raw, dtype=np.uint8)
    obstacle = np.asarray(obstacle, dtype=bool)
    if raw.shape != obstacle.shape:
        raise ValueError("label and obstacle grids differ in shape")
    if raw.size and raw.max() >= N_MAP_LABELS:
        raise ValueError("unknown label code in raw segmentation")
    return np.where(obstacle, _REFINE_ON_OBSTACLE[raw], _REFINE_ON_FREE[raw])


# ---------------------------------------------------------------------------
# AMAP v1 grid file format
# ---------------------------------------------------------------------------

_AMAP_MAGIC = "AMAP"
_AMAP_VERSION = "v1"
_BLOCK_SEP = "---"


def _format_float(x: float) -> str:
    # repr round-trips float64 exactly, keeping save(load(f)) bit-identical
    return repr(float(x))


def save_map(amap: AerialMap, path):
    """Write the AMAP v1 text format (elevation, semantic, obstacle blocks)."""
    lines = [f"{_AMAP_MAGIC} {_AMAP_VERSION} {amap.width} {amap.height} "
             f"{_format_float(amap.resolution)}"]
    for row in amap.elevation:
        lines.append(" ".join(_format_float(v) for v in row))
    lines.append(_BLOCK_SEP)
    for row in amap.semantic:
        lines.append(" ".join(str(int(v)) for v in row))
    lines.append(_BLOCK_SEP)
    for row in amap.obstacle:
        lines.append(" ".join("1" if v else "0" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_map(path) -> AerialMap:
    """Parse an AMAP v1 file; recomputes obstacles when the block is absent."""
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise MapFormatError("empty map file")
    header = lines[0].split()
    if len(header) != 5 or header[0] != _AMAP_MAGIC or header[1] != _AMAP_VERSION:
        raise MapFormatError(f"malformed header: {lines[0]!r}")
    try:
        width, height = int(header[2]), int(header[3])
        resolution = float(header[4])
    except ValueError as exc:
        raise MapFormatError(f"malformed header: {lines[0]!r}") from exc
    if width <= 0 or height <= 0 or resolution <= 0:
        raise MapFormatError("header dimensions/resolution must be positive")

    blocks, current = [], []
    for line in lines[1:]:
        if line.strip() == _BLOCK_SEP:
            blocks.append(current)
            current = []
        else:
            current.extend(line.split())
    blocks.append(current)
    if len(blocks) not in (2, 3):
        raise MapFormatError(f"expected 2 or 3 grid blocks, found {len(blocks)}")

    n = width * height

    def parse_block(tokens, name, dtype):
        if len(tokens) != n:
            raise MapFormatError(
                f"{name} block has {len(tokens)} values, expected {n}")
        try:
            arr = np.array(tokens, dtype=dtype)
        except ValueError as exc:
            raise MapFormatError(f"bad value in {name} block") from exc
        return arr.reshape(height, width)

    elevation = parse_block(blocks[0], "elevation", np.float64)
    semantic_int = parse_block(blocks[1], "semantic", np.int64)
    if semantic_int.min() < 0 or semantic_int.max() >= N_MAP_LABELS:
        raise MapFormatError("unknown label code in semantic block")
    semantic = semantic_int.astype(np.uint8)

    if len(blocks) == 3:
        obst_int = parse_block(blocks[2], "obstacle", np.int64)
        if not np.isin(obst_int, (0, 1)).all():
            raise MapFormatError("obstacle block must contain only 0/1")
        obstacle = obst_int.astype(bool)
    else:
        params = ObstacleParams()
        obstacle = extract_obstacles(elevation, compute_edge_map(elevation, params), params)

    return AerialMap.build(elevation, semantic, obstacle, resolution)
