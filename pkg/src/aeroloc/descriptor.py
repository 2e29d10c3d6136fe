"""Scan-line descriptors, rotation search, and map-wide score fields.

A descriptor samples N evenly spaced rays from a cell center and records, per
ray, the distance to the first obstacle cell center (range channel) and the
label of that cell (semantic channel). Rays that hit nothing within range
carry -1 / 255. Rotating the sensor by a multiple of the angular step is a
circular shift of both channels, which is what the rotation search exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aeroloc import kernels
from aeroloc.geomap import AerialMap, SemanticLabel
from aeroloc.rays import ray_path_table

INVALID_RANGE = -1.0
INVALID_LABEL = 255

_ADSC_MAGIC = "ADSC"
_SFLD_MAGIC = "SFLD"


class CacheFormatError(ValueError):
    """Raised when a descriptor cache or score field file is malformed."""


@dataclass(frozen=True)
class DescriptorParams:
    n_lines: int = 60
    max_range: float = 40.0
    range_tolerance: float = 4.0

    def __post_init__(self):
        if self.n_lines < 4:
            raise ValueError("n_lines must be at least 4")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if not 0 < self.range_tolerance <= self.max_range:
            raise ValueError("range_tolerance must be in (0, max_range]")

    @property
    def angle_step(self) -> float:
        """Angular spacing between consecutive rays, degrees."""
        return 360.0 / self.n_lines

    def angles(self) -> tuple:
        return tuple(360.0 * i / self.n_lines for i in range(self.n_lines))


@dataclass(frozen=True)
class Descriptor:
    """One scan-line descriptor: per-ray ranges (meters) and labels."""

    ranges: np.ndarray  # float32 (N,), -1 marks an invalid ray
    labels: np.ndarray  # uint8 (N,), 255 marks no semantic reading

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=np.float32)
        l = np.asarray(self.labels, dtype=np.uint8)
        if r.ndim != 1 or l.shape != r.shape:
            raise ValueError("ranges and labels must be 1-D and equally long")
        if np.any((l != INVALID_LABEL) & (r < 0)):
            raise ValueError("a ray with a semantic label must have a valid range")
        object.__setattr__(self, "ranges", r)
        object.__setattr__(self, "labels", l)

    @property
    def n(self) -> int:
        return self.ranges.shape[0]

    def valid_ranges(self) -> np.ndarray:
        return self.ranges >= 0

    def valid_labels(self) -> np.ndarray:
        return self.labels != INVALID_LABEL

    def without_labels(self) -> "Descriptor":
        """Copy with the semantic channel blanked (range-only matching)."""
        return Descriptor(self.ranges, np.full(self.n, INVALID_LABEL, dtype=np.uint8))


def rotate_descriptor(desc: Descriptor, omega_deg: float) -> Descriptor:
    """Descriptor as seen after rotating the sensor by omega degrees.

    omega must be a multiple of the descriptor's angular step; ray i of the
    result is ray (i + omega/step) mod N of the input.
    """
    step = 360.0 / desc.n
    k_float = (omega_deg % 360.0) / step
    k = int(round(k_float))
    if abs(k_float - k) > 1e-9:
        raise ValueError(f"rotation {omega_deg} is not a multiple of {step} degrees")
    k %= desc.n
    return Descriptor(np.roll(desc.ranges, -k), np.roll(desc.labels, -k))


def similarity(d_ugv: Descriptor, d_uav: Descriptor, params: DescriptorParams) -> float:
    """Similarity of a ground descriptor against an aerial one.

    Counts rays whose ranges agree within range_tolerance (both valid) plus
    gamma times the count of matching labels (both valid), where
    gamma = N / (number of valid labels in d_ugv). With no valid labels the
    semantic term is dropped. Result lies in [0, 2N].
    """
    n = params.n_lines
    if d_ugv.n != n or d_uav.n != n:
        raise ValueError("descriptor length does not match params.n_lines")
    both_r = d_ugv.valid_ranges() & d_uav.valid_ranges()
    close = np.abs(d_uav.ranges - d_ugv.ranges) < np.float32(params.range_tolerance)
    nr = int(np.count_nonzero(both_r & close))
    v = int(np.count_nonzero(d_ugv.valid_labels()))
    if v == 0:
        return float(nr)
    both_l = d_ugv.valid_labels() & d_uav.valid_labels()
    ns = int(np.count_nonzero(both_l & (d_ugv.labels == d_uav.labels)))
    return float(nr) + (n / v) * float(ns)


def _cast(obstacle_u8, semantic_u8, origins, params: DescriptorParams, resolution: float):
    """Run the ray kernel for the descriptor angle set."""
    table = ray_path_table(params.angles(), params.max_range, resolution)
    origins = np.ascontiguousarray(origins, dtype=np.int64)
    return kernels.cast_rays(
        obstacle_u8, semantic_u8, origins,
        table.dx, table.dy, table.dist, table.starts,
        np.float32(params.max_range),
    )


def _map_grids_u8(amap: AerialMap):
    obstacle = np.ascontiguousarray(amap.obstacle.view(np.uint8))
    semantic = np.ascontiguousarray(amap.semantic)
    return obstacle, semantic


def compute_descriptor(obstacle, semantic, origin, params: DescriptorParams,
                       resolution: float = 0.34) -> Descriptor:
    """Descriptor cast from one cell of an obstacle/label grid pair.

    obstacle is a boolean (or 0/1) grid, semantic a uint8 label grid of the
    same shape (255 where no label applies), origin an (x, y) cell inside
    the grid.
    """
    obstacle = np.ascontiguousarray(obstacle)
    if obstacle.dtype == bool:
        obstacle = obstacle.view(np.uint8)
    semantic = np.ascontiguousarray(semantic, dtype=np.uint8)
    if obstacle.shape != semantic.shape:
        raise ValueError("obstacle and semantic grids must have the same shape")
    x, y = int(origin[0]), int(origin[1])
    h, w = obstacle.shape
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"origin {(x, y)} outside the grid")
    if obstacle[y, x]:
        raise ValueError(f"origin {(x, y)} is inside an obstacle")
    ranges, labels = _cast(obstacle, semantic, np.array([[x, y]]), params, resolution)
    return Descriptor(ranges[0], labels[0])


@dataclass
class AerialDescriptorSet:
    """Descriptors for every traversable cell of one map.

    ranges/labels are laid out (M, N), one cell per row, matching the cell
    order of ``cells``; the (N, M) matrix views are exposed as f_depth and
    f_semantic. cell_labels holds each cell's own map label (for surface
    masking), and width/height remember the source map dimensions.
    """

    cells: np.ndarray        # int32 (M, 2) as (x, y), row-major map order
    ranges: np.ndarray       # float32 (M, N)
    labels: np.ndarray       # uint8 (M, N)
    cell_labels: np.ndarray  # uint8 (M,)
    width: int
    height: int

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int32)
        self.ranges = np.ascontiguousarray(self.ranges, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        self.cell_labels = np.ascontiguousarray(self.cell_labels, dtype=np.uint8)
        if self.cells.ndim != 2 or self.cells.shape[1] != 2:
            raise ValueError("cells must be (M, 2)")
        m = self.cells.shape[0]
        if self.ranges.shape != self.labels.shape or self.ranges.shape[0] != m:
            raise ValueError("ranges/labels must be (M, N) aligned with cells")
        if self.cell_labels.shape != (m,):
            raise ValueError("cell_labels must be (M,)")
        if self.width < 1 or self.height < 1:
            raise ValueError("width/height must be positive")

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_lines(self) -> int:
        return self.ranges.shape[1]

    @property
    def f_depth(self) -> np.ndarray:
        """Range channel as an (N, M) matrix, column j for cell j."""
        return self.ranges.T

    @property
    def f_semantic(self) -> np.ndarray:
        return self.labels.T

    def descriptor_at(self, j: int) -> Descriptor:
        return Descriptor(self.ranges[j], self.labels[j])


def build_aerial_descriptors(amap: AerialMap, params: DescriptorParams) -> AerialDescriptorSet:
    """Cast descriptors from every traversable cell of the map."""
    cells = amap.traversable_cells()
    if cells.shape[0] == 0:
        raise ValueError("map has no traversable cells")
    obstacle, semantic = _map_grids_u8(amap)
    ranges, labels = _cast(obstacle, semantic, cells, params, amap.resolution)
    return AerialDescriptorSet(
        cells=cells, ranges=ranges, labels=labels,
        cell_labels=amap.semantic[cells[:, 1], cells[:, 0]],
        width=amap.width, height=amap.height)


def save_descriptor_set(dset: AerialDescriptorSet, path) -> None:
    """Write the binary descriptor cache (little-endian, fixed layout)."""
    n, m = dset.n_lines, dset.n_cells
    with open(path, "wb") as f:
        f.write(f"{_ADSC_MAGIC} v1 {n} {m}\n".encode("ascii"))
        f.write(np.ascontiguousarray(dset.f_depth, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(dset.f_semantic, dtype=np.uint8).tobytes())
        f.write(np.ascontiguousarray(dset.cells, dtype="<u4").tobytes())


def _read_exact(f, count, what):
    buf = f.read(count)
    if len(buf) != count:
        raise CacheFormatError(f"truncated file while reading {what}")
    return buf


def load_descriptor_set(path, amap: AerialMap) -> AerialDescriptorSet:
    """Load a descriptor cache for the map it was built from.

    The file stores only the descriptor matrices and cell list; the per-cell
    surface labels and grid extent come from the map, so passing a different
    map than the one given to build_aerial_descriptors is an error.
    """
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        if len(header) != 4 or header[0] != _ADSC_MAGIC or header[1] != "v1":
            raise CacheFormatError("not a descriptor cache file")
        try:
            n, m = int(header[2]), int(header[3])
        except ValueError as exc:
            raise CacheFormatError("bad descriptor cache header") from exc
        if n <= 0 or m <= 0:
            raise CacheFormatError("bad descriptor cache dimensions")
        depth = np.frombuffer(_read_exact(f, 4 * n * m, "ranges"), dtype="<f4").reshape(n, m)
        sem = np.frombuffer(_read_exact(f, n * m, "labels"), dtype=np.uint8).reshape(n, m)
        cells = np.frombuffer(_read_exact(f, 8 * m, "cells"), dtype="<u4").reshape(m, 2)
        if f.read(1):
            raise CacheFormatError("trailing bytes after descriptor cache payload")
    cx, cy = cells[:, 0].astype(np.int64), cells[:, 1].astype(np.int64)
    if cx.size and (cx.max() >= amap.width or cy.max() >= amap.height):
        raise CacheFormatError("descriptor cache does not fit the given map")
    return AerialDescriptorSet(
        cells=cells.astype(np.int32),
        ranges=np.ascontiguousarray(depth.T),
        labels=np.ascontiguousarray(sem.T),
        cell_labels=amap.semantic[cy, cx],
        width=amap.width, height=amap.height,
    )


@dataclass
class ScoreField:
    """Per-cell best-over-rotations similarity scores."""

    cells: np.ndarray              # int32 (M, 2)
    scores: np.ndarray             # float64 (M,)
    best_rotation_deg: np.ndarray  # float64 (M,)
    shape: tuple                   # (height, width) of the source map
    _grid: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int32)
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        self.best_rotation_deg = np.ascontiguousarray(self.best_rotation_deg, dtype=np.float64)
        if self.scores.shape != (self.cells.shape[0],):
            raise ValueError("scores must align with cells")
        if self.best_rotation_deg.shape != self.scores.shape:
            raise ValueError("best_rotation_deg must align with cells")

    def score_grid(self) -> np.ndarray:
        """Dense (H, W) view of the field; non-scored cells are 0."""
        if self._grid is None:
            g = np.zeros(self.shape, dtype=np.float64)
            g[self.cells[:, 1], self.cells[:, 0]] = self.scores
            self._grid = g
        return self._grid

    def score_at(self, positions) -> np.ndarray:
        """Scores of the cells containing continuous positions (x, y).

        Positions outside the map score 0, as do non-traversable cells.
        """
        pos = np.asarray(positions, dtype=np.float64)
        single = pos.ndim == 1
        pos = np.atleast_2d(pos)
        cx = np.rint(pos[:, 0]).astype(np.int64)
        cy = np.rint(pos[:, 1]).astype(np.int64)
        h, w = self.shape
        inb = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        out = np.zeros(pos.shape[0], dtype=np.float64)
        grid = self.score_grid()
        out[inb] = grid[cy[inb], cx[inb]]
        return out[0] if single else out


# Labels a reported driving surface rules out (surface label -> impossible labels).
_SURFACE_EXCLUDES = {
    int(SemanticLabel.ROAD): (int(SemanticLabel.GRASS), int(SemanticLabel.GROUND)),
    int(SemanticLabel.GRASS): (int(SemanticLabel.ROAD),),
}


def score_field(d_ugv: Descriptor, dset: AerialDescriptorSet,
                params: DescriptorParams, surface=None,
                use_semantic: bool = True) -> ScoreField:
    """Score the ground descriptor against every cell of the aerial set.

    Each cell's score is the maximum similarity over all N rotations of the
    ground descriptor; rotation ties keep the smallest angle. When a driving
    surface is given, cells whose own map label contradicts it are zeroed.
    With use_semantic False the semantic term is dropped entirely.
    """
    n = params.n_lines
    if d_ugv.n != n:
        raise ValueError("descriptor length does not match params.n_lines")
    if dset.n_lines != n:
        raise ValueError("descriptor cache was built with a different n_lines")
    if use_semantic:
        v = int(np.count_nonzero(d_ugv.valid_labels()))
        gamma = n / v if v > 0 else 0.0
    else:
        gamma = 0.0
    scores, best = kernels.score_rotations(
        d_ugv.ranges, d_ugv.labels, dset.ranges, dset.labels,
        np.float32(params.range_tolerance), float(gamma),
    )
    scores = np.asarray(scores, dtype=np.float64).copy()
    if surface is not None:
        excluded = _SURFACE_EXCLUDES.get(int(surface))
        if excluded:
            scores[np.isin(dset.cell_labels, excluded)] = 0.0
    return ScoreField(
        cells=dset.cells,
        scores=scores,
        best_rotation_deg=np.asarray(best, dtype=np.float64) * params.angle_step,
        shape=(dset.height, dset.width),
    )


def independent_estimate(fld: ScoreField):
    """Cell with the highest score; ties resolve to the smallest (y, x)."""
    if fld.scores.shape[0] == 0:
        raise ValueError("empty score field")
    top = fld.scores.max()
    cand = fld.cells[fld.scores == top]
    pick = cand[np.lexsort((cand[:, 0], cand[:, 1]))[0]]
    return int(pick[0]), int(pick[1])


def save_score_field(fld: ScoreField, path) -> None:
    m = fld.scores.shape[0]
    h, w = fld.shape
    with open(path, "wb") as f:
        f.write(f"{_SFLD_MAGIC} v1 {m} {h} {w}\n".encode("ascii"))
        f.write(np.ascontiguousarray(fld.scores, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(fld.best_rotation_deg, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(fld.cells, dtype="<u4").tobytes())


def load_score_field(path) -> ScoreField:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        if len(header) != 5 or header[0] != _SFLD_MAGIC or header[1] != "v1":
            raise CacheFormatError("not a score field file")
        try:
            m, h, w = int(header[2]), int(header[3]), int(header[4])
        except ValueError as exc:
            raise CacheFormatError("bad score field header") from exc
        if m < 0 or h <= 0 or w <= 0:
            raise CacheFormatError("bad score field dimensions")
        scores = np.frombuffer(_read_exact(f, 8 * m, "scores"), dtype="<f8")
        best = np.frombuffer(_read_exact(f, 8 * m, "rotations"), dtype="<f8")
        cells = np.frombuffer(_read_exact(f, 8 * m, "cells"), dtype="<u4").reshape(m, 2)
        if f.read(1):
            raise CacheFormatError("trailing bytes after score field payload")
    return ScoreField(
        cells=cells.astype(np.int32),
        scores=scores.copy(),
        best_rotation_deg=best.copy(),
        shape=(h, w),
    )
