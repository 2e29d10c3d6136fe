import numpy as np
import pytest

from aeroloc.geomap import (AerialMap, MapFormatError, ObstacleParams,
                            SemanticLabel, compute_edge_map,
                            extract_obstacles, load_map,
                            refine_segmentation, save_map)


def flat_map(h=8, w=10, res=0.34):
    elev = np.zeros((h, w))
    sem = np.full((h, w), SemanticLabel.GRASS, dtype=np.uint8)
    obst = np.zeros((h, w), dtype=bool)
    obst[2:4, 3:5] = True
    return AerialMap.build(elev, sem, obst, res)


def test_build_rejects_mismatched_grids():
    with pytest.raises(ValueError):
        AerialMap.build(np.zeros((4, 4)), np.zeros((4, 5), np.uint8),
                        np.zeros((4, 4), bool))


def test_build_rejects_bad_resolution():
    with pytest.raises(ValueError):
        AerialMap.build(np.zeros((4, 4)), np.zeros((4, 4), np.uint8),
                        np.zeros((4, 4), bool), resolution=0.0)


def test_traversable_complements_obstacle():
    amap = flat_map()
    assert np.array_equal(amap.traversable, ~amap.obstacle)
    cells = amap.traversable_cells()
    assert cells.shape == (amap.traversable.sum(), 2)
    # row-major: y varies slowest
    order = np.lexsort((cells[:, 0], cells[:, 1]))
    assert np.array_equal(order, np.arange(len(cells)))


def test_grids_are_read_only():
    amap = flat_map()
    with pytest.raises(ValueError):
        amap.obstacle[0, 0] = True


def test_in_bounds():
    amap = flat_map(h=8, w=10)
    assert amap.in_bounds(0, 0) and amap.in_bounds(9, 7)
    assert not amap.in_bounds(10, 0)
    assert not amap.in_bounds(0, -1)


def test_edge_map_flags_steps_above_threshold():
    elev = np.zeros((5, 5))
    elev[2, 2] = 1.0
    edges = compute_edge_map(elev, ObstacleParams(edge_gradient_threshold=0.5))
    # the raised cell and all 8 neighbors see the jump
    want = np.zeros((5, 5), bool)
    want[1:4, 1:4] = True
    assert np.array_equal(edges, want)


def test_edge_map_threshold_is_strict():
    elev = np.zeros((3, 3))
    elev[1, 1] = 0.5
    assert not compute_edge_map(
        elev, ObstacleParams(edge_gradient_threshold=0.5)).any()


def test_extract_obstacles_flat_ground_keeps_everything():
    elev = np.zeros((6, 6))
    obst = extract_obstacles(elev, compute_edge_map(elev))
    assert not obst.any()


def test_extract_obstacles_isolates_raised_block():
    elev = np.zeros((10, 10))
    elev[4:7, 4:7] = 3.0
    obst = extract_obstacles(elev, compute_edge_map(elev))
    want = np.zeros((10, 10), bool)
    want[4:7, 4:7] = True
    assert np.array_equal(obst, want)


def test_extract_obstacles_keeps_gentle_slope_traversable():
    # 0.1 m per cell stays below the 0.2 m step threshold everywhere
    elev = np.tile(np.arange(10) * 0.1, (5, 1))
    edges = compute_edge_map(elev)
    assert not edges.any()
    assert not extract_obstacles(elev, edges).any()


def test_refine_pushes_labels_to_consistent_sides():
    raw = np.array([[SemanticLabel.ROAD, SemanticLabel.GRASS,
                     SemanticLabel.SHADOW]], dtype=np.uint8)
    on_obst = refine_segmentation(raw, np.ones((1, 3), bool))
    assert list(on_obst[0]) == [SemanticLabel.BUILDING, SemanticLabel.VEGETATION,
                                SemanticLabel.BUILDING]
    on_free = refine_segmentation(raw, np.zeros((1, 3), bool))
    assert list(on_free[0]) == [SemanticLabel.ROAD, SemanticLabel.GRASS,
                                SemanticLabel.GROUND]


def test_refine_rejects_unknown_codes():
    with pytest.raises(ValueError):
        refine_segmentation(np.array([[7]], np.uint8), np.zeros((1, 1), bool))


def test_map_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    elev = rng.normal(0, 2, (12, 9))
    sem = rng.integers(0, 6, (12, 9)).astype(np.uint8)
    obst = rng.random((12, 9)) < 0.2
    amap = AerialMap.build(elev, sem, obst, 0.5)
    p = tmp_path / "m.amap"
    save_map(amap, p)
    back = load_map(p)
    assert back.width == amap.width and back.height == amap.height
    assert back.resolution == amap.resolution
    assert np.array_equal(back.elevation, amap.elevation)
    assert np.array_equal(back.semantic, amap.semantic)
    assert np.array_equal(back.obstacle, amap.obstacle)
    # and the bytes are stable too
    p2 = tmp_path / "m2.amap"
    save_map(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_load_map_recomputes_missing_obstacle_block(tmp_path):
    elev = np.zeros((10, 10))
    elev[4:6, 4:6] = 3.0
    amap = AerialMap.build(elev, np.zeros((10, 10), np.uint8),
                           np.zeros((10, 10), bool))
    p = tmp_path / "m.amap"
    save_map(amap, p)
    text = p.read_text().split("---\n")
    (tmp_path / "short.amap").write_text("---\n".join(text[:2]).rstrip("\n") + "\n")
    back = load_map(tmp_path / "short.amap")
    assert back.obstacle[4, 4] and not back.obstacle[0, 0]


@pytest.mark.parametrize("mutate", [
    lambda t: "XMAP" + t[4:],                      # wrong magic
    lambda t: t.replace("AMAP v1", "AMAP v2"),     # unknown version
    lambda t: "\n".join(t.splitlines()[:-2]) + "\n",  # truncated block
    lambda t: t[:-2] + "9\n",                      # 9 is not a 0/1 obstacle flag
])
def test_load_map_rejects_corrupt_files(tmp_path, mutate):
    amap = flat_map()
    p = tmp_path / "m.amap"
    save_map(amap, p)
    (tmp_path / "bad.amap").write_text(mutate(p.read_text()))
    with pytest.raises(MapFormatError):
        load_map(tmp_path / "bad.amap")
