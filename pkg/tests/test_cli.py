import numpy as np
import pytest

from aeroloc.cli import main

WORLD_CFG = """\
# small test world
width = 64
height = 64
road_pitch = 20
steps = 8
seed = 3
"""

RUN_CFG = """\
mode = range-semantic
map = world.amap
cache = cache.adsc
observations = observations.obs
trajectory = trajectory.csv
truth = truth.csv
seed = 5
iterations = 2
"""


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    (d / "world.cfg").write_text(WORLD_CFG)
    assert main(["gen-world", "--config", str(d / "world.cfg"),
                 "--out", str(d)]) == 0
    return d


def test_gen_world_outputs(dataset_dir, capsys):
    for name in ("world.amap", "truth.csv", "trajectory.csv",
                 "observations.obs"):
        assert (dataset_dir / name).exists()


def test_gen_world_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("width 64\n")
    assert main(["gen-world", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err

    cfg.write_text("martians = 4\n")
    assert main(["gen-world", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_precompute(dataset_dir, capsys):
    out = dataset_dir / "cache.adsc"
    assert main(["precompute", "--map", str(dataset_dir / "world.amap"),
                 "--out", str(out)]) == 0
    assert out.exists()
    assert "cached" in capsys.readouterr().out


def test_precompute_missing_map(tmp_path, capsys):
    assert main(["precompute", "--map", str(tmp_path / "nope.amap"),
                 "--out", str(tmp_path / "c.adsc")]) == 2


def test_localize_and_eval_and_heatmap(dataset_dir, tmp_path, capsys):
    cfg = dataset_dir / "run.cfg"
    cfg.write_text(RUN_CFG)
    runs = tmp_path / "runs"
    assert main(["localize", "--config", str(cfg), "--out", str(runs),
                 "--dump-field", "0"]) == 0
    out = capsys.readouterr().out
    assert "seed=5" in out and "seed=6" in out
    assert "mean_error_m=" in out
    for seed in (5, 6):
        assert (runs / f"report_range-semantic_{seed}.json").exists()
        assert (runs / f"estimates_range-semantic_{seed}.csv").exists()
    field = runs / "field_0.sfld"
    assert field.exists()

    table = tmp_path / "table.csv"
    assert main(["eval", "--runs", str(runs), "--out", str(table)]) == 0
    out = capsys.readouterr().out
    assert "+/-" in out and "(n=2)" in out
    assert table.read_text().startswith("metric,range-semantic")

    image = tmp_path / "field.ppm"
    assert main(["heatmap", "--field", str(field),
                 "--map", str(dataset_dir / "world.amap"),
                 "--out", str(image), "--truth", "20,10"]) == 0
    assert image.read_bytes().startswith(b"P6\n64 64\n255\n")


def test_localize_is_deterministic(dataset_dir, tmp_path, capsys):
    cfg = dataset_dir / "det.cfg"
    cfg.write_text(RUN_CFG.replace("iterations = 2", "iterations = 1"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["localize", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["localize", "--config", str(cfg), "--out", str(b)]) == 0
    name = "estimates_range-semantic_5.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_localize_bad_configs(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("observations = o\ntrajectory = t\n")
    assert main(["localize", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    cfg.write_text(RUN_CFG + "wormholes = 3\n")
    assert main(["localize", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "wormholes" in capsys.readouterr().err


def test_localize_not_localizable_exits_3(dataset_dir, tmp_path, capsys):
    cfg = dataset_dir / "hard.cfg"
    cfg.write_text(RUN_CFG.replace("mode = range-semantic", "mode = range-full")
                   .replace("iterations = 2", "iterations = 1")
                   + "ransac_min_inliers = 9\n")
    assert main(["localize", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "not localizable" in capsys.readouterr().err


def test_eval_empty_dir(tmp_path, capsys):
    assert main(["eval", "--runs", str(tmp_path)]) == 2


def test_heatmap_bad_truth(dataset_dir, tmp_path, capsys):
    runs = tmp_path / "runs"
    cfg = dataset_dir / "one.cfg"
    cfg.write_text(RUN_CFG.replace("iterations = 2", "iterations = 1"))
    assert main(["localize", "--config", str(cfg), "--out", str(runs),
                 "--dump-field", "0"]) == 0
    assert main(["heatmap", "--field", str(runs / "field_0.sfld"),
                 "--map", str(dataset_dir / "world.amap"),
                 "--out", str(tmp_path / "x.ppm"), "--truth", "7"]) == 2
