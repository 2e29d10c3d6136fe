import numpy as np
import pytest

from aeroloc import harness
from aeroloc.alignment import NotLocalizableError
from aeroloc.descriptor import (DescriptorParams, build_aerial_descriptors,
                                save_descriptor_set)
from aeroloc.geomap import save_map
from aeroloc.ground import save_observations, save_trajectory
from aeroloc.harness import (RunConfig, RunReport, eval_runs, export_heatmap,
                             format_eval_table, load_truth, run_localization,
                             run_pipeline, save_truth, write_estimate_log,
                             write_eval_table)


def short_run(ds, cache, mode, t=12, seed=0, **kw):
    return run_localization(ds.amap, cache, ds.observations[:t],
                            ds.odometry[:t], mode, seed=seed,
                            truth=ds.poses[:t], **kw)


def fake_report(mode, errors, seed=0):
    t = len(errors)
    z = np.zeros((t, 2))
    e = np.asarray(errors, dtype=np.float64)
    return RunReport(mode=mode, seed=seed, resolution=0.34, xbar=z, xhat=z,
                     xtilde=np.full((t, 2), np.nan), xfull=z,
                     errors_online_m=e, errors_full_m=e, timings={})


# --- run_localization --------------------------------------------------------

def test_run_produces_full_report(clean_dataset, small_cache):
    rep = short_run(clean_dataset, small_cache, "range-semantic")
    assert rep.xbar.shape == (12, 2)
    assert rep.xhat.shape == (12, 2)
    assert rep.xtilde.shape == (12, 2)
    assert rep.errors_online_m.shape == (12,)
    assert np.isnan(rep.xtilde[:3]).all()     # no prior before sample_size
    assert np.isfinite(rep.xtilde[3:]).all()  # clean run aligns every step
    assert set(rep.timings) == {"descriptor_s", "scoring_s", "alignment_s",
                                "filter_s"}
    assert rep.positions() is rep.xbar


def test_clean_run_localizes_well(clean_dataset, small_cache):
    rep = run_localization(clean_dataset.amap, small_cache,
                           clean_dataset.observations, clean_dataset.odometry,
                           "range-semantic", seed=0,
                           truth=clean_dataset.poses)
    assert rep.mean_error_m() / 0.34 <= 15.0
    assert rep.errors_full_m is not None
    assert float(np.mean(rep.errors_full_m)) / 0.34 <= 5.0


def test_full_mode_reports_refit_track(clean_dataset, small_cache):
    rep = short_run(clean_dataset, small_cache, "range-semantic-full")
    assert rep.xfull is not None
    assert rep.positions() is rep.xfull
    assert rep.errors_m() is rep.errors_full_m


def test_modes_differ(clean_dataset, small_cache):
    a = short_run(clean_dataset, small_cache, "range")
    b = short_run(clean_dataset, small_cache, "range-semantic")
    assert not np.array_equal(a.xhat, b.xhat) or not np.array_equal(a.xbar, b.xbar)


def test_same_seed_reproduces_exactly(clean_dataset, small_cache):
    a = short_run(clean_dataset, small_cache, "range-semantic", seed=3)
    b = short_run(clean_dataset, small_cache, "range-semantic", seed=3)
    assert np.array_equal(a.xbar, b.xbar)
    assert np.array_equal(a.xhat, b.xhat)
    c = short_run(clean_dataset, small_cache, "range-semantic", seed=4)
    assert not np.array_equal(a.xbar, c.xbar)


def test_on_field_sees_every_step(clean_dataset, small_cache):
    seen = []
    short_run(clean_dataset, small_cache, "range", t=5,
              on_field=lambda t, fld: seen.append((t, fld.scores.shape[0])))
    assert [t for t, _ in seen] == [0, 1, 2, 3, 4]
    assert all(n > 0 for _, n in seen)


def test_run_input_validation(clean_dataset, small_cache):
    ds = clean_dataset
    with pytest.raises(ValueError):
        short_run(ds, small_cache, "telepathy")
    with pytest.raises(ValueError):
        run_localization(ds.amap, small_cache, ds.observations[:5],
                         ds.odometry[:4], "range")
    with pytest.raises(ValueError):
        run_localization(ds.amap, small_cache, ds.observations[:5],
                         ds.odometry[:5], "range", truth=ds.poses[:4])
    with pytest.raises(ValueError):
        run_localization(ds.amap, small_cache, ds.observations[:5],
                         ds.odometry[:5], "range",
                         dparams=DescriptorParams(n_lines=30))


def test_errors_require_truth(clean_dataset, small_cache):
    ds = clean_dataset
    rep = run_localization(ds.amap, small_cache, ds.observations[:6],
                           ds.odometry[:6], "range")
    assert rep.errors_online_m is None
    with pytest.raises(ValueError):
        rep.mean_error_m()


# --- report serialization ----------------------------------------------------

def test_report_round_trip(tmp_path, clean_dataset, small_cache):
    rep = short_run(clean_dataset, small_cache, "range", t=6)
    path = tmp_path / "report.json"
    rep.save(path)
    back = RunReport.load(path)
    assert back.mode == rep.mode and back.seed == rep.seed
    assert np.array_equal(back.xbar, rep.xbar)
    assert np.array_equal(back.xhat, rep.xhat)
    assert np.allclose(back.xtilde, rep.xtilde, equal_nan=True)
    assert np.array_equal(back.errors_online_m, rep.errors_online_m)


def test_estimate_log_golden(tmp_path):
    rep = fake_report("range", [1.0, 2.0])
    rep.xbar = np.array([[1.0, 2.0], [3.5, 4.25]])
    rep.xhat = np.array([[5.0, 6.0], [7.0, 8.0]])
    rep.xtilde = np.array([[np.nan, np.nan], [9.0, 10.0]])
    path = tmp_path / "estimates.csv"
    write_estimate_log(rep, path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "t,xbar_x,xbar_y,xhat_x,xhat_y,xtilde_x,xtilde_y"
    assert lines[1] == "0,1.0,2.0,5.0,6.0,nan,nan"
    assert lines[2] == "1,3.5,4.25,7.0,8.0,9.0,10.0"


def test_estimate_log_is_byte_stable(tmp_path, clean_dataset, small_cache):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_estimate_log(short_run(clean_dataset, small_cache, "range", t=8), p1)
    write_estimate_log(short_run(clean_dataset, small_cache, "range", t=8), p2)
    assert p1.read_bytes() == p2.read_bytes()


# --- evaluation --------------------------------------------------------------

def test_eval_runs_mean_and_stderr():
    reports = [fake_report("range", [4.0, 4.0]),
               fake_report("range", [6.0, 6.0])]
    stats = eval_runs(reports)
    mean, stderr, n = stats["range"]
    assert mean == pytest.approx(5.0)
    assert stderr == pytest.approx(1.0)   # std([4,6], ddof=1)/sqrt(2)
    assert n == 2
    assert eval_runs(reports[::-1])["range"] == stats["range"]


def test_eval_runs_groups_by_mode():
    reports = [fake_report("range", [2.0]), fake_report("range", [2.0]),
               fake_report("range-full", [1.0]), fake_report("range-full", [3.0])]
    stats = eval_runs(reports)
    assert stats["range"][0] == pytest.approx(2.0)
    assert stats["range"][1] == pytest.approx(0.0)
    assert stats["range-full"][0] == pytest.approx(2.0)


def test_eval_runs_rejects_single_run():
    with pytest.raises(ValueError):
        eval_runs([fake_report("range", [1.0])])


def test_eval_table_outputs(tmp_path):
    stats = {"range": (2.0, 0.5, 4), "range-semantic": (1.5, 0.25, 4)}
    path = tmp_path / "table.csv"
    write_eval_table(stats, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "metric,range,range-semantic"
    assert lines[1] == "mean_m,2.0,1.5"
    assert lines[2] == "stderr_m,0.5,0.25"
    assert lines[3] == "runs,4,4"
    text = format_eval_table(stats)
    assert "2.00 +/- 0.50 (n=4)" in text


# --- heatmap -----------------------------------------------------------------

def test_heatmap_ppm(tmp_path, clean_dataset, small_cache):
    ds = clean_dataset
    fields = []
    short_run(ds, small_cache, "range", t=1,
              on_field=lambda t, fld: fields.append(fld))
    path = tmp_path / "fld.ppm"
    export_heatmap(fields[0], ds.amap, (20.0, 20.0), path)
    raw = path.read_bytes()
    header = f"P6\n{ds.amap.width} {ds.amap.height}\n255\n".encode()
    assert raw.startswith(header)
    img = np.frombuffer(raw[len(header):], dtype=np.uint8)
    img = img.reshape(ds.amap.height, ds.amap.width, 3)
    # non-traversable mask painted gray except where the ring covers it
    oy, ox = np.nonzero(ds.amap.obstacle)
    dist = np.hypot(ox - 20.0, oy - 20.0)
    far = dist > 6.5
    assert (img[oy[far], ox[far]] == (120, 120, 120)).all()
    assert (img == (255, 105, 180)).all(axis=2).any()


def test_heatmap_without_truth(tmp_path, clean_dataset, small_cache):
    ds = clean_dataset
    fields = []
    short_run(ds, small_cache, "range", t=1,
              on_field=lambda t, fld: fields.append(fld))
    path = tmp_path / "fld.ppm"
    export_heatmap(fields[0], ds.amap, None, path)
    img = np.frombuffer(path.read_bytes().split(b"\n", 3)[3], dtype=np.uint8)
    img = img.reshape(ds.amap.height, ds.amap.width, 3)
    assert not (img == (255, 105, 180)).all(axis=2).any()


# --- truth files -------------------------------------------------------------

def test_truth_round_trip(tmp_path, clean_dataset):
    path = tmp_path / "truth.csv"
    save_truth(clean_dataset.poses, path)
    back = load_truth(path)
    assert np.array_equal(back, clean_dataset.poses)
    with pytest.raises(ValueError):
        load_truth(__file__)


# --- config and file pipeline ------------------------------------------------

def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig(mode="warp", map_path="m", cache_path=None,
                  observations_path="o", trajectory_path="t")
    with pytest.raises(ValueError):
        RunConfig(mode="range", map_path="m", cache_path=None,
                  observations_path="o", trajectory_path="t", iterations=0)


def write_dataset_files(ds, tmp_path, t=10):
    save_map(ds.amap, tmp_path / "map.amap")
    save_observations(ds.observations[:t], tmp_path / "obs.txt")
    save_trajectory(ds.odometry[:t], tmp_path / "traj.csv")
    save_truth(ds.poses[:t], tmp_path / "truth.csv")


def test_run_pipeline_matches_in_memory(tmp_path, clean_dataset, small_cache):
    ds = clean_dataset
    write_dataset_files(ds, tmp_path)
    config = RunConfig(mode="range-semantic",
                       map_path=str(tmp_path / "map.amap"),
                       cache_path=None,
                       observations_path=str(tmp_path / "obs.txt"),
                       trajectory_path=str(tmp_path / "traj.csv"),
                       truth_path=str(tmp_path / "truth.csv"),
                       seed=5)
    rep_file = run_pipeline(config)
    rep_mem = short_run(ds, small_cache, "range-semantic", t=10, seed=5)
    assert np.array_equal(rep_file.xbar, rep_mem.xbar)
    assert np.array_equal(rep_file.xhat, rep_mem.xhat)
    assert np.array_equal(rep_file.errors_online_m, rep_mem.errors_online_m)


def test_run_pipeline_cache_is_transparent(tmp_path, clean_dataset):
    ds = clean_dataset
    write_dataset_files(ds, tmp_path, t=6)
    cache_path = tmp_path / "cache.adsc"
    base = dict(mode="range", map_path=str(tmp_path / "map.amap"),
                observations_path=str(tmp_path / "obs.txt"),
                trajectory_path=str(tmp_path / "traj.csv"), seed=1)
    first = run_pipeline(RunConfig(cache_path=str(cache_path), **base))
    assert cache_path.exists()
    again = run_pipeline(RunConfig(cache_path=str(cache_path), **base))
    fresh = run_pipeline(RunConfig(cache_path=None, **base))
    assert np.array_equal(first.xbar, again.xbar)
    assert np.array_equal(first.xbar, fresh.xbar)


def test_run_pipeline_rejects_stale_cache(tmp_path, clean_dataset):
    ds = clean_dataset
    write_dataset_files(ds, tmp_path, t=6)
    cache_path = tmp_path / "cache.adsc"
    other = build_aerial_descriptors(ds.amap, DescriptorParams(n_lines=30))
    save_descriptor_set(other, cache_path)
    config = RunConfig(mode="range", map_path=str(tmp_path / "map.amap"),
                       cache_path=str(cache_path),
                       observations_path=str(tmp_path / "obs.txt"),
                       trajectory_path=str(tmp_path / "traj.csv"))
    with pytest.raises(ValueError):
        run_pipeline(config)
