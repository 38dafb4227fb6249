import json

import numpy as np
import pytest

from sargeo import read_ply
from sargeo.cli import main
from sargeo.config import RunConfig, apply_overrides, load_config
from sargeo.errors import ConfigError
from sargeo.fusion import FusionDims, init_fusion_params, save_weights
from conftest import ASSETS

CUBE = str(ASSETS / "cube.obj")
FAST = ["--mc-rays", "2000", "--grid-step", "1.0", "--range", "12"]


def run(args):
    return main([str(a) for a in args])


# --- config ------------------------------------------------------------------

def test_config_defaults_and_file(tmp_path):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(
        "mesh:\n  path: model.obj\n"
        "geometry:\n  azimuth_deg: 300\n  depression_deg: 25\n"
        "scatter:\n  k_max: 3\n"
        "run:\n  seed: 42\n"
    )
    cfg = load_config(cfg_path)
    assert cfg.mesh_path == "model.obj"
    assert cfg.azimuth_deg == 300.0
    assert cfg.k_max == 3
    assert cfg.seed == 42
    assert cfg.mu == RunConfig().mu  # untouched default


def test_config_rejects_unknown_keys(tmp_path):
    cfg_path = tmp_path / "bad.yaml"
    cfg_path.write_text("geometry:\n  azimut: 10\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(cfg_path)
    cfg_path.write_text("mystery:\n  a: 1\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(cfg_path)


def test_config_type_checks(tmp_path):
    cfg_path = tmp_path / "types.yaml"
    cfg_path.write_text("scatter:\n  k_max: 2.5\n")
    with pytest.raises(ConfigError, match="integer"):
        load_config(cfg_path)


def test_flag_overrides_beat_config():
    cfg = apply_overrides(RunConfig(), azimuth_deg=123.0, seed=9)
    assert cfg.azimuth_deg == 123.0
    assert cfg.seed == 9


# --- simulate ----------------------------------------------------------------

def test_simulate_cube(tmp_path):
    out = tmp_path / "out"
    code = run(["simulate", "--mesh", CUBE, "--azimuth", "300", "--depression", "30",
                "--seed", "5", "--out", out, "--project", "64x64", *FAST])
    assert code == 0
    cloud = read_ply(out / "cloud.ply")
    assert len(cloud) > 0
    meta = json.loads((out / "run.json").read_text())
    assert meta["counts"]["points"] == len(cloud)
    assert meta["counts"]["per_bounce"]
    assert (out / "image.png").is_file()
    assert meta["timings"]["rays_per_s"] > 0


def test_simulate_deterministic_bytes(tmp_path):
    args = ["simulate", "--mesh", CUBE, "--azimuth", "111", "--seed", "3", *FAST,
            "--project", "48x48"]
    assert run([*args, "--out", tmp_path / "a", "--workers", "1"]) == 0
    assert run([*args, "--out", tmp_path / "b", "--workers", "2"]) == 0
    assert (tmp_path / "a/cloud.ply").read_bytes() == (tmp_path / "b/cloud.ply").read_bytes()
    assert (tmp_path / "a/image.png").read_bytes() == (tmp_path / "b/image.png").read_bytes()
    meta_a = json.loads((tmp_path / "a/run.json").read_text())
    meta_b = json.loads((tmp_path / "b/run.json").read_text())
    meta_a.pop("timings"); meta_a.pop("workers")
    meta_b.pop("timings"); meta_b.pop("workers")
    meta_a["config"].pop("out_dir"); meta_b["config"].pop("out_dir")
    meta_a["config"].pop("workers"); meta_b["config"].pop("workers")
    assert meta_a == meta_b


def test_simulate_missing_mesh_is_config_error(tmp_path, capsys):
    assert run(["simulate", "--out", tmp_path]) == 2
    assert "config" in capsys.readouterr().err


def test_simulate_unreadable_mesh_is_io_error(tmp_path, capsys):
    assert run(["simulate", "--mesh", tmp_path / "nope.obj", "--out", tmp_path]) == 3
    assert "io" in capsys.readouterr().err


def test_simulate_bad_geometry_is_geometry_error(tmp_path, capsys):
    code = run(["simulate", "--mesh", CUBE, "--range", "0.2", "--out", tmp_path,
                "--mc-rays", "10"])
    assert code == 4
    assert "geometry" in capsys.readouterr().err


def test_round_trip_identity(tmp_path):
    out = tmp_path / "rt"
    assert run(["simulate", "--mesh", CUBE, "--azimuth", "10", "--seed", "4",
                "--out", out, *FAST]) == 0
    first = (out / "cloud.ply").read_bytes()
    cloud = read_ply(out / "cloud.ply")
    from sargeo import write_ply
    write_ply(cloud, out / "rewrite.ply", binary=True)
    assert (out / "rewrite.ply").read_bytes() == first


# --- sweep ---------------------------------------------------------------------

def test_sweep_names_and_count(tmp_path):
    out = tmp_path / "sweep"
    code = run(["simulate", "--mesh", CUBE, "--sweep", "0:30:10", "--seed", "2",
                "--out", out, "--mc-rays", "500", "--grid-step", "2.0", "--range", "12"])
    assert code == 0
    for tag in ("000", "010", "020", "030"):
        assert (out / f"cloud_az{tag}.ply").is_file()
        assert (out / f"run_az{tag}.json").is_file()
    assert len(list(out.glob("cloud_az*.ply"))) == 4


def test_sweep_five_degree_offsets_grid():
    from sargeo.cli import _parse_sweep
    azimuths = _parse_sweep("5:355:10")
    assert len(azimuths) == 36
    assert azimuths[0] == 5.0 and azimuths[-1] == 355.0


def test_sweep_step_zero_is_config_error(tmp_path, capsys):
    assert run(["simulate", "--mesh", CUBE, "--sweep", "0:30:0", "--out", tmp_path]) == 2
    assert "config" in capsys.readouterr().err


# --- project ---------------------------------------------------------------------

def test_project_subcommand(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--mesh", CUBE, "--azimuth", "45", "--seed", "1",
                "--out", out, *FAST]) == 0
    img_out = tmp_path / "img"
    assert run(["project", out / "cloud.ply", "--project", "80x60", "--out", img_out]) == 0
    meta = json.loads((img_out / "image.json").read_text())
    assert meta["image"]["width"] == 80 and meta["image"]["height"] == 60
    assert (img_out / "image.png").is_file()


def test_project_empty_cloud_ok(tmp_path):
    from sargeo import PointCloud, write_ply
    empty = PointCloud(positions=np.zeros((0, 3)), intensities=np.zeros(0),
                       bounces=np.zeros(0, dtype=np.uint8),
                       ray_ids=np.zeros(0, dtype=np.int64),
                       azimuth_deg=0.0, depression_deg=30.0)
    p = tmp_path / "empty.ply"
    write_ply(empty, p)
    assert run(["project", p, "--project", "16x16", "--out", tmp_path]) == 0
    from PIL import Image
    assert not np.array(Image.open(tmp_path / "image.png")).any()


def test_project_malformed_ply_io_error(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_text("this is not a ply\n")
    assert run(["project", bad, "--out", tmp_path]) == 3
    assert "io" in capsys.readouterr().err


# --- fuse -------------------------------------------------------------------------

def _feature_files(tmp_path, dims: FusionDims, batch=None, seed=1):
    gen = np.random.Generator(np.random.Philox(key=seed))
    shape = lambda d: (batch, d) if batch else (d,)
    paths = {}
    for name, d in (("ft", dims.d_model), ("fp", dims.d_point), ("fi", dims.d_image)):
        arr = gen.normal(size=shape(d))
        path = tmp_path / f"{name}.npy"
        np.save(path, arr)
        paths[name] = path
    return paths


def test_fuse_zero_image_deterministic(tmp_path):
    dims = FusionDims()
    paths = _feature_files(tmp_path, dims)
    args = ["fuse", "--ft", paths["ft"], "--fp", paths["fp"], "--zero-image",
            "--seed", "11"]
    assert run([*args, "--out", tmp_path / "a"]) == 0
    assert run([*args, "--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a_final.npy").read_bytes() == (tmp_path / "b_final.npy").read_bytes()
    alpha = np.load(tmp_path / "a_alpha.npy")
    assert alpha.shape[-1] == 3
    np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)


def test_fuse_equal_logit_gate_fixture(tmp_path):
    dims = FusionDims()
    params = init_fusion_params(dims, seed=0)
    params = params.with_arrays(gate_w_in=np.zeros_like(params.gate_w_in))
    manifest = save_weights(params, tmp_path / "weights.json")
    paths = _feature_files(tmp_path, dims, seed=5)
    assert run(["fuse", "--ft", paths["ft"], "--fp", paths["fp"], "--fi", paths["fi"],
                "--weights", manifest, "--out", tmp_path / "g"]) == 0
    alpha = np.load(tmp_path / "g_alpha.npy")
    np.testing.assert_allclose(alpha, 1.0 / 3.0, atol=1e-12)


def test_fuse_shape_mismatch_is_config_error(tmp_path, capsys):
    dims = FusionDims()
    paths = _feature_files(tmp_path, dims)
    short = np.zeros(dims.d_point - 1)
    np.save(tmp_path / "short.npy", short)
    code = run(["fuse", "--ft", paths["ft"], "--fp", tmp_path / "short.npy",
                "--zero-image", "--out", tmp_path / "x"])
    assert code == 2
    assert "config" in capsys.readouterr().err


def test_fuse_missing_manifest_is_io_error(tmp_path, capsys):
    dims = FusionDims()
    paths = _feature_files(tmp_path, dims)
    code = run(["fuse", "--ft", paths["ft"], "--fp", paths["fp"], "--zero-image",
                "--weights", tmp_path / "missing.json", "--out", tmp_path / "x"])
    assert code == 3
    assert "io" in capsys.readouterr().err


def test_fuse_requires_image_or_zero_flag(tmp_path, capsys):
    dims = FusionDims()
    paths = _feature_files(tmp_path, dims)
    assert run(["fuse", "--ft", paths["ft"], "--fp", paths["fp"],
                "--out", tmp_path / "x"]) == 2
