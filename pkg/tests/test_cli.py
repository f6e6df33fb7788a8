import json

import numpy as np
import pytest

from aerialsplat.cli import main
from aerialsplat.numcore import REGISTRY
from aerialsplat.scenegen import save_bundle
from aerialsplat.splat import render
from aerialsplat.splat.io import load_scene, read_ppm
from aerialsplat.trainer import LOSS_HEADER, Checkpoint, TrainConfig

SMALL = {"city": {"grid": [2, 2], "cell_size": 0.16}, "trajectory": {"width": 32, "height": 32},
         "net": {"dim": 16, "heads": 2, "layers": 2, "inject_layers": [1, 2], "n_completion": 4, "prior_dim": 8,
                 "image_size": [32, 32]},
         "train": {"steps": 2}}


def write_config(path, cfg=SMALL):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "small.json")
    assert main(["gen", "--config", cfg, "--out", str(root / "data")]) == 0
    return root


@pytest.fixture(scope="module")
def stage1(data):
    out = data / "run1"
    assert main(["train1", "--config", str(data / "small.json"), "--data", str(data / "data"),
                 "--out", str(out)]) == 0
    return out / "checkpoints" / "step002.bin"


# -- gen -----------------------------------------------------------------------------

def test_gen_writes_sixteen_views_with_held_out_targets(data):
    root = data / "data"
    assert len(list((root / "images").glob("*.ppm"))) == 16
    assert json.loads((root / "split.json").read_text())["target"] == [0, 8]
    assert json.loads((root / "config.json").read_text())["command"] == "gen"


def test_gen_is_byte_identical_for_the_same_seed(data, tmp_path):
    cfg = str(data / "small.json")
    assert main(["--seed", "3", "gen", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["--seed", "3", "gen", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_gen_view_count_flag(data, tmp_path):
    assert main(["gen", "--config", str(data / "small.json"), "--views", "2", "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "images").glob("*.ppm"))) == 2


def test_config_errors_exit_2(tmp_path):
    bad = write_config(tmp_path / "bad.json", {"city": {"grid": [2, 2], "colour": 1}})
    assert main(["gen", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    top = write_config(tmp_path / "top.json", {"cities": {}})
    assert main(["gen", "--config", top, "--out", str(tmp_path / "x")]) == 2
    invalid = write_config(tmp_path / "inv.json", {"train": {"steps": -1}})
    assert main(["gen", "--config", invalid, "--out", str(tmp_path / "x")]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["gen", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path / "x")]) == 2
    assert main(["frobnicate"]) == 2


def test_mismatched_snapshot_is_refused(data, tmp_path):
    cfg = str(data / "small.json")
    assert main(["gen", "--config", cfg, "--views", "2", "--out", str(tmp_path)]) == 0
    assert main(["--seed", "9", "gen", "--config", cfg, "--views", "2", "--out", str(tmp_path)]) == 2


# -- training ----------------------------------------------------------------------

def test_train1_run_directory(stage1):
    run = stage1.parent.parent
    assert (run / "losses.csv").read_text().splitlines()[0].split(",") == list(LOSS_HEADER)
    assert len((run / "losses.csv").read_text().splitlines()) == 3
    snap = json.loads((run / "config.json").read_text())
    assert snap["stage"] == 1 and snap["steps"] == 2 and snap["net"]["dim"] == 16


def test_train1_zero_steps_keeps_initialization(data, tmp_path):
    assert main(["train1", "--config", str(data / "small.json"), "--data", str(data / "data"),
                 "--out", str(tmp_path), "--steps", "0"]) == 0
    from aerialsplat.net import AerialSplatNet
    ck = Checkpoint.load(tmp_path / "checkpoints" / "step000.bin")
    for p in AerialSplatNet(ck.config.net).parameters():
        assert np.array_equal(ck.params[p.name], p.data)


def test_train2_needs_init(data, tmp_path):
    args = ["train2", "--config", str(data / "small.json"), "--data", str(data / "data"), "--out", str(tmp_path)]
    assert main(args) == 4
    assert main(args + ["--init", str(tmp_path / "missing.bin")]) == 4


def test_missing_dataset_exit_4(data, tmp_path):
    assert main(["train1", "--config", str(data / "small.json"), "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == 4


def test_train2_runs_from_stage1(data, stage1, tmp_path):
    assert main(["train2", "--config", str(data / "small.json"), "--data", str(data / "data"), "--out",
                 str(tmp_path), "--init", str(stage1), "--steps", "2"]) == 0
    ck = Checkpoint.load(tmp_path / "checkpoints" / "step002.bin")
    assert ck.stage == 2 and ck.extra["init_stage"] == 1


def test_non_finite_loss_exits_5_with_snapshot_and_checkpoint(data, tmp_path, monkeypatch):
    from aerialsplat.trainer import loops
    real = loops.stage1_losses

    def poisoned(*args, **kw):
        report, rec = real(*args, **kw)
        report.values["total"] = float("nan")
        return report, rec

    monkeypatch.setattr(loops, "stage1_losses", poisoned)
    code = main(["train1", "--config", str(data / "small.json"), "--data", str(data / "data"),
                 "--out", str(tmp_path)])
    assert code == 5
    assert (tmp_path / "config.json").exists()
    assert (tmp_path / "checkpoints" / "step000.bin").exists()


# -- render / eval / diag ----------------------------------------------------------

def test_render_modes_match_for_stage1_and_scene_round_trips(data, stage1, tmp_path):
    base = ["render", "--ckpt", str(stage1), "--data", str(data / "data")]
    assert main(base + ["--mode", "scaffold", "--out", str(tmp_path / "s")]) == 0
    assert main(base + ["--mode", "full", "--out", str(tmp_path / "f")]) == 0
    for t in (0, 8):
        assert (tmp_path / "s" / f"view{t:02d}.ppm").read_bytes() == (tmp_path / "f" / f"view{t:02d}.ppm").read_bytes()
    meta = json.loads((tmp_path / "f" / "meta.json").read_text())
    assert meta["timing"]["total_s"] > 0 and meta["timing"]["predict_s"] > 0
    from aerialsplat.scenegen import load_bundle
    cam = load_bundle(data / "data").cameras[0]
    again = render(load_scene(tmp_path / "f" / "scene.splat"), cam).rgb.data
    from aerialsplat.splat.io import write_ppm
    write_ppm(tmp_path / "again.ppm", again)
    assert (tmp_path / "again.ppm").read_bytes() == (tmp_path / "f" / "view00.ppm").read_bytes()


def test_render_rejects_out_of_range_views(data, stage1, tmp_path):
    assert main(["render", "--ckpt", str(stage1), "--data", str(data / "data"), "--views", "1,99",
                 "--out", str(tmp_path)]) == 2


def test_eval_checkpoint_rows(data, stage1, tmp_path):
    assert main(["eval", "--ckpt", str(stage1), "--data", str(data / "data"), "--mode", "full",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "eval_full.csv").read_text().splitlines()
    assert len(lines) == 1 + 2
    assert "weak_psnr" in lines[0]


def test_eval_ground_truth_against_itself(data, tmp_path):
    assert main(["eval", "--pred-dir", str(data / "data"), "--data", str(data / "data"), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "eval_images.csv").read_text().splitlines()[1:]
    assert len(rows) == 2
    assert all(",99.0," in r for r in rows)


def test_diag_on_default_scene(default_bundle, tmp_path):
    save_bundle(default_bundle, tmp_path / "data")
    assert main(["diag", "--data", str(tmp_path / "data"), "--out", str(tmp_path / "d")]) == 0
    meta = json.loads((tmp_path / "d" / "diag.csv.json").read_text())
    frac = meta["weak_fraction_by_surface"]
    assert frac["facade"] > frac["roof"]
    assert len((tmp_path / "d" / "diag.csv").read_text().splitlines()) == 1 + len(default_bundle.target)
    assert read_ppm(tmp_path / "d" / "regions_view00.ppm").shape == (64, 64, 3)


def test_diag_with_predicted_depth(data, tmp_path):
    assert main(["diag", "--data", str(data / "data"), "--pred-depth-dir", str(data / "data"),
                 "--out", str(tmp_path)]) == 0
    header = (tmp_path / "diag.csv").read_text().splitlines()[0]
    assert "obs_absrel" in header and "weak_delta1" in header


# -- gradcheck ---------------------------------------------------------------------

def test_gradcheck_core_lists_every_op_once(capsys):
    assert main(["gradcheck", "--suite", "core"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("ok", "FAIL"))]
    names = [ln.split()[2] for ln in lines]
    assert sorted(names) == sorted(REGISTRY)
    assert len(names) == len(set(names))


def test_gradcheck_names_a_corrupted_op(monkeypatch, capsys):
    from aerialsplat.numcore import make_node, ops

    def bad_sigmoid(x):
        x = ops.as_tensor(x)
        s = 1.0 / (1.0 + np.exp(-x.data))
        return make_node(s, (x,), lambda g: (g * s,), "sigmoid")   # missing the (1 - s) factor

    monkeypatch.setitem(REGISTRY, "sigmoid", bad_sigmoid)
    assert main(["gradcheck", "--suite", "core"]) == 1
    out = capsys.readouterr().out
    assert "FAIL core    sigmoid" in out
    assert "failed for: sigmoid" in out


def test_threads_flag_validated():
    assert main(["--threads", "0", "gradcheck", "--suite", "core"]) == 2


def test_train_config_section_round_trip():
    from aerialsplat.cli import RunConfig
    cfg = RunConfig.from_dict(SMALL)
    tc = cfg.train_config(2, steps=5)
    assert isinstance(tc, TrainConfig) and tc.stage == 2 and tc.steps == 5 and tc.net.dim == 16
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
