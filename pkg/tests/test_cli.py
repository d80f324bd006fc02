import subprocess
import sys
import time

import numpy as np
import pytest

from bcanet import tensor as T
from bcanet.cli import main
from bcanet.pnm import read_pnm

SMOKE = """\
train.epochs = 2
train.batch_size = 4
train.n_train = 8
train.n_val = 4
scene.image_size = 16
scene.shapes_min = 1
scene.shapes_max = 2
model.widths = 4,4,8,8
model.unify_channels = 4
model.attn_channels = 4
model.head_channels = 8
"""


@pytest.fixture
def smoke_cfg(tmp_path):
    path = tmp_path / "smoke.cfg"
    path.write_text(SMOKE)
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = d / "smoke.cfg"
    cfg.write_text(SMOKE)
    assert main(["train", "--config", str(cfg), "--model", "bcanet", "--out", str(d / "out"), "--quiet"]) == 0
    return d / "out", str(cfg)


# -- gen-data ---------------------------------------------------------------------


def test_gen_data_counts_and_rerun_identical(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train.n_train = 2\ntrain.n_val = 1\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--out", str(a), "--config", str(cfg)]) == 0
    assert main(["gen-data", "--out", str(b), "--config", str(cfg)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert len(files) == 9 + 1 and "manifest.csv" in files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert read_pnm(a / "train_0.ppm").shape == (64, 64, 3)
    assert read_pnm(a / "val_2.pgm").max() < 4
    assert set(np.unique(read_pnm(a / "train_1.boundary.pgm"))) <= {0, 1}


def test_gen_data_invalid_classes_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scene.num_classes = 1\n")
    assert main(["gen-data", "--out", str(tmp_path / "x"), "--config", str(cfg)]) == 2
    assert "num_classes" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert main(["dump-config", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_module_entry_point_exit_code(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scene.num_classes = 1\n")
    proc = subprocess.run(
        [sys.executable, "-m", "bcanet", "gen-data", "--out", str(tmp_path / "x"), "--config", str(cfg)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2


def test_dump_config_round_trip(tmp_path, capsys):
    assert main(["dump-config"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "d.cfg"
    path.write_text(text)
    assert main(["dump-config", "--config", str(path)]) == 0
    assert capsys.readouterr().out == text


def test_env_seed_changes_generated_data(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train.n_train = 1\ntrain.n_val = 0\n")
    main(["gen-data", "--out", str(tmp_path / "a"), "--config", str(cfg)])
    monkeypatch.setenv("BCANET_SEED", "7")
    main(["gen-data", "--out", str(tmp_path / "b"), "--config", str(cfg)])
    assert (tmp_path / "a" / "train_0.ppm").read_bytes() != (tmp_path / "b" / "train_0.ppm").read_bytes()


# -- train / eval -----------------------------------------------------------------


def test_smoke_train_fast_and_logged(tmp_path, smoke_cfg):
    t0 = time.perf_counter()
    assert main(["train", "--config", smoke_cfg, "--model", "fcn", "--out", str(tmp_path), "--quiet"]) == 0
    assert time.perf_counter() - t0 < 60
    lines = (tmp_path / "train_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,l_seg,l_boundary,l_att,l_aux,total,val_miou,lr"
    assert len(lines) == 1 + 2
    for line in lines[1:]:
        fields = line.split(",")
        assert float(fields[2]) == 0.0 and float(fields[3]) == 0.0


def test_train_abort_exit_3(tmp_path, smoke_cfg):
    with open(smoke_cfg, "a") as fh:
        fh.write("train.lr0 = 1000000.0\n")
    with np.errstate(all="ignore"):
        assert main(["train", "--config", smoke_cfg, "--model", "fcn", "--out", str(tmp_path), "--quiet"]) == 3


def test_eval_rows(trained, capsys):
    out, _ = trained
    assert main(["eval", "--checkpoint", str(out / "final.bcan"), "--split", "val"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "split,metric,value"
    assert [l.split(",")[1] for l in lines[1:]] == ["miou", "pixacc", "f_boundary", "f_interior"]
    assert main(["eval", "--checkpoint", str(out / "final.bcan"), "--split", "val"]) == 0
    assert capsys.readouterr().out.splitlines() == lines


def test_eval_missing_checkpoint_exit_1(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.bcan")]) == 1


# -- gradcheck --------------------------------------------------------------------


@pytest.mark.parametrize("scope", ["bca", "msb", "losses", "full"])
def test_gradcheck_scopes_pass(scope, capsys):
    assert main(["gradcheck", "--scope", scope]) == 0
    assert "passed" in capsys.readouterr().out


def test_gradcheck_detects_corrupted_backward(monkeypatch, capsys):
    orig = T.sigmoid

    def bad_sigmoid(x):
        out = orig(x).data
        return T._make(out, (x,), lambda g: (1.1 * g * out * (1.0 - out),), "sigmoid")

    monkeypatch.setattr(T, "sigmoid", bad_sigmoid)
    assert main(["gradcheck", "--scope", "losses"]) == 4
    assert "worst edge_logits" in capsys.readouterr().err


# -- visualize --------------------------------------------------------------------


def test_visualize_outputs(trained, tmp_path):
    out, cfg = trained
    vis_dir = tmp_path / "vis"
    assert main(["visualize", "--checkpoint", str(out / "final.bcan"), "--image", "3", "--ref", "9,5", "--out", str(vis_dir)]) == 0
    assert read_pnm(vis_dir / "attention.pgm").shape == (2, 2)
    assert read_pnm(vis_dir / "cosine.pgm").shape == (2, 2)
    for s in range(1, 5):
        assert read_pnm(vis_dir / f"edge{s}.pgm").shape == (16, 16)
    assert read_pnm(vis_dir / "prediction.pgm").shape == (16, 16)
    rows = (vis_dir / "attention.csv").read_text().splitlines()[1:]
    assert abs(sum(float(r.split(",")[2]) for r in rows) - 1.0) <= 1e-6
    ref = (vis_dir / "reference.csv").read_text().splitlines()[1].split(",")
    assert ref[3:5] == ["1", "0"]


def test_visualize_out_of_range_reference(trained, tmp_path, capsys):
    out, _ = trained
    code = main(["visualize", "--checkpoint", str(out / "final.bcan"), "--image", "0", "--ref", "16,0", "--out", str(tmp_path)])
    assert code == 1
    assert "outside" in capsys.readouterr().err
