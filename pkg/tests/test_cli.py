import json
from pathlib import Path

import numpy as np
import pytest

from mdme import motion as M
from mdme import network as N
from mdme.cli import main
from mdme.checkpoint import load_checkpoint, save_checkpoint
from mdme.rng import Rng
from mdme.tensor import Tensor

from test_training import identity_layout, identity_pairs, perfect_oracle_model


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(out), "--seed", "0"]) == 0
    return out


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("train")
    rc = main(["train", "--data", str(corpus_dir), "--out", str(out),
               "--iterations", "120", "--no-figures"])
    assert rc == 0
    return out


def test_synth_writes_ten_motions(corpus_dir):
    files = sorted(corpus_dir.glob("*.csv"))
    assert len(files) == 10
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["seed"] == 0


def test_embed_quadruped_13_columns(corpus_dir, tmp_path):
    out = tmp_path / "trace.csv"
    rc = main(["embed", "--motion", str(corpus_dir / "gait00.csv"),
               "--preset", "quadruped", "--out", str(out)])
    assert rc == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[0] == "frame"
    assert sum(c.startswith("zw_") for c in header) == 13


def test_embed_humanoid_7_columns(tmp_path):
    chans = [M.Channel(f"j{i:02d}", "rad", ("joint",)) for i in range(75)]
    data = Rng(0).normal(size=(40, 75))
    seq = M.MotionSequence(name="h", rate=50.0, channels=tuple(chans), data=data)
    path = tmp_path / "h.csv"
    M.save_motion(seq, path)
    out = tmp_path / "trace.csv"
    rc = main(["embed", "--motion", str(path), "--preset", "humanoid-h1",
               "--out", str(out)])
    assert rc == 0
    header = out.read_text().splitlines()[0].split(",")
    assert sum(c.startswith("zw_") for c in header) == 7


def test_embed_missing_file_exit_2(tmp_path, capsys):
    rc = main(["embed", "--motion", str(tmp_path / "nope.csv"), "--out",
               str(tmp_path / "t.csv")])
    assert rc == 2
    assert "nope.csv" in capsys.readouterr().err


def test_embed_with_checkpoint_adds_latent_columns(corpus_dir, train_dir, tmp_path):
    out = tmp_path / "trace.csv"
    rc = main(["embed", "--motion", str(corpus_dir / "gait00.csv"),
               "--preset", "synth-quadruped", "--out", str(out),
               "--checkpoint", str(train_dir / "checkpoint")])
    assert rc == 0
    header = out.read_text().splitlines()[0].split(",")
    assert sum(c.startswith("zw_") for c in header) == 13
    assert sum(c.startswith("zv_") for c in header) == 16


def test_augment_twelve_fold(corpus_dir, tmp_path):
    out = tmp_path / "aug"
    rc = main(["augment", "--data", str(corpus_dir), "--out", str(out)])
    assert rc == 0
    assert len(list(out.glob("*.csv"))) == 120


def test_train_artifacts_and_manifest(train_dir):
    assert (train_dir / "curve.csv").exists()
    assert (train_dir / "checkpoint" / "checkpoint.json").exists()
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["subcommand"] == "train"
    assert manifest["config"]["ablation"] == "full"
    assert manifest["config"]["iterations"] == 120


def test_train_records_ablation_in_manifest(corpus_dir, tmp_path):
    out = tmp_path / "fft"
    rc = main(["train", "--data", str(corpus_dir), "--out", str(out),
               "--iterations", "5", "--ablation", "fft-instead-of-dwt",
               "--no-figures"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["ablation"] == "fft-instead-of-dwt"


def test_train_invalid_ablation_exit_2_lists_keys(corpus_dir, tmp_path, capsys):
    rc = main(["train", "--data", str(corpus_dir), "--out", str(tmp_path / "x"),
               "--ablation", "bogus", "--no-figures"])
    assert rc == 2
    err = capsys.readouterr().err
    for key in N.ABLATION_KEYS:
        assert key in err


def test_train_rerun_from_manifest_identical_curve(train_dir, tmp_path):
    out2 = tmp_path / "replay"
    rc = main(["train", "--from-manifest", str(train_dir / "manifest.json"),
               "--out", str(out2), "--no-figures"])
    assert rc == 0
    assert (train_dir / "curve.csv").read_bytes() == (out2 / "curve.csv").read_bytes()


def test_eval_cli_on_perfect_oracle(tmp_path, monkeypatch):
    cfg = N.synth_preset(action_dim=16)
    model = perfect_oracle_model(cfg)
    ckpt = tmp_path / "ckpt"
    save_checkpoint(ckpt, model.params, meta={})
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    for pair in identity_pairs():
        M.save_motion(pair.inputs, data_dir / f"{pair.name}.csv")
    preset = {
        "name": "oracle",
        "model": {
            "history": cfg.history, "goal_dim": cfg.goal_dim,
            "phase_channels": cfg.phase_channels, "levels": cfg.levels,
            "latent_dim": cfg.latent_dim, "enc_hidden": list(cfg.enc_hidden),
            "dec_hidden": list(cfg.dec_hidden), "action_dim": 16, "proprio_dim": 0,
        },
        "warp": {"identity": True},
        "metric_layout": {g: list(idx) for g, idx in identity_layout().items()},
    }
    preset_dir = tmp_path / "presets"
    preset_dir.mkdir()
    (preset_dir / "oracle.json").write_text(json.dumps(preset))
    monkeypatch.setenv("MDME_PRESET_DIR", str(preset_dir))
    out = tmp_path / "eval"
    rc = main(["eval", "--data", str(data_dir), "--checkpoint", str(ckpt),
               "--out", str(out), "--preset", "oracle", "--no-noise",
               "--runs", "2", "--seeds", "0", "1", "--no-figures"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mean_total"] < 1e-6
    assert len(report["rows"]) == 3


def test_eval_report_files(corpus_dir, train_dir, tmp_path):
    out = tmp_path / "eval"
    rc = main(["eval", "--data", str(corpus_dir), "--checkpoint",
               str(train_dir / "checkpoint"), "--out", str(out),
               "--runs", "1", "--seeds", "0", "--no-figures"])
    assert rc == 0
    assert (out / "report.csv").read_text().startswith("motion,total[-]")
    report = json.loads((out / "report.json").read_text())
    assert len(report["rows"]) == 10


def test_eval_of_ablated_checkpoint(corpus_dir, tmp_path):
    run = tmp_path / "nh"
    rc = main(["train", "--data", str(corpus_dir), "--out", str(run),
               "--iterations", "5", "--ablation", "no-history", "--no-figures"])
    assert rc == 0
    out = tmp_path / "nh_eval"
    rc = main(["eval", "--data", str(corpus_dir), "--checkpoint",
               str(run / "checkpoint"), "--out", str(out),
               "--runs", "1", "--seeds", "0", "--no-figures"])
    assert rc == 0
    assert len(json.loads((out / "report.json").read_text())["rows"]) == 10


def test_cluster_cli_outputs(corpus_dir, tmp_path):
    out = tmp_path / "clus"
    rc = main(["cluster", "--data", str(corpus_dir), "--out", str(out), "--k", "4"])
    assert rc == 0
    lines = (out / "overlay.csv").read_text().splitlines()
    assert lines[0] == "motion,pc1[-],pc2[-],cluster,mean_error[-]"
    assert len(lines) == 11
    labels = {int(line.split(",")[3]) for line in lines[1:]}
    assert labels == {0, 1, 2, 3}
    assert (out / "overlay.png").exists()


def test_figures_rendered_by_default(corpus_dir, tmp_path):
    out = tmp_path / "figrun"
    rc = main(["train", "--data", str(corpus_dir), "--out", str(out),
               "--iterations", "8"])
    assert rc == 0
    assert (out / "curve.png").exists()


def test_checkpoint_round_trip(tmp_path):
    params = {"a.w": Tensor(Rng(0).normal(size=(3, 4))), "b": Tensor(np.zeros(5))}
    save_checkpoint(tmp_path / "ck", params, meta={"k": 1})
    back, meta = load_checkpoint(tmp_path / "ck")
    assert meta == {"k": 1}
    for k in params:
        assert np.array_equal(back[k].data, params[k].data)


def test_missing_data_dir_exit_2(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "void"), "--out",
               str(tmp_path / "o"), "--no-figures"])
    assert rc == 2


def test_checkpoint_config_mismatch_exit_2(corpus_dir, train_dir, tmp_path, capsys):
    # quadruped preset expects a different parameter set than the synth checkpoint
    rc = main(["embed", "--motion", str(corpus_dir / "gait00.csv"),
               "--preset", "quadruped", "--out", str(tmp_path / "t.csv"),
               "--checkpoint", str(train_dir / "checkpoint")])
    assert rc == 2
    assert "does not match" in capsys.readouterr().err
