"""CLI: config layering, model files, manifests, and end-to-end commands."""

import json
from pathlib import Path

import numpy as np
import pytest

from mtbal.balancing import StrategySpec
from mtbal.cli import (
    ConfigError,
    help_config,
    load_model,
    main,
    parse_config,
    replay_manifest,
    save_model,
)
from mtbal.datagen import GenHardParams, gen_hard
from mtbal.model import TrainConfig, model_init
from mtbal.nn import rng_stream


def test_parse_config_layering(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("# comment\ntrain.epochs = 7\nalpha=0.5\n")
    cfg = parse_config("train", str(f), ["alpha=2.0", "data.path=d.csv"])
    assert cfg["train.epochs"] == 7
    assert cfg["alpha"] == 2.0  # override wins over file
    assert cfg["train.batch_size"] == 128  # default


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config("train", None, ["tran.epochs=7", "data.path=d"])
    with pytest.raises(ConfigError, match="missing required"):
        parse_config("train", None, [])
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("train", None, ["train.epochs=abc", "data.path=d"])
    with pytest.raises(ConfigError, match="not found"):
        parse_config("gen", str(tmp_path / "nope.cfg"), [])
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ConfigError, match="key=value"):
        parse_config("gen", str(bad), [])


def test_help_config_lists_keys():
    text = help_config("boab")
    assert "boab.grid" in text and "comp.method" in text


@pytest.mark.parametrize("kind,mode", [("pair", "auto"), ("agg", "auto"),
                                       ("agg", "embed_conditioned")])
def test_model_file_roundtrip(tmp_path, kind, mode):
    model = model_init(6, 4, TrainConfig(head_mode=mode), StrategySpec(kind),
                       rng_stream(70, 0))
    path = save_model(model, tmp_path / "m.bin")
    back = load_model(path)
    assert back.head_mode == model.head_mode
    assert back.n_treatments == 4
    assert np.array_equal(back.get_vector(), model.get_vector())  # bit-exact
    for a, b in zip(model.phi.activations, back.phi.activations):
        assert a == b


def test_load_model_rejects_garbage(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(ValueError):
        load_model(p)


def test_gen_command_and_manifest(tmp_path):
    out = tmp_path / "run"
    code = main(["gen", "hard", "--seed", "3", "--out", str(out),
                 "--set", "gen.n=200"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert manifest["metrics"]["n"] == 200
    assert sorted(manifest["files"]) == manifest["files"]
    assert (out / "dataset.csv").exists()
    # byte-identical regeneration
    out2 = tmp_path / "run2"
    main(["gen", "hard", "--seed", "3", "--out", str(out2), "--set", "gen.n=200"])
    assert (out / "dataset.csv").read_bytes() == (out2 / "dataset.csv").read_bytes()


def test_exit_codes(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path)]) == 3
    assert main(["gen", "--out", str(tmp_path), "--set", "bogus.key=1"]) == 2
    assert main(["gen", "--out", str(tmp_path), "--set", "gen.kind=sideways"]) == 2


def test_train_eval_replay_pipeline(tmp_path):
    data_dir = tmp_path / "data"
    assert main(["gen", "hard", "--out", str(data_dir),
                 "--set", "gen.n=240", "--seed", "1"]) == 0
    train_dir = tmp_path / "train"
    assert main([
        "train", "--data", str(data_dir / "dataset.csv"), "--out", str(train_dir),
        "--strategy", "ova", "--alpha", "0.5", "--seed", "1",
        "--set", "train.epochs=3",
    ]) == 0
    assert (train_dir / "model.bin").exists()
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert "sqrt_pehe" in manifest["metrics"]

    eval_dir = tmp_path / "eval"
    assert main([
        "eval", "--data", str(data_dir / "dataset.csv"),
        "--model", str(train_dir / "model.bin"), "--out", str(eval_dir),
    ]) == 0
    eval_metrics = json.loads((eval_dir / "pehe.json").read_text())
    assert eval_metrics["sqrt_pehe"] == pytest.approx(
        manifest["metrics"]["sqrt_pehe"]
    )

    # bit-for-bit replay of the training manifest
    replay_dir = tmp_path / "replay"
    metrics = replay_manifest(train_dir / "manifest.json", replay_dir)
    assert metrics == manifest["metrics"]
    assert (replay_dir / "model.bin").read_bytes() == (
        train_dir / "model.bin"
    ).read_bytes()


def test_boab_command(tmp_path):
    data_dir = tmp_path / "data"
    main(["gen", "hard", "--out", str(data_dir), "--set", "gen.n=200", "--seed", "2"])
    out = tmp_path / "boab"
    assert main([
        "boab", "--data", str(data_dir / "dataset.csv"), "--out", str(out),
        "--grid", "0,0.5", "--seed", "2", "--set", "train.epochs=2",
    ]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["metrics"]["alpha_hat"] in (0.0, 0.5)
    profile = (out / "profile.csv").read_text().splitlines()
    assert profile[0].startswith("# alpha,")
    assert len(profile) == 3


def test_geodesic_command(tmp_path):
    out = tmp_path / "geo"
    assert main([
        "geodesic", "--out", str(out), "--seed", "0",
        "--set", "geo.n=210", "--set", "train.epochs=2",
        "--set", "strategy.kind=agg", "--set", "alpha=0.5",
    ]) == 0
    emb = (out / "embeddings.dat").read_text().splitlines()
    assert emb[0].startswith("# treatment")
    assert len(emb) == 8  # header + 7 tree nodes
    interp = (out / "interpolation.dat").read_text().splitlines()
    assert len(interp) == 22


def test_bench_command(tmp_path):
    out = tmp_path / "bench"
    assert main([
        "bench", "--out", str(out), "--K", "2,3", "--strategies", "pair,agg",
        "--set", "bench.n=120", "--set", "bench.epochs=1", "--set", "conc.reps=0",
    ]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert "pair_time_ratio" in manifest["metrics"]
    assert (out / "timing.csv").exists()
