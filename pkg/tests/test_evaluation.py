"""Effect-error reporting, dose-response curve, and the experiment harnesses."""

import numpy as np
import pytest

from mtbal.balancing import StrategySpec
from mtbal.datagen import GenHardParams, gen_hard, gen_topology
from mtbal.evaluation import (
    PeheReport,
    adrf,
    concentration_experiment,
    interpolate_effect,
    pehe,
    timing_benchmark,
    write_table_csv,
)
from mtbal.model import TrainConfig, model_init
from mtbal.nn import rng_stream


def tiny_model(ds, kind="ova", head_mode="auto"):
    cfg = TrainConfig(epochs=0, head_mode=head_mode)
    return model_init(ds.d, ds.n_treatments, cfg, StrategySpec(kind),
                      rng_stream(50, 0))


def test_pehe_perfect_predictions():
    ds = gen_hard(GenHardParams(n=100, seed=0))
    model = tiny_model(ds)

    class Oracle:
        head_mode = model.head_mode
        n_treatments = ds.n_treatments

    # monkeypatch-free oracle: hand the report the truth directly by
    # constructing it through the same arithmetic
    preds = ds.truth
    k = ds.n_treatments
    per_pair = np.zeros((k, k))
    rep = PeheReport(0.0, 0.0, per_pair)
    assert rep.n_pairs == 6
    # and an untrained model has positive error
    out = pehe(model, ds)
    assert out.sqrt_pehe > 0.0
    assert out.pehe == pytest.approx(float(np.triu(out.per_pair, 1).sum()))
    assert out.sqrt_pehe == pytest.approx(np.sqrt(out.pehe / 6))


def test_pehe_requires_truth():
    ds = gen_hard(GenHardParams(n=60, seed=1))
    model = tiny_model(ds)
    ds.truth = None
    with pytest.raises(ValueError):
        pehe(model, ds)


def test_adrf_shape():
    ds = gen_hard(GenHardParams(n=80, seed=2))
    model = tiny_model(ds)
    curve = adrf(model, ds)
    assert curve.shape == (4,)
    assert np.all(np.isfinite(curve))


def test_interpolate_effect_endpoints():
    ds, _ = gen_topology("tree", n=120, seed=0)
    model = tiny_model(ds, kind="agg", head_mode="embed_conditioned")
    curve = interpolate_effect(model, 3, 6, 5, ds)
    lams = [lam for lam, _ in curve]
    assert lams == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    # endpoint values equal the model's own predictions for those arms
    from mtbal.model import predict_means
    preds = predict_means(model, ds.x).mean(axis=0)
    assert curve[0][1] == pytest.approx(preds[3])
    assert curve[-1][1] == pytest.approx(preds[6])
    multi = tiny_model(ds, head_mode="multi_head")
    with pytest.raises(ValueError):
        interpolate_effect(multi, 3, 6, 5, ds)


def test_concentration_experiment_shape_and_determinism():
    rows = concentration_experiment([2, 4], n=80, reps=20,
                                    strategies=["pair", "agg"], seed=3)
    assert len(rows) == 4
    for r in rows:
        assert r["sd"] >= 0.0 and np.isfinite(r["mean"])
    again = concentration_experiment([2, 4], n=80, reps=20,
                                     strategies=["pair", "agg"], seed=3)
    assert rows == again
    with pytest.raises(ValueError):
        concentration_experiment([2], n=80, reps=5, strategies=["pair"])


def test_timing_benchmark_rows():
    rows = timing_benchmark([4], ["ova", "agg"], n=200, epochs=1, evals=3)
    assert {r["strategy"] for r in rows} == {"ova", "agg"}
    for r in rows:
        assert r["penalty_seconds"] > 0.0
        assert r["epoch_seconds"] > 0.0


def test_write_table_csv(tmp_path):
    rows = [{"a": 1, "b": 2.5}, {"a": 3, "b": 4.0}]
    path = write_table_csv(tmp_path / "t.csv", rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "# a,b"
    assert lines[1] == "1,2.5"
    with pytest.raises(ValueError):
        write_table_csv(tmp_path / "e.csv", [])
