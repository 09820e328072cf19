"""Weight selection on closed-form stub profiles plus supporting pieces."""

import numpy as np
import pytest

from mtbal.boab import (
    AlphaEstimate,
    ComplexitySpec,
    ProfilePoint,
    _stratified_resample,
    boab_search,
    bootstrap_alpha,
    complexity_term,
    constant_piece_point_fn,
    mean_profile_point_fn,
    profile_score,
    quadratic_q,
    quadratic_stub_point_fn,
    write_profile_csv,
)
from mtbal.datagen import GenHardParams, gen_hard
from mtbal.nn import rng_stream

GRID = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]


def test_boab_noiseless_argmin():
    fn = quadratic_stub_point_fn(center=0.75, curvature=2.0)
    res = boab_search(None, GRID, None, None, None, point_fn=fn)
    assert res.alpha_hat == 0.75
    assert [p.alpha for p in res.points] == GRID


def test_boab_tie_goes_to_smaller_alpha():
    # symmetric around 0.625: alpha 0.5 and 0.75 give identical Q
    fn = quadratic_stub_point_fn(center=0.625, curvature=2.0)
    res = boab_search(None, GRID, None, None, None, point_fn=fn)
    assert res.alpha_hat == 0.5


def test_boab_grid_validation():
    fn = quadratic_stub_point_fn(center=0.5, curvature=1.0)
    with pytest.raises(ValueError):
        boab_search(None, [], None, None, None, point_fn=fn)
    with pytest.raises(ValueError):
        boab_search(None, [0.0, 1.0, 1.0], None, None, None, point_fn=fn)
    with pytest.raises(ValueError):
        boab_search(None, [-0.5, 1.0], None, None, None, point_fn=fn)


def test_boab_score_noise_bound():
    # |alpha_hat - shifted optimum| <= r / curvature (plus grid spacing)
    grid = list(np.linspace(0.0, 3.0, 61))
    r, kappa = 0.4, 2.0
    hits = 0
    for seed in range(100):
        fn = quadratic_stub_point_fn(center=1.5, curvature=kappa,
                                     score_noise=r, seed=seed)
        res = boab_search(None, grid, None, None, None, point_fn=fn)
        if abs(res.alpha_hat - 1.5) <= r / kappa + 0.051:
            hits += 1
    assert hits >= 95


def test_boab_bounded_value_noise_regret():
    grid = list(np.linspace(0.0, 3.0, 31))
    eta = 0.05
    for seed in range(100):
        fn = quadratic_stub_point_fn(center=1.2, curvature=1.5,
                                     value_noise=eta, seed=seed)
        res = boab_search(None, grid, None, None, None, point_fn=fn)
        q_sel = quadratic_q(res.alpha_hat, 1.2, 1.5)
        q_min = min(quadratic_q(a, 1.2, 1.5) for a in grid)
        assert q_sel <= q_min + 2 * eta + 1e-12


def test_envelope_score_on_constant_piece():
    fn = constant_piece_point_fn(factual=0.3, imbalance=0.7, comp_slope=0.1)
    res = boab_search(None, GRID, None, None, None, point_fn=fn)
    for row in profile_score(res.points):
        assert row["envelope"] == pytest.approx(0.8, abs=1e-12)
        assert row["central"] == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(ValueError):
        profile_score(res.points[:2])


def test_complexity_term():
    spec = ComplexitySpec("constant", delta=0.05)
    base = complexity_term(spec, 100, 2.0)
    assert base == pytest.approx(2.0 * np.sqrt(np.log(40.0) / 200.0))
    lip = complexity_term(ComplexitySpec("lipschitz", scale=3.0), 100, 2.0,
                          lipschitz=1.5)
    assert lip == pytest.approx(3.0 * 1.5 / 10.0 + base)
    rng = rng_stream(40, 0)
    rad = complexity_term(ComplexitySpec("rademacher_mc"), 100, 2.0,
                          losses=rng.random(100), rng=rng)
    assert rad >= base
    with pytest.raises(ValueError):
        complexity_term(ComplexitySpec("lipschitz"), 100, 2.0)
    with pytest.raises(ValueError):
        ComplexitySpec("vc_dimension")
    with pytest.raises(ValueError):
        ComplexitySpec("constant", delta=2.0)


def test_complexity_shrinks_with_n():
    spec = ComplexitySpec("lipschitz")
    a = complexity_term(spec, 100, 1.0, lipschitz=1.0)
    b = complexity_term(spec, 400, 1.0, lipschitz=1.0)
    assert b == pytest.approx(a / 2.0)


def test_stratified_resample_keeps_arm_sizes():
    ds = gen_hard(GenHardParams(n=300, seed=4))
    boot = _stratified_resample(ds, rng_stream(41, 0))
    assert np.array_equal(boot.arm_counts(), ds.arm_counts())
    assert boot.provenance["resampled"] is True


def test_bootstrap_alpha_mean_profile():
    ds = gen_hard(GenHardParams(n=400, seed=5))
    grid = list(np.linspace(-0.0, 0.5, 26))
    est = bootstrap_alpha(ds, 25, grid, None, None, None,
                          point_fn=mean_profile_point_fn(2.0), seed=0)
    assert isinstance(est, AlphaEstimate)
    assert len(est.replicates) == 25
    assert est.lo <= est.alpha_hat + 0.1
    assert est.se > 0.0
    with pytest.raises(ValueError):
        bootstrap_alpha(ds, 5, grid, None, None, None,
                        point_fn=mean_profile_point_fn(2.0))


def test_write_profile_csv(tmp_path):
    pts = [ProfilePoint(0.0, 0.1, 0.2, 0.3, 0.6), ProfilePoint(1.0, 0.1, 0.1, 0.4, 0.7)]
    path = write_profile_csv(tmp_path / "p.csv", pts)
    lines = path.read_text().splitlines()
    assert lines[0] == "# alpha,factual,imbalance,comp,qhat,lipschitz,seconds"
    assert lines[1].startswith("0.0,0.1,0.2,0.3,0.6")
    assert len(lines) == 3
