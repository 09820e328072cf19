"""Strategy penalties: hand-checked values, term counts, and gradients."""

import numpy as np
import pytest

from mtbal.balancing import (
    DegenerateBatchError,
    GeodesicGraph,
    StrategySpec,
    geodesic_penalty,
    group_by_arm,
    r_agg,
    r_ova,
    r_pair,
    strategy_penalty,
)
from mtbal.kernels import InsufficientDataError, KernelSpec
from mtbal.nn import rng_stream

LINEAR = StrategySpec("pair", kernel=KernelSpec("linear"))
RBF1 = KernelSpec("rbf", 1.0)


def test_group_by_arm_partition():
    z = np.arange(8.0).reshape(4, 2)
    groups = group_by_arm(z, np.array([0, 1, 0, 1]), 2)
    assert [g.tolist() for g in groups] == [[0, 2], [1, 3]]
    groups = group_by_arm(z, np.array([0, 1, 0, 1]), 3)
    assert groups[2].size == 0
    with pytest.raises(ValueError):
        group_by_arm(z, np.array([0, 1, 0, 3]), 2)


def test_r_pair_linear_hand_sum():
    # Arms at 1-D means 0,1,2,3 (two identical points each); linear-kernel
    # MMD between point masses is the mean gap, so the pair sum is
    # sum_{j<k} |j - k| = 10.
    z = np.repeat(np.arange(4.0), 2)[:, None]
    t = np.repeat(np.arange(4), 2)
    spec = StrategySpec("pair", kernel=KernelSpec("linear"))
    out = r_pair(spec, z, t, 4)
    assert out.value == pytest.approx(10.0, abs=1e-10)
    assert out.terms_evaluated == 6 and out.terms_skipped == 0


def test_r_ova_twice_pair_at_k2():
    rng = rng_stream(20, 0)
    z = rng.standard_normal((12, 3))
    t = np.array([0, 1] * 6)
    spec = StrategySpec("ova", kernel=RBF1)
    pair = r_pair(StrategySpec("pair", kernel=RBF1), z, t, 2)
    ova = r_ova(spec, z, t, 2)
    assert ova.value == pytest.approx(2.0 * pair.value, abs=1e-10)
    assert ova.terms_evaluated == 2


def test_zero_at_balance():
    base = rng_stream(21, 0).standard_normal((5, 2))
    z = np.vstack([base, base, base])
    t = np.repeat(np.arange(3), 5)
    # square roots amplify MMD^2 roundoff (~1e-15) to ~1e-7
    assert r_pair(StrategySpec("pair", kernel=RBF1), z, t, 3).value <= 1e-6
    assert r_ova(StrategySpec("ova", kernel=RBF1), z, t, 3).value <= 1e-6
    table = np.ones((3, 4))
    assert abs(r_agg(StrategySpec("agg", kernel=RBF1), z, t, table).value) <= 1e-10


@pytest.mark.parametrize("k", [2, 4, 20])
def test_term_counts(k):
    rng = rng_stream(22, k)
    n = 3 * k
    z = rng.standard_normal((n, 2))
    t = np.repeat(np.arange(k), 3)
    assert r_pair(StrategySpec("pair", kernel=RBF1), z, t, k).terms_evaluated == k * (k - 1) // 2
    assert r_ova(StrategySpec("ova", kernel=RBF1), z, t, k).terms_evaluated == k
    table = rng.standard_normal((k, 4))
    assert r_agg(StrategySpec("agg", kernel=RBF1), z, t, table).terms_evaluated == 1


def test_permutation_invariance():
    rng = rng_stream(23, 0)
    z = rng.standard_normal((18, 2))
    t = rng.integers(0, 3, size=18)
    t[:3] = [0, 1, 2]  # keep every arm populated
    perm = rng.permutation(18)
    table = rng.standard_normal((3, 4))
    for kind in ("pair", "ova", "agg"):
        spec = StrategySpec(kind, kernel=RBF1)
        a = strategy_penalty(spec, z, t, 3, table).value
        b = strategy_penalty(spec, z[perm], t[perm], 3, table).value
        assert a == pytest.approx(b, abs=1e-12)


def test_short_arm_skipping_and_degenerate():
    z = np.arange(10.0)[:, None]
    t = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2])
    spec = StrategySpec("pair", kernel=RBF1, min_arm_batch=3)
    out = r_pair(spec, z, t, 3)
    assert out.terms_evaluated == 1 and out.terms_skipped == 2
    # renormalized by total/done
    with pytest.raises(DegenerateBatchError):
        r_pair(spec, z[:2], t[:2], 3)
    with pytest.raises(InsufficientDataError):
        r_agg(StrategySpec("agg", kernel=RBF1), z[:2], t[:2], np.zeros((3, 2)))


def test_geodesic_hand_values():
    graph = GeodesicGraph.from_edges(2, [(0, 1)])
    table = np.array([[0.0], [1.0]])
    assert geodesic_penalty(table, graph).value == pytest.approx(0.0)
    assert geodesic_penalty(np.zeros((2, 1)), graph).value == pytest.approx(1.0)
    path = GeodesicGraph.from_edges(3, [(0, 1), (1, 2)])
    coords = np.array([[0.0], [1.0], [2.0]])
    assert geodesic_penalty(coords, path).value == pytest.approx(0.0)
    assert np.array_equal(path.dist, [[0, 1, 2], [1, 0, 1], [2, 1, 0]])


def test_geodesic_graph_disconnected():
    with pytest.raises(ValueError):
        GeodesicGraph.from_edges(3, [(0, 1)])


def test_strategy_penalty_dispatch_and_geodesic_weight():
    rng = rng_stream(24, 0)
    z = rng.standard_normal((9, 2))
    t = np.repeat(np.arange(3), 3)
    table = rng.standard_normal((3, 2))
    agg = StrategySpec("agg", kernel=RBF1, embed_kernel=RBF1)
    assert (
        strategy_penalty(agg, z, t, 3, table).value
        == r_agg(agg, z, t, table).value
    )
    # exact isometric table: geodesic term adds nothing
    graph = GeodesicGraph.from_edges(2, [(0, 1)])
    iso = np.array([[0.0, 0.0], [1.0, 0.0]])
    t2 = np.array([0, 1] * 4)
    z2 = rng.standard_normal((8, 2))
    spec = StrategySpec("pair", kernel=RBF1, geodesic_weight=5.0)
    bare = StrategySpec("pair", kernel=RBF1)
    with_geo = strategy_penalty(spec, z2, t2, 2, iso, graph).value
    assert with_geo == pytest.approx(strategy_penalty(bare, z2, t2, 2).value)
    with pytest.raises(ValueError):
        strategy_penalty(spec, z2, t2, 2, iso, None)


def finite_diff_z(fn, z, eps=1e-6):
    num = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        z[idx] += eps
        up = fn(z)
        z[idx] -= 2 * eps
        down = fn(z)
        z[idx] += eps
        num[idx] = (up - down) / (2 * eps)
    return num


def test_penalty_gradients():
    rng = rng_stream(25, 0)
    z = rng.standard_normal((9, 2))
    t = np.repeat(np.arange(3), 3)
    table = rng.standard_normal((3, 2))
    for kind in ("pair", "ova", "agg"):
        spec = StrategySpec(kind, kernel=RBF1, embed_kernel=RBF1)
        out = strategy_penalty(spec, z, t, 3, table)
        num = finite_diff_z(
            lambda zz: strategy_penalty(spec, zz, t, 3, table, with_grad=False).value,
            z.copy(),
        )
        assert np.allclose(out.grad_z, num, atol=1e-5)
    # table gradient for agg and geodesic
    agg = StrategySpec("agg", kernel=RBF1, embed_kernel=RBF1)
    out = strategy_penalty(agg, z, t, 3, table)
    num = finite_diff_z(
        lambda tb: strategy_penalty(agg, z, t, 3, tb, with_grad=False).value,
        table.copy(),
    )
    assert np.allclose(out.grad_table, num, atol=1e-5)
    graph = GeodesicGraph.from_edges(3, [(0, 1), (1, 2)])
    out = geodesic_penalty(table, graph)
    num = finite_diff_z(lambda tb: geodesic_penalty(tb, graph, with_grad=False).value,
                        table.copy())
    assert np.allclose(out.grad_table, num, atol=1e-5)
