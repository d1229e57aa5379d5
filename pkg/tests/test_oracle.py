import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptest.errors import BadDistribution, BadSimplex, SampleBudgetExceeded, UnknownPoint
from aptest.functions import BinnedTable, LinearThreshold, PiecewiseConstantFn
from aptest.oracle import (ActiveOracle, BinnedMixture, Empirical, GaussianIsotropic, MemoizedRandom,
                           PiecewiseUniform01, Uniform01, UnitBallUniform, cluster_error,
                           distance_to_interval_union, distance_to_margin, distribution_from_json,
                           min_cross_distance, nearest_interval_union)

HALF = PiecewiseConstantFn.from_intervals([(0.0, 0.5)])


def test_draw_counts_and_order():
    o = ActiveOracle(Uniform01(), HALF, seed=1)
    ids = o.draw_unlabeled(3)
    assert ids.tolist() == [0, 1, 2]
    assert o.counters() == (3, 0)


def test_gaussian_shape_and_degenerate_mixture():
    o = ActiveOracle(GaussianIsotropic(5), LinearThreshold(np.ones(5)), seed=0)
    assert o.points(o.draw_unlabeled(1)).shape == (1, 5)
    o = ActiveOracle(BinnedMixture([1.0] + [0.0] * 9), BinnedTable(np.zeros((10, 2)) + [[0.1, 0]] * 10), seed=0)
    assert set(o.tags(o.draw_unlabeled(100)).tolist()) == {0}


def test_labels_and_charging():
    o = ActiveOracle(Empirical([0.25, 0.75]), HALF, seed=0)
    ids = o.draw_unlabeled(20)
    pts = o.points(ids)
    labels = o.query_labels(ids)
    assert np.array_equal(labels, (pts <= 0.5).astype(np.int8))
    o.query_label(int(ids[0]))
    o.query_label(int(ids[0]))
    assert o.label_count == 22


def test_ltf_label_maps_minus_to_zero():
    o = ActiveOracle(Empirical(np.array([[-0.3, 0.0]])), LinearThreshold([1.0, 0.0]), seed=0)
    assert o.query_label(int(o.draw_unlabeled(1)[0])) == 0


def test_unknown_point_always_raises():
    o = ActiveOracle(Uniform01(), HALF, seed=0)
    with pytest.raises(UnknownPoint):
        o.query_label(0)
    o.draw_unlabeled(2)
    with pytest.raises(UnknownPoint):
        o.query_labels([1, 2])
    with pytest.raises(UnknownPoint):
        o.query_label(-1)


def test_memoized_random_is_stable():
    o = ActiveOracle(Uniform01(), MemoizedRandom(), seed=3)
    ids = o.draw_unlabeled(50)
    a = o.query_labels(ids)
    b = o.query_labels(ids[::-1])[::-1]
    assert np.array_equal(a, b)
    assert o.target.memo_size == 50
    assert o.label_count == 100


def test_transcript_determinism():
    def run(seed):
        o = ActiveOracle(Uniform01(), MemoizedRandom(), seed=seed)
        ids = o.draw_unlabeled(10)
        o.query_labels(ids[:5])
        o.draw_near(o.points(ids[:3]), 0.05, 10_000)
        return o.transcript_digest()
    assert run(7) == run(7)
    assert run(7) != run(8)


def test_draw_near_generic_matches_window():
    o = ActiveOracle(PiecewiseUniform01([0, 0.5, 1], [0.9, 0.1]), HALF, seed=2)
    centers = np.array([0.1, 0.7, 0.95])
    ids = o.draw_near(centers, 0.02, 100_000)
    assert np.all(np.abs(o.points(ids) - centers) < 0.02)
    assert o.unlabeled_count >= 3


def test_draw_near_cap():
    o = ActiveOracle(PiecewiseUniform01([0, 0.5, 1], [1.0, 0.0]), HALF, seed=2)
    with pytest.raises(SampleBudgetExceeded):
        o.draw_near(np.array([0.9]), 0.01, 500)
    assert o.unlabeled_count == 500


def test_bad_distributions():
    with pytest.raises(BadDistribution):
        BinnedMixture([0.5, 0.6])
    with pytest.raises(BadDistribution):
        GaussianIsotropic(0)
    for d in (Uniform01(), GaussianIsotropic(3), BinnedMixture([0.5, 0.5]), UnitBallUniform(2),
              Empirical([[0.0, 1.0]]), PiecewiseUniform01([0, 0.3, 1], [0.5, 0.5])):
        assert type(distribution_from_json(d.to_json())) is type(d)


def test_unit_ball_inside(rng):
    x, _ = UnitBallUniform(3).sample(rng, 1000)
    assert np.all(np.linalg.norm(x, axis=1) <= 1.0)


def test_distance_examples():
    assert distance_to_interval_union(HALF, 1) == 0.0
    f = PiecewiseConstantFn.from_intervals([(0.0, 0.2), (0.4, 0.6)])
    assert distance_to_interval_union(f, 1) == pytest.approx(0.2)
    alt = PiecewiseConstantFn(np.arange(1, 20) / 20, np.arange(20) % 2 == 0)
    assert distance_to_interval_union(alt, 10) == 0.0


def brute_distance(f, d):
    best = np.inf
    for flips in itertools.product([0, 1], repeat=f.n_blocks):
        vals = f.values ^ np.array(flips, dtype=np.int8)
        g = PiecewiseConstantFn(f.breakpoints, vals)
        if g.n_intervals <= d:
            best = min(best, float(np.sum(f.lengths[np.array(flips, dtype=bool)])))
    return best


@settings(max_examples=120, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=0, max_size=11, unique=True),
       st.integers(0, 1), st.integers(0, 3))
def test_distance_matches_exhaustive(bps, first, d):
    bps = sorted(bps)
    if any(b - a < 1e-6 for a, b in zip(bps, bps[1:])):
        return
    vals = (np.arange(len(bps) + 1) + first) % 2
    f = PiecewiseConstantFn(bps, vals)
    got = distance_to_interval_union(f, d)
    assert got == pytest.approx(brute_distance(f, d), abs=1e-12)
    assert (got == 0) == (f.n_intervals <= d)
    assert distance_to_interval_union(f, d + 1) <= got + 1e-15
    g = nearest_interval_union(f, d)
    assert g.n_intervals <= d
    assert f.disagreement(g) == pytest.approx(got, abs=1e-12)


def test_cluster_error():
    assert cluster_error([[0.5, 0.0], [0.0, 0.5]]) == 0.0
    assert cluster_error([[0.5, 0.5]]) == 0.5
    assert cluster_error([[0.3, 0.1], [0.05, 0.55]]) == pytest.approx(0.15)
    with pytest.raises(BadSimplex):
        cluster_error([[0.3, 0.3]])
    with pytest.raises(BadSimplex):
        cluster_error([[-0.1, 1.1]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_cluster_error_at_most_half(raw):
    p = np.array(raw, dtype=float)
    if p.sum() == 0:
        return
    p = p / p.sum()
    if len(p) % 2:
        p = np.append(p, 0.0)
    p = p / p.sum()
    assert cluster_error(p.reshape(-1, 2)) <= 0.5 + 1e-12


def test_margin_distance_small_cases():
    pts = np.array([[0.0, 0.0], [0.05, 0.0], [0.9, 0.0]])
    labels = np.array([1, 0, 0])
    w = np.array([0.2, 0.3, 0.5])
    assert distance_to_margin(pts, w, labels, 0.1) == pytest.approx(0.2)
    assert distance_to_margin(pts, w, labels, 0.01) == 0.0
    assert min_cross_distance(pts, labels) == pytest.approx(0.05)
    # star: one positive close to three light negatives
    pts = np.array([[0, 0], [0.01, 0], [0, 0.01], [-0.01, 0]], dtype=float)
    w = np.array([0.7, 0.1, 0.1, 0.1])
    assert distance_to_margin(pts, w, np.array([1, 0, 0, 0]), 0.1) == pytest.approx(0.3)
