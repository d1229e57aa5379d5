import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptest import dimension as dm
from aptest.errors import (BadParams, InsufficientTrials, SearchBudget, SingularCovariance,
                           TooManyQueries)
from aptest.oracle import GaussianIsotropic, Hypercube


def test_dictator_law_counts_columns():
    S = np.array([[0, 1, 1, 0], [1, 1, 0, 0]])  # two points in {0,1}^4
    law = dm.DictatorPrior(4).label_law(S)
    # column i gives the labeling (S[0, i], S[1, i]) -> code S[0,i] + 2 S[1,i]
    assert law.prob.tolist() == [0.25, 0.25, 0.25, 0.25]
    law = dm.DictatorPrior(4).label_law(np.array([[1, 1, 1, 0]]))
    assert law.prob.tolist() == [0.25, 0.75]
    assert law.exact


def test_noise_law_and_cap():
    assert dm.RandomNoisePrior().label_law([0, 1, 2]).prob.sum() == pytest.approx(1.0)
    with pytest.raises(TooManyQueries):
        dm.RandomNoisePrior().label_law(list(range(21)))


def test_ltf_prior_symmetry(rng):
    S = rng.standard_normal((3, 5))
    law = dm.GaussianLTFPrior(5).label_law(S, rng)
    assert law.total() == pytest.approx(1.0)
    # flipping w flips every label
    flipped = law.prob[::-1]
    assert np.all(np.abs(law.prob - flipped) <= 5 * (law.se + law.se[::-1]) + 1e-12)
    with pytest.raises(BadParams):
        dm.GaussianLTFPrior(5, draws=10)


def test_variation_distance():
    a = dm.LabelLaw(1, np.array([1.0, 0.0]))
    b = dm.LabelLaw(1, np.array([0.5, 0.5]))
    assert dm.variation_distance(a, b) == 0.5
    d, lo, hi = dm.variation_interval(a, b)
    assert lo == hi == d
    with pytest.raises(BadParams):
        dm.variation_distance(a, dm.LabelLaw(2, np.full(4, 0.25)))


def test_finite_prior_validation():
    with pytest.raises(BadParams):
        dm.FinitePrior.from_tables([[0, 1]], [0.5])
    p = dm.FinitePrior.from_tables([[0, 1, 1], [1, 1, 0]], [0.25, 0.75])
    assert p.label_law([0, 2]).prob.tolist() == [0.0, 0.75, 0.25, 0.0]


def random_finite_prior(rng, n_points, k):
    tables = rng.integers(0, 2, size=(k, n_points))
    # dyadic so every mass is exact in binary floating point
    probs = rng.multinomial(64, np.full(k, 1.0 / k)) / 64.0
    return dm.FinitePrior.from_tables(tables, probs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(0, 2))
def test_memoized_dt_matches_brute_force(seed, u, q):
    rng = np.random.default_rng(seed)
    a = random_finite_prior(rng, u, int(rng.integers(1, 6)))
    b = random_finite_prior(rng, u, int(rng.integers(1, 6)))
    fair = dm.fair_law(a, b, np.arange(u))
    assert dm.optimal_dt_error(fair, q) == dm.brute_force_dt_error(fair, q)


def test_dt_error_structure(rng):
    a = random_finite_prior(rng, 3, 4)
    b = random_finite_prior(rng, 3, 4)
    fair = dm.fair_law(a, b, np.arange(3))
    errs = [dm.optimal_dt_error(fair, q) for q in range(4)]
    assert errs[0] == 0.5
    assert all(x >= y for x, y in zip(errs, errs[1:]))
    tv = dm.variation_distance(a.label_law(np.arange(3)), b.label_law(np.arange(3)))
    assert errs[3] == pytest.approx(0.5 * (1 - tv))


def test_dt_budgets():
    fair = dm.FairLaw(15, np.zeros((1 << 15, 2)))
    with pytest.raises(SearchBudget):
        dm.optimal_dt_error(fair, 1)
    fair = dm.FairLaw(9, np.zeros((1 << 9, 2)))
    with pytest.raises(SearchBudget):
        dm.brute_force_dt_error(fair, 1)


def test_all_trees_count():
    # T(q) = 2 + u T(q-1)^2
    assert len(dm.all_trees(3, 0)) == 2
    assert len(dm.all_trees(3, 1)) == 2 + 3 * 4
    assert len(dm.all_trees(2, 2)) == 2 + 2 * 10 ** 2


def test_passive_dim_dictator_vs_noise():
    est = dm.estimate_passive_dim(dm.DictatorPrior(256), dm.RandomNoisePrior(), Hypercube(256), 6, 40, seed=1)
    assert est.q >= 3
    assert [c["q"] for c in est.curve] == list(range(1, 7))


def test_coarse_dim_needs_trials():
    with pytest.raises(InsufficientTrials):
        dm.estimate_coarse_dim(dm.DictatorPrior(8), dm.RandomNoisePrior(), Hypercube(8), 8, 3, 100)
    est = dm.estimate_coarse_dim(dm.DictatorPrior(8), dm.RandomNoisePrior(), Hypercube(8), 8, 1, 8)
    assert est.q in (0, 1)


def test_active_dim_runs():
    est = dm.estimate_active_dim(dm.DictatorPrior(16), dm.RandomNoisePrior(), Hypercube(16), 6, 2, 20, seed=2)
    assert 0 <= est.q <= 2


def test_dictator_ratio_check_small():
    pool = np.random.default_rng(0).integers(0, 2, size=(50, 4096), dtype=np.uint8)
    r = dm.dictator_ratio_check(pool, 4096, 1, 200, seed=0)
    assert r.subset_fraction == 0.0
    with pytest.raises(BadParams):
        dm.dictator_ratio_check(pool, 100, 1, 10)


def test_gaussian_bound():
    n = 8
    X = np.sqrt(n) * np.eye(3, n)
    assert dm.gaussian_label_law_bound(X) == pytest.approx(0.0, abs=1e-6)
    X = np.diag([np.sqrt(2 * n), np.sqrt(n / 2)])
    X = np.hstack([X, np.zeros((2, n - 2))])
    assert dm.gaussian_label_law_bound(X) == pytest.approx(0.0, abs=1e-6)
    X = np.diag([np.sqrt(2 * n), np.sqrt(2 * n)])
    X = np.hstack([X, np.zeros((2, n - 2))])
    assert dm.gaussian_label_law_bound(X) == pytest.approx(2 * math.sqrt(0.5 * 2 * math.log(2)))
    with pytest.raises(SingularCovariance):
        dm.gaussian_label_law_bound(np.ones((3, 2)))
    with pytest.raises(SingularCovariance):
        dm.gaussian_label_law_bound(np.ones((2, 5)))


def test_operator_norm(rng):
    A = rng.standard_normal((30, 30))
    B = A + A.T
    assert dm.operator_norm_sym(B, tol=1e-10, rng=0) == pytest.approx(np.abs(np.linalg.eigvalsh(B)).max(), rel=1e-6)
    assert dm.operator_norm_sym(np.array([[-3.0]])) == 3.0
    assert dm.operator_norm_sym(np.zeros((4, 4)), rng=0) == 0.0


def test_singular_value_check():
    r = dm.singular_value_check(400, 10, 2.0, 20, seed=0)
    assert r.frequency == 1.0
    assert r.floor == pytest.approx(1 - 2 * math.exp(-2))
    with pytest.raises(BadParams):
        dm.singular_value_check(10, 20, 1.0, 1)


def test_noise_far_from_dictators():
    pool = np.random.default_rng(1).integers(0, 2, size=(2000, 64), dtype=np.uint8)
    assert dm.noise_distance_to_dictators(pool) > 0.4
