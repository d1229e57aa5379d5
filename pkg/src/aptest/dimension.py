"""Label laws of function priors, variation distance, and the testing-dimension
estimators, with the dictator and Gaussian lower-bound statistics.

A labeling ``y`` of ``q`` points is stored as the integer whose bit ``k`` is
the label of point ``k``; a law over labelings is a dense array of length
``2**q``.
"""
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import (BadParams, InsufficientTrials, SearchBudget, SingularCovariance,
                     TooManyQueries)

MAX_Q = 20
DT_MAX_U = 14
DT_MAX_Q = 3
LTF_DRAWS = 100_000


# ---------------------------------------------------------------------------
# priors and label laws


@dataclass(frozen=True)
class LabelLaw:
    q: int
    prob: np.ndarray
    se: np.ndarray = None

    @property
    def exact(self):
        return self.se is None

    def total(self):
        return float(self.prob.sum())


def _codes(labels):
    """Labelings (rows of a ``(k, q)`` 0/1 matrix) to integer codes."""
    labels = np.asarray(labels, dtype=np.int64)
    return labels @ (np.int64(1) << np.arange(labels.shape[1], dtype=np.int64))


def _check_q(q, cap=MAX_Q):
    if q > cap:
        raise TooManyQueries(f"a law over 2^{q} labelings exceeds the 2^{cap} cap")


class FunctionPrior:
    def label_law(self, S, rng=None):
        raise NotImplementedError

    def sample_labels(self, S, rng):
        """One labeler drawn from the prior, evaluated on ``S``."""
        raise NotImplementedError


class DictatorPrior(FunctionPrior):
    """Uniform over the coordinate projections ``x -> x_i`` of ``{0,1}^n``."""

    def __init__(self, n):
        if n < 1:
            raise BadParams("n must be >= 1")
        self.n = n

    def label_law(self, S, rng=None):
        S = np.asarray(S)
        q = S.shape[0]
        _check_q(q)
        counts = np.bincount(_codes(S.T), minlength=1 << q)
        return LabelLaw(q, counts / self.n)

    def sample_labels(self, S, rng):
        return np.asarray(S)[:, rng.integers(self.n)].astype(np.int8)


class RandomNoisePrior(FunctionPrior):
    """Independent fair labels on every point."""

    def label_law(self, S, rng=None):
        q = len(S)
        _check_q(q)
        return LabelLaw(q, np.full(1 << q, 2.0 ** -q))

    def sample_labels(self, S, rng):
        return rng.integers(0, 2, size=len(S), dtype=np.int8)


class GaussianLTFPrior(FunctionPrior):
    """``w ~ N(0, I_n)``, ``f = 1[w.x >= 0]``; laws by Monte-Carlo over ``w``."""

    def __init__(self, n, draws=LTF_DRAWS):
        if n < 1:
            raise BadParams("n must be >= 1")
        if draws < LTF_DRAWS:
            raise BadParams(f"need at least {LTF_DRAWS} weight draws")
        self.n = n
        self.draws = draws

    def label_law(self, S, rng=None):
        S = np.asarray(S, dtype=np.float64)
        q = S.shape[0]
        _check_q(q)
        rng = np.random.default_rng(rng)
        counts = np.zeros(1 << q, dtype=np.int64)
        for a in range(0, self.draws, 1 << 16):
            W = rng.standard_normal((min(1 << 16, self.draws - a), self.n))
            counts += np.bincount(_codes(W @ S.T >= 0), minlength=1 << q)
        p = counts / self.draws
        return LabelLaw(q, p, np.sqrt(p * (1.0 - p) / self.draws))

    def sample_labels(self, S, rng):
        w = rng.standard_normal(self.n)
        return (np.asarray(S, dtype=np.float64) @ w >= 0).astype(np.int8)


class FinitePrior(FunctionPrior):
    """Explicit list of labelers with probabilities.

    Each labeler maps a sequence of points to a 0/1 array.
    :meth:`from_tables` builds labelers on integer point ids.
    """

    def __init__(self, labelers, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if len(labelers) != probs.shape[0] or probs.size == 0:
            raise BadParams("one probability per labeler")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise BadParams("prior probabilities must be nonnegative and sum to 1")
        self.labelers = list(labelers)
        self.probs = probs

    @classmethod
    def from_tables(cls, tables, probs):
        tables = np.asarray(tables, dtype=np.int8)
        return cls([lambda S, t=t: t[np.asarray(S, dtype=np.int64)] for t in tables], probs)

    def label_law(self, S, rng=None):
        q = len(S)
        _check_q(q)
        prob = np.zeros(1 << q)
        for f, p in zip(self.labelers, self.probs):
            y = np.asarray(f(S), dtype=np.int64)
            prob[int(y @ (np.int64(1) << np.arange(q, dtype=np.int64)))] += p
        return LabelLaw(q, prob)

    def sample_labels(self, S, rng):
        return np.asarray(self.labelers[rng.choice(len(self.probs), p=self.probs)](S), dtype=np.int8)


def label_law(prior, S, rng=None):
    return prior.label_law(S, rng)


def variation_distance(a, b):
    """``(1/2) sum_y |a(y) - b(y)|``."""
    if a.q != b.q:
        raise BadParams(f"laws over different query counts ({a.q} vs {b.q})")
    return 0.5 * float(np.abs(a.prob - b.prob).sum())


def variation_interval(a, b, z=2.0):
    """Point value and a conservative band accounting for Monte-Carlo error."""
    d = variation_distance(a, b)
    slack = 0.0
    for law in (a, b):
        if law.se is not None:
            slack += 0.5 * z * float(law.se.sum())
    return d, max(0.0, d - slack), min(1.0, d + slack)


def _exceeds(a, b, level=0.25):
    _, lo, _ = variation_interval(a, b)
    return lo > level


# ---------------------------------------------------------------------------
# passive / coarse dimensions


class DimEstimate(NamedTuple):
    q: int
    curve: list


def _as_sampler(D):
    if callable(D):
        return D
    return lambda rng, q: D.sample(rng, q)[0]


def _exceed_fraction(pi, pi_prime, sample, q, trials, rng):
    hits = 0
    for _ in range(trials):
        S = sample(rng, q)
        if _exceeds(pi.label_law(S, rng), pi_prime.label_law(S, rng)):
            hits += 1
    return hits


def estimate_passive_dim(pi, pi_prime, D, q_max, trials, seed=0):
    """Largest ``q <= q_max`` with ``Pr_S[d_S > 1/4] <= 1/4`` over ``trials`` draws of ``S``."""
    if trials < 1:
        raise BadParams("trials must be >= 1")
    rng = np.random.default_rng(seed)
    sample = _as_sampler(D)
    best = 0
    curve = []
    for q in range(1, q_max + 1):
        hits = _exceed_fraction(pi, pi_prime, sample, q, trials, rng)
        frac = hits / trials
        curve.append({"q": q, "exceed": frac, "trials": trials})
        if frac <= 0.25:
            best = q
    return DimEstimate(best, curve)


def estimate_coarse_dim(pi, pi_prime, D, n, q_max, trials, seed=0, c=1.0):
    """As the passive estimate with threshold ``1/n**q``; needs ``trials >= c n**q_max``."""
    if q_max > 0 and trials < c * float(n) ** q_max:
        raise InsufficientTrials(f"{trials} trials cannot resolve a 1/{n}^{q_max} tail")
    rng = np.random.default_rng(seed)
    sample = _as_sampler(D)
    best = 0
    curve = []
    for q in range(1, q_max + 1):
        hits = _exceed_fraction(pi, pi_prime, sample, q, trials, rng)
        frac = hits / trials
        curve.append({"q": q, "exceed": frac, "trials": trials, "threshold": float(n) ** -q})
        if frac <= float(n) ** -q:
            best = q
    return DimEstimate(best, curve)


# ---------------------------------------------------------------------------
# Fair law and decision trees


@dataclass(frozen=True)
class FairLaw:
    """``mass[y, l]``: label source ``l = 1`` draws from ``pi``, ``l = 0`` from ``pi'``."""

    q: int
    mass: np.ndarray
    exact: bool = True


def fair_law(pi, pi_prime, U, rng=None):
    a = pi.label_law(U, rng) if isinstance(pi, FunctionPrior) else pi
    b = pi_prime.label_law(U, rng) if isinstance(pi_prime, FunctionPrior) else pi_prime
    if a.q != b.q:
        raise BadParams("laws over different query counts")
    mass = np.column_stack((0.5 * b.prob, 0.5 * a.prob))
    return FairLaw(a.q, mass, a.exact and b.exact)


def _check_dt(u, q):
    if u > DT_MAX_U or q > DT_MAX_Q:
        raise SearchBudget(f"exhaustive search limited to |U| <= {DT_MAX_U}, q <= {DT_MAX_Q}")


def optimal_dt_error(fair, q):
    """Least error in guessing ``l`` with an adaptive depth-``q`` tree of label queries on ``U``.

    Memoized on (queried-mask, answers, depth left); the leaf guesses the
    heavier side among labelings consistent with the answers.
    """
    u = fair.q
    _check_dt(u, q)
    codes = np.arange(1 << u, dtype=np.int64)
    m0 = fair.mass[:, 0]
    m1 = fair.mass[:, 1]

    @lru_cache(maxsize=None)
    def solve(mask, vals, depth):
        sel = (codes & mask) == vals
        best = min(float(m0[sel].sum()), float(m1[sel].sum()))
        if depth == 0 or best == 0.0:
            return best
        for j in range(u):
            bit = 1 << j
            if mask & bit:
                continue
            err = solve(mask | bit, vals, depth - 1) + solve(mask | bit, vals | bit, depth - 1)
            if err < best:
                best = err
        return best

    return solve(0, 0, q)


def all_trees(u, q):
    """Every labeled decision tree of depth <= q on ``u`` points.

    A tree is ``("leaf", l)`` or ``("node", j, if_zero, if_one)``.
    """
    leaves = [("leaf", 0), ("leaf", 1)]
    if q == 0:
        return leaves
    sub = all_trees(u, q - 1)
    return leaves + [("node", j, a, b) for j in range(u) for a in sub for b in sub]


def _tree_output(tree, codes):
    if tree[0] == "leaf":
        return np.full(codes.shape[0], tree[1], dtype=np.int8)
    _, j, a, b = tree
    bit = (codes >> j) & 1
    return np.where(bit == 1, _tree_output(b, codes), _tree_output(a, codes))


def brute_force_dt_error(fair, q):
    """Minimum over an explicit enumeration of all trees; no memoization."""
    u = fair.q
    _check_dt(u, q)
    if q > 2 or u > 8:
        raise SearchBudget("explicit enumeration limited to |U| <= 8, q <= 2")
    codes = np.arange(1 << u, dtype=np.int64)
    best = 1.0
    for tree in all_trees(u, q):
        out = _tree_output(tree, codes)
        err = float(fair.mass[out == 1, 0].sum()) + float(fair.mass[out == 0, 1].sum())
        best = min(best, err)
    return best


def estimate_active_dim(pi, pi_prime, D, u, q_max, trials, seed=0):
    """Largest ``q <= q_max`` with ``Pr_U[err*(DT_q) < 1/4] <= 1/4`` over ``trials`` draws of ``U``."""
    _check_dt(u, q_max)
    rng = np.random.default_rng(seed)
    sample = _as_sampler(D)
    hits = np.zeros(q_max + 1, dtype=np.int64)
    for _ in range(trials):
        U = sample(rng, u)
        fair = fair_law(pi, pi_prime, U, rng)
        for q in range(1, q_max + 1):
            if optimal_dt_error(fair, q) < 0.25:
                hits[q] += 1
    best = 0
    curve = []
    for q in range(1, q_max + 1):
        frac = hits[q] / trials
        curve.append({"q": q, "exceed": float(frac), "trials": trials})
        if frac <= 0.25:
            best = q
    return DimEstimate(best, curve)


# ---------------------------------------------------------------------------
# lower-bound statistics


class RatioCheck(NamedTuple):
    pair_fraction: float
    subset_fraction: float
    trials: int
    q: int


def dictator_ratio_check(pool, n, q, trials, seed=0):
    """Violations of ``pi_S(y) <= (6/5) 2^-q`` for the dictator prior.

    ``pool`` is a ``(P, n)`` 0/1 matrix; each trial picks ``q`` distinct
    rows as ``S``. ``pair_fraction`` counts violating ``(S, y)`` pairs over
    all ``trials * 2**q``; ``subset_fraction`` counts subsets with any.
    """
    pool = np.ascontiguousarray(pool, dtype=np.uint8)
    if pool.shape[1] != n:
        raise BadParams(f"pool has {pool.shape[1]} columns, expected {n}")
    _check_q(q)
    if q > pool.shape[0]:
        raise BadParams("q exceeds the pool size")
    rng = np.random.default_rng(seed)
    subsets = np.empty((trials, q), dtype=np.int64)
    for t in range(trials):
        subsets[t] = rng.choice(pool.shape[0], size=q, replace=False)
    # count / n > 6 / (5 * 2^q)  <=>  count * 5 * 2^q > 6 n
    v = kernels.column_violations(pool, subsets, np.int64(6 * n), np.int64(5 * (1 << q)))
    return RatioCheck(float(v.sum()) / (trials * (1 << q)), float(np.mean(v > 0)), trials, q)


def gaussian_label_law_bound(X):
    """``2 sqrt(|log det S| / 2)`` with ``S = X X^T / n`` for a ``K x n`` matrix ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    K, n = X.shape
    if K > n:
        raise SingularCovariance(f"K={K} rows in dimension n={n} give a singular covariance")
    sigma = X @ X.T / n
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularCovariance("covariance is singular")
    return 2.0 * math.sqrt(0.5 * abs(logdet))


def operator_norm_sym(B, tol=1e-6, max_iter=10_000, rng=None):
    """Largest ``|eigenvalue|`` of a symmetric matrix by power iteration."""
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] == 1:
        return abs(float(B[0, 0]))
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(B.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        # B^2 has the same top eigenvector and avoids sign oscillation
        w = B @ (B @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - lam) <= tol * max(new, 1e-300):
            return new
        lam = new
    return lam


class SVCheck(NamedTuple):
    frequency: float
    floor: float
    bound: float
    norms: np.ndarray


def singular_value_check(n, m, t, trials, seed=0):
    """Fraction of Gaussian ``n x m`` draws with ``||A^T A / n - I|| <= 3 (sqrt m + t) / sqrt n``."""
    if not 1 <= m < n:
        raise BadParams("need 1 <= m < n")
    if not 0.0 < t < math.sqrt(n) - math.sqrt(m):
        raise BadParams("need 0 < t < sqrt(n) - sqrt(m)")
    rng = np.random.default_rng(seed)
    bound = 3.0 * (math.sqrt(m) + t) / math.sqrt(n)
    norms = np.empty(trials)
    for k in range(trials):
        A = rng.standard_normal((n, m))
        B = A.T @ A / n - np.eye(m)
        norms[k] = operator_norm_sym(B, rng=rng)
    return SVCheck(float(np.mean(norms <= bound)), 1.0 - 2.0 * math.exp(-t * t / 2.0), bound, norms)


def noise_distance_to_dictators(pool, seed=0):
    """Least disagreement, on the pool rows, between fresh random labels and any dictator."""
    pool = np.asarray(pool, dtype=np.uint8)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=pool.shape[0], dtype=np.uint8)
    return float(np.min(np.mean(pool != y[:, None], axis=0)))
