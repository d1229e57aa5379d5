"""Gaussian LTF tester and the degree-1 Hermite utilities around it.

Labels come out of the oracle as {0, 1}; everything here works with the
+-1 convention, so ``s = 2 * label - 1`` at the boundary.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import kernels
from .errors import BadParams, DimMismatch
from .functions import LinearThreshold
from .oracle import ActiveOracle, GaussianIsotropic

C_M1 = 800.0
C_M2 = 32.0
PAIR_CAP = 5_000_000


def eval_pm(f, x):
    return f.eval_pm(x)


def w_function(mu):
    """``W(mu) = (2/pi) exp(-theta^2)`` with ``theta = Phi^{-1}((1 - mu) / 2)``.

    This is the self-correlation of the LTF ``sgn(x_1 - theta)``, whose
    mean is ``mu``; it vanishes at ``mu = +-1``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(np.abs(mu) > 1.0):
        raise BadParams("mu must lie in [-1, 1]")
    theta = stats.norm.ppf((1.0 - mu) / 2.0)
    out = 2.0 / math.pi * np.exp(-theta * theta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UStatConfig:
    tau: float
    m: int

    def __post_init__(self):
        if not self.tau > 0:
            raise BadParams("tau must be positive")
        if self.m < 2:
            raise BadParams(f"need m >= 2 sample points, got {self.m}")


def default_tau(n, eps):
    return math.sqrt(4.0 * n * math.log(4.0 * n / eps ** 3))


def ltf_config(n, eps, c_m1=C_M1, c_m2=C_M2):
    """``tau = sqrt(4n log(4n/eps^3))`` and ``m = c_m1 tau / eps^3 + c_m2 / eps^6``."""
    if n < 1:
        raise BadParams("n must be >= 1")
    if not 0.0 < eps < 1.0:
        raise BadParams("eps must lie in (0, 1)")
    tau = default_tau(n, eps)
    m = int(math.ceil(c_m1 * tau / eps ** 3 + c_m2 / eps ** 6))
    return UStatConfig(tau, m)


class SelfCorrelation(NamedTuple):
    rho: float
    se: float
    n_pairs: int


def _pair_index(k):
    """Unrank ``k`` into the pair ``(i, j)``, ``j < i``, of the lower triangle."""
    i = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    # float rounding can be off by one for large k
    i -= (i * (i - 1) // 2 > k)
    i += ((i + 1) * i // 2 <= k)
    j = k - i * (i - 1) // 2
    return i, j


def sample_pairs(m, P, rng):
    """``P`` distinct unordered pairs of ``range(m)``, uniformly; all of them if ``P`` covers."""
    total = m * (m - 1) // 2
    if P >= total:
        k = np.arange(total, dtype=np.int64)
    else:
        k = np.unique(rng.integers(0, total, size=P, dtype=np.int64))
        while k.shape[0] < P:
            extra = rng.integers(0, total, size=P - k.shape[0], dtype=np.int64)
            k = np.unique(np.concatenate((k, extra)))
    return _pair_index(k)


def self_correlation(X, s, tau, pair_cap=PAIR_CAP, rng=None):
    """Truncated U-statistic ``mean s_i s_j <x_i, x_j> 1[|<x_i, x_j>| <= tau]``.

    Over all pairs when there are at most ``pair_cap``, otherwise over
    ``pair_cap`` distinct pairs chosen uniformly. The sum is exactly rounded,
    so the result does not depend on the order of the sample.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise BadParams("need at least two points")
    total = m * (m - 1) // 2
    if total > pair_cap and rng is None:
        raise BadParams("subsampling pairs needs an rng")
    I, J = sample_pairs(m, int(min(total, pair_cap)), rng)
    vals = kernels.pair_values(X, s, I, J, float(tau))
    P = vals.shape[0]
    rho = math.fsum(vals) / P
    # Hoeffding: 4 var(h_1) / m from the per-point means, plus the pair noise
    sums = np.bincount(I, vals, minlength=m) + np.bincount(J, vals, minlength=m)
    cnt = np.bincount(I, minlength=m) + np.bincount(J, minlength=m)
    h1 = sums[cnt > 0] / cnt[cnt > 0]
    var = 4.0 * np.var(h1) / m + np.var(vals) / P
    return SelfCorrelation(rho, math.sqrt(var), P)


def _labeled_sample(oracle, m):
    if not isinstance(oracle.distribution, GaussianIsotropic):
        raise BadParams("the LTF tester needs a gaussian_isotropic oracle")
    ids = oracle.draw_unlabeled(m)
    s = 2.0 * oracle.query_labels(ids).astype(np.float64) - 1.0
    return oracle.points(ids), s


def _pair_rng(oracle):
    return np.random.default_rng(oracle.rng.integers(0, 2 ** 63))


def estimate_self_correlation(oracle, cfg, pair_cap=PAIR_CAP):
    X, s = _labeled_sample(oracle, cfg.m)
    return self_correlation(X, s, cfg.tau, pair_cap, _pair_rng(oracle))


def test_ltf(oracle, n, eps, c_m1=C_M1, c_m2=C_M2, pair_cap=PAIR_CAP):
    """Accept iff ``|rho - W(mu)| <= 2 eps^3``; uses exactly ``m`` draws and ``m`` labels."""
    cfg = ltf_config(n, eps, c_m1, c_m2)
    if not isinstance(oracle.distribution, GaussianIsotropic):
        raise BadParams("the LTF tester needs a gaussian_isotropic oracle")
    if oracle.distribution.n != n:
        raise DimMismatch(f"oracle dimension {oracle.distribution.n} != {n}")
    start = oracle.counters()
    X, s = _labeled_sample(oracle, cfg.m)
    mu = float(np.mean(s))
    est = self_correlation(X, s, cfg.tau, pair_cap, _pair_rng(oracle))
    stat = abs(est.rho - w_function(mu))
    threshold = 2.0 * eps ** 3
    return oracle.verdict(stat <= threshold, start, stat, threshold)


# ---------------------------------------------------------------------------
# Monte-Carlo Hermite checks


class MCEstimate(NamedTuple):
    value: float
    se: float


def _signs(f, X, rng):
    if f is None:
        return rng.choice(np.array([-1.0, 1.0]), size=X.shape[0])
    if isinstance(f, LinearThreshold):
        return f.eval_pm(X).astype(np.float64)
    return np.asarray(f(X), dtype=np.float64)


def hermite_coeff_degree1(f, i, samples, rng=None, n=None):
    """Monte-Carlo ``E[f(x) x_i]`` (``i`` counted from 1).

    ``f`` is a :class:`LinearThreshold`, a callable returning +-1 on rows of
    ``x``, or an :class:`ActiveOracle`, whose points are then drawn and
    labeled through the oracle.
    """
    if samples < 1:
        raise BadParams("samples must be >= 1")
    if isinstance(f, ActiveOracle):
        X, s = _labeled_sample(f, samples)
    else:
        n = f.n if n is None else n
        rng = np.random.default_rng(rng)
        X = rng.standard_normal((samples, n))
        s = _signs(f, X, rng)
    if not 1 <= i <= X.shape[1]:
        raise BadParams(f"coordinate {i} out of range 1..{X.shape[1]}")
    v = s * X[:, i - 1]
    se = float(np.std(v, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return MCEstimate(float(np.mean(v)), se)


def degree1_weight(f, n, samples, rng=None):
    """Monte-Carlo ``sum_i fhat(e_i)^2``.

    The squared sample means are corrected for their ``trace(cov) / samples``
    bias; the standard error is the delta-method one.
    """
    if samples < 2:
        raise BadParams("samples must be >= 2")
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((samples, n))
    V = _signs(f, X, rng)[:, None] * X
    mean = V.mean(axis=0)
    cov = np.atleast_2d(np.cov(V, rowvar=False))
    value = float(mean @ mean - np.trace(cov) / samples)
    return MCEstimate(value, float(math.sqrt(max(4.0 * mean @ cov @ mean / samples, 0.0))))


def self_correlation_mc(f, n, pairs, rng=None, tau=math.inf):
    """``E f(x) f(y) <x, y> 1[|<x, y>| <= tau]`` from independent Gaussian pairs."""
    rng = np.random.default_rng(rng)
    acc = []
    for a in range(0, pairs, 1 << 18):
        k = min(1 << 18, pairs - a)
        X = rng.standard_normal((k, n))
        Y = rng.standard_normal((k, n))
        dot = np.einsum("ij,ij->i", X, Y)
        acc.append(_signs(f, X, rng) * _signs(f, Y, rng) * np.where(np.abs(dot) <= tau, dot, 0.0))
    v = np.concatenate(acc)
    return MCEstimate(float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(pairs)))


def truncation_gap(f, n, eps, samples, rng=None, tau=None):
    """``|E g - E g*|`` on common random pairs, ``g*`` truncated at ``tau``.

    ``f=None`` stands for a fresh random labeling of every drawn point.
    """
    if samples < 2:
        raise BadParams("samples must be >= 2")
    tau = default_tau(n, eps) if tau is None else tau
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((samples, n))
    Y = rng.standard_normal((samples, n))
    dot = np.einsum("ij,ij->i", X, Y)
    k = _signs(f, X, rng) * _signs(f, Y, rng) * dot
    diff = np.where(np.abs(dot) <= tau, 0.0, k)
    return MCEstimate(abs(float(np.mean(diff))), float(np.std(diff, ddof=1) / math.sqrt(samples)))


def conditional_mean_variance(X, s, tau):
    """Variance over points of ``mean_j g*(x_i, x_j)``, with a standard error."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    m = X.shape[0]
    if m < 3:
        raise BadParams("need at least three points")
    row, _ = kernels.all_pairs(X, s, float(tau))
    h = row / (m - 1)
    c = (h - h.mean()) ** 2
    return MCEstimate(float(np.var(h, ddof=1)), float(np.std(c, ddof=1) / math.sqrt(m)))
