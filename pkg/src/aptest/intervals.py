"""Noise sensitivity on [0, 1] and the union-of-intervals testers."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .errors import BadParams
from .functions import PiecewiseConstantFn
from .oracle import Uniform01, nearest_interval_union

#: default constant in ``r = ceil(c_r / eps**4)``
DEFAULT_C_R = 4096.0
#: default constant in the calibration sample size ``ceil(c_gamma / gamma**2)``
DEFAULT_C_GAMMA = 1.0
#: rejection sampling gives up after ``REJECTION_CAP / delta`` draws in one round
REJECTION_CAP = 64.0


@dataclass(frozen=True)
class NoiseParams:
    delta: float
    rounds: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise BadParams(f"delta must lie in (0, 1), got {self.delta}")
        if self.rounds < 1:
            raise BadParams("need at least one round")


def tester_params(d, eps, c_r=DEFAULT_C_R, delta=None):
    if d < 1:
        raise BadParams("d must be >= 1")
    if not 0.0 < eps < 1.0:
        raise BadParams("eps must lie in (0, 1)")
    if delta is None:
        delta = eps * eps / (32.0 * d)
    if not 0.0 < delta < 1.0:
        raise BadParams(f"delta must lie in (0, 1), got {delta}")
    return NoiseParams(delta, int(math.ceil(c_r / eps ** 4)))


# ---------------------------------------------------------------------------
# exact quantities for piecewise-constant f


def _positive_cdf(f):
    edges = f.edges
    cum = np.concatenate(([0.0], np.cumsum(np.where(f.values == 1, f.lengths, 0.0))))
    return lambda t: np.interp(t, edges, cum)


def smoothed(f, x, delta):
    """``E f(y)`` for ``y`` uniform on ``(x - delta, x + delta) & [0, 1]``."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.maximum(x - delta, 0.0)
    hi = np.minimum(x + delta, 1.0)
    C = _positive_cdf(f)
    return (C(hi) - C(lo)) / (hi - lo)


def local_noise_sensitivity(f, x, delta):
    fd = smoothed(f, x, delta)
    return np.where(f(x) == 1, 1.0 - fd, fd)


def _knots(f, delta):
    b = f.breakpoints
    pts = np.concatenate(([0.0, 1.0, delta, 1.0 - delta], b, b - delta, b + delta))
    pts = np.unique(np.clip(pts, 0.0, 1.0))
    return pts


def noise_sensitivity_exact(f, delta, tol=1e-7):
    """``Pr[f(x) != f(y)]`` with ``x ~ U[0,1]`` and ``y`` uniform on the clipped window.

    Gauss-Legendre on every segment between the kinks of the local noise
    sensitivity, doubling the node count until two passes agree within ``tol``.
    """
    if not 0.0 < delta < 1.0:
        raise BadParams("delta must lie in (0, 1)")
    if f.n_blocks == 1:
        return 0.0
    knots = _knots(f, delta)
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    prev = None
    nodes = 4
    while True:
        t, w = np.polynomial.legendre.leggauss(nodes)
        x = mid[:, None] + half[:, None] * t[None, :]
        val = float(np.sum(half[:, None] * w[None, :] * local_noise_sensitivity(f, x, delta)))
        if prev is not None and abs(val - prev) < tol:
            return val
        if nodes >= 512:
            return val
        prev = val
        nodes *= 2


# ---------------------------------------------------------------------------
# estimators and testers


def estimate_noise_sensitivity(oracle, params, cap=REJECTION_CAP):
    """Fraction of ``params.rounds`` rounds where ``f(x) != f(y)``, ``y`` within delta of ``x``.

    Every round costs two label requests.
    """
    xs = oracle.draw_unlabeled(params.rounds)
    ys = oracle.draw_near(oracle.points(xs), params.delta, int(math.ceil(cap / params.delta)))
    fx = oracle.query_labels(xs)
    fy = oracle.query_labels(ys)
    return float(np.mean(fx != fy))


def test_union_intervals_uniform(oracle, d, eps, c_r=DEFAULT_C_R, delta=None):
    params = tester_params(d, eps, c_r, delta)
    start = oracle.counters()
    est = estimate_noise_sensitivity(oracle, params)
    threshold = d * params.delta * (1.0 + eps / 8.0)
    return oracle.verdict(est <= threshold, start, est, threshold)


def _pair_rounds(oracle, rounds, delta, transform=None):
    """Run ``rounds`` first-close-pair scans; return the (x ids, y ids)."""
    xs, ys = [], []
    left = rounds
    per_round = 2.0 + math.sqrt(math.pi / (4.0 * delta))
    chunk = int(min(max(1.3 * left * per_round, 256), 1 << 22))
    while left > 0:
        stream, tags = oracle.peek(chunk)
        vals = stream if transform is None else transform(stream)
        first, second, end = kernels.close_pairs(np.ascontiguousarray(vals, dtype=np.float64), float(delta), left)
        if first.shape[0] == 0:
            chunk *= 2
            continue
        keep = np.empty(2 * first.shape[0], dtype=np.int64)
        keep[0::2] = first
        keep[1::2] = second
        ids = oracle.consume(int(end), keep=keep)
        xs.append(ids[0::2])
        ys.append(ids[1::2])
        left -= first.shape[0]
        chunk = int(min(max(1.3 * left * per_round, 256), 1 << 22))
    return np.concatenate(xs), np.concatenate(ys)


def test_union_intervals_pairs(oracle, d, eps, c_r=DEFAULT_C_R, delta=None):
    """Each round takes the first pair in the unlabeled stream closer than delta."""
    params = tester_params(d, eps, c_r, delta)
    start = oracle.counters()
    xs, ys = _pair_rounds(oracle, params.rounds, params.delta)
    est = float(np.mean(oracle.query_labels(xs) != oracle.query_labels(ys)))
    threshold = d * params.delta * (1.0 + eps / 8.0)
    return oracle.verdict(est <= threshold, start, est, threshold)


class EmpiricalCDF:
    def __init__(self, sample):
        s = np.sort(np.asarray(sample, dtype=np.float64).reshape(-1))
        if s.size == 0:
            raise BadParams("empirical CDF needs a nonempty sample")
        self.sorted = s

    def rank(self, x, rng=None):
        """Fraction of the sample ``<= x``.

        With ``rng`` given, a point that ties sample atoms gets a rank drawn
        uniformly between the strict and non-strict fractions.
        """
        n = self.sorted.shape[0]
        hi = np.searchsorted(self.sorted, x, side="right") / n
        if rng is None:
            return hi
        lo = np.searchsorted(self.sorted, x, side="left") / n
        u = rng.random(np.shape(hi))
        return np.where(hi > lo, lo + u * (hi - lo), hi)


def empirical_cdf_rank(sample, x, rng=None):
    return EmpiricalCDF(sample).rank(x, rng)


def test_union_intervals_general(oracle, d, eps, c_r=DEFAULT_C_R, c_gamma=DEFAULT_C_GAMMA, delta=None):
    """Pair tester run on empirical-CDF ranks, for an arbitrary distribution on the line."""
    params = tester_params(d, eps, c_r, delta)
    gamma = eps * params.delta / 8.0
    start = oracle.counters()
    calib = oracle.draw_unlabeled(int(math.ceil(c_gamma / gamma ** 2)))
    cdf = EmpiricalCDF(oracle.points(calib))
    tie_rng = None if oracle.distribution.continuous else oracle.rng
    xs, ys = _pair_rounds(oracle, params.rounds, params.delta, lambda v: cdf.rank(v, tie_rng))
    est = float(np.mean(oracle.query_labels(xs) != oracle.query_labels(ys)))
    threshold = d * params.delta * (1.0 + eps / 8.0)
    return oracle.verdict(est <= threshold, start, est, threshold)


# ---------------------------------------------------------------------------
# local self-correction


def _crossings(h, knots, level):
    out = []
    vals = h(knots) - level
    for a, b, va, vb in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
        if va * vb < 0:
            out.append(optimize.brentq(lambda t: float(h(t)) - level, a, b, xtol=1e-14))
    return out


def prune_to(g, d):
    """The closest union of at most ``d`` intervals to ``g``."""
    g = g.normalized()
    return g if g.n_intervals <= d else nearest_interval_union(g, d)


def self_correct(f, delta, eps, d=None):
    """Smooth ``f`` with the delta-window average, round confidently-labeled
    points, carry the last defined value across the undecided ones (0 before
    the first), then prune to ``d`` intervals.

    ``d`` defaults to the interval count implied by ``delta = eps**2 / (32 d)``.
    """
    if d is None:
        d = max(1, int(round(eps * eps / (32.0 * delta))))
    ns = noise_sensitivity_exact(f, delta)
    tau = 4.0 / eps * ns
    h = lambda t: smoothed(f, t, delta)
    knots = _knots(f, delta)
    cuts = np.concatenate((knots, _crossings(h, knots, tau), _crossings(h, knots, 1.0 - tau)))
    cuts = np.unique(cuts)
    cuts = cuts[np.concatenate(([True], np.diff(cuts) > 1e-13))]
    if cuts[-1] < 1.0:
        cuts = np.append(cuts, 1.0)
    cuts[-1] = 1.0
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    hm = h(mids)
    vals = np.empty(mids.shape[0], dtype=np.int8)
    state = 0
    for k, v in enumerate(hm):
        if v >= 1.0 - tau:
            state = 1
        elif v <= tau:
            state = 0
        vals[k] = state
    g = PiecewiseConstantFn(cuts[1:-1], vals).normalized()
    return prune_to(g, d)
