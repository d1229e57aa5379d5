"""Distributions, targets, and the metered active-testing oracle.

The oracle hands out integer point ids for unlabeled draws and answers
label requests only for ids it handed out. Every draw and every label
request is counted; repeated requests on the same id are charged again.
"""
import hashlib
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy import spatial, stats

from . import kernels
from .errors import BadDistribution, BadParams, BadSimplex, SampleBudgetExceeded, UnknownPoint
from .functions import BinnedTable, LinearThreshold, PiecewiseConstantFn


# ---------------------------------------------------------------------------
# distributions
#
# ``sample(rng, k)`` returns ``(coords, tags)``. ``tags`` is an int array for
# distributions whose points carry a discrete component (bin index, support
# index) and ``None`` otherwise.


def _check_weights(w, name="weights"):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise BadDistribution(f"{name} must be nonnegative and sum to 1 (got sum {w.sum()!r})")
    return w


class Distribution:
    dim = 1
    continuous = True

    def sample(self, rng, k):
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


class Uniform01(Distribution):
    def sample(self, rng, k):
        return rng.random(k), None

    def cdf(self, x):
        return np.clip(x, 0.0, 1.0)

    def ppf(self, p):
        return np.clip(p, 0.0, 1.0)

    def window_mass(self, lo, hi):
        return np.clip(hi, 0.0, 1.0) - np.clip(lo, 0.0, 1.0)

    def sample_window(self, rng, lo, hi):
        lo = np.clip(lo, 0.0, 1.0)
        hi = np.clip(hi, 0.0, 1.0)
        return lo + (hi - lo) * rng.random(np.shape(lo))

    def to_json(self):
        return {"kind": "uniform01"}


class PiecewiseUniform01(Distribution):
    """Density on [0, 1] that is constant between ``edges``."""

    def __init__(self, edges, masses):
        edges = np.asarray(edges, dtype=np.float64)
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise BadDistribution("edges must ascend from 0 to 1")
        self.edges = edges
        self.masses = _check_weights(masses, "masses")
        if self.masses.size != edges.size - 1:
            raise BadDistribution("need one mass per segment")
        self._cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        self._cum[-1] = 1.0

    def sample(self, rng, k):
        return self.ppf(rng.random(k)), None

    def cdf(self, x):
        return np.interp(x, self.edges, self._cum)

    def ppf(self, p):
        keep = np.concatenate(([True], self.masses > 0))
        return np.interp(p, self._cum[keep], self.edges[keep])

    def to_json(self):
        return {"kind": "piecewise_uniform", "edges": self.edges.tolist(), "masses": self.masses.tolist()}


class GaussianIsotropic(Distribution):
    def __init__(self, n):
        if n < 1:
            raise BadDistribution("gaussian dimension must be >= 1")
        self.n = self.dim = int(n)

    def sample(self, rng, k):
        return rng.standard_normal((k, self.n)), None

    def to_json(self):
        return {"kind": "gaussian", "n": self.n}


class BinnedMixture(Distribution):
    """Pick bin ``i`` with probability ``weights[i]``, then a payload U[0, 1].

    Bins are 0-based internally; the JSON and CLI surfaces use the same
    0-based ids.
    """

    def __init__(self, weights):
        self.weights = _check_weights(weights)

    @property
    def n_bins(self):
        return self.weights.shape[0]

    def sample(self, rng, k):
        tags = rng.choice(self.n_bins, size=k, p=self.weights)
        return rng.random(k), tags.astype(np.int64)

    def to_json(self):
        return {"kind": "binned", "weights": self.weights.tolist()}


class Empirical(Distribution):
    """Finite weighted support; tags are support indices."""

    continuous = False

    def __init__(self, points, weights=None):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        self.dim = pts.shape[1]
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        self.weights = _check_weights(weights)
        if self.weights.size != pts.shape[0]:
            raise BadDistribution("one weight per support point")

    def sample(self, rng, k):
        tags = rng.choice(self.points.shape[0], size=k, p=self.weights).astype(np.int64)
        coords = self.points[tags]
        if self.dim == 1:
            coords = coords[:, 0]
        return coords, tags

    def to_json(self):
        return {"kind": "empirical", "points": self.points.tolist(), "weights": self.weights.tolist()}


class UnitBallUniform(Distribution):
    def __init__(self, d):
        if d < 1:
            raise BadDistribution("ball dimension must be >= 1")
        self.d = self.dim = int(d)

    def sample(self, rng, k):
        g = rng.standard_normal((k, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.random(k) ** (1.0 / self.d)
        return g * r[:, None], None

    def to_json(self):
        return {"kind": "unit_ball", "d": self.d}


class Hypercube(Distribution):
    """Uniform on {0, 1}^n."""

    continuous = False

    def __init__(self, n):
        self.n = self.dim = int(n)

    def sample(self, rng, k):
        return rng.integers(0, 2, size=(k, self.n), dtype=np.uint8), None

    def to_json(self):
        return {"kind": "hypercube", "n": self.n}


def distribution_from_json(obj):
    kind = obj["kind"]
    if kind == "uniform01":
        return Uniform01()
    if kind == "piecewise_uniform":
        return PiecewiseUniform01(obj["edges"], obj["masses"])
    if kind == "gaussian":
        return GaussianIsotropic(obj["n"])
    if kind == "binned":
        return BinnedMixture(obj["weights"])
    if kind == "empirical":
        return Empirical(obj["points"], obj.get("weights"))
    if kind == "unit_ball":
        return UnitBallUniform(obj["d"])
    if kind == "hypercube":
        return Hypercube(obj["n"])
    raise BadDistribution(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# targets: ``label(coords, tags, ids) -> int8 array in {0, 1}``


class Target:
    def bind(self, rng):
        """Attach per-oracle randomness; returns the target to use."""
        return self

    def label(self, coords, tags, ids):
        raise NotImplementedError


class IntervalUnionTarget(Target):
    def __init__(self, f):
        self.f = f

    def label(self, coords, tags, ids):
        return self.f(coords).astype(np.int8)


class LTFTarget(Target):
    def __init__(self, ltf):
        self.ltf = ltf

    def label(self, coords, tags, ids):
        return self.ltf.eval01(coords)


class BinnedTableTarget(Target):
    """Deterministic labels: bin ``i`` labels payload ``u`` positive iff
    ``u < p_i1 / (p_i0 + p_i1)``, which realizes the table's masses exactly."""

    def __init__(self, table):
        p = table.p
        tot = p.sum(axis=1)
        self.table = table
        self.cut = np.divide(p[:, 1], tot, out=np.zeros_like(tot), where=tot > 0)

    def label(self, coords, tags, ids):
        return (coords < self.cut[tags]).astype(np.int8)


class SupportLabelTarget(Target):
    """Labels attached to the support points of an :class:`Empirical` law."""

    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=np.int8)

    def label(self, coords, tags, ids):
        return self.labels[tags]


class MemoizedRandom(Target):
    """Fair coin per point id, drawn on first request and then frozen."""

    def __init__(self, rng=None):
        self._rng = rng
        self._memo = np.full(0, -1, dtype=np.int8)

    def bind(self, rng):
        return MemoizedRandom(rng)

    @property
    def memo_size(self):
        return int(np.count_nonzero(self._memo >= 0))

    def label(self, coords, tags, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return np.empty(0, dtype=np.int8)
        top = int(ids.max()) + 1
        if top > self._memo.size:
            grown = np.full(max(top, 2 * self._memo.size), -1, dtype=np.int8)
            grown[: self._memo.size] = self._memo
            self._memo = grown
        fresh = np.unique(ids[self._memo[ids] < 0])
        if fresh.size:
            self._memo[fresh] = self._rng.integers(0, 2, size=fresh.size, dtype=np.int8)
        return self._memo[ids].copy()


def target_for(fn):
    if isinstance(fn, PiecewiseConstantFn):
        return IntervalUnionTarget(fn)
    if isinstance(fn, LinearThreshold):
        return LTFTarget(fn)
    if isinstance(fn, BinnedTable):
        return BinnedTableTarget(fn)
    if isinstance(fn, Target):
        return fn
    raise BadParams(f"no target wrapper for {type(fn).__name__}")


# ---------------------------------------------------------------------------
# the oracle


@dataclass
class TesterVerdict:
    decision: str
    unlabeled_used: int
    labels_used: int
    statistic: float = None
    threshold: float = None

    @property
    def accept(self):
        return self.decision == "accept"

    def to_dict(self):
        return {"decision": self.decision, "statistic": self.statistic, "threshold": self.threshold,
                "labels_used": self.labels_used, "unlabeled_used": self.unlabeled_used}


class ActiveOracle:
    """Meters unlabeled draws and label requests against a hidden target.

    Points are identified by consecutive integer ids in the order they are
    retained. :meth:`peek` exposes the upcoming stream without drawing it;
    :meth:`consume` then commits a prefix of the stream, which is how a
    tester that scans the stream sequentially pays for exactly the points a
    one-at-a-time scan would have drawn. Points consumed but not retained
    are counted as drawn and can never be labeled.
    """

    def __init__(self, distribution, target, seed=0):
        self.distribution = distribution
        ss = np.random.SeedSequence(seed)
        draw_ss, label_ss = ss.spawn(2)
        self.rng = np.random.default_rng(draw_ss)
        self.target = target_for(target).bind(np.random.default_rng(label_ss))
        self.seed = seed
        self.unlabeled_count = 0
        self.label_count = 0
        self._chunks = []
        self._tag_chunks = []
        self._coords = None
        self._tags = None
        self._n = 0
        self._ahead = None
        self._ahead_tags = None
        self._digest = hashlib.sha256()

    # -- storage -----------------------------------------------------------

    def _append(self, coords, tags):
        k = coords.shape[0]
        if k == 0:
            return np.empty(0, dtype=np.int64)
        self._chunks.append(coords)
        self._tag_chunks.append(tags)
        self._coords = None
        ids = np.arange(self._n, self._n + k, dtype=np.int64)
        self._n += k
        self._digest.update(b"D")
        self._digest.update(np.ascontiguousarray(coords).tobytes())
        return ids

    def _materialize(self):
        if self._coords is None:
            if self._chunks:
                self._coords = np.concatenate(self._chunks)
                if self._tag_chunks[0] is not None:
                    self._tags = np.concatenate(self._tag_chunks)
            else:
                self._coords = np.empty((0,) + (() if self.distribution.dim == 1 else (self.distribution.dim,)))
            self._chunks = [self._coords]
            self._tag_chunks = [self._tags]
        return self._coords, self._tags

    @property
    def n_drawn(self):
        return self._n

    def points(self, ids):
        coords, _ = self._materialize()
        return coords[self._check_ids(ids)]

    def tags(self, ids):
        _, tags = self._materialize()
        if tags is None:
            return None
        return tags[self._check_ids(ids)]

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self._n):
            bad = ids[(ids < 0) | (ids >= self._n)][0]
            raise UnknownPoint(f"point id {int(bad)} was never drawn from this oracle")
        return ids

    # -- unlabeled draws ---------------------------------------------------

    def peek(self, k):
        """Coordinates (and tags) of the next ``k`` stream points, uncharged."""
        have = 0 if self._ahead is None else self._ahead.shape[0]
        if have < k:
            coords, tags = self.distribution.sample(self.rng, k - have)
            if self._ahead is None:
                self._ahead, self._ahead_tags = coords, tags
            else:
                self._ahead = np.concatenate((self._ahead, coords))
                if tags is not None:
                    self._ahead_tags = np.concatenate((self._ahead_tags, tags))
        tags = None if self._ahead_tags is None else self._ahead_tags[:k]
        return self._ahead[:k], tags

    def consume(self, n, keep=None):
        """Charge the first ``n`` stream points; retain those at ``keep``."""
        if n < 0:
            raise BadParams("cannot consume a negative count")
        coords, tags = self.peek(n)
        if keep is None:
            kc, kt = coords, tags
        else:
            keep = np.asarray(keep, dtype=np.int64)
            kc = coords[keep]
            kt = None if tags is None else tags[keep]
        kc = kc.copy()
        kt = None if kt is None else kt.copy()
        self._ahead = self._ahead[n:]
        if self._ahead_tags is not None:
            self._ahead_tags = self._ahead_tags[n:]
        self.unlabeled_count += int(n)
        return self._append(kc, kt)

    def draw_unlabeled(self, k):
        if k < 1:
            raise BadParams("k must be >= 1")
        return self.consume(int(k))

    def draw_near(self, centers, delta, cap):
        """Rejection-sample one point within ``delta`` of each center, in order.

        All rejected draws are charged. Raises :class:`SampleBudgetExceeded`
        when a single center needs more than ``cap`` draws.
        """
        centers = np.asarray(centers, dtype=np.float64)
        dist = self.distribution
        if isinstance(dist, Uniform01):
            # the number of draws until a hit is geometric in the window mass
            # and the hit is uniform on the window; sample both directly
            mass = dist.window_mass(centers - delta, centers + delta)
            counts = self.rng.geometric(mass)
            if np.any(counts > cap):
                raise SampleBudgetExceeded(f"rejection sampling needed more than {cap} draws")
            ys = dist.sample_window(self.rng, centers - delta, centers + delta)
            self.unlabeled_count += int(counts.sum())
            return self._append(ys, None)
        ids = []
        carried = 0
        done = 0
        chunk = int(min(max(4 * len(centers) / max(delta, 1e-12), 1024), 1 << 22))
        while done < len(centers):
            stream, _ = self.peek(chunk)
            hits, _, used, carried, overflow = kernels.scan_near(
                np.ascontiguousarray(stream, dtype=np.float64), centers[done:], float(delta), int(cap), int(carried))
            if overflow:
                self.consume(int(used))
                raise SampleBudgetExceeded(f"rejection sampling needed more than {cap} draws")
            ids.append(self.consume(int(used), keep=hits))
            done += hits.shape[0]
        return np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)

    # -- labels ------------------------------------------------------------

    def query_labels(self, ids):
        ids = self._check_ids(np.atleast_1d(ids))
        coords, tags = self._materialize()
        labels = self.target.label(coords[ids], None if tags is None else tags[ids], ids)
        self.label_count += int(ids.size)
        self._digest.update(b"L")
        self._digest.update(ids.tobytes())
        self._digest.update(labels.astype(np.int8).tobytes())
        return labels.astype(np.int8)

    def query_label(self, point_id):
        return int(self.query_labels([point_id])[0])

    # -- bookkeeping -------------------------------------------------------

    def counters(self):
        return self.unlabeled_count, self.label_count

    def verdict(self, accept, start, statistic=None, threshold=None):
        u0, l0 = start
        return TesterVerdict("accept" if accept else "reject", self.unlabeled_count - u0,
                             self.label_count - l0,
                             None if statistic is None else float(statistic),
                             None if threshold is None else float(threshold))

    def transcript_digest(self):
        return self._digest.hexdigest()


# ---------------------------------------------------------------------------
# ground-truth distances


def distance_to_interval_union(f, d):
    """Least total length of blocks to flip so ``f`` has at most ``d`` positive intervals.

    Dynamic program over blocks with state (positive runs used, last value).
    Optimal solutions never split a block, so flipping whole blocks is exact.
    """
    if d < 0:
        raise BadParams("d must be >= 0")
    lengths = f.lengths
    vals = f.values
    inf = np.inf
    # cost[c, v]: best cost so far with c positive runs, last block value v
    cost = np.full((d + 1, 2), inf)
    cost[0, 0] = lengths[0] if vals[0] == 1 else 0.0
    if d >= 1:
        cost[1, 1] = lengths[0] if vals[0] == 0 else 0.0
    for L, v in zip(lengths[1:], vals[1:]):
        to0 = L if v == 1 else 0.0
        to1 = L if v == 0 else 0.0
        new = np.full_like(cost, inf)
        new[:, 0] = np.minimum(cost[:, 0], cost[:, 1]) + to0
        new[:, 1] = cost[:, 1] + to1
        new[1:, 1] = np.minimum(new[1:, 1], cost[:-1, 0] + to1)
        cost = new
    return float(cost.min())


def nearest_interval_union(f, d):
    """A union of at most ``d`` intervals at distance ``distance_to_interval_union(f, d)`` from ``f``."""
    if d < 0:
        raise BadParams("d must be >= 0")
    lengths = f.lengths
    vals = f.values
    B = lengths.shape[0]
    inf = np.inf
    cost = np.full((d + 1, 2), inf)
    cost[0, 0] = lengths[0] if vals[0] == 1 else 0.0
    if d >= 1:
        cost[1, 1] = lengths[0] if vals[0] == 0 else 0.0
    # back[k, c, v] = (c, v) state of block k - 1
    back = np.zeros((B, d + 1, 2, 2), dtype=np.int64)
    for k in range(1, B):
        L, v = lengths[k], vals[k]
        to0 = L if v == 1 else 0.0
        to1 = L if v == 0 else 0.0
        new = np.full_like(cost, inf)
        from1 = cost[:, 1] < cost[:, 0]
        new[:, 0] = np.where(from1, cost[:, 1], cost[:, 0]) + to0
        back[k, :, 0, 0] = np.arange(d + 1)
        back[k, :, 0, 1] = from1
        new[:, 1] = cost[:, 1] + to1
        back[k, :, 1, 0] = np.arange(d + 1)
        back[k, :, 1, 1] = 1
        if d >= 1:
            opened = cost[:-1, 0] + to1
            better = opened < new[1:, 1]
            new[1:, 1] = np.where(better, opened, new[1:, 1])
            back[k, 1:, 1, 0] = np.where(better, np.arange(d), np.arange(1, d + 1))
            back[k, 1:, 1, 1] = np.where(better, 0, 1)
        cost = new
    c, v = np.unravel_index(int(np.argmin(cost)), cost.shape)
    out = np.empty(B, dtype=np.int8)
    for k in range(B - 1, -1, -1):
        out[k] = v
        if k:
            c, v = back[k, c, v]
    return type(f)(f.breakpoints, out).normalized()


def cluster_error(bins):
    """``sum_i min(p_i0, p_i1)``: mass that must be relabeled to make every bin pure."""
    p = np.asarray(bins, dtype=np.float64).reshape(-1, 2)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise BadSimplex(f"bin masses must be nonnegative and sum to 1 (sum {p.sum()!r})")
    return float(np.minimum(p[:, 0], p[:, 1]).sum())


def cross_pairs(points, labels, radius):
    """Index pairs ``(positive, negative)`` of support points closer than ``radius``."""
    pts = np.asarray(points, dtype=np.float64).reshape(len(labels), -1)
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if pos.size == 0 or neg.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    tree = spatial.cKDTree(pts[neg])
    out = []
    for i, nbrs in zip(pos, tree.query_ball_point(pts[pos], np.nextafter(radius, 0.0))):
        for j in nbrs:
            if np.linalg.norm(pts[i] - pts[neg[j]]) < radius:
                out.append((i, neg[j]))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def min_cross_distance(points, labels):
    pts = np.asarray(points, dtype=np.float64).reshape(len(labels), -1)
    labels = np.asarray(labels)
    if labels.min() == labels.max():
        return np.inf
    d, _ = spatial.cKDTree(pts[labels == 0]).query(pts[labels == 1])
    return float(np.min(d))


def distance_to_margin(points, weights, labels, gamma):
    """Least mass to delete so opposite labels end up at least ``gamma`` apart.

    Minimum weighted vertex cover of the bipartite conflict graph, solved
    as a minimum s-t cut.
    """
    w = np.asarray(weights, dtype=np.float64)
    pairs = cross_pairs(points, labels, gamma)
    if pairs.shape[0] == 0:
        return 0.0
    g = nx.DiGraph()
    for i in np.unique(pairs[:, 0]):
        g.add_edge("s", int(i), capacity=float(w[i]))
    for j in np.unique(pairs[:, 1]):
        g.add_edge(int(j), "t", capacity=float(w[j]))
    for i, j in pairs:
        g.add_edge(int(i), int(j))  # no capacity attribute: infinite
    cut, _ = nx.minimum_cut(g, "s", "t")
    return float(cut)
