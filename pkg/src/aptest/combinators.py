"""Cluster and margin testers, the disjoint-union combinator, and the
local-characterization reduction."""
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (AptestError, BadParams, NeighborhoodStarved, RegionBlowup,
                     SampleBudgetExceeded, SubTesterFailure, UnknownPoint)

C_N = 4.0
C_L = 8.0
C_U = 1.0
BOOST = 3
REGION_CAP = 1_000_000


# ---------------------------------------------------------------------------
# sub-testers and pooled views


class PoolView:
    """A fixed pool of already-drawn oracle points handed to a sub-tester.

    The sub-tester draws from the pool in order and may only label pool
    points; labels are charged to the parent oracle.
    """

    def __init__(self, oracle, ids):
        self.oracle = oracle
        self.ids = np.asarray(ids, dtype=np.int64)
        self._members = set(self.ids.tolist())
        self._next = 0
        self.rng = oracle.rng

    @property
    def size(self):
        return self.ids.shape[0]

    def draw_unlabeled(self, k):
        if self._next + k > self.size:
            raise SampleBudgetExceeded(f"pool of {self.size} points exhausted")
        out = self.ids[self._next:self._next + k]
        self._next += k
        return out

    def points(self, ids):
        return self.oracle.points(ids)

    def query_labels(self, ids):
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        for i in ids.tolist():
            if i not in self._members:
                raise UnknownPoint(f"point id {i} is not in this pool")
        return self.oracle.query_labels(ids)

    def counters(self):
        return self.oracle.counters()


def _log_boost(delta):
    return max(1, int(math.ceil(math.log(1.0 / delta))))


@dataclass(frozen=True)
class SubTester:
    """``run(view, eps, n_labels) -> bool`` with budgets ``q(eps)``, ``U(eps)``.

    Failure probability ``delta`` is reached by scaling both budgets by
    ``boost(delta)``.
    """

    run: Callable
    q: Callable
    U: Callable
    boost: Callable = _log_boost
    name: str = "sub"

    def q_delta(self, eps, delta):
        return int(self.q(eps)) * int(self.boost(delta))

    def U_delta(self, eps, delta):
        return int(self.U(eps)) * int(self.boost(delta))


def _run_constant(view, eps, n_labels):
    ids = view.draw_unlabeled(min(int(n_labels), view.size))
    labels = view.query_labels(ids)
    return bool(np.all(labels == labels[0]))


def constant_tester(c_q=1.0):
    """Tests "f is constant": label random points, reject on any disagreement.

    One-sided, so ``ceil(ln(1/delta) / eps)`` labels already fail with
    probability at most ``delta`` on a function eps-far from constant.
    """
    budget = lambda eps: max(1, int(math.ceil(c_q / eps)))
    return SubTester(_run_constant, budget, budget, _log_boost, "constant")


# ---------------------------------------------------------------------------
# cluster tester


def _cluster_pass(oracle, ids, bins, rounds, rng):
    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    starts = np.searchsorted(sorted_bins, bins, side="left")
    counts = np.searchsorted(sorted_bins, bins, side="right") - starts
    for _ in range(rounds):
        k = int(rng.integers(ids.shape[0]))
        if counts[k] < 2:
            continue
        # uniform over the other members of the bin
        r = int(rng.integers(counts[k] - 1))
        member = order[starts[k] + r]
        if member == k:
            member = order[starts[k] + counts[k] - 1]
        labels = oracle.query_labels(ids[[k, member]])
        if labels[0] != labels[1]:
            return False
    return True


def cluster_vote(oracle, ids, bins, eps, boost=BOOST):
    """Best-of-``boost`` majority over passes of ``ceil(4/eps)`` rounds on one pool.

    Returns the number of rejecting passes and whether they form a majority.
    """
    rounds = int(math.ceil(4.0 / eps))
    need = boost // 2 + 1
    rejects = accepts = 0
    while rejects < need and accepts < need:
        if _cluster_pass(oracle, ids, bins, rounds, oracle.rng):
            accepts += 1
        else:
            rejects += 1
    return rejects, rejects >= need


def test_cluster(oracle, N, eps, c_N=C_N, boost=BOOST):
    if N < 1:
        raise BadParams("N must be >= 1")
    if not 0.0 < eps <= 1.0:
        raise BadParams("eps must lie in (0, 1]")
    if boost < 1 or boost % 2 == 0:
        raise BadParams("boost must be a positive odd count")
    start = oracle.counters()
    ids = oracle.draw_unlabeled(int(math.ceil(c_N * N / eps)))
    bins = oracle.tags(ids)
    if bins is None:
        raise BadParams("the cluster tester needs a binned distribution")
    rejects, reject = cluster_vote(oracle, ids, bins, eps, boost)
    return oracle.verdict(not reject, start, rejects, boost / 2.0)


# ---------------------------------------------------------------------------
# disjoint union


def eps_schedule(eps):
    out = []
    e = 0.5
    while e >= eps / 2.0 - 1e-12:
        out.append(e)
        e /= 2.0
    return out


def _collect_bin(oracle, b, need, cap):
    """Draw until ``need`` points of bin ``b`` or ``cap`` draws; ids of the bin points."""
    got = []
    drawn = 0
    chunk = int(min(max(4 * need, 256), 1 << 20))
    while drawn < cap:
        take = min(chunk, cap - drawn)
        _, tags = oracle.peek(take)
        hit = np.flatnonzero(tags == b)[: need - len(got)]
        if len(got) + hit.shape[0] >= need:
            got.append(oracle.consume(int(hit[-1]) + 1, keep=hit))
            return np.concatenate(got), True
        got.append(oracle.consume(take, keep=hit))
        drawn += take
        chunk *= 2
    return np.concatenate(got), False


def test_disjoint_union(oracle, testers, N, eps, c_rep=1.0):
    """Halving schedule over eps' with sub-failure probability ``eps**2``.

    At each eps' the loop repeats ``ceil(c_rep (eps'/eps) log2(1/eps))`` times:
    draw ``(i, x)``, gather ``U_delta(eps')`` points of bin ``i`` (giving up
    after ``(8N/eps) U_delta(eps')`` draws), and run ``testers[i]`` on them.
    """
    if len(testers) != N:
        raise BadParams(f"need one sub-tester per bin ({N}), got {len(testers)}")
    if not 0.0 < eps < 1.0:
        raise BadParams("eps must lie in (0, 1)")
    delta = eps * eps
    start = oracle.counters()
    runs = 0
    for ep in eps_schedule(eps):
        reps = int(math.ceil(c_rep * (ep / eps) * math.log2(1.0 / eps)))
        for _ in range(max(1, reps)):
            first = oracle.draw_unlabeled(1)
            tag = oracle.tags(first)
            if tag is None:
                raise BadParams("the disjoint-union tester needs a binned distribution")
            b = int(tag[0])
            t = testers[b]
            need = t.U_delta(ep, delta)
            cap = int(math.ceil(8.0 * N / eps * need))
            more, ok = _collect_bin(oracle, b, need - 1, cap) if need > 1 else (np.empty(0, np.int64), True)
            if not ok:
                continue
            view = PoolView(oracle, np.concatenate((first, more)))
            try:
                accepted = t.run(view, ep, t.q_delta(ep, delta))
            except AptestError as exc:
                raise SubTesterFailure(b, exc) from exc
            runs += 1
            if not accepted:
                return oracle.verdict(False, start, runs, None)
    return oracle.verdict(True, start, runs, None)


# ---------------------------------------------------------------------------
# margin: grid partition of the unit ball and the region graph


@dataclass(frozen=True, eq=False)
class RegionPartition:
    d: int
    gamma: float
    c: float
    side: float
    cells: np.ndarray  # (N, d) integer grid indices; cell k is prod [k_a s, (k_a + 1) s]
    single: bool = False
    _codes: np.ndarray = field(default=None, repr=False)
    _K: int = 0

    @property
    def n_regions(self):
        return self.cells.shape[0]

    @property
    def centers(self):
        return (self.cells + 0.5) * self.side

    @property
    def diameters(self):
        if self.single:
            return np.array([2.0])
        return np.full(self.n_regions, self.side * math.sqrt(self.d))

    def locate(self, X):
        """Region id of every row of ``X`` (-1 outside the ball)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        inside = np.einsum("ij,ij->i", X, X) <= 1.0 + 1e-12
        if self.single:
            return np.where(inside, 0, -1).astype(np.int64)
        k = np.clip(np.floor(X / self.side).astype(np.int64), -self._K, self._K - 1)
        code = _ravel(k, self._K)
        pos = np.searchsorted(self._codes, code)
        pos = np.minimum(pos, self._codes.shape[0] - 1)
        found = self._codes[pos] == code
        return np.where(inside & found, pos, -1).astype(np.int64)


def _ravel(k, K):
    code = np.zeros(k.shape[0], dtype=np.int64)
    for a in range(k.shape[1]):
        code = code * (2 * K) + (k[:, a] + K)
    return code


def partition_unit_ball(d, gamma, c, cap=REGION_CAP):
    """Axis-aligned grid of side ``gamma / (2 c sqrt d)`` restricted to cells meeting the ball."""
    if d < 1:
        raise BadParams("d must be >= 1")
    if not gamma > 0:
        raise BadParams("gamma must be positive")
    if not c > 1:
        raise BadParams("c must exceed 1")
    if gamma >= 2.0:
        return RegionPartition(d, gamma, c, 2.0, np.zeros((1, d), dtype=np.int64), single=True)
    side = gamma / (2.0 * c * math.sqrt(d))
    K = int(math.ceil(1.0 / side))
    box = (2 * K) ** d
    # the ball fills at most the bounding box; refuse before enumerating it
    if box > 64 * cap or box >= 2 ** 62:
        raise RegionBlowup(f"grid of {box} candidate cells exceeds the cap")
    kept = []
    axis = np.arange(-K, K)
    # nearest point of the cell [k s, (k+1) s] to the origin, per axis
    near = np.where(axis >= 0, axis, axis + 1) * side
    near2 = near * near
    for block in itertools.product(range(2 * K), repeat=max(0, d - 2)):
        if d == 1:
            grid = axis[:, None]
            dist2 = near2
        else:
            g0, g1 = np.meshgrid(axis, axis, indexing="ij")
            lead = np.array([axis[i] for i in block], dtype=np.int64)
            grid = np.column_stack([np.broadcast_to(lead, (g0.size, lead.size)), g0.ravel(), g1.ravel()])
            dist2 = near2[grid - (-K)].sum(axis=1)
        cells = grid[dist2 < 1.0]
        kept.append(cells)
        if sum(x.shape[0] for x in kept) > cap:
            raise RegionBlowup(f"more than {cap} regions")
        if d == 1:
            break
    cells = np.concatenate(kept).astype(np.int64)
    codes = _ravel(cells, K)
    order = np.argsort(codes)
    return RegionPartition(d, gamma, c, side, cells[order], False, codes[order], K)


def edge_offsets(d, side, gamma):
    """Grid offsets ``k != 0`` (lexicographically positive) whose cell pairs have union diameter < gamma."""
    R = int(math.ceil(gamma / side))
    out = []
    for k in itertools.product(range(-R, R + 1), repeat=d):
        k = np.array(k)
        if not np.any(k):
            continue
        nz = k[np.flatnonzero(k)[0]]
        if nz < 0:
            continue
        if side * math.sqrt(float(np.sum((np.abs(k) + 1) ** 2))) < gamma:
            out.append(k)
    return np.array(out, dtype=np.int64).reshape(-1, d)


def cell_gap(side, offsets):
    """Least distance between two grid cells at the given index offsets."""
    offsets = np.atleast_2d(offsets)
    return side * np.sqrt(np.sum(np.maximum(np.abs(offsets) - 1, 0) ** 2, axis=-1))


def cell_union_diameter(side, offsets):
    offsets = np.atleast_2d(offsets)
    return side * np.sqrt(np.sum((np.abs(offsets) + 1) ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class RegionGraph:
    n_nodes: int
    edges: np.ndarray  # (M, 2)
    w_hat: np.ndarray
    masses: np.ndarray
    degree_bound: int

    @property
    def M(self):
        return self.edges.shape[0]

    def max_degree(self):
        if self.M == 0:
            return 0
        return int(np.bincount(self.edges.ravel(), minlength=self.n_nodes).max())


def build_margin_graph(partition, points, region_ids=None):
    """Edges from cell geometry; ``w_hat`` = min of the two empirical region masses."""
    if region_ids is None:
        region_ids = partition.locate(points)
    n = region_ids.shape[0]
    N = partition.n_regions
    inside = region_ids[region_ids >= 0]
    masses = np.bincount(inside, minlength=N) / max(n, 1)
    if partition.single:
        return RegionGraph(1, np.empty((0, 2), dtype=np.int64), np.empty(0), masses, 0)
    offs = edge_offsets(partition.d, partition.side, partition.gamma)
    src, dst = [], []
    for k in offs:
        nb = partition.cells + k
        code = _ravel(np.clip(nb, -partition._K, partition._K - 1), partition._K)
        pos = np.minimum(np.searchsorted(partition._codes, code), N - 1)
        ok = (partition._codes[pos] == code) & np.all((nb >= -partition._K) & (nb < partition._K), axis=1)
        src.append(np.flatnonzero(ok))
        dst.append(pos[ok])
    edges = np.column_stack((np.concatenate(src), np.concatenate(dst))) if src else np.empty((0, 2), np.int64)
    w = np.minimum(masses[edges[:, 0]], masses[edges[:, 1]])
    return RegionGraph(N, edges.astype(np.int64), w, masses, 2 * offs.shape[0])


def margin_pool_size(partition, eps, c_N=C_N, c_U=C_U):
    weight = int(math.ceil(c_U / (partition.gamma ** (2 * partition.d) * eps * eps)))
    cluster = int(math.ceil(c_N * partition.n_regions / (eps / 4.0)))
    return max(weight, cluster)


def test_margin(oracle, gamma, c, eps, d, c_N=C_N, c_L=C_L, c_U=C_U, boost=BOOST, cap=REGION_CAP):
    """Cluster test over the regions at eps/4, then ``ceil(c_L/eps)`` edge probes.

    One unlabeled pool serves both the cluster pass and the weight estimates.
    """
    if oracle.distribution.dim != d:
        raise BadParams(f"oracle dimension {oracle.distribution.dim} != {d}")
    part = partition_unit_ball(d, gamma, c, cap)
    start = oracle.counters()
    ids = oracle.draw_unlabeled(margin_pool_size(part, eps, c_N, c_U))
    X = oracle.points(ids).reshape(ids.shape[0], d)
    rid = part.locate(X)
    inside = rid >= 0
    rejects, reject = cluster_vote(oracle, ids[inside], rid[inside], eps / 4.0, boost)
    if reject:
        return oracle.verdict(False, start, None, None)
    graph = build_margin_graph(part, X, rid)
    total = float(graph.w_hat.sum())
    if graph.M == 0 or total <= 0:
        return oracle.verdict(True, start, 0.0, None)
    order = np.argsort(rid, kind="stable")
    srt = rid[order]
    p = graph.w_hat / total
    rng = oracle.rng
    for _ in range(int(math.ceil(c_L / eps))):
        e = int(rng.choice(graph.M, p=p))
        if probe_edge(oracle, ids, order, srt, graph.edges[e], rng):
            return oracle.verdict(False, start, None, None)
    return oracle.verdict(True, start, None, None)


def probe_edge(oracle, ids, order, sorted_rid, edge, rng):
    """Label one pool point from each end of ``edge``; True when they disagree.

    ``order`` sorts the pool by region id and ``sorted_rid`` is that sorted
    sequence.
    """
    pick = []
    for r in edge:
        lo = np.searchsorted(sorted_rid, r, side="left")
        hi = np.searchsorted(sorted_rid, r, side="right")
        pick.append(order[lo + int(rng.integers(hi - lo))])
    labels = oracle.query_labels(ids[pick])
    return bool(labels[0] != labels[1])


# ---------------------------------------------------------------------------
# local characterization


def _abs_metric(x, Y):
    return np.abs(np.asarray(Y, dtype=np.float64) - np.asarray(x, dtype=np.float64)).reshape(len(Y), -1).max(axis=1)


def _neighbors(oracle, x, r, need, cap, metric):
    got = []
    drawn = 0
    chunk = int(min(max(4 * need, 256), 1 << 20))
    while drawn < cap:
        take = min(chunk, cap - drawn)
        stream, _ = oracle.peek(take)
        hit = np.flatnonzero(metric(x, stream) <= r)[: need - sum(g.shape[0] for g in got)]
        if sum(g.shape[0] for g in got) + hit.shape[0] >= need:
            got.append(oracle.consume(int(hit[-1]) + 1, keep=hit))
            return np.concatenate(got), True
        got.append(oracle.consume(take, keep=hit))
        drawn += take
    return None, False


def test_locally_characterized(oracle, inner, r, metric=None, t=9, s=8, pair_rate=0.1,
                               eps=0.1, c_cap=4.0):
    """``t`` balls of radius ``r`` around fresh anchors, ``inner`` run passively on
    ``s`` points of each; accept iff at least half of the completed runs accept."""
    if not pair_rate > 0:
        raise BadParams("pair_rate must be positive")
    if t < 1 or s < 1:
        raise BadParams("t and s must be >= 1")
    metric = _abs_metric if metric is None else metric
    cap = int(math.ceil(c_cap * s / pair_rate))
    start = oracle.counters()
    votes = []
    starved = 0
    for _ in range(t):
        x = oracle.draw_unlabeled(1)
        pt = oracle.points(x)[0]
        if s > 1:
            ys, ok = _neighbors(oracle, pt, r, s - 1, cap, metric)
            if not ok:
                starved += 1
                continue
        else:
            ys = np.empty(0, dtype=np.int64)
        view = PoolView(oracle, np.concatenate((x, ys)))
        votes.append(bool(inner.run(view, eps, s)))
    if 2 * starved > t:
        raise NeighborhoodStarved(f"{starved} of {t} neighborhoods ran out of draws")
    acc = sum(votes)
    return oracle.verdict(2 * acc >= len(votes) and len(votes) > 0, start, acc, len(votes) / 2.0)
