"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names at the bottom of the module are bound to one of the two
according to :mod:`aptest._accel`. ``IMPLEMENTATIONS`` exposes both sides so
the benchmark and the equivalence tests can call them directly.
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit


# ---------------------------------------------------------------------------
# rejection scan: for each center, first stream point within delta


@njit
def _scan_near_nb(stream, centers, delta, cap, carried):
    n = stream.shape[0]
    m = centers.shape[0]
    hits = np.empty(m, dtype=np.int64)
    draws = np.empty(m, dtype=np.int64)
    done = 0
    p = 0
    used = carried
    while done < m and p < n:
        c = centers[done]
        found = False
        while p < n:
            used += 1
            if abs(stream[p] - c) < delta:
                found = True
                break
            if used >= cap:
                p += 1
                return hits[:done], draws[:done], p, used, True
            p += 1
        if found:
            hits[done] = p
            draws[done] = used
            done += 1
            used = 0
            p += 1
    return hits[:done], draws[:done], p, used, False


def _scan_near_np(stream, centers, delta, cap, carried):
    hits, draws = [], []
    p = 0
    used = carried
    n = stream.shape[0]
    window = 64
    for c in centers:
        # widen the look-ahead window until a hit, the stream end, or the cap
        while True:
            stop = min(n, p + window, p + (cap - used))
            close = np.flatnonzero(np.abs(stream[p:stop] - c) < delta)
            if close.size or stop == n or stop - p >= cap - used:
                break
            window *= 2
        if close.size == 0:
            take = stop - p
            out = np.asarray(hits, dtype=np.int64), np.asarray(draws, dtype=np.int64)
            if used + take >= cap:
                return out[0], out[1], p + (cap - used), cap, True
            return out[0], out[1], n, used + take, False
        k = int(close[0])
        hits.append(p + k)
        draws.append(used + k + 1)
        p += k + 1
        used = 0
    return np.asarray(hits, dtype=np.int64), np.asarray(draws, dtype=np.int64), p, used, False


# ---------------------------------------------------------------------------
# first-close-pair segmentation of an unlabeled stream


@njit
def _close_pairs_nb(stream, delta, max_rounds):
    n = stream.shape[0]
    nb = int(1.0 / delta) + 3
    stamp = np.full(nb, -1, dtype=np.int64)
    slot = np.empty(nb, dtype=np.int64)
    first = np.empty(max_rounds, dtype=np.int64)
    second = np.empty(max_rounds, dtype=np.int64)
    rounds = 0
    seg = 0
    end = 0
    for j in range(n):
        if rounds >= max_rounds:
            break
        b = int(stream[j] / delta) + 1
        best = -1
        for bb in range(b - 1, b + 2):
            if stamp[bb] == seg:
                i = slot[bb]
                if abs(stream[i] - stream[j]) < delta and (best < 0 or i < best):
                    best = i
        if best >= 0:
            first[rounds] = best
            second[rounds] = j
            rounds += 1
            seg += 1
            end = j + 1
        else:
            stamp[b] = seg
            slot[b] = j
    return first[:rounds], second[:rounds], end


def _close_pairs_np(stream, delta, max_rounds):
    n = stream.shape[0]
    first, second = [], []
    start = 0
    window = max(16, int(4.0 / math.sqrt(delta)))
    end = 0
    while len(first) < max_rounds and start < n:
        stop = min(n, start + window)
        seg = stream[start:stop]
        close = np.abs(seg[:, None] - seg[None, :]) < delta
        close = np.tril(close, k=-1)  # [j, i] with i < j
        rows = np.flatnonzero(close.any(axis=1))
        if rows.size == 0:
            if stop == n:
                break
            window *= 2
            continue
        j = int(rows[0])
        i = int(np.flatnonzero(close[j])[0])
        first.append(start + i)
        second.append(start + j)
        start += j + 1
        end = start
    return np.asarray(first, dtype=np.int64), np.asarray(second, dtype=np.int64), end


# ---------------------------------------------------------------------------
# truncated self-correlation kernel  s_i s_j <x_i, x_j> 1[|<x_i, x_j>| <= tau]


@njit
def _pair_values_nb(X, s, I, J, tau):
    P = I.shape[0]
    n = X.shape[1]
    out = np.empty(P, dtype=np.float64)
    for p in range(P):
        i = I[p]
        j = J[p]
        dot = 0.0
        for k in range(n):
            dot += X[i, k] * X[j, k]
        if abs(dot) <= tau:
            out[p] = s[i] * s[j] * dot
        else:
            out[p] = 0.0
    return out


def _pair_values_np(X, s, I, J, tau, chunk=1 << 18):
    out = np.empty(I.shape[0], dtype=np.float64)
    for a in range(0, I.shape[0], chunk):
        i = I[a:a + chunk]
        j = J[a:a + chunk]
        dot = np.einsum("ij,ij->i", X[i], X[j])
        out[a:a + chunk] = np.where(np.abs(dot) <= tau, s[i] * s[j] * dot, 0.0)
    return out


@njit
def _all_pairs_nb(X, s, tau):
    m = X.shape[0]
    n = X.shape[1]
    row = np.zeros(m, dtype=np.float64)
    sq = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            dot = 0.0
            for k in range(n):
                dot += X[i, k] * X[j, k]
            if abs(dot) <= tau:
                v = s[i] * s[j] * dot
                row[i] += v
                row[j] += v
                sq += v * v
    return row, sq


def _all_pairs_np(X, s, tau, block=1024):
    m = X.shape[0]
    row = np.zeros(m, dtype=np.float64)
    sq = 0.0
    for a in range(0, m, block):
        G = X[a:a + block] @ X.T
        V = np.where(np.abs(G) <= tau, s[a:a + block, None] * s[None, :] * G, 0.0)
        idx = np.arange(a, min(m, a + block))
        V[idx - a, idx] = 0.0
        row[a:a + block] = V.sum(axis=1)
        # each unordered pair is seen twice across the blocks
        sq += 0.5 * float(np.sum(V * V))
    return row, sq


# ---------------------------------------------------------------------------
# dictator column statistics


@njit
def _column_violations_nb(pool, subsets, num, den):
    # a labeling y violates when count(y) * den > num
    T, q = subsets.shape
    n = pool.shape[1]
    size = 1 << q
    counts = np.zeros(size, dtype=np.int64)
    out = np.zeros(T, dtype=np.int64)
    for t in range(T):
        counts[:] = 0
        for c in range(n):
            code = 0
            for k in range(q):
                code |= np.int64(pool[subsets[t, k], c]) << k
            counts[code] += 1
        v = 0
        for y in range(size):
            if counts[y] * den > num:
                v += 1
        out[t] = v
    return out


def _column_violations_np(pool, subsets, num, den):
    T, q = subsets.shape
    weights = (np.int64(1) << np.arange(q, dtype=np.int64))
    out = np.zeros(T, dtype=np.int64)
    for t in range(T):
        codes = weights @ pool[subsets[t]].astype(np.int64)
        counts = np.bincount(codes, minlength=1 << q)
        out[t] = int(np.count_nonzero(counts * den > num))
    return out


IMPLEMENTATIONS = {
    "scan_near": (_scan_near_nb, _scan_near_np),
    "close_pairs": (_close_pairs_nb, _close_pairs_np),
    "pair_values": (_pair_values_nb, _pair_values_np),
    "all_pairs": (_all_pairs_nb, _all_pairs_np),
    "column_violations": (_column_violations_nb, _column_violations_np),
}

_pick = 0 if NUMBA_ENABLED else 1
scan_near = IMPLEMENTATIONS["scan_near"][_pick]
close_pairs = IMPLEMENTATIONS["close_pairs"][_pick]
pair_values = IMPLEMENTATIONS["pair_values"][_pick]
all_pairs = IMPLEMENTATIONS["all_pairs"][_pick]
column_violations = IMPLEMENTATIONS["column_violations"][_pick]
