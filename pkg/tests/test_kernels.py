import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptest import _accel
from aptest.kernels import IMPLEMENTATIONS


def both(name):
    return IMPLEMENTATIONS[name]


def assert_same(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        if isinstance(x, np.ndarray):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
        else:
            assert x == y


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 400), st.floats(0.001, 0.3),
       st.integers(1, 5000), st.integers(0, 50))
def test_scan_near_equivalent(seed, m, delta, cap, carried):
    rng = np.random.default_rng(seed)
    stream = rng.random(3000)
    centers = rng.random(m)
    carried = min(carried, cap - 1)
    nb, npy = both("scan_near")
    assert_same(nb(stream, centers, delta, cap, carried), npy(stream, centers, delta, cap, carried))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3000), st.floats(0.0005, 0.2), st.integers(1, 200))
def test_close_pairs_equivalent(seed, n, delta, rounds):
    stream = np.random.default_rng(seed).random(n)
    nb, npy = both("close_pairs")
    a = nb(stream, delta, rounds)
    assert_same(a, npy(stream, delta, rounds))
    first, second, end = a
    # each pair is the first close pair of its segment
    start = 0
    for i, j in zip(first, second):
        assert start <= i < j and abs(stream[i] - stream[j]) < delta
        seg = stream[start:j]
        d = np.abs(seg[:, None] - seg[None, :]) < delta
        assert not np.any(np.tril(d, -1))
        start = j + 1
    assert end == start


def test_close_pairs_edges():
    stream = np.array([0.0, 1.0, 0.999, 0.5])
    for fn in both("close_pairs"):
        f, s, e = fn(stream, 0.01, 5)
        assert f.tolist() == [1] and s.tolist() == [2] and e == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 60), st.integers(1, 8), st.floats(0.1, 10))
def test_pair_kernels_equivalent(seed, m, n, tau):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, n))
    s = rng.choice([-1.0, 1.0], size=m)
    I = rng.integers(0, m, 500)
    J = rng.integers(0, m, 500)
    nb, npy = both("pair_values")
    np.testing.assert_allclose(nb(X, s, I, J, tau), npy(X, s, I, J, tau), atol=1e-12)
    nb, npy = both("all_pairs")
    (r1, q1), (r2, q2) = nb(X, s, tau), npy(X, s, tau, block=7)
    np.testing.assert_allclose(r1, r2, atol=1e-9)
    assert q1 == pytest.approx(q2, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 10), st.integers(1, 200))
def test_column_violations_equivalent(seed, q, n):
    rng = np.random.default_rng(seed)
    pool = rng.integers(0, 2, size=(30, n), dtype=np.uint8)
    q = min(q, 30)
    subsets = np.array([rng.choice(30, size=q, replace=False) for _ in range(20)])
    nb, npy = both("column_violations")
    num, den = np.int64(6 * n), np.int64(5 * (1 << q))
    assert np.array_equal(nb(pool, subsets, num, den), npy(pool, subsets, num, den))


def test_backend_flag(monkeypatch):
    assert _accel.backend() in ("numba", "numpy")
    monkeypatch.setenv("APTEST_NUMBA", "0")
    assert not _accel._env_wants_numba()
    monkeypatch.setenv("APTEST_NUMBA", "1")
    assert _accel._env_wants_numba()


def test_numpy_backend_end_to_end():
    import subprocess
    import sys
    code = ("from aptest import kernels, _accel;"
            "assert _accel.backend() == 'numpy';"
            "assert kernels.close_pairs is kernels.IMPLEMENTATIONS['close_pairs'][1]")
    env = {"APTEST_NUMBA": "0", "PATH": "/usr/bin:/bin"}
    import os
    env.update({k: v for k, v in os.environ.items() if k not in env})
    env["APTEST_NUMBA"] = "0"
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
