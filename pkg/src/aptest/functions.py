"""Target function types and their JSON file formats."""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, DimMismatch


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """A boolean function on [0, 1] given by sorted breakpoints.

    Block ``k`` covers ``(b_{k-1}, b_k]`` (the first block also contains 0),
    so ``values`` has one more entry than ``breakpoints``. Adjacent blocks
    may carry equal values; :meth:`normalized` merges them.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64).reshape(-1)
        vals = np.asarray(self.values).reshape(-1)
        if vals.shape[0] != bp.shape[0] + 1:
            raise BadParams("need exactly one more value than breakpoints")
        if bp.size and (bp[0] <= 0.0 or bp[-1] >= 1.0):
            raise BadParams("breakpoints must lie strictly inside (0, 1)")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise BadParams("breakpoints must be strictly ascending")
        if not np.all((vals == 0) | (vals == 1)):
            raise BadParams("values must be 0 or 1")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals.astype(np.int8))

    @classmethod
    def constant(cls, value):
        return cls(np.empty(0), np.array([value]))

    @classmethod
    def from_intervals(cls, intervals):
        """Build the indicator of a union of ``[a, b]`` intervals inside [0, 1]."""
        edges = [0.0]
        vals = []
        for a, b in sorted(intervals):
            if not 0.0 <= a < b <= 1.0:
                raise BadParams(f"bad interval ({a}, {b})")
            if a < edges[-1]:
                raise BadParams("intervals overlap")
            if a > edges[-1]:
                vals.append(0)
                edges.append(a)
            vals.append(1)
            edges.append(b)
        if edges[-1] < 1.0:
            vals.append(0)
            edges.append(1.0)
        if not vals:
            vals = [0]
            edges = [0.0, 1.0]
        return cls(np.array(edges[1:-1]), np.array(vals)).normalized()

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="left")
        return self.values[idx]

    @property
    def edges(self):
        return np.concatenate(([0.0], self.breakpoints, [1.0]))

    @property
    def lengths(self):
        return np.diff(self.edges)

    @property
    def n_blocks(self):
        return self.values.shape[0]

    def normalized(self):
        if self.values.size <= 1:
            return self
        keep = np.flatnonzero(self.values[1:] != self.values[:-1])
        vals = np.concatenate((self.values[:1], self.values[1:][keep]))
        return PiecewiseConstantFn(self.breakpoints[keep], vals)

    def positive_intervals(self):
        g = self.normalized()
        e = g.edges
        return [(float(e[k]), float(e[k + 1])) for k in np.flatnonzero(g.values == 1)]

    @property
    def n_intervals(self):
        return int(np.count_nonzero(self.normalized().values == 1))

    @property
    def mass(self):
        return float(np.sum(self.lengths[self.values == 1]))

    def disagreement(self, other):
        """Lebesgue measure of ``{x : self(x) != other(x)}``."""
        e = np.union1d(self.edges, other.edges)
        mid = 0.5 * (e[:-1] + e[1:])
        diff = self(mid) != other(mid)
        return float(np.sum(np.diff(e)[diff]))

    def pushforward(self, ppf):
        """``self`` composed with a CDF, given the CDF's inverse ``ppf``."""
        bp = np.asarray(ppf(self.breakpoints), dtype=np.float64)
        return PiecewiseConstantFn(bp, self.values)

    def to_json(self):
        return {"breakpoints": [float(b) for b in self.breakpoints],
                "values": [int(v) for v in self.values]}

    def __repr__(self):
        return f"PiecewiseConstantFn(blocks={self.n_blocks}, intervals={self.n_intervals})"


@dataclass(frozen=True, eq=False)
class LinearThreshold:
    """``x -> sgn(w.x - theta)`` with ``sgn(0) = +1``."""

    w: np.ndarray
    theta: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if w.size < 1 or not np.any(w != 0):
            raise BadParams("weight vector must be nonzero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def n(self):
        return self.w.shape[0]

    def margin(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise DimMismatch(f"expected dimension {self.n}, got {x.shape[-1]}")
        return x @ self.w - self.theta

    def eval_pm(self, x):
        return np.where(self.margin(x) >= 0, 1, -1).astype(np.int8)

    def eval01(self, x):
        return (self.margin(x) >= 0).astype(np.int8)

    def to_json(self):
        return {"w": [float(v) for v in self.w], "theta": self.theta}


@dataclass(frozen=True, eq=False)
class BinnedTable:
    """Per-bin label masses ``(p_i0, p_i1)``; row ``i`` describes bin ``i``."""

    p: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "p", p)

    @property
    def n_bins(self):
        return self.p.shape[0]

    def to_json(self):
        return {"p": [[float(a), float(b)] for a, b in self.p]}


def function_from_json(obj):
    if "breakpoints" in obj:
        return PiecewiseConstantFn(np.asarray(obj["breakpoints"], dtype=float),
                                   np.asarray(obj["values"], dtype=int))
    if "w" in obj:
        return LinearThreshold(np.asarray(obj["w"], dtype=float), obj.get("theta", 0.0))
    if "p" in obj:
        return BinnedTable(np.asarray(obj["p"], dtype=float))
    raise BadParams(f"unrecognized function file keys: {sorted(obj)}")


def load_function(path):
    with open(path) as fh:
        return function_from_json(json.load(fh))


def save_function(fn, path):
    with open(path, "w") as fh:
        json.dump(fn.to_json(), fh)
