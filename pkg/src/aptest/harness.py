"""Instance generators and the seeded experiment runner."""
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import combinators, intervals, ltf
from .errors import BadParams, EmptyInput, GenerationFailed, TrialFailed
from .functions import BinnedTable, LinearThreshold, PiecewiseConstantFn
from .oracle import (ActiveOracle, BinnedMixture, Empirical, GaussianIsotropic, MemoizedRandom,
                     SupportLabelTarget, Uniform01, UnitBallUniform, cluster_error,
                     distance_to_interval_union, distance_to_margin, distribution_from_json,
                     min_cross_distance)

RETRY_CAP = 100
CERT_TOL = 1e-12


# ---------------------------------------------------------------------------
# interval instances


@dataclass
class Instance:
    target: object
    distribution: object
    in_property: bool
    distance: float = None
    certificate: dict = field(default_factory=dict)


def _random_union(rng, k):
    b = np.sort(rng.random(2 * k))
    return PiecewiseConstantFn.from_intervals([(b[2 * i], b[2 * i + 1]) for i in range(k)
                                               if b[2 * i + 1] > b[2 * i]])


def _member_with_blips(rng, d, k, w):
    """``d`` intervals plus ``k`` blips of width ``w``, every gap and interval at least ``w`` wide.

    Removing any one of the ``d + k`` intervals or filling any gap costs at
    least ``w``, so the distance to ``d`` intervals is at least ``k w``.
    """
    slots = 2 * (d + k) + 1
    free = 1.0 - slots * w
    if free <= 0:
        raise GenerationFailed("blips do not fit in [0, 1]")
    blip = np.zeros(d + k, dtype=bool)
    blip[rng.choice(d + k, size=k, replace=False)] = True
    lengths = np.full(slots, w)
    grow = np.ones(slots, dtype=bool)
    grow[1::2] = ~blip
    lengths[grow] += free * rng.dirichlet(np.ones(int(grow.sum())))
    cuts = np.cumsum(lengths)[:-1]
    return PiecewiseConstantFn(cuts, np.arange(slots) % 2)


def gen_interval_instance(d, eps, kind, seed, max_retries=RETRY_CAP):
    """``member``: exactly ``d`` random intervals; ``far_fine``: at least ``2d/eps``
    alternating blocks of jittered length; ``far_noisy``: ``d`` intervals plus
    ``2d`` isolated blips. Far kinds are regenerated until the DP distance is ``>= eps``.
    """
    if d < 1:
        raise BadParams("d must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "member":
        f = _random_union(rng, d)
        return Instance(f, Uniform01(), True, distance_to_interval_union(f, d))
    for attempt in range(max_retries):
        if kind == "far_fine":
            m = int(math.ceil(2 * d / eps)) + 2 * attempt
            m += m % 2
            lengths = rng.uniform(0.5, 1.5, size=m)
            cuts = np.cumsum(lengths)[:-1] / lengths.sum()
            f = PiecewiseConstantFn(cuts, np.arange(m) % 2)
        elif kind == "far_noisy":
            # enough blips that 2(d + k) + 1 slots of width 1.1 eps / k fit
            if 2.2 * eps >= 1.0:
                raise GenerationFailed("far_noisy needs eps < 1/2.2")
            k = max(2 * d, int(math.ceil(1.2 * 1.1 * eps * (2 * d + 1) / (1.0 - 2.2 * eps))))
            f = _member_with_blips(rng, d, k, 1.1 * eps * (1.0 + 0.01 * attempt) / k)
        else:
            raise BadParams(f"unknown interval instance kind {kind!r}")
        dist = distance_to_interval_union(f, d)
        if dist >= eps - CERT_TOL:
            return Instance(f, Uniform01(), False, dist, {"dp_distance": dist})
    raise GenerationFailed(f"no certified {kind} instance after {max_retries} tries")


def gen_noisy_member(d, eps, seed, blip_mass=None, n_blips=None):
    """A ``d``-interval union plus a few wide spurious blips of total mass ``blip_mass``.

    Blips sit inside zero regions, each at least ``2 delta`` wide, at most
    ``d/2`` of them (so the smoothing threshold stays small).
    """
    rng = np.random.default_rng(seed)
    blip_mass = eps / 8.0 if blip_mass is None else blip_mass
    delta = eps * eps / (32.0 * d)
    n_blips = max(1, d // 2) if n_blips is None else n_blips
    width = blip_mass / n_blips
    if width < 2 * delta:
        raise BadParams("blips would be narrower than 2 delta")
    for _ in range(RETRY_CAP):
        f = _random_union(rng, d)
        e = f.edges
        zeros = [(e[k], e[k + 1]) for k in np.flatnonzero(f.values == 0) if e[k + 1] - e[k] > width + 4 * delta]
        if not zeros:
            continue
        lens = np.array([b - a - width - 4 * delta for a, b in zeros])
        picks = rng.choice(len(zeros), size=n_blips, p=lens / lens.sum())
        if len(set(picks.tolist())) < n_blips:
            continue
        ints = f.positive_intervals()
        for k in picks:
            a, b = zeros[k]
            s = a + 2 * delta + rng.random() * (b - a - width - 4 * delta)
            ints.append((s, s + width))
        g = PiecewiseConstantFn.from_intervals(ints)
        if g.n_intervals == d + n_blips:
            return Instance(g, Uniform01(), False, distance_to_interval_union(g, d))
    raise GenerationFailed("could not place the blips")


# ---------------------------------------------------------------------------
# binned, LTF and margin instances


def gen_binned_instance(N, eps, kind, seed):
    """Equal-weight bins; ``pure`` labels each bin constantly, ``far`` puts an
    ``eps`` minority in every bin."""
    rng = np.random.default_rng(seed)
    w = np.full(N, 1.0 / N)
    major = rng.integers(0, 2, size=N)
    if kind == "pure":
        frac1 = major.astype(float)
    elif kind == "far":
        frac1 = np.where(major == 1, 1.0 - eps, eps)
    else:
        raise BadParams(f"unknown binned instance kind {kind!r}")
    table = BinnedTable(np.column_stack((w * (1 - frac1), w * frac1)))
    err = cluster_error(table.p)
    if kind == "far" and err < eps - CERT_TOL:
        raise GenerationFailed(f"cluster error {err} below {eps}")
    return Instance(table, BinnedMixture(w), kind == "pure", err, {"cluster_error": err})


def gen_ltf_instance(n, kind, seed):
    rng = np.random.default_rng(seed)
    if kind == "member":
        return Instance(LinearThreshold(rng.standard_normal(n), 0.0), GaussianIsotropic(n), True, 0.0)
    if kind == "random":
        return Instance(MemoizedRandom(), GaussianIsotropic(n), False, None)
    raise BadParams(f"unknown LTF instance kind {kind!r}")


@dataclass
class MarginInstance:
    points: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    in_property: bool
    certificate: dict

    def distribution(self):
        return Empirical(self.points, self.weights)

    def target(self):
        return SupportLabelTarget(self.labels)


def gen_margin_instance(d, gamma, kind, seed, c=2.0, eps=0.25, n_points=600, max_retries=RETRY_CAP):
    """``margin``: two blobs split by a slab of width ``gamma``; ``far``: stripes
    along the first axis, aligned to the partition grid with pitch below
    ``gamma' = gamma (1 - 1/c)``.

    Margin instances are certified by the nearest cross-label distance, far
    ones by the exact distance to the ``gamma'`` margin property.
    """
    rng = np.random.default_rng(seed)
    ball = UnitBallUniform(d)
    gp = gamma * (1.0 - 1.0 / c)
    for _ in range(max_retries):
        if kind == "margin":
            pts, _ = ball.sample(rng, 4 * n_points)
            pts = pts[np.abs(pts[:, 0]) >= gamma / 2.0][:n_points]
            labels = (pts[:, 0] > 0).astype(np.int8)
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
            sep = min_cross_distance(pts, labels)
            if sep >= gamma and labels.min() != labels.max():
                return MarginInstance(pts, w, labels, True, {"min_cross_distance": sep})
        elif kind == "far":
            pts, _ = ball.sample(rng, n_points)
            side = gamma / (2.0 * c * math.sqrt(d)) if gamma < 2 else 2.0
            width = side * max(1, int(gp / side) - 1) if gamma < 2 else 1.0
            labels = (np.floor(pts[:, 0] / width).astype(np.int64) % 2).astype(np.int8)
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
            dist = distance_to_margin(pts, w, labels, gp)
            if dist >= eps - CERT_TOL:
                return MarginInstance(pts, w, labels, False, {"margin_distance": dist, "gamma_prime": gp})
        else:
            raise BadParams(f"unknown margin instance kind {kind!r}")
    raise GenerationFailed(f"no certified {kind} margin instance after {max_retries} tries")


# ---------------------------------------------------------------------------
# experiment runner


TESTERS = ("intervals-uniform", "intervals-pairs", "intervals-general", "ltf", "cluster",
           "disjoint", "margin")


@dataclass
class ExperimentConfig:
    tester: str
    generator: dict
    params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    output: str = None
    gate: dict = None
    name: str = None

    def __post_init__(self):
        if self.tester not in TESTERS:
            raise BadParams(f"unknown tester {self.tester!r}; expected one of {TESTERS}")
        if self.trials < 1:
            raise BadParams("trials must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise BadParams("seed must fit in 64 bits")
        if "kind" not in self.generator:
            raise BadParams("generator spec needs a 'kind'")

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)


@dataclass
class TrialRecord:
    trial: int
    decision: str
    statistic: float
    threshold: float
    labels_used: int
    unlabeled_used: int
    wall_ms: float
    in_property: bool
    distance: float = None

    def to_json(self):
        # wall time is left out so that records are byte-stable across runs
        d = asdict(self)
        d.pop("wall_ms")
        return json.dumps(d, sort_keys=True)


def trial_seed(master, index):
    return (int(master) ^ int(index)) & (2 ** 64 - 1)


def build_trial(cfg, seed):
    """Instance and oracle for one trial."""
    g = dict(cfg.generator)
    kind = g.pop("kind")
    p = cfg.params
    t = cfg.tester
    if t.startswith("intervals"):
        d, eps = p["d"], p["eps"]
        if kind == "noisy_member":
            inst = gen_noisy_member(d, eps, seed)
        else:
            inst = gen_interval_instance(d, eps, kind, seed)
        if "dist" in g:
            dist = distribution_from_json(g["dist"])
            inst = Instance(inst.target.pushforward(dist.ppf), dist, inst.in_property,
                            inst.distance, inst.certificate)
        return inst, ActiveOracle(inst.distribution, inst.target, seed)
    if t == "ltf":
        inst = gen_ltf_instance(p["n"], kind, seed)
    elif t in ("cluster", "disjoint"):
        inst = gen_binned_instance(p["N"], g.get("eps", p["eps"]), kind, seed)
    elif t == "margin":
        m = gen_margin_instance(p["d"], p["gamma"], kind, seed, c=p["c"], eps=p["eps"],
                                n_points=g.get("points", 600))
        inst = Instance(m.target(), m.distribution(), m.in_property,
                        m.certificate.get("margin_distance"), m.certificate)
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise BadParams(t)
    return inst, ActiveOracle(inst.distribution, inst.target, seed)


def run_tester(cfg, oracle):
    p = dict(cfg.params)
    t = cfg.tester
    if t == "intervals-uniform":
        return intervals.test_union_intervals_uniform(oracle, **p)
    if t == "intervals-pairs":
        return intervals.test_union_intervals_pairs(oracle, **p)
    if t == "intervals-general":
        return intervals.test_union_intervals_general(oracle, **p)
    if t == "ltf":
        return ltf.test_ltf(oracle, **p)
    if t == "cluster":
        return combinators.test_cluster(oracle, **p)
    if t == "disjoint":
        N = p.pop("N")
        c_q = p.pop("c_q", 1.0)
        return combinators.test_disjoint_union(oracle, [combinators.constant_tester(c_q)] * N, N, **p)
    if t == "margin":
        return combinators.test_margin(oracle, **p)
    raise BadParams(t)  # pragma: no cover


def run_trial(cfg, index):
    seed = trial_seed(cfg.seed, index)
    t0 = time.perf_counter()
    try:
        inst, oracle = build_trial(cfg, seed)
        v = run_tester(cfg, oracle)
    except Exception as exc:
        raise TrialFailed(index, exc) from exc
    ms = 1000.0 * (time.perf_counter() - t0)
    return TrialRecord(index, v.decision, v.statistic, v.threshold, v.labels_used, v.unlabeled_used,
                       ms, bool(inst.in_property), inst.distance)


def _run_trial_packed(args):
    return run_trial(*args)


def default_workers():
    cap = os.environ.get("APTEST_WORKERS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_experiment(config, workers=None):
    """Run every trial; records come back in trial order whatever the worker count."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(cfg, k) for k in range(cfg.trials)]
    if workers == 1 or cfg.trials == 1:
        records = [run_trial(c, k) for c, k in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial_packed, jobs, chunksize=max(1, cfg.trials // (4 * workers))))
    summary = summarize(records)
    if cfg.gate:
        summary["gate_passed"] = gate_passed(summary, cfg.gate)
    if cfg.output:
        write_outputs(cfg.output, records, summary)
    return records, summary


def to_jsonl(records):
    return "".join(r.to_json() + "\n" for r in records)


def summarize(records):
    """Accept rate with a Wilson 95% interval, and budget totals/percentiles."""
    if not records:
        raise EmptyInput("no trial records to summarize")
    n = len(records)
    acc = sum(r.decision == "accept" for r in records)
    lo, hi = proportion_confint(acc, n, alpha=0.05, method="wilson")
    labels = np.array([r.labels_used for r in records], dtype=np.int64)
    unl = np.array([r.unlabeled_used for r in records], dtype=np.int64)
    return {
        "trials": n,
        "accepts": int(acc),
        "accept_rate": acc / n,
        "wilson_lo": float(lo),
        "wilson_hi": float(hi),
        "labels_total": int(labels.sum()),
        "labels_mean": float(labels.mean()),
        "labels_p50": float(np.percentile(labels, 50)),
        "labels_p90": float(np.percentile(labels, 90)),
        "unlabeled_total": int(unl.sum()),
        "unlabeled_mean": float(unl.mean()),
        "unlabeled_p50": float(np.percentile(unl, 50)),
        "unlabeled_p90": float(np.percentile(unl, 90)),
        "wall_ms_mean": float(np.mean([r.wall_ms for r in records])),
    }


def gate_passed(summary, gate):
    """``gate = {"accept_rate": min}`` or ``{"reject_rate": min}``."""
    ok = True
    if "accept_rate" in gate:
        ok &= summary["accept_rate"] >= gate["accept_rate"]
    if "reject_rate" in gate:
        ok &= 1.0 - summary["accept_rate"] >= gate["reject_rate"]
    return bool(ok)


def summary_csv(summary):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(summary), lineterminator="\n")
    w.writeheader()
    w.writerow(summary)
    return buf.getvalue()


def write_outputs(path, records, summary):
    base = path[:-6] if path.endswith(".jsonl") else path
    with open(base + ".jsonl", "w") as fh:
        fh.write(to_jsonl(records))
    with open(base + ".csv", "w") as fh:
        fh.write(summary_csv(summary))
