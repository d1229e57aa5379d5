"""``aptest`` command line."""
import argparse
import json
import sys

import numpy as np

from . import combinators, dimension, harness, intervals, ltf
from ._accel import backend
from .errors import AptestError, BadParams
from .functions import BinnedTable, LinearThreshold, load_function
from .oracle import (ActiveOracle, BinnedMixture, Empirical, GaussianIsotropic, Hypercube,
                     MemoizedRandom, SupportLabelTarget, Uniform01, distribution_from_json)


def _emit(obj, out):
    out.write(json.dumps(obj, sort_keys=True) + "\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# tester subcommands


def cmd_test_intervals(a, out):
    dist = distribution_from_json(_load_json(a.dist)) if a.dist else Uniform01()
    fixed = load_function(a.target) if a.target else None
    kw = {"c_r": a.c_r}
    run = {"uniform": intervals.test_union_intervals_uniform,
           "pairs": intervals.test_union_intervals_pairs,
           "general": intervals.test_union_intervals_general}[a.variant]
    if a.variant == "general":
        kw["c_gamma"] = a.c_gamma
    for t in range(a.trials):
        seed = harness.trial_seed(a.seed, t)
        f = fixed if fixed is not None else harness.gen_interval_instance(a.d, a.eps, a.kind, seed).target
        v = run(ActiveOracle(dist, f, seed), a.d, a.eps, **kw)
        _emit({"trial": t, **v.to_dict()}, out)
    return 0


def cmd_test_ltf(a, out):
    spec = a.target
    for t in range(a.trials):
        seed = harness.trial_seed(a.seed, t)
        if spec == "random":
            target = MemoizedRandom()
        elif spec.startswith("ltf:"):
            target = load_function(spec[4:])
        elif spec == "ltf":
            target = LinearThreshold(np.random.default_rng(seed).standard_normal(a.n))
        else:
            raise BadParams("--target is 'random', 'ltf' or 'ltf:<file>'")
        o = ActiveOracle(GaussianIsotropic(a.n), target, seed)
        v = ltf.test_ltf(o, a.n, a.eps, a.c_m1, a.c_m2, a.pair_cap)
        _emit({"trial": t, **v.to_dict()}, out)
    return 0


def _binned(a, seed):
    if a.target:
        table = load_function(a.target)
        if not isinstance(table, BinnedTable):
            raise BadParams("--target must hold a binned table")
        return table, BinnedMixture(table.p.sum(axis=1))
    inst = harness.gen_binned_instance(a.N, a.eps, a.kind, seed)
    return inst.target, inst.distribution


def cmd_test_cluster(a, out):
    for t in range(a.trials):
        seed = harness.trial_seed(a.seed, t)
        table, dist = _binned(a, seed)
        v = combinators.test_cluster(ActiveOracle(dist, table, seed), table.n_bins, a.eps, a.c_n, a.boost)
        _emit({"trial": t, **v.to_dict()}, out)
    return 0


def cmd_test_disjoint(a, out):
    for t in range(a.trials):
        seed = harness.trial_seed(a.seed, t)
        table, dist = _binned(a, seed)
        subs = [combinators.constant_tester(a.c_q)] * table.n_bins
        v = combinators.test_disjoint_union(ActiveOracle(dist, table, seed), subs, table.n_bins, a.eps)
        _emit({"trial": t, **v.to_dict()}, out)
    return 0


def _margin_instance(a, seed):
    if a.instance:
        obj = _load_json(a.instance)
        if "points" in obj:
            pts = np.array([p[0] for p in obj["points"]], dtype=float)
            labels = np.array([p[1] for p in obj["points"]], dtype=np.int8)
            return Empirical(pts, obj.get("weights")), SupportLabelTarget(labels)
        m = harness.gen_margin_instance(obj["d"], obj["gamma"], obj["layout"], seed,
                                        c=obj.get("c", a.c), eps=a.eps)
    else:
        m = harness.gen_margin_instance(a.d, a.gamma, a.kind, seed, c=a.c, eps=a.eps)
    return m.distribution(), m.target()


def cmd_test_margin(a, out):
    for t in range(a.trials):
        seed = harness.trial_seed(a.seed, t)
        dist, target = _margin_instance(a, seed)
        v = combinators.test_margin(ActiveOracle(dist, target, seed), a.gamma, a.c, a.eps, a.d,
                                    c_L=a.c_l, c_U=a.c_u)
        _emit({"trial": t, **v.to_dict()}, out)
    return 0


# ---------------------------------------------------------------------------
# dimension subcommands


def _prior(name, n):
    if name == "dictator":
        return dimension.DictatorPrior(n)
    if name == "noise":
        return dimension.RandomNoisePrior()
    if name == "ltf":
        return dimension.GaussianLTFPrior(n)
    raise BadParams(f"unknown prior {name!r}")


def _domain(a):
    return GaussianIsotropic(a.n) if "ltf" in (a.pi, a.pi_prime) else Hypercube(a.n)


def _hypercube_rows(rng, q, n):
    return Hypercube(n).sample(rng, q)[0]


def cmd_dimension(a, out):
    what = a.what
    if what in ("passive", "coarse", "active"):
        pi, pp = _prior(a.pi, a.n), _prior(a.pi_prime, a.n)
        D = _domain(a)
        if what == "passive":
            est = dimension.estimate_passive_dim(pi, pp, D, a.q_max, a.trials, a.seed)
        elif what == "coarse":
            est = dimension.estimate_coarse_dim(pi, pp, D, a.n, a.q_max, a.trials, a.seed, a.c)
        else:
            est = dimension.estimate_active_dim(pi, pp, D, a.u, a.q_max, a.trials, a.seed)
        _emit({"estimate": what, "q": est.q, "curve": est.curve}, out)
    elif what == "dictator-ratio":
        pool = _hypercube_rows(np.random.default_rng(a.seed), a.pool, a.n)
        r = dimension.dictator_ratio_check(pool, a.n, a.q, a.trials, a.seed + 1)
        _emit({"estimate": what, **r._asdict()}, out)
    elif what == "gaussian-logdet":
        rng = np.random.default_rng(a.seed)
        b = [dimension.gaussian_label_law_bound(rng.standard_normal((a.k, a.n))) for _ in range(a.trials)]
        _emit({"estimate": what, "fraction_le_quarter": float(np.mean(np.array(b) <= 0.25)),
               "median": float(np.median(b)), "trials": a.trials}, out)
    elif what == "randmat":
        r = dimension.singular_value_check(a.n, a.m, a.t, a.trials, a.seed)
        _emit({"estimate": what, "frequency": r.frequency, "floor": r.floor, "bound": r.bound,
               "mean_norm": float(r.norms.mean())}, out)
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(a, out):
    cfgs = _load_json(a.config)
    if isinstance(cfgs, dict):
        cfgs = [cfgs]
    ok = True
    for raw in cfgs:
        cfg = harness.ExperimentConfig.from_dict(raw)
        records, summary = harness.run_experiment(cfg, a.workers)
        summary = {"name": cfg.name or cfg.tester, "backend": backend(), **summary}
        _emit(summary, out)
        ok &= summary.get("gate_passed", True)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="aptest", description="Active property testing experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=1):
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("test-intervals", help="union-of-intervals testers")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--variant", choices=["uniform", "pairs", "general"], default="uniform")
    s.add_argument("--c-r", type=float, default=intervals.DEFAULT_C_R)
    s.add_argument("--c-gamma", type=float, default=intervals.DEFAULT_C_GAMMA)
    s.add_argument("--target", help="function JSON; otherwise generated per trial")
    s.add_argument("--kind", choices=["member", "far_fine", "far_noisy"], default="member")
    s.add_argument("--dist", help="distribution JSON (default uniform01)")
    common(s)
    s.set_defaults(fn=cmd_test_intervals)

    s = sub.add_parser("test-ltf", help="Gaussian LTF tester")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--c-m1", type=float, default=ltf.C_M1)
    s.add_argument("--c-m2", type=float, default=ltf.C_M2)
    s.add_argument("--pair-cap", type=int, default=ltf.PAIR_CAP)
    s.add_argument("--target", default="ltf", help="'random', 'ltf' (random weights) or 'ltf:<file>'")
    common(s)
    s.set_defaults(fn=cmd_test_ltf)

    for name, fn in (("test-cluster", cmd_test_cluster), ("test-disjoint", cmd_test_disjoint)):
        s = sub.add_parser(name)
        s.add_argument("--N", type=int, default=10)
        s.add_argument("--eps", type=float, required=True)
        s.add_argument("--target", help="binned table JSON; otherwise generated per trial")
        s.add_argument("--kind", choices=["pure", "far"], default="pure")
        if name == "test-cluster":
            s.add_argument("--c-n", type=float, default=combinators.C_N)
            s.add_argument("--boost", type=int, default=combinators.BOOST)
        else:
            s.add_argument("--c-q", type=float, default=1.0)
        common(s)
        s.set_defaults(fn=fn)

    s = sub.add_parser("test-margin")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--c", type=float, default=2.0)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--c-l", type=float, default=combinators.C_L)
    s.add_argument("--c-u", type=float, default=combinators.C_U)
    s.add_argument("--instance", help="JSON point set or generator spec {d, gamma, layout}")
    s.add_argument("--kind", choices=["margin", "far"], default="margin")
    common(s)
    s.set_defaults(fn=cmd_test_margin)

    s = sub.add_parser("dimension", help="testing-dimension estimators and lower-bound statistics")
    s.add_argument("what", choices=["passive", "coarse", "active", "dictator-ratio", "gaussian-logdet", "randmat"])
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--pi", default="dictator")
    s.add_argument("--pi-prime", default="noise")
    s.add_argument("--q-max", type=int, default=3)
    s.add_argument("--q", type=int, default=6)
    s.add_argument("--u", type=int, default=8)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--pool", type=int, default=1000)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--m", type=int, default=20)
    s.add_argument("--t", type=float, default=3.0)
    common(s, trials=100)
    s.set_defaults(fn=cmd_dimension)

    s = sub.add_parser("bench", help="run experiment configs with acceptance gates")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args, out)
    except (AptestError, OSError) as exc:
        sys.stderr.write(f"aptest: {exc}\n")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
