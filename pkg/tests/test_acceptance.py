"""Acceptance criteria 1-11, one test each.

Criteria 8-11 need full training sweeps.  They read suite CSVs from
``$PNA_ACCEPTANCE_DIR`` (default ``results/acceptance``), produced with
``configs/acceptance.ini`` as described in the README, and fail when those
files are missing.  Smaller exploratory runs elsewhere never count.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import dense_laplacian, floyd_warshall, gradcheck, jacobi_eigenvalues, module_gradcheck, random_adjacency
from pna import tensor as T
from pna.aggregation import fit_delta, neighborhood_reduce
from pna.batch import GraphBatch
from pna.config import RunConfig
from pna.graphs import Graph, InputFeatures
from pna.layers import Set2Set, make_layer
from pna.nn import GRUCell
from pna.report import select_top_k
from pna.suites import BASELINE_WIDTH, BASELINES, MOMENT_SETS, parameter_table, read_rows
from pna.tasks import compute_labels
from pna.tensor import Tensor
from pna.theory import (
    aggregator_counterexample_search, collision_lattice, injective_scaled_mean_check, is_monotone,
    normalized_moments, recover_from_moments,
)
from pna.training import SIZE_BUCKETS

ROOT = Path(__file__).resolve().parents[1]
RESULTS = Path(os.environ.get("PNA_ACCEPTANCE_DIR", ROOT / "results" / "acceptance"))
POINTS = 10
GRAD_TOL = 1e-5

# -- 1 ---------------------------------------------------------------------------


def _nonzero(shape, rng):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 0.1, x + 0.2 * np.sign(x + 1e-12), x)


_IDS = np.array([0, 0, 1, 2, 2, 2, 1, 0, 1])
PRIMITIVES = {
    "add": (lambda a, b: T.add(a, b), [(3, 4), (4,)]),
    "sub": (lambda a, b: T.sub(a, b), [(3, 4), (3, 1)]),
    "mul": (lambda a, b: T.mul(a, b), [(3, 4), (4,)]),
    "div": (lambda a, b: T.div(a, b), [(3, 4), "positive4"]),
    "neg": (T.neg, [(3, 4)]),
    "matmul": (T.matmul, [(3, 4), (4, 2)]),
    "relu": (T.relu, ["nonzero"]),
    "leaky_relu": (lambda x: T.leaky_relu(x, 0.2), ["nonzero"]),
    "sigmoid": (T.sigmoid, [(3, 4)]),
    "tanh": (T.tanh, [(3, 4)]),
    "exp": (T.exp, [(3, 4)]),
    "log": (T.log, ["positive"]),
    "sqrt": (T.sqrt, ["positive"]),
    "signed_pow": (lambda x: T.signed_pow(x, 1 / 3, 1e-5), ["nonzero"]),
    "square": (T.square, [(3, 4)]),
    "power": (lambda x: T.power(x, 3), [(3, 4)]),
    "concat": (lambda a, b: T.concat([a, b]), [(3, 4), (3, 2)]),
    "assemble": (lambda a, b: T.assemble([a, b], [(np.array([0, 1]), np.array([0])),
                                                 (np.array([2]), np.array([1, 2]))], (3, 3)), [(2, 1), (1, 2)]),
    "slice": (lambda x: x[1:, ::2], [(3, 4)]),
    "reshape": (lambda x: T.reshape(x, (2, 6)), [(3, 4)]),
    "transpose": (T.transpose, [(3, 4)]),
    "sum": (lambda x: T.sum(x, axis=1), [(3, 4)]),
    "mean": (T.mean, [(3, 4)]),
    "dropout": (lambda x: T.dropout(x, 0.3, np.random.default_rng(5)), [(3, 4)]),
    "gather": (lambda x: T.gather(x, np.array([0, 2, 2, 1])), [(3, 4)]),
    "segment_sum": (lambda x: T.segment_sum(x, _IDS, 3), [(9, 2)]),
    "segment_mean": (lambda x: T.segment_mean(x, _IDS, 3), [(9, 2)]),
    "segment_max": (lambda x: T.segment_max(x, _IDS, 3), [(9, 2)]),
    "segment_min": (lambda x: T.segment_min(x, _IDS, 3), [(9, 2)]),
    "segment_softmax": (lambda x: T.segment_softmax(x, _IDS, 3), [(9, 2)]),
}


def _sample(kind, rng):
    if kind == "nonzero":
        return _nonzero((3, 4), rng)
    if kind == "positive":
        return rng.uniform(0.5, 2.0, size=(3, 4))
    if kind == "positive4":
        return rng.uniform(0.5, 2.0, size=(4,))
    return rng.normal(size=kind)


def _small_graphs(rng, sizes=(4, 5)):
    graphs = []
    for n in sizes:
        a = random_adjacency(n, 0.4, rng)
        for i in range(1, n):
            j = int(rng.integers(i))
            a[i, j] = a[j, i] = 1
        graphs.append(Graph.from_adjacency(a))
    return graphs


def _layer_error(name, rng):
    graphs = _small_graphs(rng)
    batch = GraphBatch.from_graphs(graphs)
    x = Tensor(rng.normal(size=(batch.num_nodes, 4)))
    if name == "gru":
        mod = GRUCell(4, 4, rng)
        h = Tensor(rng.normal(size=(batch.num_nodes, 4)))
        return max(module_gradcheck(mod, lambda: mod(x, h)), gradcheck(lambda a, b: mod(a, b), [x.data, h.data]))
    if name == "set2set":
        mod = Set2Set(4, rng)
        return max(module_gradcheck(mod, lambda: mod(x, batch)), gradcheck(lambda a: mod(a, batch), [x.data]))
    mod = make_layer(name, 4, 4, rng, stats=fit_delta(graphs), towers=2)
    return max(module_gradcheck(mod, lambda: mod(x, batch)), gradcheck(lambda a: mod(a, batch), [x.data]))


LAYERS = ("pna", "pna_noscalers", "gcn", "gat", "gin", "mpnn_sum", "mpnn_max", "gru", "set2set")


def test_criterion_1_autodiff_soundness(verdict):
    start = time.perf_counter()
    worst = {}
    for name, (fn, specs) in PRIMITIVES.items():
        rng = np.random.default_rng(len(name))
        worst[name] = max(gradcheck(fn, [_sample(s, rng) for s in specs]) for _ in range(POINTS))
    for name in LAYERS:
        rng = np.random.default_rng(100 + len(name))
        worst[name] = max(_layer_error(name, rng) for _ in range(POINTS))
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in worst.items() if v > GRAD_TOL}
    ok = not bad and elapsed < 60
    verdict(1, ok, f"{len(worst)} ops x {POINTS} points, max rel err {max(worst.values()):.2e}, {elapsed:.1f}s"
            + (f"; over tolerance: {bad}" if bad else ""))
    assert ok


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_lap, worst_rho, mismatches = 0.0, 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        a = random_adjacency(n, rng.uniform(0.1, 0.9), rng)
        src = int(rng.integers(n))
        x = rng.random(n)
        lab = compute_labels(Graph.from_adjacency(a), InputFeatures(np.eye(n)[src], x))
        d = floyd_warshall(a)
        reach = np.isfinite(d[src])
        ecc = np.where(np.isfinite(d), d, 0).max(axis=1)
        exact = (np.array_equal(lab.sssp[reach], d[src][reach]) and np.all(lab.sssp[~reach] == 0)
                 and np.array_equal(lab.node_mask, reach.astype(float)) and np.array_equal(lab.eccentricity, ecc)
                 and lab.is_connected == float(np.isfinite(d).all()) and lab.diameter == ecc.max())
        mismatches += not exact
        worst_lap = max(worst_lap, float(np.max(np.abs(lab.laplacian - dense_laplacian(a) @ x))))
        worst_rho = max(worst_rho, abs(lab.spectral_radius - jacobi_eigenvalues(a)[-1]))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and worst_lap <= 1e-12 and worst_rho <= 1e-6 and elapsed < 60
    verdict(2, ok, f"1000 graphs, {mismatches} path-label mismatches, laplacian err {worst_lap:.1e}, "
            f"spectral err {worst_rho:.1e}, {elapsed:.1f}s")
    assert ok


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_moment_recovery(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        x = np.sort(rng.uniform(-1, 1, size=n))
        mu, m = normalized_moments(x)
        worst = max(worst, float(np.max(np.abs(recover_from_moments(mu, m, n) - x))))
    ok = worst <= 1e-6
    verdict(3, ok, f"1000 multisets with n <= 6, worst elementwise error {worst:.2e}")
    assert ok


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_scaled_mean_injective(verdict):
    code = injective_scaled_mean_check({1, 2, 3}, 4)
    mean = injective_scaled_mean_check({1, 2, 3}, 4, aggregator="mean")
    total = injective_scaled_mean_check({1, 2, 3}, 4, aggregator="sum")
    ok = code.injective and code.decoded and mean.witness is not None and total.witness is not None
    verdict(4, ok, f"{code.num_multisets} multisets: scaled mean injective={code.injective}, "
            f"decoded={code.decoded}; mean witness {mean.witness}; sum witness {total.witness}")
    assert ok


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_counterexamples(verdict):
    full = ("mean", "max", "min", "std")
    lattice = collision_lattice(full, range(5), exact_size=3)
    proper = [s for s in lattice if len(s) < len(full)]
    missing = [s for s in proper if aggregator_counterexample_search(s, range(5), exact_size=3) is None]
    monotone = is_monotone(lattice)
    ok = not missing and monotone
    detail = (f"size-3 multisets over 0..4: {len(proper) - len(missing)}/{len(proper)} proper subsets collide, "
              f"monotone={monotone}")
    if missing:
        detail += "; no collision for " + ", ".join("{" + ",".join(s) + "}" for s in missing)
        # for information only: allowing sizes 1..3 gives every proper subset a witness
        mixed = [s for s in proper if aggregator_counterexample_search(s, range(5), max_size=3) is None]
        detail += f" (sizes 1..3 instead: {len(proper) - len(mixed)}/{len(proper)})"
    verdict(5, ok, detail)
    assert ok


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_sum_generalization(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        batch = GraphBatch.from_graphs(_small_graphs(rng, tuple(int(n) for n in rng.integers(2, 12, size=3))))
        msg = Tensor(rng.normal(size=(len(batch.src.ids), 6)))
        out = neighborhood_reduce(("mean",), ("linear",), msg, batch.dst, None).data
        worst = max(worst, float(np.max(np.abs(out - T.segment_sum(msg, batch.dst).data))))
    ok = worst <= 1e-12
    verdict(6, ok, f"100 random graph batches, max |mean*d - sum| = {worst:.1e}")
    assert ok


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_dimensional_contract(verdict):
    f, towers = 16, 4
    layer = make_layer("pna", f, f, np.random.default_rng(7), stats=fit_delta([np.ones(3)]), towers=towers)
    g = _small_graphs(np.random.default_rng(7), (6,))[0]
    batch = GraphBatch.from_graphs([g])
    msg = Tensor(np.random.default_rng(8).normal(size=(len(batch.src.ids), f)))
    reduced = neighborhood_reduce(layer.aggregators, layer.scalers, msg, batch.dst, layer.stats)
    checks = {
        "12 reductions": layer.num_reductions == 12,
        "reduced width 12F": reduced.shape == (6, 12 * f),
        "U input 13F/T": all(p.weight.shape == (13 * f // towers, f // towers) for p in layer.posttrans),
        "output F": layer(Tensor(np.ones((6, f))), batch).shape == (6, f),
    }
    ok = all(checks.values())
    verdict(7, ok, f"F={f}, T={towers}: " + ", ".join(f"{k}={v}" for k, v in checks.items()))
    assert ok


# -- 8-11: trained-model criteria ------------------------------------------------


def _load(kind):
    path = RESULTS / f"{kind}.csv"
    if not path.exists():
        return None, f"no stated-scale results at {path} (run: pna suite --kind {kind} " \
                     f"--config configs/acceptance.ini --out {RESULTS})"
    return read_rows(path), ""


def _top_mean(rows, k, split="test", field="log10_mse"):
    """Mean over each model's top-k seeds (by validation error) of a combined-row field."""
    chosen = select_top_k(rows, k)
    acc = {}
    for r in rows:
        key = (r["suite"], r["model"])
        if r["split"] == split and r["task"] == "combined" and r["seed"] in chosen.get(key, ()):
            acc.setdefault(r["model"], []).append(r[field])
    return {m: float(np.mean(v)) for m, v in acc.items()}


def _per_seed(rows, split, field):
    acc = {}
    for r in rows:
        if r["split"] == split and r["task"] == "combined":
            acc.setdefault(r["model"], []).append(r[field])
    return acc


def test_criterion_8_multitask_ordering(verdict):
    rows, why = _load("multitask")
    if rows is None:
        verdict(8, False, why)
        pytest.fail(why)
    model = _top_mean(rows, 3)
    ratio = _top_mean(rows, 3, field="ratio")
    beats_baseline = {m: ratio[m] < 1 for m in model}
    others = [b for b in BASELINES if b in model]
    pna_best = "pna" in model and all(model["pna"] < model[b] for b in others) and len(others) == len(BASELINES)
    scalers = "pna" in model and "pna_noscalers" in model and model["pna"] <= model["pna_noscalers"]
    ok = all(beats_baseline.values()) and len(model) == 7 and pna_best and scalers
    verdict(8, ok, "top-3 combined log10 MSE " + ", ".join(f"{m}={v:.3f}" for m, v in sorted(model.items()))
            + f"; all beat baseline={all(beats_baseline.values())}, pna best={pna_best}, scalers help={scalers}")
    assert ok


def test_criterion_9_extrapolation(verdict):
    rows, why = _load("extrapolation")
    if rows is None:
        verdict(9, False, why)
        pytest.fail(why)
    buckets = [f"test@n={lo}-{hi}" for lo, hi in SIZE_BUCKETS]
    med, spread = {}, {}
    for b in buckets:
        for m, vals in _per_seed(rows, b, "ratio").items():
            med.setdefault(m, []).append(float(np.median(vals)))
            spread.setdefault(m, []).append(float(np.std(vals)))
    rising = {}
    for m in med:
        r, s = med[m], spread[m]
        rising[m] = len(r) == 6 and all(r[i + 1] >= r[i] - max(s[i], s[i + 1]) for i in range(5))
    wins = sum(1 for i in range(6) if "pna" in med and all(med["pna"][i] < med[m][i] for m in med if m != "pna"))
    ok = bool(rising) and all(rising.values()) and wins >= 4
    verdict(9, ok, f"non-decreasing within seed noise: {sorted(m for m, v in rising.items() if v)}; "
            f"failing: {sorted(m for m, v in rising.items() if not v)}; pna lowest in {wins}/6 buckets")
    assert ok


def test_criterion_10_parameter_comparison(verdict):
    table = {(r["model"], r["hidden"]): r["params"] for r in parameter_table(RunConfig())}
    pna = table[("pna", 16)]
    fewer = all(pna < table[(b, BASELINE_WIDTH)] for b in BASELINES)
    detail = f"params pna@F16={pna}, " + ", ".join(f"{b}@F20={table[(b, BASELINE_WIDTH)]}" for b in BASELINES)
    rows, why = _load("param_comparison")
    if rows is None:
        verdict(10, False, f"{detail}; fewer={fewer}; {why}")
        pytest.fail(why)
    score = _top_mean([r for r in rows if r["split"] != "params"], 3)
    ref = score.get("pna@F16", math.inf)
    beaten_by = [m for m, v in score.items() if m != "pna@F16" and v < ref]
    complete = len(score) == 1 + len(BASELINES)
    ok = fewer and complete and not beaten_by
    verdict(10, ok, f"{detail}; fewer={fewer}; top-3 combined log10 "
            + ", ".join(f"{m}={v:.3f}" for m, v in sorted(score.items())) + f"; outperform pna: {beaten_by}")
    assert ok


def test_criterion_11_moment_ablation(verdict):
    rows, why = _load("moment_ablation")
    if rows is None:
        verdict(11, False, why)
        pytest.fail(why)
    med = {m: float(np.median(v)) for m, v in _per_seed(rows, "test", "log10_mse").items()}
    moment_only = [m for m in MOMENT_SETS if m != "pna"]
    if not all(m in med for m in MOMENT_SETS):
        verdict(11, False, f"incomplete ablation: have {sorted(med)}")
        pytest.fail("incomplete ablation")
    improves = med["mean+std"] < med["mean"]
    full_best = med["pna"] <= min(med[m] for m in moment_only)
    ok = improves and full_best
    verdict(11, ok, "median combined log10 " + ", ".join(f"{m}={med[m]:.3f}" for m in MOMENT_SETS)
            + f"; std helps={improves}, full pna <= best moment set={full_best}")
    assert ok
