"""Optimisation, early stopping and evaluation metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .aggregation import DegreeStats, fit_delta
from .config import RunConfig
from .data import DataBatch, Dataset, Record, bucketed_batches, iter_task_columns
from .graphs import child_rng
from .model import Network, build_network
from .tasks import GRAPH_TASKS, NODE_TASKS, TASKS
from .tensor import NonFiniteError, Tensor

log = logging.getLogger(__name__)

LOG10_FLOOR = -12.0
SIZE_BUCKETS = ((20, 25), (25, 30), (30, 35), (35, 40), (40, 45), (45, 50))


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr, self.eps, self.wd = lr, eps, weight_decay
        self.b1, self.b2 = betas
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + self.wd * p.data if self.wd else p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# -- labels -------------------------------------------------------------------


@dataclass
class LabelStats:
    """Per-task training-label mean and std; the means define the baseline predictor."""

    mean: dict[str, float]
    std: dict[str, float]

    @classmethod
    def fit(cls, records: Sequence[Record]) -> "LabelStats":
        mean, std = {}, {}
        for t in TASKS:
            vals = _task_values(records, t)
            mean[t] = float(vals.mean())
            s = float(vals.std())
            std[t] = s if s > 0 else 1.0
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


def _task_values(records: Sequence[Record], task: str) -> np.ndarray:
    if task in NODE_TASKS:
        vals = [getattr(r.labels, task)[r.labels.node_mask > 0] if task == "sssp" else getattr(r.labels, task)
                for r in records]
        return np.concatenate(vals)
    return np.array([getattr(r.labels, task) for r in records], dtype=np.float64)


def _scaling(cfg: RunConfig, stats: LabelStats, kind: str) -> tuple[np.ndarray, np.ndarray]:
    names = NODE_TASKS if kind == "node" else GRAPH_TASKS
    if cfg.label_scaling == "zscore":
        return np.array([stats.mean[t] for t in names]), np.array([stats.std[t] for t in names])
    return np.zeros(3), np.ones(3)


def batch_loss(net: Network, batch: DataBatch, cfg: RunConfig, stats: LabelStats,
               rng: np.random.Generator | None = None) -> Tensor:
    """Unweighted sum of the selected per-task MSEs (masked node tasks)."""
    node, graph = net(batch.x, batch.graphs, rng)
    n_mu, n_sd = _scaling(cfg, stats, "node")
    g_mu, g_sd = _scaling(cfg, stats, "graph")
    terms = []
    for k, t in enumerate(net.node_tasks):
        c = NODE_TASKS.index(t)
        y = (batch.y_node[:, c:c + 1] - n_mu[c]) / n_sd[c]
        mask = batch.node_mask[:, c:c + 1]
        diff = node[:, k:k + 1] - Tensor(y)
        terms.append(T.sum(T.square(diff) * Tensor(mask)) * (1.0 / max(mask.sum(), 1.0)))
    for k, t in enumerate(net.graph_tasks):
        c = GRAPH_TASKS.index(t)
        y = (batch.y_graph[:, c:c + 1] - g_mu[c]) / g_sd[c]
        terms.append(T.mean(T.square(graph[:, k:k + 1] - Tensor(y))))
    loss = terms[0]
    for term in terms[1:]:
        loss = loss + term
    return loss


# -- metrics ------------------------------------------------------------------


def safe_log10(mse: float) -> float:
    return math.log10(mse) if mse > 0 else -math.inf


def format_log10(value: float) -> str:
    return "<-12" if value < LOG10_FLOOR else format(value, ".6f")


@dataclass
class ErrorTable:
    """Squared-error sums and counts per task, for the model and the baseline."""

    sq: dict[str, float] = field(default_factory=dict)
    base_sq: dict[str, float] = field(default_factory=dict)
    count: dict[str, float] = field(default_factory=dict)

    def add(self, task: str, err: np.ndarray, base_err: np.ndarray, weight: np.ndarray | None = None):
        w = np.ones_like(err) if weight is None else weight
        self.sq[task] = self.sq.get(task, 0.0) + float(np.sum(w * err**2))
        self.base_sq[task] = self.base_sq.get(task, 0.0) + float(np.sum(w * base_err**2))
        self.count[task] = self.count.get(task, 0.0) + float(np.sum(w))

    def tasks(self) -> list[str]:
        return [t for t in TASKS if self.count.get(t, 0) > 0]

    def mse(self, task: str) -> float:
        return self.sq[task] / self.count[task]

    def baseline_mse(self, task: str) -> float:
        return self.base_sq[task] / self.count[task]

    def combined_log10(self) -> float:
        return float(np.mean([safe_log10(self.mse(t)) for t in self.tasks()]))

    def baseline_combined_log10(self) -> float:
        return float(np.mean([safe_log10(self.baseline_mse(t)) for t in self.tasks()]))

    def rows(self) -> list[dict]:
        """One row per task plus a ``combined`` row (geometric-mean MSE)."""
        out = []
        for t in self.tasks():
            mse, base = self.mse(t), self.baseline_mse(t)
            out.append(dict(task=t, mse=mse, log10_mse=safe_log10(mse), baseline_mse=base,
                            ratio=mse / base if base > 0 else math.inf))
        if out:
            c, cb = self.combined_log10(), self.baseline_combined_log10()
            out.append(dict(task="combined", mse=10**c, log10_mse=c, baseline_mse=10**cb, ratio=10 ** (c - cb)))
        return out


@dataclass
class Metrics:
    """Evaluation of one model on one split, with optional breakdowns keyed like ``family=grid``."""

    split: str
    overall: ErrorTable
    breakdown: dict[str, ErrorTable] = field(default_factory=dict)
    params: int = 0
    epochs_run: int = 0
    wall_s: float = 0.0

    @property
    def combined_log10(self) -> float:
        return self.overall.combined_log10()

    def mse(self, task: str) -> float:
        return self.overall.mse(task)

    def rows(self, suite: str, model: str, seed: int) -> list[dict]:
        out = []
        tables = [(self.split, self.overall)] + [(f"{self.split}@{k}", v) for k, v in self.breakdown.items()]
        for split, table in tables:
            for r in table.rows():
                out.append(dict(suite=suite, model=model, seed=seed, split=split, params=self.params,
                                epochs_run=self.epochs_run, wall_s=round(self.wall_s, 3), **r))
        return out


def size_bucket(n: int, buckets=SIZE_BUCKETS) -> str | None:
    for i, (lo, hi) in enumerate(buckets):
        last = i == len(buckets) - 1
        if lo <= n < hi or (last and n == hi):
            return f"n={lo}-{hi}"
    return None


def predict(net: Network, batch: DataBatch, cfg: RunConfig, stats: LabelStats):
    with T.no_grad():
        node, graph = net(batch.x, batch.graphs)
    n_mu, n_sd = _scaling(cfg, stats, "node")
    g_mu, g_sd = _scaling(cfg, stats, "graph")
    out_node = np.full(batch.y_node.shape, np.nan)
    out_graph = np.full(batch.y_graph.shape, np.nan)
    for k, t in enumerate(net.node_tasks):
        c = NODE_TASKS.index(t)
        out_node[:, c] = node.data[:, k] * n_sd[c] + n_mu[c]
    for k, t in enumerate(net.graph_tasks):
        c = GRAPH_TASKS.index(t)
        out_graph[:, c] = graph.data[:, k] * g_sd[c] + g_mu[c]
    return out_node, out_graph


def evaluate_batches(net: Network, batches: Sequence[DataBatch], cfg: RunConfig, stats: LabelStats,
                     split: str = "test", breakdown: Sequence[str] = ()) -> Metrics:
    """Per-task MSE against labels and against the training-mean baseline.

    ``breakdown`` may contain ``"family"`` and/or ``"size"``.
    """
    overall = ErrorTable()
    parts: dict[str, ErrorTable] = {}
    for b in batches:
        pn, pg = predict(net, b, cfg, stats)
        node_graph = b.graphs.node_graph.ids
        keys_per_graph = []
        for fam, n in zip(b.families, b.graphs.sizes):
            keys = []
            if "family" in breakdown:
                keys.append(f"family={fam}")
            if "size" in breakdown:
                sb = size_bucket(int(n))
                if sb:
                    keys.append(sb)
            keys_per_graph.append(keys)
        for task, kind, c in iter_task_columns(cfg.tasks):
            base = stats.mean[task]
            if kind == "node":
                err, berr, w = pn[:, c] - b.y_node[:, c], base - b.y_node[:, c], b.node_mask[:, c]
                owner = node_graph
            else:
                err, berr, w = pg[:, c] - b.y_graph[:, c], base - b.y_graph[:, c], np.ones(len(pg))
                owner = np.arange(len(pg))
            overall.add(task, err, berr, w)
            for gi, keys in enumerate(keys_per_graph):
                if not keys:
                    continue
                sel = owner == gi
                for key in keys:
                    parts.setdefault(key, ErrorTable()).add(task, err[sel], berr[sel], w[sel])
    ordered = dict(sorted(parts.items(), key=lambda kv: _part_order(kv[0])))
    return Metrics(split, overall, ordered, params=net.num_parameters())


def _part_order(key: str):
    kind, _, val = key.partition("=")
    if kind == "n":
        return (1, int(val.split("-")[0]), "")
    return (0, 0, val)


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    config: RunConfig
    seed: int
    network: Network | None
    degree_stats: DegreeStats
    label_stats: LabelStats
    best_epoch: int
    epochs_run: int
    best_valid_log10: float
    history: list[dict]
    wall_s: float
    failed: bool = False
    failure: str = ""


def train(cfg: RunConfig, data: Dataset, seed: int, *,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Train one seed with early stopping on the validation combined log10 MSE.

    A non-finite value anywhere in the forward or backward pass aborts the run
    and returns it marked as failed.
    """
    start = time.perf_counter()
    stats = fit_delta([r.graph for r in data.train])
    lstats = LabelStats.fit(data.train)
    net = build_network(cfg, stats, seed)
    rng = child_rng(seed, 1)
    opt = Adam(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    train_batches = bucketed_batches(data.train, cfg.batch_size)
    valid_batches = bucketed_batches(data.valid, cfg.batch_size)

    best, best_epoch, best_state = math.inf, -1, None
    history: list[dict] = []
    epoch = 0
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            total, gnorm_sq = 0.0, 0.0
            for k in rng.permutation(len(train_batches)):
                b = train_batches[k]
                if cfg.resample_features:
                    b = b.with_random_feature(rng.random(b.graphs.num_nodes))
                opt.zero_grad()
                with T.new_tape():
                    loss = batch_loss(net, b, cfg, lstats, rng if cfg.dropout else None)
                    loss.backward()
                gnorm_sq += sum(float(np.sum(p.grad**2)) for p in net.parameters() if p.grad is not None)
                opt.step()
                total += loss.item()
            valid = evaluate_batches(net, valid_batches, cfg, lstats, "valid").combined_log10
            if not math.isfinite(total) or math.isnan(valid):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}")
            row = dict(epoch=epoch, train_loss=total / len(train_batches), valid_log10=valid,
                       grad_norm=math.sqrt(gnorm_sq / len(train_batches)))
            history.append(row)
            if on_epoch:
                on_epoch(row)
            if valid < best:
                best, best_epoch, best_state = valid, epoch, net.state_dict()
            elif epoch - best_epoch >= cfg.patience:
                break
    except NonFiniteError as e:
        log.warning("seed %d diverged: %s", seed, e)
        return TrainResult(cfg, seed, None, stats, lstats, best_epoch, epoch, best, history,
                           time.perf_counter() - start, failed=True, failure=str(e))
    net.load_state_dict(best_state)
    return TrainResult(cfg, seed, net, stats, lstats, best_epoch, epoch, best, history,
                       time.perf_counter() - start)


def evaluate(result: TrainResult, records: Sequence[Record], split: str = "test",
             breakdown: Sequence[str] = ()) -> Metrics:
    if result.network is None:
        raise ValueError("cannot evaluate a failed run")
    m = evaluate_batches(result.network, bucketed_batches(records, result.config.batch_size),
                         result.config, result.label_stats, split, breakdown)
    m.epochs_run, m.wall_s = result.epochs_run, result.wall_s
    return m

