"""Experiment suites and the metrics CSV.

A suite expands into independent (model, seed) runs.  Each run writes its own
CSV fragment, epoch log and checkpoint under ``<out>/runs/<suite>/``, so an
interrupted suite resumes where it stopped; the suite CSV ``<out>/<suite>.csv``
is the concatenation of all fragments.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .aggregation import DEFAULT_AGGREGATORS, DegreeStats
from .checkpoint import Checkpoint, save_checkpoint
from .config import SPLIT_RANGES, RunConfig
from .data import Dataset, build_dataset, load_dataset, save_dataset
from .layers import LAYER_NAMES
from .model import Network
from .tasks import TASKS
from .training import evaluate, format_log10, train

log = logging.getLogger(__name__)

SUITES = ("multitask", "singletask", "extrapolation", "moment_ablation", "param_comparison")
BASELINES = ("gcn", "gat", "gin", "mpnn_sum", "mpnn_max")
COLUMNS = ("suite", "model", "seed", "split", "task", "mse", "log10_mse", "baseline_mse", "ratio",
           "params", "epochs_run", "wall_s")

MOMENT_SETS = {
    "mean": ("mean",),
    "mean+std": ("mean", "std"),
    "mean+std+m3": ("mean", "std", "moment3"),
    "mean+std+m3+m4": ("mean", "std", "moment3", "moment4"),
    "mean+std+m3+m4+m5": ("mean", "std", "moment3", "moment4", "moment5"),
    "pna": DEFAULT_AGGREGATORS,
}

BASELINE_WIDTH = 20


@dataclass(frozen=True)
class RunSpec:
    suite: str
    label: str
    config: RunConfig
    seed: int
    breakdown: tuple[str, ...] = ()

    @property
    def stem(self) -> str:
        safe = self.label.replace("/", "_").replace(":", "_").replace("@", "_")
        return f"{safe}_seed{self.seed}"


@dataclass
class SuiteResult:
    csv_path: Path
    rows: list[dict] = field(default_factory=list)
    failed: list[RunSpec] = field(default_factory=list)


# -- planning -----------------------------------------------------------------


def plan_suite(kind: str, base: RunConfig, models: Sequence[str] | None = None) -> list[RunSpec]:
    if kind not in SUITES:
        raise ValueError(f"unknown suite {kind!r}; choose from {', '.join(SUITES)}")
    models = list(models) if models else list(LAYER_NAMES)
    for m in models:
        if m not in LAYER_NAMES:
            raise ValueError(f"unknown layer {m!r}; valid names: {', '.join(LAYER_NAMES)}")
    specs = []
    for seed in base.seeds:
        if kind == "multitask":
            specs += [RunSpec(kind, m, base.replace(layer=m), seed, ("family",)) for m in models]
        elif kind == "singletask":
            specs += [RunSpec(kind, f"{m}:{t}", base.replace(layer=m, tasks=(t,)), seed)
                      for m in models for t in TASKS]
        elif kind == "extrapolation":
            tr, va, te = SPLIT_RANGES["extrapolation"]
            cfg = base.replace(split="extrapolation", train_range=tr, valid_range=va, test_range=te)
            specs += [RunSpec(kind, m, cfg.replace(layer=m), seed, ("size",)) for m in models]
        elif kind == "moment_ablation":
            specs += [RunSpec(kind, name, base.replace(layer="pna", aggregators=aggs), seed)
                      for name, aggs in MOMENT_SETS.items()]
        else:
            specs.append(RunSpec(kind, f"pna@F{base.hidden}", base.replace(layer="pna"), seed))
            specs += [RunSpec(kind, f"{m}@F{BASELINE_WIDTH}", base.replace(layer=m, hidden=BASELINE_WIDTH), seed)
                      for m in models if m in BASELINES]
    return specs


def parameter_table(base: RunConfig, models: Iterable[str] = LAYER_NAMES,
                    widths: Sequence[int] = (16, 20)) -> list[dict]:
    """Exact parameter totals per (model, width); independent of data."""
    from .graphs import child_rng

    rows = []
    for m in models:
        for f in widths:
            net = Network(base.replace(layer=m, hidden=f), DegreeStats(1.0), child_rng(0, 0))
            rows.append(dict(model=m, hidden=f, params=net.num_parameters(), conv_params=net.conv_parameters()))
    return rows


# -- data cache ---------------------------------------------------------------


def dataset_key(cfg: RunConfig) -> str:
    spec = json.dumps([cfg.split, cfg.sizes, cfg.ranges, cfg.data_seed])
    return f"{cfg.split}-{hashlib.sha256(spec.encode()).hexdigest()[:12]}"


def cached_dataset(cfg: RunConfig, root: Path) -> Dataset:
    d = root / "data" / dataset_key(cfg)
    if (d / "test.jsonl").exists():
        return load_dataset(d)
    ds = build_dataset(cfg)
    tmp = d.with_name(d.name + f".tmp{os.getpid()}")
    save_dataset(ds, tmp)
    try:
        tmp.rename(d)
    except OSError:
        pass  # another worker got there first
    return ds


# -- CSV ----------------------------------------------------------------------


def _cell(key: str, value):
    if isinstance(value, float):
        if key == "log10_mse":
            return format_log10(value)
        return repr(value) if math.isfinite(value) else str(value)
    return value


def write_rows(rows: Sequence[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(k, r.get(k, "")) for k in COLUMNS})


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"metrics CSV lacks columns {sorted(missing)}")
        return [_parse_row(r) for r in reader]


def _parse_row(r: dict) -> dict:
    out = dict(r)
    out["seed"] = int(r["seed"]) if r["seed"] not in ("", None) else None
    for k in ("mse", "baseline_mse", "ratio", "wall_s"):
        out[k] = float(r[k]) if r[k] not in ("", None) else math.nan
    lg = r["log10_mse"]
    out["log10_mse"] = -math.inf if lg == "<-12" else float(lg) if lg not in ("", None) else math.nan
    for k in ("params", "epochs_run"):
        out[k] = int(r[k]) if r[k] not in ("", None) else None
    return out


# -- running ------------------------------------------------------------------


def run_one(spec: RunSpec, out_dir: str | Path) -> list[dict]:
    """Train and evaluate one run, or return its cached rows."""
    root = Path(out_dir)
    run_dir = root / "runs" / spec.suite
    frag = run_dir / f"{spec.stem}.csv"
    if frag.exists():
        return read_rows(frag)
    run_dir.mkdir(parents=True, exist_ok=True)
    data = cached_dataset(spec.config, root)
    log_path = run_dir / f"{spec.stem}.log.jsonl"
    with open(log_path, "w", encoding="utf-8") as lf:
        lf.write(json.dumps({"run": spec.label, "seed": spec.seed, "config": spec.config.to_ini()}) + "\n")
        result = train(spec.config, data, spec.seed, on_epoch=lambda row: lf.write(json.dumps(row) + "\n"))
    if result.failed:
        rows = [dict(suite=spec.suite, model=spec.label, seed=spec.seed, split="failed", task="combined",
                     mse=math.nan, log10_mse=math.nan, baseline_mse=math.nan, ratio=math.nan,
                     params=None, epochs_run=result.epochs_run, wall_s=result.wall_s)]
    else:
        save_checkpoint(Checkpoint.from_result(result), run_dir / f"{spec.stem}.ckpt")
        rows = evaluate(result, data.valid, "valid").rows(spec.suite, spec.label, spec.seed)
        rows += evaluate(result, data.test, "test", spec.breakdown).rows(spec.suite, spec.label, spec.seed)
    write_rows(rows, frag)
    return read_rows(frag)


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("PNA_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(requested or cap, cap))


def run_suite(kind: str, base: RunConfig, out_dir: str | Path, models: Sequence[str] | None = None,
              workers: int | None = None, progress: Callable[[RunSpec], None] | None = None) -> SuiteResult:
    """Run every (model, seed) of a suite and write ``<out>/<kind>.csv``."""
    root = Path(out_dir)
    specs = plan_suite(kind, base, models)
    rows: list[dict] = []
    if kind == "param_comparison":
        for p in parameter_table(base, [s.config.layer for s in specs if s.seed == base.seeds[0]]):
            rows.append(dict(suite=kind, model=f"{p['model']}@F{p['hidden']}", seed="", split="params",
                             task="-", params=p["params"]))
    # datasets are generated once up front so that workers only read them
    for cfg in {dataset_key(s.config): s.config for s in specs}.values():
        cached_dataset(cfg, root)
    n_workers = worker_count(workers)
    if n_workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_one, specs, [root] * len(specs)))
    else:
        results = []
        for s in specs:
            if progress:
                progress(s)
            results.append(run_one(s, root))
    failed = []
    for s, r in zip(specs, results):
        rows.extend(r)
        if any(x["split"] == "failed" for x in r):
            failed.append(s)
    path = root / f"{kind}.csv"
    write_rows(rows, path)
    return SuiteResult(path, read_rows(path), failed)
