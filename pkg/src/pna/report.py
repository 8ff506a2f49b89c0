"""Aggregate suite CSVs into markdown tables (and optional SVG charts).

Seeds are ranked by their validation combined log10 MSE; each table averages
the best ``k`` seeds per (suite, model).
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .suites import MOMENT_SETS, read_rows
from .tasks import TASKS
from .training import SIZE_BUCKETS

TASK_COLUMNS = TASKS + ("combined",)


def _key(r: dict) -> tuple[str, str]:
    return r["suite"], r["model"]


def select_top_k(rows: Sequence[dict], k: int) -> dict[tuple[str, str], list[int]]:
    """Best ``k`` seeds per (suite, model) by validation combined log10 MSE."""
    scores: dict[tuple[str, str], list[tuple[float, int]]] = defaultdict(list)
    for r in rows:
        if r["split"] == "valid" and r["task"] == "combined" and r["seed"] is not None:
            scores[_key(r)].append((r["log10_mse"], r["seed"]))
    return {key: [s for _, s in sorted(v)[:k]] for key, v in scores.items()}


def summarize(rows: Sequence[dict], k: int, split: str = "test", field: str = "log10_mse",
              stat=np.mean) -> dict[tuple[str, str], dict[str, float]]:
    """``{(suite, model): {task: stat over top-k seeds}}`` for one split label."""
    chosen = select_top_k(rows, k)
    acc: dict[tuple[str, str], dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        key = _key(r)
        if r["split"] == split and r["seed"] in chosen.get(key, ()):
            acc[key][r["task"]].append(r[field])
    return {key: {t: float(stat(v)) for t, v in tasks.items()} for key, tasks in acc.items()}


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    if x == -math.inf:
        return "<-12"
    return f"{x:.3f}"


def _table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines)


def _suite_rows(rows, suite):
    return [r for r in rows if r["suite"] == suite]


def render(rows: Sequence[dict], k: int = 3) -> str:
    if not rows:
        return "# Report\n\nno runs\n"
    out = ["# Report", "", f"Means over the best {k} seeds by validation error.", ""]
    suites = sorted({r["suite"] for r in rows})
    for suite in suites:
        srows = _suite_rows(rows, suite)
        out += [f"## {suite}", ""]
        if suite == "param_comparison":
            params = sorted({(r["model"], r["params"]) for r in srows if r["split"] == "params"})
            out += [_table(["model", "parameters"], [[m, str(p)] for m, p in params]), ""]
        summary = summarize(srows, k)
        if not summary:
            out += ["no completed runs", ""]
            continue
        models = sorted(m for _, m in summary)
        if suite == "moment_ablation":
            models = [m for m in MOMENT_SETS if m in models]
        out += ["Test log10 MSE per task:", ""]
        body = [[m] + [_fmt(summary[(suite, m)].get(t, math.nan)) for t in TASK_COLUMNS] for m in models]
        out += [_table(["model", *TASK_COLUMNS], body), ""]
        buckets = [f"n={lo}-{hi}" for lo, hi in SIZE_BUCKETS]
        ratio_rows = []
        for m in models:
            vals = []
            for b in buckets:
                s = summarize(srows, k, f"test@{b}", "ratio", np.median).get((suite, m), {})
                vals.append(_fmt(s.get("combined", math.nan)))
            if any(v != "-" for v in vals):
                ratio_rows.append([m] + vals)
        if ratio_rows:
            out += ["Combined MSE / baseline MSE by test graph size (median over seeds):", ""]
            out += [_table(["model", *buckets], ratio_rows), ""]
        fam_keys = sorted({r["split"] for r in srows if r["split"].startswith("test@family=")})
        if fam_keys:
            fam_rows = []
            for fk in fam_keys:
                fam = fk.split("=", 1)[1]
                row = [fam]
                for m in models:
                    s = summarize(srows, k, fk).get((suite, m), {})
                    row.append(_fmt(s.get("combined", math.nan)))
                fam_rows.append(row)
            out += ["Combined test log10 MSE per graph family:", ""]
            out += [_table(["family", *models], fam_rows), ""]
        failed = sorted({(r["model"], r["seed"]) for r in srows if r["split"] == "failed"})
        if failed:
            out += ["Failed runs: " + ", ".join(f"{m} seed {s}" for m, s in failed), ""]
    return "\n".join(out)


def write_charts(rows: Sequence[dict], out_dir: Path, k: int = 3) -> list[Path]:
    """Bar chart of combined test log10 MSE per suite; empty list when matplotlib is missing."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    paths = []
    for suite in sorted({r["suite"] for r in rows}):
        summary = summarize(_suite_rows(rows, suite), k)
        if not summary:
            continue
        models = sorted(m for _, m in summary)
        vals = [summary[(suite, m)].get("combined", math.nan) for m in models]
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar(models, [v if math.isfinite(v) else -12 for v in vals])
        ax.set_ylabel("combined test log10 MSE")
        ax.set_title(suite)
        ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        p = out_dir / f"{suite}.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        paths.append(p)
    return paths


def build_report(csv_paths: Sequence[str | Path], out_dir: str | Path, k: int = 3, charts: bool = True) -> Path:
    rows = []
    for p in csv_paths:
        rows.extend(read_rows(p))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.md"
    path.write_text(render(rows, k), encoding="utf-8")
    if charts and rows:
        write_charts(rows, out, k)
    return path
