"""Command line entry point: ``pna {generate,train,eval,suite,theory,report}``.

Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 numeric failure.
``PNA_THREADS`` caps the number of worker processes used by ``suite``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import SPLIT_RANGES, ConfigError, RunConfig
from .data import DataError, Dataset, bucketed_batches, generate_records, load_dataset, save_records
from .layers import LAYER_NAMES
from .suites import SUITES, run_suite, write_rows
from .tensor import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _echo(out: Path, args: argparse.Namespace) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    (out / "command.json").write_text(json.dumps(flags, indent=1, sort_keys=True, default=str) + "\n")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "layer", None):
        cfg = cfg.replace(layer=args.layer)
    if args.seed is not None:
        cfg = cfg.replace(seeds=(args.seed,), top_k=1) if args.command == "train" else cfg.replace(data_seed=args.seed)
    return cfg


# -- generate -------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.count <= 0:
        raise DataError("--count must be positive (empty dataset)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.split == "extrapolation":
        ranges = SPLIT_RANGES["extrapolation"]
    else:
        lo = args.n_min if args.n_min is not None else 15
        hi = args.n_max if args.n_max is not None else 50
        ranges = ((lo, hi),) * 3
    counts = (args.count, args.valid_count or max(1, args.count // 8), args.test_count or max(1, args.count // 4))
    seed = args.seed if args.seed is not None else 0
    for name, c, r, s in zip(("train", "valid", "test"), counts, ranges, (3 * seed, 3 * seed + 1, 3 * seed + 2)):
        save_records(generate_records(c, r, s), out / f"{name}.jsonl")
        print(f"{name}: {c} graphs, n in [{r[0]}, {r[1]}] -> {out / (name + '.jsonl')}")
    _echo(out, args)
    return EXIT_OK


# -- train / eval ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    if args.data:
        data = load_dataset(args.data)
    elif args.dry_run:
        recs = generate_records(4, cfg.train_range, 0)
        data = Dataset(recs, recs, recs)
    else:
        from .data import build_dataset

        data = build_dataset(cfg)
    from .aggregation import fit_delta
    from .model import build_network
    from .training import LabelStats, batch_loss

    net = build_network(cfg, fit_delta([r.graph for r in data.train]), seed)
    print(f"layer={cfg.layer} hidden={cfg.hidden} architecture={cfg.architecture} "
          f"parameters={net.num_parameters()} (convolutions {net.conv_parameters()})")
    if cfg.layer != "gcn":
        ref = build_network(cfg.replace(layer="gcn"), fit_delta([r.graph for r in data.train]), seed)
        print(f"relative to gcn at the same width: {100 * (net.num_parameters() / ref.num_parameters() - 1):+.1f}%")
    if args.dry_run:
        b = bucketed_batches(data.train, cfg.batch_size)[0]
        with T.new_tape():
            node, graph = net(b.x, b.graphs)
            loss = batch_loss(net, b, cfg, LabelStats.fit(data.train))
            loss.backward()
        print(f"input {b.x.shape} node_preds {None if node is None else node.shape} "
              f"graph_preds {None if graph is None else graph.shape} loss {loss.item():.6g}")
        for name, p in net.named_parameters():
            print(f"  {name} {p.shape}")
        return EXIT_OK
    from .training import evaluate, train

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as lf:
        lf.write(json.dumps({"argv": sys.argv[1:], "config": cfg.to_ini()}) + "\n")
        res = train(cfg, data, seed, on_epoch=lambda row: lf.write(json.dumps(row) + "\n"))
    if res.failed:
        print(f"training diverged: {res.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    ckpt = Checkpoint.from_result(res)
    ckpt.meta["argv"] = sys.argv[1:]
    save_checkpoint(ckpt, out)
    rows = evaluate(res, data.valid, "valid").rows("train", cfg.layer, seed)
    rows += evaluate(res, data.test, "test").rows("train", cfg.layer, seed)
    write_rows(rows, out.with_suffix(".csv"))
    combined = [r for r in rows if r["split"] == "test" and r["task"] == "combined"][0]
    print(f"best epoch {res.best_epoch}/{res.epochs_run}; test combined log10 MSE {combined['log10_mse']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    records = load_dataset(args.data).splits()[args.split]
    from .training import evaluate_batches

    net = ckpt.network()
    breakdown = [b for b in (args.breakdown or "").split(",") if b]
    for b in breakdown:
        if b not in ("family", "size"):
            raise UsageError(f"unknown breakdown {b!r} (family, size)")
    m = evaluate_batches(net, bucketed_batches(records, ckpt.config.batch_size), ckpt.config,
                         ckpt.label_stats, args.split, breakdown)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(m.rows("eval", ckpt.config.layer, ckpt.meta.get("seed", "")), out / "metrics.csv")
    _echo(out, args)
    for r in m.overall.rows():
        print(f"{r['task']:>16}  mse {r['mse']:.6g}  log10 {r['log10_mse']:.4f}  ratio {r['ratio']:.4g}")
    return EXIT_OK


# -- suite / report ---------------------------------------------------------------


def cmd_suite(args) -> int:
    cfg = _config(args)
    if args.seeds:
        seeds = tuple(int(s) for s in args.seeds.split(","))
        cfg = cfg.replace(seeds=seeds, top_k=min(cfg.top_k, len(seeds)))
    models = None if args.models in (None, "all") else args.models.split(",")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args)
    (out / f"{args.kind}.ini").write_text(cfg.to_ini())
    if args.kind == "param_comparison" and args.counts_only:
        from .suites import parameter_table

        rows = parameter_table(cfg, models or LAYER_NAMES)
        for r in rows:
            print(f"{r['model']:>14}  F={r['hidden']:<3} params={r['params']:<7} conv={r['conv_params']}")
        csv_rows = [dict(suite="param_comparison", model=f"{r['model']}@F{r['hidden']}", seed="",
                         split="params", task="-", params=r["params"]) for r in rows]
        write_rows(csv_rows, out / "param_comparison.csv")
        return EXIT_OK
    res = run_suite(args.kind, cfg, out, models, args.workers,
                    progress=lambda s: print(f"[{args.kind}] {s.label} seed {s.seed}", flush=True))
    print(f"wrote {res.csv_path}")
    if res.failed:
        print("failed runs: " + ", ".join(f"{s.label}/{s.seed}" for s in res.failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report

    for p in args.inputs:
        if not Path(p).exists():
            raise DataError(f"no such metrics file {p}")
    try:
        path = build_report(args.inputs, args.out, args.top_k, charts=not args.no_charts)
    except ValueError as e:
        raise DataError(str(e)) from None
    print(path.read_text())
    return EXIT_OK


# -- theory -----------------------------------------------------------------------


def _ints(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def cmd_theory(args) -> int:
    from . import theory as th

    result: dict = {"check": args.check}
    if args.check == "recover":
        values = [float(x) for x in args.values.split(",")]
        mu, moms = th.normalized_moments(values)
        rec = th.recover_from_moments(mu, moms, len(values))
        err = float(np.max(np.abs(rec - np.sort(values))))
        print(f"mean {mu:.12g} moments {', '.join(f'{m:.12g}' for m in moms)}")
        print(f"recovered {', '.join(f'{x:.12g}' for x in rec)} (max error {err:.3g})")
        ok = err <= 1e-6
        result.update(recovered=rec.tolist(), max_error=err)
    elif args.check == "scaled-mean":
        feats = _ints(args.features)
        ok = True
        for agg in ("scaled_mean", "mean", "sum"):
            rep = th.injective_scaled_mean_check(feats, args.max_size, agg)
            verdict = "injective" if rep.injective else f"collision {rep.witness[0]} vs {rep.witness[1]}"
            extra = "" if rep.decoded is None else f", decode {'ok' if rep.decoded else 'FAILED'}"
            print(f"{agg:>12}: {rep.num_multisets} multisets, {verdict}{extra}")
            result[agg] = dict(injective=rep.injective, witness=rep.witness, decoded=rep.decoded)
            ok &= rep.passed if agg == "scaled_mean" else not rep.injective
    else:
        aggs = args.aggregators.split(",")
        values = _ints(args.values)
        lattice = th.collision_lattice(aggs, values, args.size)
        ok = th.is_monotone(lattice)
        for subset, count in lattice.items():
            pair = th.aggregator_counterexample_search(subset, values, exact_size=args.size)
            shown = f"{pair[0]} vs {pair[1]}" if pair else "none"
            print(f"{'+'.join(subset):>24}: {count:4d} colliding pairs, first {shown}")
            if len(subset) < len(aggs):
                ok &= pair is not None
        result["lattice"] = {"+".join(k): v for k, v in lattice.items()}
    result["pass"] = bool(ok)
    print(f"RESULT {args.check} {'pass' if ok else 'fail'}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"theory-{args.check}.json").write_text(json.dumps(result, indent=1, default=list) + "\n")
    return EXIT_OK if ok else EXIT_NUMERIC


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pna", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None,
                        help="data seed (generate, suite) or training seed (train)")
        sp.add_argument("--out", required=out_required)

    g = sub.add_parser("generate", help="write train/valid/test dataset files")
    common(g)
    g.add_argument("--split", choices=("standard", "extrapolation"), default="standard")
    g.add_argument("--n-min", type=int)
    g.add_argument("--n-max", type=int)
    g.add_argument("--count", type=int, default=5120, help="training graphs")
    g.add_argument("--valid-count", type=int)
    g.add_argument("--test-count", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one model and write a checkpoint")
    common(t, out_required=False)
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--layer", help=f"override the layer ({', '.join(LAYER_NAMES)})")
    t.add_argument("--dry-run", action="store_true", help="one forward/backward pass, then exit")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "valid", "test"), default="test")
    e.add_argument("--breakdown", help="comma list of family,size")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("suite", help="run an experiment suite")
    common(s)
    s.add_argument("--kind", choices=SUITES, required=True)
    s.add_argument("--config")
    s.add_argument("--models", default="all")
    s.add_argument("--seeds", help="comma list overriding the config seeds")
    s.add_argument("--workers", type=int)
    s.add_argument("--counts-only", action="store_true", help="param_comparison: parameter table only")
    s.set_defaults(func=cmd_suite)

    th = sub.add_parser("theory", help="constructive multiset checks")
    common(th, out_required=False)
    th.add_argument("check", choices=("recover", "scaled-mean", "counterexample"))
    th.add_argument("--values", default="0-4", help="multiset for recover; value range for counterexample")
    th.add_argument("--features", default="1,2,3")
    th.add_argument("--max-size", type=int, default=4)
    th.add_argument("--aggregators", default="mean,max,min,std")
    th.add_argument("--size", type=int, default=3)
    th.set_defaults(func=cmd_theory)

    r = sub.add_parser("report", help="aggregate metrics CSVs into tables")
    common(r)
    r.add_argument("--in", dest="inputs", nargs="+", required=True)
    r.add_argument("--top-k", type=int, default=3)
    r.add_argument("--no-charts", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "train" and not args.dry_run and not args.out:
        parser.error("train needs --out unless --dry-run is given")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
