"""Benchmark datasets: generation, the JSON-lines record format, and training batches.

One record per line, fields in this order::

    version, family, n, edges, source, random_feature,
    sssp, eccentricity, laplacian, is_connected, diameter, spectral_radius, node_mask

Floats are written with 17 significant digits so a load/save round trip is
exact and regeneration with the same seeds is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .batch import GraphBatch
from .config import RunConfig
from .graphs import Family, Graph, InputFeatures, attach_features, child_rng, sample_benchmark_graph
from .tasks import GRAPH_TASKS, NODE_TASKS, TASKS, LabelSet, compute_labels

FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "valid", "test")


class DataError(ValueError):
    pass


@dataclass
class Record:
    graph: Graph
    features: InputFeatures
    labels: LabelSet

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def family(self) -> str:
        return self.graph.family.value if self.graph.family is not None else "unknown"


def make_record(graph: Graph, features: InputFeatures) -> Record:
    return Record(graph, features, compute_labels(graph, features))


def generate_records(count: int, n_range: tuple[int, int], seed: int) -> list[Record]:
    """``count`` benchmark graphs; graph ``i`` depends only on ``(seed, i)``."""
    if count < 1:
        raise DataError("dataset must contain at least one graph")
    out = []
    for i in range(count):
        rng = child_rng(seed, i)
        g = sample_benchmark_graph(n_range, rng)
        out.append(make_record(g, attach_features(g, rng)))
    return out


@dataclass
class Dataset:
    train: list[Record]
    valid: list[Record]
    test: list[Record]

    def splits(self) -> dict[str, list[Record]]:
        return {"train": self.train, "valid": self.valid, "test": self.test}


def default_split_seeds(data_seed: int) -> tuple[int, int, int]:
    return 3 * data_seed, 3 * data_seed + 1, 3 * data_seed + 2


def build_dataset(config: RunConfig, split_seeds: Sequence[int] | None = None) -> Dataset:
    seeds = tuple(split_seeds) if split_seeds is not None else default_split_seeds(config.data_seed)
    if len(seeds) != 3 or len(set(seeds)) != 3:
        raise DataError(f"need three distinct split seeds, got {seeds}")
    parts = [generate_records(c, r, s) for c, r, s in zip(config.sizes, config.ranges, seeds)]
    return Dataset(*parts)


# -- serialization -------------------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _nums(a) -> str:
    return "[" + ",".join(_num(x) for x in a) + "]"


def record_to_json(rec: Record) -> str:
    g, f, lab = rec.graph, rec.features, rec.labels
    edges = "[" + ",".join(f"[{int(i)},{int(j)}]" for i, j in g.edges) + "]"
    parts = [
        f'"version":{FORMAT_VERSION}',
        f'"family":{json.dumps(rec.family)}',
        f'"n":{g.n}',
        f'"edges":{edges}',
        f'"source":{f.source}',
        f'"random_feature":{_nums(f.random_feature)}',
        f'"sssp":{_nums(lab.sssp)}',
        f'"eccentricity":{_nums(lab.eccentricity)}',
        f'"laplacian":{_nums(lab.laplacian)}',
        f'"is_connected":{_num(lab.is_connected)}',
        f'"diameter":{_num(lab.diameter)}',
        f'"spectral_radius":{_num(lab.spectral_radius)}',
        f'"node_mask":{_nums(lab.node_mask)}',
    ]
    return "{" + ",".join(parts) + "}"


def record_from_json(line: str) -> Record:
    try:
        d = json.loads(line)
        if d["version"] != FORMAT_VERSION:
            raise DataError(f"unsupported record version {d['version']}")
        n = int(d["n"])
        fam = None if d["family"] == "unknown" else Family(d["family"])
        g = Graph(n, np.array(d["edges"], dtype=np.int64).reshape(-1, 2), fam)
        onehot = np.zeros(n)
        onehot[int(d["source"])] = 1.0
        feats = InputFeatures(onehot, np.array(d["random_feature"], dtype=np.float64))
        lab = LabelSet(
            sssp=np.array(d["sssp"], dtype=np.float64),
            eccentricity=np.array(d["eccentricity"], dtype=np.float64),
            laplacian=np.array(d["laplacian"], dtype=np.float64),
            is_connected=float(d["is_connected"]),
            diameter=float(d["diameter"]),
            spectral_radius=float(d["spectral_radius"]),
            node_mask=np.array(d["node_mask"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"malformed record: {e}") from None
    for name in ("random_feature", "sssp", "eccentricity", "laplacian", "node_mask"):
        arr = feats.random_feature if name == "random_feature" else getattr(lab, name)
        if arr.shape != (n,):
            raise DataError(f"field {name} has length {len(arr)}, expected {n}")
    return Record(g, feats, lab)


def save_records(records: Sequence[Record], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def load_records(path: str | Path) -> list[Record]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [record_from_json(line) for line in fh if line.strip()]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


def save_dataset(ds: Dataset, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, recs in ds.splits().items():
        save_records(recs, d / f"{name}.jsonl")


def load_dataset(directory: str | Path) -> Dataset:
    d = Path(directory)
    return Dataset(*(load_records(d / f"{name}.jsonl") for name in SPLIT_NAMES))


# -- batches ------------------------------------------------------------------


@dataclass
class DataBatch:
    """A graph batch with inputs, labels and the originating record indices."""

    graphs: GraphBatch
    index: np.ndarray          # record index of every graph in the batch
    source: np.ndarray         # one-hot source per node
    random_feature: np.ndarray
    y_node: np.ndarray         # N x 3 in NODE_TASKS order
    node_mask: np.ndarray      # N x 3
    y_graph: np.ndarray        # G x 3 in GRAPH_TASKS order
    families: np.ndarray       # family name per graph

    @property
    def x(self) -> np.ndarray:
        return np.stack([self.source, self.random_feature], axis=1)

    def with_random_feature(self, rf: np.ndarray) -> "DataBatch":
        """Same batch with a new random feature and its recomputed Laplacian label."""
        gb = self.graphs
        lap = gb.degrees * rf - np.bincount(gb.dst.ids, weights=rf[gb.src.ids], minlength=gb.num_nodes)
        y = self.y_node.copy()
        y[:, NODE_TASKS.index("laplacian")] = lap
        return DataBatch(gb, self.index, self.source, rf, y, self.node_mask, self.y_graph, self.families)


def make_batch(records: Sequence[Record], index: Sequence[int]) -> DataBatch:
    recs = [records[i] for i in index]
    gb = GraphBatch.from_graphs([r.graph for r in recs])
    y_node = np.concatenate([r.labels.node_matrix() for r in recs])
    sssp_mask = np.concatenate([r.labels.node_mask for r in recs])
    mask = np.ones_like(y_node)
    mask[:, NODE_TASKS.index("sssp")] = sssp_mask
    return DataBatch(
        graphs=gb,
        index=np.asarray(index, dtype=np.int64),
        source=np.concatenate([r.features.onehot_source for r in recs]),
        random_feature=np.concatenate([r.features.random_feature for r in recs]),
        y_node=y_node,
        node_mask=mask,
        y_graph=np.stack([r.labels.graph_vector() for r in recs]),
        families=np.array([r.family for r in recs]),
    )


def bucketed_batches(records: Sequence[Record], batch_size: int) -> list[DataBatch]:
    """Batches of graphs with similar node counts (stable sort by size)."""
    order = sorted(range(len(records)), key=lambda i: (records[i].n, i))
    return [make_batch(records, order[k:k + batch_size]) for k in range(0, len(order), batch_size)]


def iter_task_columns(tasks: Sequence[str]) -> Iterator[tuple[str, str, int]]:
    """(task, 'node'|'graph', column) for each selected task, in canonical order."""
    for t in TASKS:
        if t in tasks:
            if t in NODE_TASKS:
                yield t, "node", NODE_TASKS.index(t)
            else:
                yield t, "graph", GRAPH_TASKS.index(t)
