"""Binary checkpoint format.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"PNACKPT1"
    offset 8   4 bytes   uint32 header length H
    offset 12  H bytes   UTF-8 JSON header
    offset 12+H          tensor payload: row-major float64, little-endian

The header is an object with keys

* ``config``: the RunConfig as a field -> value map (tuples become lists)
* ``delta``: the fitted log-degree normaliser
* ``label_stats``: ``{"mean": {task: float}, "std": {task: float}}``
* ``meta``: free-form run information (seed, best epoch, epochs run, ...)
* ``tensors``: list of ``{"name", "shape", "offset"}`` where ``offset`` is
  the byte offset of the tensor inside the payload, in parameter order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregation import DegreeStats
from .config import RunConfig
from .model import Network
from .training import LabelStats, TrainResult

MAGIC = b"PNACKPT1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    degree_stats: DegreeStats
    label_stats: LabelStats
    state: dict[str, np.ndarray]
    meta: dict

    def network(self) -> Network:
        from .graphs import child_rng

        net = Network(self.config, self.degree_stats, child_rng(0, 0))
        try:
            net.load_state_dict(self.state)
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"checkpoint does not match its config: {e}") from None
        return net

    @classmethod
    def from_result(cls, result: TrainResult) -> "Checkpoint":
        if result.network is None:
            raise CheckpointError("failed runs have no checkpoint")
        meta = dict(seed=result.seed, best_epoch=result.best_epoch, epochs_run=result.epochs_run,
                    best_valid_log10=result.best_valid_log10, wall_s=result.wall_s)
        return cls(result.config, result.degree_stats, result.label_stats, result.network.state_dict(), meta)


def _config_json(cfg: RunConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.to_dict().items()}


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    tensors, offset = [], 0
    for name, arr in ckpt.state.items():
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "config": _config_json(ckpt.config),
        "delta": ckpt.degree_stats.delta,
        "label_stats": ckpt.label_stats.to_dict(),
        "meta": ckpt.meta,
        "tensors": tensors,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for arr in ckpt.state.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from None
    if raw[:8] != MAGIC or len(raw) < 12:
        raise CheckpointError(f"{path} is not a checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        cfg_raw = {k: tuple(v) if isinstance(v, list) else v for k, v in header["config"].items()}
        cfg = RunConfig(**cfg_raw)
        payload = memoryview(raw)[12 + hlen:]
        state = {}
        for t in header["tensors"]:
            count = int(np.prod(t["shape"])) if t["shape"] else 1
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=t["offset"])
            state[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
        lstats = LabelStats(header["label_stats"]["mean"], header["label_stats"]["std"])
        return Checkpoint(cfg, DegreeStats(header["delta"]), lstats, state, header["meta"])
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
