"""Run configuration and its INI representation.

Every field lives in one of four sections::

    [model]  layer, hidden, architecture, standard_depth, towers, aggregators, scalers, dropout
    [train]  lr, weight_decay, batch_size, max_epochs, patience, seeds, top_k,
             label_scaling, resample_features
    [data]   split, n_train, n_valid, n_test, train_range, valid_range, test_range, data_seed
    [tasks]  tasks

Lists are comma separated; ``tasks = all`` selects the six benchmark tasks.
Unknown keys are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import DEFAULT_AGGREGATORS, DEFAULT_SCALERS, parse_aggregator, parse_scaler
from .layers import LAYER_NAMES
from .tasks import TASKS

ARCHITECTURES = ("recurrent", "standard")
SPLITS = ("standard", "extrapolation")
LABEL_SCALINGS = ("raw", "zscore")

SPLIT_RANGES = {
    "standard": ((15, 50), (15, 50), (15, 50)),
    "extrapolation": ((15, 25), (25, 30), (20, 50)),
}


class ConfigError(ValueError):
    pass


def _f(section: str, default, **kw):
    if isinstance(default, (list, tuple)):
        return field(default_factory=lambda: tuple(default), metadata={"section": section}, **kw)
    return field(default=default, metadata={"section": section}, **kw)


@dataclass(frozen=True)
class RunConfig:
    layer: str = _f("model", "pna")
    hidden: int = _f("model", 16)
    architecture: str = _f("model", "recurrent")
    standard_depth: int = _f("model", 8)
    towers: int = _f("model", 4)
    aggregators: tuple = _f("model", DEFAULT_AGGREGATORS)
    scalers: tuple = _f("model", DEFAULT_SCALERS)
    dropout: float = _f("model", 0.0)

    lr: float = _f("train", 1e-3)
    weight_decay: float = _f("train", 1e-5)
    batch_size: int = _f("train", 128)
    max_epochs: int = _f("train", 1500)
    patience: int = _f("train", 300)
    seeds: tuple = _f("train", (0, 1, 2, 3, 4))
    top_k: int = _f("train", 3)
    label_scaling: str = _f("train", "raw")
    resample_features: bool = _f("train", True)

    split: str = _f("data", "standard")
    n_train: int = _f("data", 5120)
    n_valid: int = _f("data", 640)
    n_test: int = _f("data", 1280)
    train_range: tuple = _f("data", (15, 50))
    valid_range: tuple = _f("data", (15, 50))
    test_range: tuple = _f("data", (15, 50))
    data_seed: int = _f("data", 0)

    tasks: tuple = _f("tasks", TASKS)

    def __post_init__(self):
        if self.layer not in LAYER_NAMES:
            raise ConfigError(f"unknown layer {self.layer!r}; valid names: {', '.join(LAYER_NAMES)}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}")
        if self.label_scaling not in LABEL_SCALINGS:
            raise ConfigError(f"label_scaling must be one of {LABEL_SCALINGS}")
        if self.hidden < 1 or self.towers < 1 or self.hidden % self.towers:
            raise ConfigError(f"hidden={self.hidden} must be a positive multiple of towers={self.towers}")
        if not 0 < self.patience <= self.max_epochs:
            raise ConfigError("need 0 < patience <= max_epochs")
        if self.batch_size < 1 or self.standard_depth < 1:
            raise ConfigError("batch_size and standard_depth must be positive")
        if not self.seeds or not 1 <= self.top_k <= len(self.seeds):
            raise ConfigError("need 1 <= top_k <= number of seeds")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if not self.tasks or any(t not in TASKS for t in self.tasks):
            raise ConfigError(f"tasks must be a non-empty subset of {TASKS}")
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigError("duplicate task")
        for r in (self.train_range, self.valid_range, self.test_range):
            if len(r) != 2 or r[0] < 2 or r[1] < r[0]:
                raise ConfigError(f"invalid node range {r}")
        try:
            for a in self.aggregators:
                parse_aggregator(a)
            for s in self.scalers:
                parse_scaler(s)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def ranges(self) -> tuple[tuple[int, int], ...]:
        return self.train_range, self.valid_range, self.test_range

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.n_train, self.n_valid, self.n_test

    @classmethod
    def for_split(cls, split: str, **kw) -> "RunConfig":
        """Config with the node ranges of a named split filled in."""
        tr, va, te = SPLIT_RANGES[split]
        return cls(split=split, train_range=tr, valid_range=va, test_range=te, **kw)

    @classmethod
    def paper_protocol(cls, **kw) -> "RunConfig":
        """Full-length protocol: 10,000 epochs, patience 1,000, best 5 of 10 seeds."""
        base = dict(max_epochs=10_000, patience=1_000, seeds=tuple(range(10)), top_k=5)
        base.update(kw)
        return cls(**base)

    # -- INI ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_ini(self) -> str:
        sections: dict[str, list[str]] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            text = ", ".join(map(str, v)) if isinstance(v, tuple) else str(v)
            sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {text}")
        return "\n".join(f"[{sec}]\n" + "\n".join(rows) + "\n" for sec, rows in sections.items())

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                f = known.get(key)
                if f is None or f.metadata["section"] != sec:
                    raise ConfigError(f"unknown key [{sec}] {key}")
                values[key] = _coerce(f, raw)
        if values.get("split") in SPLIT_RANGES:
            for name, r in zip(("train_range", "valid_range", "test_range"), SPLIT_RANGES[values["split"]]):
                values.setdefault(name, r)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            return cls.from_ini(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ini(), encoding="utf-8")


_INT_TUPLES = {"seeds", "train_range", "valid_range", "test_range"}


def _coerce(f: dataclasses.Field, raw: str):
    raw = raw.strip()
    try:
        if f.name in _INT_TUPLES:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if f.name == "tasks" and raw == "all":
            return TASKS
        if f.name in ("aggregators", "scalers", "tasks"):
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if f.name == "resample_features":
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        default = f.default
        if isinstance(default, bool):
            return raw.lower() in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
