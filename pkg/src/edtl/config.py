"""Experiment configuration, loaded from YAML."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from edtl.dataset import AnomalySpec
from edtl.nn import TrainConfig
from edtl.simulator import TARGETS, LineProfile, stock_profiles
from edtl.svr import SVRHyperParams
from edtl.transfer import DEFAULT_HIDDEN

METHODS = ("direct", "transfer", "edtl", "knn")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    kind: str = "simulated"  # "simulated" or "csv"
    source_profile: str = "A2"
    target_profile: str = "A1"
    n_source: int = 20000
    n_target: int = 2000
    dt: float = 0.1
    # csv mode: paths may contain "{target}", replaced by the target name,
    # which is also the label column.
    source_csv: str | None = None
    target_csv: str | None = None
    profiles: dict = field(default_factory=dict)  # extra or overriding LineProfiles

    def profile(self, name: str) -> LineProfile:
        if name in self.profiles:
            return LineProfile.from_dict({"name": name, **self.profiles[name]})
        stock = stock_profiles()
        if name not in stock:
            raise ConfigError(f"unknown line profile {name!r}")
        return stock[name]


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    targets: tuple[str, ...] = ("E",)
    fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    methods: tuple[str, ...] = ("direct", "transfer", "edtl")
    anomaly: AnomalySpec | None = None
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    test_fraction: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    svr: SVRHyperParams = field(default_factory=SVRHyperParams)
    stacking_mode: str = "in_sample"
    folds: int = 5
    train_output: bool = True
    target_scaler: str = "fresh"
    knn_k: int = 5
    select_k: int | None = None
    workers: int = 1
    record_wall_time: bool = True

    def __post_init__(self):
        for name in ("targets", "fractions", "methods", "seeds", "hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if any(not 0 < f <= 1 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1]")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        bad = set(self.targets) - set(TARGETS) if self.data.kind == "simulated" else set()
        if bad:
            raise ConfigError(f"unknown targets {sorted(bad)}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.data.kind not in ("simulated", "csv"):
            raise ConfigError(f"unknown data kind {self.data.kind!r}")

    @property
    def conditions(self) -> tuple[str, ...]:
        return ("clean", "anomalous") if self.anomaly is not None else ("clean",)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("targets", "fractions", "methods", "seeds", "hidden"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "data" in d:
            d["data"] = _build(DataConfig, d["data"])
        if "train" in d:
            d["train"] = _build(TrainConfig, d["train"])
        if "svr" in d:
            d["svr"] = _build(SVRHyperParams, d["svr"])
        if d.get("anomaly") is not None:
            d["anomaly"] = _build(AnomalySpec, d["anomaly"])
        return cls(**d)

    def override(self, **changes) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _build(klass, value):
    if isinstance(value, klass):
        return value
    known = {f.name for f in fields(klass)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys for {klass.__name__}: {sorted(unknown)}")
    return klass(**value)


def load_config(path) -> ExperimentConfig:
    with Path(path).open(encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
