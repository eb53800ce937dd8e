"""Single-network predictors and on-disk model directories."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from edtl.dataset import Dataset, FeatureSchema, ScalerParams, fit_scaler
from edtl.ensemble import EDTLModel, config_hash, load_edtl
from edtl.nn import NetworkParams, TrainConfig, init_network, network_from_dict, network_to_dict, train
from edtl.transfer import (DEFAULT_HIDDEN, BaseModelSpec, PretrainedModel, adapt_input,
                           fine_tune, make_base_specs, network_dims)


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NetModel:
    """A network plus the scaler and schema it was trained under."""

    net: NetworkParams
    scaler: ScalerParams
    schema: FeatureSchema
    method: str
    config: dict | None = None

    def predict(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != len(self.schema):
            raise ModelError(f"expected {len(self.schema)} features, got {rows.shape[1]}")
        return np.atleast_1d(self.scaler.inverse_targets(
            self.net.predict(self.scaler.transform_rows(rows))))


def fit_direct(target_train: Dataset, cfg: TrainConfig,
               hidden: tuple[int, ...] = DEFAULT_HIDDEN) -> NetModel:
    scaler = fit_scaler(target_train)
    net = init_network(network_dims(target_train.n_features, hidden), cfg.seed)
    net = train(net, scaler.transform(target_train), cfg)
    return NetModel(net, scaler, target_train.schema, "direct",
                    {"train": asdict(cfg), "hidden": list(hidden)})


def fit_transfer(pre: PretrainedModel, target_train: Dataset, cfg: TrainConfig,
                 train_output: bool = True) -> NetModel:
    """Adapt the input layer, then fine-tune every layer.

    Seeds match the ``tune_all`` base model of the stacked ensemble under
    the same config, so that base model is exactly this one.
    """
    scaler = fit_scaler(target_train)
    adapted = adapt_input(pre, target_train.schema, cfg.seed)
    offset = len(make_base_specs(pre.n_hidden)) - 1
    net = fine_tune(adapted, BaseModelSpec("tune_all"), scaler.transform(target_train),
                    cfg.with_seed(cfg.seed + offset), train_output)
    return NetModel(net, scaler, target_train.schema, "transfer",
                    {"train": asdict(cfg), "train_output": train_output})


# -- directories -----------------------------------------------------------------

def _write_manifest(d: Path, manifest: dict) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return d


def save_pretrained(pre: PretrainedModel, directory, config: TrainConfig | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "network.json").write_text(json.dumps(network_to_dict(pre.net, config)))
    return _write_manifest(d, {
        "kind": "pretrained", "network": "network.json",
        "source_schema": pre.source_schema.to_dict(), "scaler": pre.scaler.to_dict(),
        "train_mse": pre.train_mse, "val_mse": pre.val_mse})


def save_net_model(model: NetModel, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "network.json").write_text(json.dumps(network_to_dict(model.net)))
    return _write_manifest(d, {
        "kind": "network", "method": model.method, "network": "network.json",
        "schema": model.schema.to_dict(), "scaler": model.scaler.to_dict(),
        "config": model.config, "config_hash": config_hash(model.config)})


def _manifest(directory) -> tuple[Path, dict]:
    d = Path(directory)
    path = d / "manifest.json"
    if not path.is_file():
        raise ModelError(f"{d}: no manifest.json")
    return d, json.loads(path.read_text())


def load_pretrained(directory) -> PretrainedModel:
    d, m = _manifest(directory)
    if m.get("kind") != "pretrained":
        raise ModelError(f"{d} does not hold a pretrained model")
    net = network_from_dict(json.loads((d / m["network"]).read_text()))
    return PretrainedModel(net, FeatureSchema.from_dict(m["source_schema"]),
                           ScalerParams.from_dict(m["scaler"]), m["train_mse"], m["val_mse"])


def load_model(directory) -> NetModel | EDTLModel:
    """Load any trained target model directory (direct, transfer or edtl)."""
    d, m = _manifest(directory)
    kind = m.get("kind")
    if kind == "edtl":
        return load_edtl(d)
    if kind == "network":
        net = network_from_dict(json.loads((d / m["network"]).read_text()))
        return NetModel(net, ScalerParams.from_dict(m["scaler"]),
                        FeatureSchema.from_dict(m["schema"]), m["method"], m["config"])
    raise ModelError(f"{d}: cannot predict with a model of kind {kind!r}")
