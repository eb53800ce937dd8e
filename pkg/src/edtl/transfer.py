"""Source-domain pretraining, input adaptation and freeze strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from edtl.dataset import Dataset, FeatureSchema, ScalerParams, fit_scaler, split
from edtl.nn import (FreezeMask, NetworkParams, TrainConfig, he_uniform_layer,
                     init_network, mse_loss, train)

DEFAULT_HIDDEN = (64, 64, 64, 64, 64)


class TransferError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PretrainedModel:
    net: NetworkParams
    source_schema: FeatureSchema
    scaler: ScalerParams
    train_mse: float
    val_mse: float

    def __post_init__(self):
        if self.net.in_dim != len(self.source_schema):
            raise TransferError("network input does not match source schema")

    @property
    def n_hidden(self) -> int:
        """Hidden weight layers between the input layer and the head."""
        return len(self.net) - 2


@dataclass(frozen=True)
class BaseModelSpec:
    """``tune_hidden`` with ``layer=j`` (1-based) or ``tune_all``."""

    strategy: str
    layer: int | None = None

    def __post_init__(self):
        if self.strategy == "tune_hidden":
            if self.layer is None or self.layer < 1:
                raise TransferError("tune_hidden needs a 1-based layer index")
        elif self.strategy == "tune_all":
            if self.layer is not None:
                raise TransferError("tune_all takes no layer")
        else:
            raise TransferError(f"unknown strategy {self.strategy!r}")

    @property
    def description(self) -> str:
        if self.strategy == "tune_all":
            return "fine-tune every layer"
        return f"fine-tune adaptation layer, hidden layer {self.layer} and head"

    @property
    def name(self) -> str:
        return "tune_all" if self.strategy == "tune_all" else f"tune_hidden_{self.layer}"

    def mask(self, n_layers: int, train_output: bool = True) -> FreezeMask:
        """Layer 0 is the adaptation layer, 1..J the hidden layers, the last
        one the linear head."""
        if self.strategy == "tune_all":
            return FreezeMask.all_trainable(n_layers)
        if self.layer > n_layers - 2:
            raise TransferError(f"network has no hidden layer {self.layer}")
        flags = [False] * n_layers
        flags[0] = True
        flags[self.layer] = True
        flags[-1] = train_output
        return FreezeMask(tuple(flags))

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "layer": self.layer}

    @classmethod
    def from_dict(cls, d: dict) -> BaseModelSpec:
        return cls(d["strategy"], d.get("layer"))


def network_dims(n_features: int, hidden: tuple[int, ...] = DEFAULT_HIDDEN) -> list[int]:
    return [n_features, *hidden, 1]


def pretrain(source: Dataset, cfg: TrainConfig,
             hidden: tuple[int, ...] = DEFAULT_HIDDEN,
             val_fraction: float = 0.1) -> PretrainedModel:
    """Train a full network on raw source data.

    The data are split train/validation (``1 - val_fraction`` / ``val_fraction``),
    standardized with training statistics, and every layer is trained.
    """
    if len(source) == 0:
        raise TransferError("empty source dataset")
    tr, val = split(source, 1.0 - val_fraction, cfg.seed)
    scaler = fit_scaler(tr)
    tr_s, val_s = scaler.transform(tr), scaler.transform(val)
    net = init_network(network_dims(source.n_features, hidden), cfg.seed)
    net = train(net, tr_s, cfg)
    return PretrainedModel(net, source.schema, scaler,
                           mse_loss(tr_s.targets, net.predict(tr_s.rows)),
                           mse_loss(val_s.targets, net.predict(val_s.rows)))


def adapt_input(pre: PretrainedModel, target_schema: FeatureSchema | int,
                seed: int) -> NetworkParams:
    """Swap the pretrained input layer for a freshly initialised one sized to
    the target features; every deeper layer is reused as is."""
    n_in = target_schema if isinstance(target_schema, int) else len(target_schema)
    first = pre.net.layers[0]
    new = he_uniform_layer(n_in, first.out_dim, np.random.default_rng(seed), first.activation)
    return pre.net.replace_layer(0, new)


def make_base_specs(n_hidden: int) -> list[BaseModelSpec]:
    if n_hidden < 1:
        raise TransferError("need at least one hidden layer")
    return [BaseModelSpec("tune_hidden", j) for j in range(1, n_hidden + 1)] + [
        BaseModelSpec("tune_all")]


def fine_tune(adapted: NetworkParams, spec: BaseModelSpec, target_train: Dataset,
              cfg: TrainConfig, train_output: bool = True) -> NetworkParams:
    return train(adapted, target_train, cfg, spec.mask(len(adapted), train_output))
