"""Stacked ensemble of transferred networks with an SVR meta-regressor."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from edtl.dataset import Dataset, FeatureSchema, ScalerParams, fit_scaler
from edtl.nn import NetworkParams, TrainConfig, forward, load_network, save_network
from edtl.svr import SVRHyperParams, SVRModel, fit_svr
from edtl.transfer import (BaseModelSpec, PretrainedModel, adapt_input,
                           fine_tune, make_base_specs)

STACKING_MODES = ("in_sample", "out_of_fold")


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BaseModelSet:
    models: tuple[NetworkParams, ...]
    specs: tuple[BaseModelSpec, ...]
    target_schema: FeatureSchema
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.models) != len(self.specs) or not self.models:
            raise EnsembleError("need one spec per base model")
        if len({m.in_dim for m in self.models}) != 1:
            raise EnsembleError("base models disagree on input width")
        if self.models[0].in_dim != len(self.target_schema):
            raise EnsembleError("base models do not match target schema")

    def __len__(self):
        return len(self.models)

    def output_matrix(self, x: np.ndarray) -> np.ndarray:
        """Base-model outputs for standardized rows, shape ``(N, k)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([np.atleast_1d(m.predict(x)) for m in self.models])


@dataclass(frozen=True, eq=False)
class EDTLModel:
    bases: BaseModelSet
    meta: SVRModel
    scaler: ScalerParams
    stacking_mode: str = "in_sample"
    folds: int = 5
    config: dict | None = None

    def __post_init__(self):
        if self.meta.dim != len(self.bases):
            raise EnsembleError("meta-regressor width differs from base model count")
        if len(self.scaler.means) != len(self.bases.target_schema):
            raise EnsembleError("scaler does not match target schema")

    @property
    def schema(self) -> FeatureSchema:
        return self.bases.target_schema

    def predict(self, rows) -> np.ndarray:
        """Raw-unit predictions for raw feature rows."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != len(self.schema):
            raise EnsembleError(f"expected {len(self.schema)} features, got {rows.shape[1]}")
        z = self.bases.output_matrix(self.scaler.transform_rows(rows))
        return self.scaler.inverse_targets(self.meta.predict(z))


def base_outputs(bases: BaseModelSet, x) -> np.ndarray:
    """Vector ``[f_1(x), ..., f_k(x)]`` for one standardized feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != len(bases.target_schema):
        raise EnsembleError("feature vector does not match target schema")
    return np.array([forward(m, x) for m in bases.models])


def train_bases(pre: PretrainedModel, target_std: Dataset, cfg: TrainConfig,
                train_output: bool = True) -> BaseModelSet:
    adapted = adapt_input(pre, target_std.schema, cfg.seed)
    specs = make_base_specs(pre.n_hidden)
    seeds = tuple(cfg.seed + k for k in range(len(specs)))
    models = [fine_tune(adapted, spec, target_std, cfg.with_seed(s), train_output)
              for spec, s in zip(specs, seeds)]
    return BaseModelSet(tuple(models), tuple(specs), target_std.schema, seeds)


def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    ids = np.empty(n, dtype=int)
    ids[np.random.default_rng(seed).permutation(n)] = np.arange(n) % folds
    return ids


def train_edtl(pre: PretrainedModel, target_train: Dataset, cfg: TrainConfig,
               hp: SVRHyperParams | None = None, mode: str = "in_sample",
               folds: int = 5, train_output: bool = True,
               target_scaler: str = "fresh") -> EDTLModel:
    """Adapt, fine-tune one base model per freeze strategy, then stack.

    ``target_train`` is in raw units. ``target_scaler="source"`` reuses the
    pretraining scaler (schemas must then agree); the default fits a fresh
    one on the target data.
    """
    hp = hp or SVRHyperParams()
    if len(target_train) == 0:
        raise EnsembleError("empty target training set")
    if mode not in STACKING_MODES:
        raise EnsembleError(f"unknown stacking mode {mode!r}")
    if target_scaler == "source":
        if target_train.schema.names != pre.source_schema.names:
            raise EnsembleError("source scaler needs identical feature schemas")
        scaler = pre.scaler
    elif target_scaler == "fresh":
        scaler = fit_scaler(target_train)
    else:
        raise EnsembleError(f"unknown target_scaler {target_scaler!r}")
    ds = scaler.transform(target_train)
    bases = train_bases(pre, ds, cfg, train_output)

    if mode == "in_sample":
        Z = bases.output_matrix(ds.rows)
    else:
        if not 2 <= folds <= len(ds):
            raise EnsembleError(f"cannot make {folds} folds from {len(ds)} rows")
        Z = np.empty((len(ds), len(bases)))
        ids = _fold_ids(len(ds), folds, cfg.seed)
        for f in range(folds):
            held = np.flatnonzero(ids == f)
            fold_bases = train_bases(pre, ds.take(np.flatnonzero(ids != f)), cfg, train_output)
            Z[held] = fold_bases.output_matrix(ds.rows[held])
    meta = fit_svr(Z, ds.targets, hp)
    config = {"train": asdict(cfg), "svr": asdict(hp), "stacking_mode": mode,
              "folds": folds, "train_output": train_output,
              "target_scaler": target_scaler}
    return EDTLModel(bases, meta, scaler, mode, folds, config)


def predict_edtl(model: EDTLModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise EnsembleError("expected a single feature vector")
    return float(model.predict(x[None, :])[0])


# -- persistence ---------------------------------------------------------------

def config_hash(config: dict | None) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_edtl(model: EDTLModel, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k, (net, seed) in enumerate(zip(model.bases.models, model.bases.seeds or
                                         (None,) * len(model.bases))):
        name = f"base_{k:02d}.json"
        save_network(net, d / name, seed=seed)
        files.append(name)
    manifest = {
        "kind": "edtl",
        "base_models": files,
        "specs": [s.to_dict() for s in model.bases.specs],
        "seeds": list(model.bases.seeds),
        "target_schema": model.schema.to_dict(),
        "scaler": model.scaler.to_dict(),
        "svr": model.meta.to_dict(),
        "stacking_mode": model.stacking_mode,
        "folds": model.folds,
        "config": model.config,
        "config_hash": config_hash(model.config),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return d


def load_edtl(directory) -> EDTLModel:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text())
    if m.get("kind") != "edtl":
        raise EnsembleError(f"{d} does not hold an EDTL model")
    bases = BaseModelSet(tuple(load_network(d / f) for f in m["base_models"]),
                         tuple(BaseModelSpec.from_dict(s) for s in m["specs"]),
                         FeatureSchema.from_dict(m["target_schema"]),
                         tuple(m["seeds"]))
    return EDTLModel(bases, SVRModel.from_dict(m["svr"]),
                     ScalerParams.from_dict(m["scaler"]),
                     m["stacking_mode"], m["folds"], m["config"])
