"""Ensemble deep transfer learning for data-poor production lines."""

from edtl.dataset import Dataset, FeatureSchema, load_csv, save_csv
from edtl.ensemble import EDTLModel, train_edtl
from edtl.harness import mape, run_sweep
from edtl.nn import TrainConfig
from edtl.svr import SVRHyperParams, fit_svr
from edtl.transfer import BaseModelSpec, pretrain

__all__ = ["BaseModelSpec", "Dataset", "EDTLModel", "FeatureSchema", "SVRHyperParams",
           "TrainConfig", "fit_svr", "load_csv", "mape", "pretrain", "run_sweep",
           "save_csv", "train_edtl"]
