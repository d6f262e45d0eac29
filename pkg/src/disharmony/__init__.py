"""Proximal fine-tuning and auxiliary-task adaptation across shifted studies."""
from ._accel import backend, set_backend
from .data import DataError, Dataset
from .model import AuxTaskSpec, ModelConfig, ParamSet, init_params
from .optimize import NumericError, TrainConfig
from .pipeline import AdaptConfig, evaluate, infer, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AuxTaskSpec", "DataError", "Dataset", "ModelConfig", "NumericError",
    "ParamSet", "TrainConfig", "backend", "evaluate", "infer", "init_params", "run_pipeline",
    "set_backend",
]
