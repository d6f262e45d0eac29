"""Cross-validated experiment orchestration and the command line."""
from .experiments import (ALPHAS, CE_BETAS, HUBER_BETAS, ExperimentConfig, arm_seed,
                          default_intra_site, intra_study, poisoned, run_default, run_inter,
                          run_intra, shifted_pairs, sweep)
from .folds import kfold_split
from .report import ExperimentReport, Row, emit, read_json, to_csv

__all__ = [
    "ALPHAS", "CE_BETAS", "HUBER_BETAS", "ExperimentConfig", "ExperimentReport", "Row",
    "arm_seed", "default_intra_site", "emit", "intra_study", "kfold_split", "poisoned",
    "read_json", "run_default", "run_inter", "run_intra", "shifted_pairs", "sweep", "to_csv",
]
