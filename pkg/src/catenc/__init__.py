"""catenc: compact numeric representations for high-cardinality categorical columns."""

__version__ = "0.1.0"

from .dataset import (CategoryIndex, DataWarning, Dataset, FoldPlan, GroupStats, IngestError,
                      group_stats, load_csv, stratified_kfold, subset)
from .encoders import EncoderSpec, FittedEncoding, fit_encoder, transform
from .learners import LearnerSpec, fit, predict
from .benchmark import BenchConfig, BenchReport, paired_ttest, run_cv, run_sim_sweep
from .synthgen import SynthConfig, SynthTruth, gen_dataset, gen_outcome, true_posterior

__all__ = [
    "BenchConfig", "BenchReport", "CategoryIndex", "DataWarning", "Dataset", "EncoderSpec",
    "FittedEncoding", "FoldPlan", "GroupStats", "IngestError", "LearnerSpec", "SynthConfig",
    "SynthTruth", "fit", "fit_encoder", "gen_dataset", "gen_outcome", "group_stats",
    "load_csv", "paired_ttest", "predict", "run_cv", "run_sim_sweep", "stratified_kfold",
    "subset", "transform", "true_posterior", "__version__",
]
