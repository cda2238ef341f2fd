"""Wrapper feature selection for intrusion detection.

A hybrid whale-optimization / genetic search proposes binary feature masks,
a brute-force KNN classifier scores them, and the chosen subset is evaluated
with confusion-matrix metrics on held-out KDD-format connection records.
"""

from .classifier import KNNClassifier, fit_knn
from .dataset import (
    ConnectionRecord,
    EncodedDataset,
    FeatureSchema,
    KDDEncoder,
    KDDParseError,
    Label,
    encode,
    generate_synthetic,
    parse_kdd,
    stratified_split,
)
from .fitness import EvalProtocol, FitnessEvaluator, FitnessValue, evaluate
from .masking import FeatureMask, apply_mask, binarize
from .metrics import ConfusionMatrix, confusion, metric_report
from .optimizer import ConvergenceLog, OptimizerConfig, SearchAgent, WOAGASelector, run

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix", "ConnectionRecord", "ConvergenceLog", "EncodedDataset",
    "EvalProtocol", "FeatureMask", "FeatureSchema", "FitnessEvaluator", "FitnessValue",
    "KDDEncoder", "KDDParseError", "KNNClassifier", "Label", "OptimizerConfig",
    "SearchAgent", "WOAGASelector", "apply_mask", "binarize", "confusion", "encode",
    "evaluate", "fit_knn", "generate_synthetic", "metric_report", "parse_kdd", "run",
    "stratified_split",
]
