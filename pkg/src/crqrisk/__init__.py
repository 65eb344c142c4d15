"""Change-request risk assessment engine.

Imbalance-aware boosted-tree risk scoring with calibrated review queues,
importance-weighted drift detection, and feedback-driven retraining.
"""

from .domain import ChangeRequest, Dataset, FeatureVector, Label, RiskLevel, RiskScore
from .errors import CrqRiskError
from .gbdt import Ensemble, GradientBoostedClassifier, TrainConfig, train
from .uncertainty import UncertaintyBreakdown, binary_entropy, mutual_information, rank_top_m

__version__ = "0.1.0"

__all__ = [
    "ChangeRequest",
    "CrqRiskError",
    "Dataset",
    "Ensemble",
    "FeatureVector",
    "GradientBoostedClassifier",
    "Label",
    "RiskLevel",
    "RiskScore",
    "TrainConfig",
    "UncertaintyBreakdown",
    "binary_entropy",
    "mutual_information",
    "rank_top_m",
    "train",
]
