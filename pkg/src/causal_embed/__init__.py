"""Neural mean embedding estimators for back-door and front-door adjustment."""

from .data import ColumnarDataset
from .estimators import (
    CausalEstimate,
    CausalQuery,
    ate_backdoor,
    ate_frontdoor,
    att_backdoor,
    att_frontdoor,
    estimate,
    obs_confounder_estimates,
)
from .nn import Adam, FeatureMap
from .stage1 import StageOneModel, TrainConfig, predict_g, train_stage1
from .stage2 import EmbeddingRegressor, Stage2Config, marginal_embedding, train_embedding

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CausalEstimate",
    "CausalQuery",
    "ColumnarDataset",
    "EmbeddingRegressor",
    "FeatureMap",
    "Stage2Config",
    "StageOneModel",
    "TrainConfig",
    "ate_backdoor",
    "ate_frontdoor",
    "att_backdoor",
    "att_frontdoor",
    "estimate",
    "marginal_embedding",
    "obs_confounder_estimates",
    "predict_g",
    "train_embedding",
    "train_stage1",
]
