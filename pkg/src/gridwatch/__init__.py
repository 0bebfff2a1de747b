"""Streaming multivariate anomaly detection and classification for PMU telemetry.

The package is organized as a numpy library with a thin service layer on top:

- :mod:`gridwatch.ingest`      CSV parsing, channel derivation, coarse-graining,
  synthetic ambient/anomaly generation
- :mod:`gridwatch.preprocess`  linear de-trending and sigma normalization
- :mod:`gridwatch.varmodel`    vector autoregressive estimation, prediction,
  simulation
- :mod:`gridwatch.hyperlab`    data-driven hyperparameter selection experiments
- :mod:`gridwatch.detector`    probabilistic residual scoring and the detection
  state machine
- :mod:`gridwatch.features`    score-window feature extraction for classification
- :mod:`gridwatch.tree`        interpretable CART-style decision tree
- :mod:`gridwatch.corpus`      synthetic labeled event corpus builder
- :mod:`gridwatch.pipeline`    live pipeline orchestration and persistence
- :mod:`gridwatch.server`      operator HTTP API and score/event stream
"""

from gridwatch.varmodel import VarModel, fit_var, predict_one, forecast_q, residual, simulate
from gridwatch.preprocess import StandardizationParams, fit_standardization, standardize, de_standardize
from gridwatch.detector import Detector, ResidualScorer, AnomalyEvent, ResidualScore
from gridwatch.features import FeatureVector, extract_features
from gridwatch.tree import DecisionTree, TrainConfig, train_tree, cross_validate

__all__ = [
    "VarModel",
    "fit_var",
    "predict_one",
    "forecast_q",
    "residual",
    "simulate",
    "StandardizationParams",
    "fit_standardization",
    "standardize",
    "de_standardize",
    "Detector",
    "ResidualScorer",
    "AnomalyEvent",
    "ResidualScore",
    "FeatureVector",
    "extract_features",
    "DecisionTree",
    "TrainConfig",
    "train_tree",
    "cross_validate",
]

__version__ = "0.1.0"
