"""
Online SINR estimation from ACK/NACK and CQI feedback.

Sigmoid BLER link abstraction, mirror-descent SINR estimators with
momentum, a Fixed-Share ensemble that tunes their parameters online,
link-adaptation baselines, a slot-level simulator and evaluation metrics.
"""

from .baselines import Lts, Olla, salad_estimator, salad_preset
from .bler_model import CqiMap, SigmoidLinkModel, bce_grad, bce_loss, bler, cqi_to_sinr, sinr_to_cqi
from .estimators import EstimatorParams, EstimatorState, FeedbackEvent, MomentumGate, SinrEstimator, step_full
from .meta_experts import ExpertEnsemble, LossKind, make_grid_ensemble
from .metrics import rmse
from .simulator import (ExplorationPolicy, LinkSimConfig, OraclePolicy, RandomWalk, RegimeSwitch, SimStreams,
                        Sinusoid, StepChanges, TargetPolicy, TraceDataset, gen_trace, run_closed_loop,
                        run_open_loop)

__version__ = "0.1.0"

__all__ = [
    "CqiMap",
    "SigmoidLinkModel",
    "bce_grad",
    "bce_loss",
    "bler",
    "cqi_to_sinr",
    "sinr_to_cqi",
    "EstimatorParams",
    "EstimatorState",
    "FeedbackEvent",
    "MomentumGate",
    "SinrEstimator",
    "step_full",
    "ExpertEnsemble",
    "LossKind",
    "make_grid_ensemble",
    "Lts",
    "Olla",
    "salad_estimator",
    "salad_preset",
    "rmse",
    "ExplorationPolicy",
    "OraclePolicy",
    "RandomWalk",
    "RegimeSwitch",
    "Sinusoid",
    "StepChanges",
    "TargetPolicy",
    "LinkSimConfig",
    "SimStreams",
    "TraceDataset",
    "gen_trace",
    "run_closed_loop",
    "run_open_loop",
]
