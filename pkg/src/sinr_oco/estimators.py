"""
Single-expert SINR estimators driven by ACK/NACK and CQI feedback.

All estimators follow the same two-call protocol used by the simulator:
``predict()`` returns the SINR estimate for the current slot and
``update(event)`` consumes one (possibly delayed) feedback event.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

from scipy.optimize import brentq

from .bler_model import CqiMap, SigmoidLinkModel, bce_grad

__all__ = [
    "MomentumGate",
    "EstimatorParams",
    "EstimatorState",
    "FeedbackEvent",
    "step_ogd",
    "step_hb",
    "step_nag",
    "step_full",
    "alpha_from_lambda",
    "lambda_from_alpha",
    "mirror_step_numeric",
    "SinrEstimator",
]


class MomentumGate(str, enum.Enum):
    """When the momentum term is active, judged on the previous feedback event."""

    WHEN_CQI_ABSENT = "when_cqi_absent"
    WHEN_CQI_PRESENT = "when_cqi_present"
    ALWAYS = "always"


@dataclass(frozen=True)
class EstimatorParams:
    alpha: float = 0.0
    beta: float = 0.0
    eta: float = 1.0
    momentum_gate: MomentumGate = MomentumGate.WHEN_CQI_ABSENT

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        object.__setattr__(self, "momentum_gate", MomentumGate(self.momentum_gate))


@dataclass(frozen=True)
class FeedbackEvent:
    """
    Feedback for one past slot.

    ``mcs`` and ``cbs`` are those of the slot the feedback refers to, so that
    delayed feedback is scored with the right sigmoid. ``y`` is 0 for ACK and
    1 for NACK.
    """

    mcs: int
    cbs: int
    y: int
    cqi: Optional[int] = None
    slot: Optional[int] = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"y must be 0 (ACK) or 1 (NACK), got {self.y}")
        if self.cqi is not None and not 1 <= self.cqi <= 15:
            raise ValueError(f"CQI must lie in [1, 15], got {self.cqi}")
        if self.cbs <= 0:
            raise ValueError(f"cbs must be positive, got {self.cbs}")


@dataclass
class EstimatorState:
    gamma_prev: float = 0.0
    gamma_prev2: float = 0.0
    params: EstimatorParams = field(default_factory=EstimatorParams)
    # CQI presence of the last two consumed events, most recent first
    last_cqi_present: tuple[bool, bool] = (False, False)
    clamp: Optional[tuple[float, float]] = None

    @classmethod
    def initial(cls, params: EstimatorParams, gamma0: float = 0.0, clamp=None) -> "EstimatorState":
        return cls(gamma_prev=gamma0, gamma_prev2=gamma0, params=params, clamp=clamp)

    def _push(self, gamma: float, cqi_present: bool) -> float:
        if self.clamp is not None:
            gamma = min(max(gamma, self.clamp[0]), self.clamp[1])
        self.gamma_prev2 = self.gamma_prev
        self.gamma_prev = gamma
        self.last_cqi_present = (cqi_present, self.last_cqi_present[0])
        return gamma


def _ack_nack_step(model: SigmoidLinkModel, point: float, event: FeedbackEvent, eta: float) -> float:
    # point + eta/s * (BLER(point) - y), i.e. a gradient step on the BCE loss at `point`
    _, s = model.params(event.mcs, event.cbs)
    p = model.bler(point, event.mcs, event.cbs)
    return point + eta * (p - event.y) / s


def step_ogd(state: EstimatorState, model: SigmoidLinkModel, event: FeedbackEvent) -> float:
    """Online gradient descent on the BCE loss. CQI is ignored."""
    new = _ack_nack_step(model, state.gamma_prev, event, state.params.eta)
    return state._push(new, event.cqi is not None)


def step_hb(state: EstimatorState, model: SigmoidLinkModel, event: FeedbackEvent) -> float:
    """Heavy-ball: OGD step plus ``beta`` times the last estimate difference."""
    p = state.params
    momentum = p.beta * (state.gamma_prev - state.gamma_prev2)
    new = _ack_nack_step(model, state.gamma_prev, event, p.eta) + momentum
    return state._push(new, event.cqi is not None)


def step_nag(state: EstimatorState, model: SigmoidLinkModel, event: FeedbackEvent) -> float:
    """Nesterov: the gradient is taken at the look-ahead point."""
    p = state.params
    lookahead = state.gamma_prev + p.beta * (state.gamma_prev - state.gamma_prev2)
    new = _ack_nack_step(model, lookahead, event, p.eta)
    return state._push(new, event.cqi is not None)


def _gated_beta(state: EstimatorState) -> float:
    p = state.params
    prev_had_cqi = state.last_cqi_present[0]
    if p.momentum_gate is MomentumGate.ALWAYS:
        return p.beta
    if p.momentum_gate is MomentumGate.WHEN_CQI_ABSENT:
        return 0.0 if prev_had_cqi else p.beta
    return p.beta if prev_had_cqi else 0.0


def step_full(state: EstimatorState, model: SigmoidLinkModel, cqi_map: Optional[CqiMap],
              event: FeedbackEvent) -> float:
    """
    Mirror-descent step with gated Nesterov momentum and CQI fusion.

    The ACK/NACK update at the look-ahead point is convexly combined with
    the SINR implied by the CQI report, weighted by ``alpha``; without a
    report the update is the plain ACK/NACK one.
    """
    p = state.params
    has_cqi = event.cqi is not None
    alpha = p.alpha if has_cqi else 0.0
    beta = _gated_beta(state)
    lookahead = state.gamma_prev + beta * (state.gamma_prev - state.gamma_prev2)
    new = _ack_nack_step(model, lookahead, event, p.eta)
    if alpha > 0.0:
        if cqi_map is None:
            raise ValueError("a CQI map is required to fuse CQI reports")
        new = alpha * cqi_map.to_sinr(event.cqi) + (1.0 - alpha) * new
    return state._push(new, has_cqi)


def alpha_from_lambda(eta: float, lam: float) -> float:
    """CQI reliance ``eta*lam / (1 + eta*lam)`` for regularization weight ``lam``."""
    if eta < 0 or lam < 0:
        raise ValueError("eta and lambda must be nonnegative")
    if math.isinf(lam):
        return 1.0
    return eta * lam / (1.0 + eta * lam)


def lambda_from_alpha(eta: float, alpha: float) -> float:
    """Inverse of `alpha_from_lambda`; infinite for ``alpha == 1``."""
    if alpha >= 1.0:
        return math.inf
    return alpha / (eta * (1.0 - alpha))


def mirror_step_numeric(model: SigmoidLinkModel, cqi_map: Optional[CqiMap], gamma_prev: float,
                        event: FeedbackEvent, eta: float, lam: float, xtol: float = 1e-12) -> float:
    """
    Minimize the linearized, proximal and CQI-regularized objective
    numerically.

    The objective is strictly convex, so its minimizer is the unique root of
    the derivative, found by bracketed root search. Searching on function
    values instead would stall around 1e-7 dB because the objective is flat
    near its minimum. This never uses the closed form; it is the
    independent check for the convex-combination update of `step_full`
    (with zero momentum).
    """
    if eta == 0.0:
        return gamma_prev
    g = bce_grad(model, gamma_prev, event.mcs, event.cbs, event.y)
    target = cqi_map.to_sinr(event.cqi) if lam > 0 else gamma_prev

    def derivative(x):
        return g + (x - gamma_prev) / eta + lam * (x - target)

    # the minimizer lies between gamma_prev - eta*g and the CQI target
    lo = min(gamma_prev - eta * g, target, gamma_prev) - 1.0
    hi = max(gamma_prev - eta * g, target, gamma_prev) + 1.0
    return float(brentq(derivative, lo, hi, xtol=xtol, rtol=4 * sys.float_info.epsilon, maxiter=500))


_STEPS = {
    "ogd": lambda st, m, q, ev: step_ogd(st, m, ev),
    "hb": lambda st, m, q, ev: step_hb(st, m, ev),
    "nag": lambda st, m, q, ev: step_nag(st, m, ev),
    "full": step_full,
}


class SinrEstimator:
    """
    Stateful wrapper around one of the step functions.

    Parameters
    ----------
        model : `SigmoidLinkModel`
            BLER model used by the estimator (possibly mismatched)

        params : `EstimatorParams`

        cqi_map : `CqiMap` | `None`
            Required only if CQI is fused (``alpha > 0``)

        method : 'full' | 'ogd' | 'hb' | 'nag' (default: 'full')

        gamma0 : `float` (default: 0)
            Initial estimate for the first two slots [dB]

        clamp : `tuple` | `None`
            Optional safety clamp on the estimate, off by default
    """

    def __init__(self, model, params=None, cqi_map=None, method="full", gamma0=0.0, clamp=None):
        if method not in _STEPS:
            raise ValueError(f"unknown estimator method {method!r}")
        self.model = model
        self.cqi_map = cqi_map
        self.method = method
        self.state = EstimatorState.initial(params or EstimatorParams(), gamma0, clamp)
        self._step = _STEPS[method]

    @property
    def params(self) -> EstimatorParams:
        return self.state.params

    @property
    def estimate(self) -> float:
        return self.state.gamma_prev

    def predict(self) -> float:
        return self.state.gamma_prev

    def update(self, event: FeedbackEvent) -> float:
        return self._step(self.state, self.model, self.cqi_map, event)

    def __repr__(self):
        p = self.params
        return f"SinrEstimator({self.method}, alpha={p.alpha}, beta={p.beta}, eta={p.eta})"
