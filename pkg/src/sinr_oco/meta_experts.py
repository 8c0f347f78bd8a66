"""
Fixed-Share aggregation of SINR estimators with different (alpha, beta, eta).

Each expert runs its own `step_full` recursion on the shared feedback stream;
the ensemble predicts the weighted average of the expert estimates and
reweights experts multiplicatively by their loss, then mixes a fraction
``mu`` of the mass back to uniform.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .bler_model import CqiMap, SigmoidLinkModel, bce_loss
from .estimators import EstimatorParams, EstimatorState, FeedbackEvent, MomentumGate, step_full

__all__ = [
    "LossKind",
    "expert_loss",
    "ExpertEnsemble",
    "make_grid_ensemble",
    "ensemble_predict",
    "ensemble_update",
    "ftl_predict",
]


class LossKind(str, enum.Enum):
    THRESHOLD = "threshold"
    BCE = "bce"


def expert_loss(kind: LossKind, model: SigmoidLinkModel, gamma: float, event: FeedbackEvent) -> float:
    """
    Loss used to score one expert's prediction.

    ``threshold`` is 1 when ``|y - BLER(gamma)| > 0.5`` (the prediction
    would have called the wrong outcome) and 0 otherwise.
    """
    if kind is LossKind.THRESHOLD:
        p = model.bler(gamma, event.mcs, event.cbs)
        return 1.0 if abs(event.y - p) > 0.5 else 0.0
    return bce_loss(model, gamma, event.mcs, event.cbs, event.y)


class ExpertEnsemble:
    """
    Fixed-Share ensemble of `step_full` experts.

    Parameters
    ----------
        model : `SigmoidLinkModel`

        params : `list` of `EstimatorParams`
            One entry per expert

        cqi_map : `CqiMap` | `None`

        epsilon : `float` (default: 1)
            Learning rate of the exponential weights

        mu : `float` (default: 1e-3)
            Share rate; every weight is at least ``mu / N`` after an update

        loss : `LossKind` (default: threshold)

        gamma0 : `float` | sequence of `float` (default: 0)
            Initial estimate [dB], shared or one per expert

        track_history : `bool` (default: `False`)
            Keep per-slot expert, FTL and weight traces (one row per `predict`)
    """

    def __init__(self, model: SigmoidLinkModel, params: Sequence[EstimatorParams],
                 cqi_map: Optional[CqiMap] = None, epsilon: float = 1.0, mu: float = 1e-3,
                 loss: LossKind = LossKind.THRESHOLD, gamma0: float = 0.0,
                 track_history: bool = False, clamp=None):
        if not params:
            raise ValueError("ensemble needs at least one expert")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        self.model = model
        self.cqi_map = cqi_map
        self.epsilon = float(epsilon)
        self.mu = float(mu)
        self.loss_kind = LossKind(loss)
        g0 = np.broadcast_to(np.asarray(gamma0, dtype=float), (len(params),))
        self.experts = [EstimatorState.initial(p, float(g), clamp) for p, g in zip(params, g0)]
        n = len(self.experts)
        self.weights = np.full(n, 1.0 / n)
        self._log_w = np.log(self.weights)
        self.cum_loss = np.zeros(n)
        self.last_losses = np.zeros(n)
        # weighted loss sum(w * loss) of each update, i.e. the mixture's loss
        self.mixture_losses: list[float] = []
        self.diagnostics: list[str] = []
        self._pending: deque = deque()
        self.track_history = track_history
        self.history: dict[str, list] = {"experts": [], "ftl": [], "weights": []}

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    @property
    def params(self) -> list[EstimatorParams]:
        return [e.params for e in self.experts]

    def expert_estimates(self) -> np.ndarray:
        return np.fromiter((e.gamma_prev for e in self.experts), dtype=float, count=len(self.experts))

    @property
    def estimate(self) -> float:
        return float(self.weights @ self.expert_estimates())

    def ftl_estimate(self) -> float:
        # np.argmin breaks ties towards the lowest index
        return self.experts[int(np.argmin(self.cum_loss))].gamma_prev

    def predict(self) -> float:
        """
        Combined estimate for the current slot.

        The expert estimates are queued so that the next `update` scores
        the predictions the feedback actually refers to.
        """
        est = self.expert_estimates()
        self._pending.append(est)
        if self.track_history:
            self.history["experts"].append(est)
            self.history["ftl"].append(self.ftl_estimate())
            self.history["weights"].append(self.weights.copy())
        return float(self.weights @ est)

    def update(self, event: FeedbackEvent) -> float:
        preds = self._pending.popleft() if self._pending else self.expert_estimates()
        losses = np.array([expert_loss(self.loss_kind, self.model, g, event) for g in preds])
        self.last_losses = losses
        self.cum_loss += losses
        self.mixture_losses.append(float(self.weights @ losses))

        log_w = self._log_w - self.epsilon * losses
        if not np.all(np.isfinite(log_w)):
            self.diagnostics.append(f"non-finite weights at update {len(self.mixture_losses)}; reset to uniform")
            log_w = np.zeros(self.n_experts)
        log_w = log_w - logsumexp(log_w)
        if self.mu > 0.0:
            w = (1.0 - self.mu) * np.exp(log_w) + self.mu / self.n_experts
            self._log_w = np.log(w)
        else:
            # log space only, so long runs never underflow
            w = np.exp(log_w)
            self._log_w = log_w
        self.weights = w

        for state in self.experts:
            step_full(state, self.model, self.cqi_map, event)
        return self.estimate


def make_grid_ensemble(model: SigmoidLinkModel, alphas, betas, etas,
                       gate: MomentumGate = MomentumGate.WHEN_CQI_ABSENT, epsilon: float = 1.0,
                       mu: float = 1e-3, cqi_map: Optional[CqiMap] = None,
                       loss: LossKind = LossKind.THRESHOLD, **kwargs) -> ExpertEnsemble:
    """One expert per point of the ``alphas x betas x etas`` grid, uniform initial weights."""
    if not alphas or not betas or not etas:
        raise ValueError("parameter grids must be non-empty")
    params = [EstimatorParams(alpha=a, beta=b, eta=e, momentum_gate=gate)
              for a, b, e in itertools.product(alphas, betas, etas)]
    return ExpertEnsemble(model, params, cqi_map=cqi_map, epsilon=epsilon, mu=mu, loss=loss, **kwargs)


def ensemble_predict(ens: ExpertEnsemble) -> float:
    return ens.estimate


def ensemble_update(ens: ExpertEnsemble, event: FeedbackEvent) -> None:
    ens.update(event)


def ftl_predict(ens: ExpertEnsemble) -> float:
    return ens.ftl_estimate()
