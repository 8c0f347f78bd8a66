"""
Link-adaptation baselines: OLLA, NOLLA, latent Thompson sampling (LTS) and
the SALAD-equivalent estimator preset.

They expose the same ``predict()`` / ``update(event)`` protocol as the
estimators so the simulator and the replay harness treat all of them alike.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .bler_model import SigmoidLinkModel
from .estimators import EstimatorParams, FeedbackEvent, SinrEstimator

__all__ = ["Olla", "olla_step", "Lts", "lts_step", "salad_preset", "salad_estimator"]


class Olla:
    """
    Outer-loop link adaptation SINR estimate.

    The estimate drops by ``delta_t`` upon NACK and rises by
    ``delta_t * tau / (1 - tau)`` upon ACK. With ``delta_inf`` set (NOLLA),
    ``delta_t = delta_inf + (delta - delta_inf) * exp(-rate * t)`` where ``t``
    counts consumed feedback events.

    Parameters
    ----------
        delta : `float`
            Step upon NACK [dB]

        tau : `float` (default: 0.1)
            BLER target

        gamma0 : `float` (default: 0)
            Initial estimate [dB]

        delta_inf : `float` | `None` (default: `None`)
            Asymptotic step; `None` gives plain OLLA

        rate : `float` (default: 1/500)
            Decay rate per slot (NOLLA only)
    """

    def __init__(self, delta: float, tau: float = 0.1, gamma0: float = 0.0,
                 delta_inf: Optional[float] = None, rate: float = 1.0 / 500):
        if delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if delta_inf is not None and not 0 < delta_inf <= delta:
            raise ValueError("delta_inf must lie in (0, delta]")
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.delta = float(delta)
        self.tau = float(tau)
        self.delta_inf = delta_inf
        self.rate = float(rate)
        self.estimate = float(gamma0)
        self.t = 0

    def current_delta(self) -> float:
        if self.delta_inf is None:
            return self.delta
        return self.delta_inf + (self.delta - self.delta_inf) * math.exp(-self.rate * self.t)

    def step(self, y: int) -> float:
        d = self.current_delta()
        if y:
            self.estimate -= d
        else:
            self.estimate += d * self.tau / (1.0 - self.tau)
        self.t += 1
        return self.estimate

    def predict(self) -> float:
        return self.estimate

    def update(self, event: FeedbackEvent) -> float:
        return self.step(event.y)

    def __repr__(self):
        kind = "NOLLA" if self.delta_inf is not None else "OLLA"
        return f"{kind}(delta={self.delta}, tau={self.tau})"


def olla_step(state: Olla, y: int) -> float:
    return state.step(y)


class Lts:
    """
    Latent Thompson sampling SINR estimate: a discretized Bayesian posterior
    over SINR, updated from ACK/NACK likelihoods; the point estimate is the
    posterior mean.

    ``drift_std`` > 0 diffuses the posterior with a Gaussian random-walk
    kernel before each update so that it keeps tracking a moving SINR;
    ``drift_std = 0`` gives the plain static Bayes update.
    """

    def __init__(self, model: SigmoidLinkModel, lo: float = -20.0, hi: float = 40.0,
                 step: float = 0.25, prior=None, drift_std: float = 0.1):
        self.model = model
        self.grid = np.arange(lo, hi + step / 2, step)
        if prior is None:
            prior = np.full(self.grid.size, 1.0 / self.grid.size)
        prior = np.asarray(prior, dtype=float)
        if prior.shape != self.grid.shape or np.any(prior < 0) or prior.sum() <= 0:
            raise ValueError("prior must be a nonnegative vector matching the grid")
        self.prior = prior / prior.sum()
        self.log_posterior = np.log(self.prior)
        self.drift_std = float(drift_std)
        self._kernel = None
        if self.drift_std > 0:
            half = int(math.ceil(4 * self.drift_std / step))
            offsets = np.arange(-half, half + 1) * step
            k = np.exp(-0.5 * (offsets / self.drift_std) ** 2)
            self._kernel = k / k.sum()

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_posterior)

    @property
    def estimate(self) -> float:
        return float(self.posterior @ self.grid)

    def predict(self) -> float:
        return self.estimate

    def update(self, event: FeedbackEvent) -> float:
        if self._kernel is not None:
            post = np.convolve(self.posterior, self._kernel, mode="same")
            with np.errstate(divide="ignore"):
                self.log_posterior = np.log(post / post.sum())
        p = self.model.bler_array(self.grid, event.mcs, event.cbs)
        self.log_posterior = self.log_posterior + (np.log(p) if event.y else np.log1p(-p))
        self.log_posterior -= logsumexp(self.log_posterior)
        return self.estimate

    def __repr__(self):
        return f"LTS(grid={self.grid[0]}..{self.grid[-1]}, drift_std={self.drift_std})"


def lts_step(state: Lts, model: SigmoidLinkModel, event: FeedbackEvent) -> float:
    if model is not state.model:
        raise ValueError("LTS state was built for a different link model")
    return state.update(event)


def salad_preset() -> EstimatorParams:
    """SALAD's estimator expressed as our parameters: eta=1, no momentum, no CQI."""
    return EstimatorParams(alpha=0.0, beta=0.0, eta=1.0)


def salad_estimator(model: SigmoidLinkModel, gamma0: float = 0.0) -> SinrEstimator:
    return SinrEstimator(model, salad_preset(), method="full", gamma0=gamma0)
