"""
Evaluation metrics: RMSE and percentiles, expert ranking, regret and path
length, step-response statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bler_model import SigmoidLinkModel, bce_loss

__all__ = [
    "rmse",
    "percentiles",
    "ranking_cdf",
    "regret",
    "path_length",
    "StepResponse",
    "step_response",
    "bce_losses",
    "best_constant",
    "static_regret",
]


def rmse(estimates, truth, warmup: int = 0) -> float:
    """Root mean square error, ignoring the first ``warmup`` slots."""
    e = np.asarray(estimates, dtype=float)[warmup:]
    g = np.asarray(truth, dtype=float)[warmup:]
    if e.shape != g.shape:
        raise ValueError("estimates and truth must have equal lengths")
    if e.size == 0:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((e - g) ** 2)))


def percentiles(values, ps: Sequence[float] = (20, 50, 80)) -> list[float]:
    """Percentiles with linear interpolation between order statistics (numpy's default)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("percentiles of an empty sequence")
    return [float(x) for x in np.percentile(v, ps, method="linear")]


def ranking_cdf(meta_rmse: float, expert_rmses) -> float:
    """Fraction of experts strictly better than the aggregate; ties do not count."""
    r = np.asarray(expert_rmses, dtype=float)
    if r.size == 0:
        raise ValueError("need at least one expert")
    return float(np.mean(r < meta_rmse))


def regret(losses_alg, losses_cand) -> float:
    a = np.asarray(losses_alg, dtype=float)
    c = np.asarray(losses_cand, dtype=float)
    if a.shape != c.shape:
        raise ValueError("loss streams must have equal lengths")
    return float(a.sum() - c.sum())


def path_length(candidate) -> float:
    g = np.asarray(candidate, dtype=float)
    if g.size == 0:
        raise ValueError("path length of an empty sequence")
    return float(np.abs(np.diff(g)).sum())


@dataclass(frozen=True)
class StepResponse:
    settling: float  # slots; math.inf if never settled
    overshoot: float  # dB


def step_response(estimates, truth, step_slot: int, band_db: float = 1.0, hold: int = 50) -> StepResponse:
    """
    Settling time and overshoot after a step in ``truth`` at ``step_slot``.

    Settling is the first slot ``k >= step_slot`` from which
    ``|estimate - truth| < band_db`` holds for ``hold`` consecutive slots,
    counted from ``step_slot``. Overshoot is the largest excursion beyond the
    post-step truth in the direction of the step (0 if none).
    """
    e = np.asarray(estimates, dtype=float)
    g = np.asarray(truth, dtype=float)
    if e.shape != g.shape:
        raise ValueError("estimates and truth must have equal lengths")
    if not 0 <= step_slot < e.size:
        raise ValueError("step_slot outside the trace")
    err = e[step_slot:] - g[step_slot:]
    inside = np.abs(err) < band_db
    settling = math.inf
    run = 0
    for k, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run >= hold:
            settling = float(k - hold + 1)
            break
    direction = 1.0 if step_slot == 0 or g[step_slot] >= g[step_slot - 1] else -1.0
    overshoot = max(0.0, float(np.max(direction * err)))
    return StepResponse(settling=settling, overshoot=overshoot)


def bce_losses(model: SigmoidLinkModel, gammas, mcs, cbs, y) -> np.ndarray:
    """Per-slot BCE loss of a sequence of SINR guesses on recorded feedback."""
    return np.array([bce_loss(model, float(g), int(u), int(b), int(v))
                     for g, u, b, v in zip(gammas, mcs, cbs, y)])


def best_constant(model: SigmoidLinkModel, mcs, cbs, y, lo: float = -20.0, hi: float = 40.0,
                  step: float = 0.1) -> float:
    """Hindsight-optimal constant SINR for the summed BCE loss, by grid search."""
    grid = np.arange(lo, hi + step / 2, step)
    total = np.zeros(grid.size)
    for u, b, v in zip(mcs, cbs, y):
        p = model.bler_array(grid, int(u), int(b))
        total -= np.log(p) if v else np.log1p(-p)
    return float(grid[int(np.argmin(total))])


def static_regret(model: SigmoidLinkModel, gammas, mcs, cbs, y, **grid) -> float:
    """Regret of ``gammas`` against the best constant guess in hindsight."""
    g = best_constant(model, mcs, cbs, y, **grid)
    alg = bce_losses(model, gammas, mcs, cbs, y)
    cand = bce_losses(model, np.full(len(alg), g), mcs, cbs, y)
    return regret(alg, cand)
