import math

import numpy as np
import pytest

from sinr_oco.bler_model import SigmoidLinkModel
from sinr_oco.metrics import (best_constant, path_length, percentiles, ranking_cdf, regret, rmse,
                              static_regret, step_response)

MODEL = SigmoidLinkModel.linear()


def test_rmse():
    assert rmse([0, 0], [3, -4]) == pytest.approx(3.5355339, abs=1e-6)
    assert rmse([9, 0, 0], [0, 3, -4], warmup=1) == pytest.approx(3.5355339, abs=1e-6)
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        rmse([1], [1], warmup=1)


def test_percentiles():
    assert percentiles(np.arange(1, 101), [50]) == [50.5]
    assert percentiles([1, 2, 3, 4, 5]) == pytest.approx([1.8, 3.0, 4.2])
    with pytest.raises(ValueError):
        percentiles([])


def test_ranking_ties_do_not_count():
    assert ranking_cdf(1.0, [0.5, 1.0, 1.0, 2.0]) == 0.25
    assert ranking_cdf(0.1, [0.5, 1.0]) == 0.0
    assert ranking_cdf(3.0, [0.5, 1.0]) == 1.0


def test_regret_and_path_length():
    assert regret([1, 2, 3], [0, 1, 1]) == 4.0
    assert path_length([0, 2, -1, -1]) == 5.0
    assert path_length([4.0]) == 0.0
    with pytest.raises(ValueError):
        regret([1], [1, 2])


def test_step_response_settles():
    truth = np.r_[np.zeros(100), np.full(300, 10.0)]
    est = truth.copy()
    est[100:130] = np.linspace(0, 11.5, 30)
    est[130:140] = 10.8
    r = step_response(est, truth, 100, band_db=1.0, hold=50)
    assert r.settling == 30.0
    assert r.overshoot == pytest.approx(11.5 - 10.0, abs=0.5)


def test_step_response_never_settles_and_down_step():
    truth = np.r_[np.full(50, 10.0), np.zeros(100)]
    r = step_response(np.full(150, 10.0), truth, 50, hold=20)
    assert math.isinf(r.settling) and r.overshoot == 0.0
    est = truth.copy()
    est[60] = -3.0
    assert step_response(est, truth, 50, hold=20).overshoot == 3.0


def test_step_response_hold_runs_to_end():
    truth = np.r_[np.zeros(10), np.ones(20)]
    r = step_response(truth, truth, 10, hold=20)
    assert r.settling == 0.0
    assert math.isinf(step_response(truth, truth, 10, hold=21).settling)
    with pytest.raises(ValueError):
        step_response(truth, truth, 30)


def test_best_constant_and_static_regret():
    rng = np.random.default_rng(0)
    n = 4000
    mcs = rng.integers(8, 20, n)
    p = np.array([MODEL.bler(6.0, int(u), 1000) for u in mcs])
    y = (rng.random(n) < p).astype(int)
    cbs = np.full(n, 1000)
    g = best_constant(MODEL, mcs, cbs, y)
    assert g == pytest.approx(6.0, abs=0.3)
    assert static_regret(MODEL, np.full(n, g), mcs, cbs, y) == pytest.approx(0.0, abs=1e-9)
    assert static_regret(MODEL, np.full(n, 0.0), mcs, cbs, y) > 0
