import numpy as np
import pytest

from sinr_oco.baselines import Lts, Olla, lts_step, olla_step, salad_estimator, salad_preset
from sinr_oco.bler_model import SigmoidLinkModel
from sinr_oco.estimators import EstimatorParams, FeedbackEvent, SinrEstimator

MODEL = SigmoidLinkModel.linear()


def test_olla_steps():
    o = Olla(delta=1.0, tau=0.1, gamma0=5.0)
    assert olla_step(o, 1) == 4.0
    assert olla_step(o, 0) == pytest.approx(4.0 + 1.0 / 9.0)


def test_olla_equilibrium_at_target():
    o = Olla(delta=0.5, tau=0.1)
    for _ in range(100):
        for _ in range(9):
            o.step(0)
        o.step(1)
    assert o.estimate == pytest.approx(0.0, abs=1e-9)


def test_nolla_decay():
    o = Olla(delta=2.0, delta_inf=0.1, rate=0.01)
    assert o.current_delta() == 2.0
    o.t = 10 ** 6
    assert o.current_delta() == pytest.approx(0.1)
    assert repr(o).startswith("NOLLA")
    with pytest.raises(ValueError):
        Olla(delta=1.0, delta_inf=2.0)
    with pytest.raises(ValueError):
        Olla(delta=1.0, tau=1.0)


def test_lts_posterior_normalized_and_moves():
    lts = Lts(MODEL, drift_std=0.0)
    start = lts.estimate
    c, _ = MODEL.params(15, 1000)
    for _ in range(50):
        lts_step(lts, MODEL, FeedbackEvent(15, 1000, 0))
    assert lts.posterior.sum() == pytest.approx(1.0)
    assert lts.estimate > start
    # repeated ACKs at MCS 15 put almost all mass above that MCS's center
    assert lts.posterior[lts.grid < c - 5].sum() < 1e-3


def test_lts_converges_to_static_sinr():
    rng = np.random.default_rng(0)
    lts = Lts(MODEL, drift_std=0.0)
    truth = 7.0
    for _ in range(3000):
        u = int(rng.integers(8, 20))
        lts.update(FeedbackEvent(u, 1000, int(rng.random() < MODEL.bler(truth, u, 1000))))
    assert lts.estimate == pytest.approx(truth, abs=0.5)


def test_lts_rejects_other_model_and_bad_prior():
    lts = Lts(MODEL)
    with pytest.raises(ValueError):
        lts_step(lts, SigmoidLinkModel.linear(), FeedbackEvent(0, 1000, 0))
    with pytest.raises(ValueError):
        Lts(MODEL, prior=np.ones(3))


def test_salad_is_plain_gradient():
    assert salad_preset() == EstimatorParams(alpha=0.0, beta=0.0, eta=1.0)
    a = salad_estimator(MODEL, gamma0=2.0)
    b = SinrEstimator(MODEL, EstimatorParams(eta=1.0), method="ogd", gamma0=2.0)
    rng = np.random.default_rng(1)
    for _ in range(300):
        ev = FeedbackEvent(int(rng.integers(28)), 1000, int(rng.integers(2)), cqi=int(rng.integers(1, 16)))
        assert a.update(ev) == b.update(ev)


def test_olla_zero_drift_at_target():
    rng = np.random.default_rng(7)
    tau, n = 0.1, 200_000
    y = (rng.random(n) < tau).astype(int)
    o = Olla(1.0, tau=tau)
    prev, inc = o.estimate, np.empty(n)
    for t in range(n):
        inc[t] = o.step(int(y[t])) - prev
        prev = o.estimate
    assert abs(inc.mean()) < 3 * inc.std(ddof=1) / np.sqrt(n)


def test_lts_posterior_stays_a_distribution():
    rng = np.random.default_rng(8)
    lts = Lts(MODEL, drift_std=0.2)
    for _ in range(500):
        lts.update(FeedbackEvent(int(rng.integers(28)), 1000, int(rng.integers(2))))
        post = lts.posterior
        assert np.all(post >= 0) and abs(post.sum() - 1.0) < 1e-9


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.7])
def test_nolla_step_magnitude(tau):
    o = Olla(2.0, tau=tau, delta_inf=0.1, rate=0.01)
    rng = np.random.default_rng(9)
    factor = {1: 1.0, 0: tau / (1 - tau)}
    bound = 0.1 * max(factor.values())
    last = np.inf
    for _ in range(2000):
        y = int(rng.integers(2))
        delta = o.current_delta()
        before = o.estimate
        o.step(y)
        assert abs(o.estimate - before) == pytest.approx(factor[y] * delta)
        largest = delta * max(factor.values())
        assert bound - 1e-12 <= largest <= last
        last = largest
