import io

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from sinr_oco.bler_model import CqiMap, SigmoidLinkModel, bce_grad
from sinr_oco.estimators import EstimatorParams, EstimatorState, FeedbackEvent, mirror_step_numeric, step_full
from sinr_oco.meta_experts import ExpertEnsemble, LossKind, make_grid_ensemble
from sinr_oco.metrics import percentiles, regret, rmse
from sinr_oco.simulator import TraceDataset, select_mcs_target

MODEL = SigmoidLinkModel.linear()
CQI = CqiMap.affine()

gammas = st.floats(-25.0, 45.0, allow_nan=False)
mcs = st.integers(0, 27)
cbs = st.sampled_from([10, 100, 1000, 10000])
bits = st.integers(0, 1)
cqis = st.one_of(st.none(), st.integers(1, 15))


@st.composite
def events(draw):
    return FeedbackEvent(draw(mcs), draw(cbs), draw(bits), cqi=draw(cqis))


@given(gammas, mcs, cbs, bits)
def test_gradient_bounded(g, u, b, y):
    grad = bce_grad(MODEL, g, u, b, y)
    assert abs(grad) <= 0.99 / MODEL.params(u, b)[1] + 1e-12


@given(gammas, mcs, cbs, bits)
def test_gradient_sign_follows_surprise(g, u, b, y):
    grad = bce_grad(MODEL, g, u, b, y)
    # a NACK can only lower the estimate, an ACK can only raise it
    assert grad >= 0 if y else grad <= 0


@given(gammas, st.floats(0.0, 1.0), st.floats(0.01, 3.0), events())
def test_full_step_matches_numeric_oracle(g, alpha, eta, ev):
    st_ = EstimatorState.initial(EstimatorParams(alpha=alpha, beta=0.0, eta=eta), g)
    closed = step_full(st_, MODEL, CQI, ev)
    if ev.cqi is None or alpha == 0.0:
        lam = 0.0
    elif alpha >= 1.0:
        assert closed == CQI.to_sinr(ev.cqi)
        return
    else:
        lam = alpha / (eta * (1.0 - alpha))
    assert abs(closed - mirror_step_numeric(MODEL, CQI, g, ev, eta, lam)) < 1e-6


@given(st.lists(events(), min_size=1, max_size=80), st.floats(0.0, 1.0), st.sampled_from(list(LossKind)))
@settings(max_examples=40, deadline=None)
def test_weights_stay_on_simplex(evs, mu, loss):
    ens = make_grid_ensemble(MODEL, [0.0, 0.5], [0.0, 0.6], [0.5, 2.0], mu=mu, loss=loss, cqi_map=CQI)
    for ev in evs:
        ens.predict()
        ens.update(ev)
        w = ens.weights
        assert abs(w.sum() - 1.0) < 1e-9
        assert w.min() >= mu / len(w) * (1 - 1e-12)


@given(gammas, cbs, st.floats(0.0, 1.0))
def test_selected_mcs_meets_target(g, b, tau):
    u = select_mcs_target(MODEL, g, b, tau)
    if u > 0:
        assert MODEL.bler(g, u, b) <= tau
    if u < 27:
        assert MODEL.bler(g, u + 1, b) > tau


@given(st.lists(st.tuples(gammas, mcs, bits, st.integers(0, 15), gammas), max_size=30))
def test_dataset_csv_roundtrip(rows):
    cols = list(zip(*rows)) if rows else [[]] * 5
    ds = TraceDataset(true_sinr=np.array(cols[0], dtype=float), mcs=np.array(cols[1], dtype=int),
                      cbs=np.full(len(rows), 1000), y=np.array(cols[2], dtype=int),
                      cqi=np.array(cols[3], dtype=int), estimate=np.array(cols[4], dtype=float))
    back = TraceDataset.from_csv(io.StringIO(ds.to_csv_string()))
    for name in ("true_sinr", "mcs", "cbs", "y", "cqi", "estimate"):
        assert np.array_equal(getattr(back, name), getattr(ds, name))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=50), st.floats(-10, 10))
def test_rmse_shift_and_zero(xs, c):
    x = np.array(xs)
    assert rmse(x, x) == 0.0
    assert abs(rmse(x + c, x) - abs(c)) < 1e-9


@given(gammas, st.floats(0.0, 1.0), st.floats(0.0, 3.0), st.floats(0.0, 0.9), events(), gammas)
def test_full_step_is_convex_combination_and_bounded(g, alpha, eta, beta, ev, g2):
    st_ = EstimatorState.initial(EstimatorParams(alpha=alpha, beta=beta, eta=eta), g)
    st_.gamma_prev2 = g2
    # a fresh state saw no CQI before, so the default gate keeps the momentum
    look = g + beta * (g - g2)
    new = step_full(st_, MODEL, CQI, ev)
    ack_nack = look - eta * bce_grad(MODEL, look, ev.mcs, ev.cbs, ev.y)
    if ev.cqi is None:
        assert abs(new - ack_nack) <= 1e-12 * (1 + abs(ack_nack))
    else:
        f = CQI.to_sinr(ev.cqi)
        tol = 1e-9 * (1 + abs(f) + abs(ack_nack))
        assert min(f, ack_nack) - tol <= new <= max(f, ack_nack) + tol


@given(gammas, st.floats(0.0, 1.0), st.floats(0.0, 3.0), events())
def test_single_step_magnitude_bound(g, alpha, eta, ev):
    st_ = EstimatorState.initial(EstimatorParams(alpha=alpha, beta=0.0, eta=eta), g)
    new = step_full(st_, MODEL, CQI, ev)
    grad_bound = eta * 0.99 / 0.5
    if ev.cqi is None:
        assert abs(new - g) <= grad_bound + 1e-12
    else:
        assert abs(new - g) <= alpha * abs(CQI.to_sinr(ev.cqi) - g) + grad_bound + 1e-9


@given(st.lists(events(), min_size=1, max_size=60))
@settings(deadline=None)
def test_identical_experts_keep_equal_weights_without_share(evs):
    p = EstimatorParams(0.1, 0.2, 1.0)
    ens = ExpertEnsemble(MODEL, [p, p, EstimatorParams(0.0, 0.0, 2.0)], cqi_map=CQI, mu=0.0,
                         loss=LossKind.THRESHOLD)
    for ev in evs:
        ens.predict()
        ens.update(ev)
        assert ens.weights[0] == ens.weights[1]


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=40), st.randoms())
def test_rmse_permutation_invariant(pairs, rnd):
    e, g = map(np.array, zip(*pairs))
    idx = list(range(len(pairs)))
    rnd.shuffle(idx)
    assert abs(rmse(e[idx], g[idx]) - rmse(e, g)) <= 1e-12 * (1 + rmse(e, g))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_percentile_extremes(xs):
    assert percentiles(xs, [0, 100]) == [min(xs), max(xs)]


@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=2, max_size=40), st.data())
def test_regret_additive_over_segments(pairs, data):
    a, c = map(np.array, zip(*pairs))
    k = data.draw(st.integers(1, len(pairs) - 1))
    total = regret(a, c)
    assert abs(total - (regret(a[:k], c[:k]) + regret(a[k:], c[k:]))) <= 1e-9 * (1 + abs(a).sum() + abs(c).sum())
