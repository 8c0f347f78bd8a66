"""
Synthetic slot-level link simulator.

Ground-truth SINR traces are generated from simple stochastic specs;
ACK/NACK bits are Bernoulli draws from the true BLER model; CQI reports are
quantized (optionally noisy) versions of the true SINR. Feedback reaches the
estimator after a fixed delay through a FIFO queue.

Randomness: every run owns one `numpy.random.SeedSequence` spawned into four
independent streams, in this order: channel, feedback, cqi-noise, policy.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .bler_model import CqiMap, SigmoidLinkModel
from .estimators import FeedbackEvent

__all__ = [
    "RandomWalk",
    "Sinusoid",
    "StepChanges",
    "RegimeSwitch",
    "gen_trace",
    "CqiNoise",
    "LinkSimConfig",
    "SimStreams",
    "draw_feedback",
    "make_cqi_report",
    "select_mcs_target",
    "TargetPolicy",
    "ExplorationPolicy",
    "OraclePolicy",
    "exploration_policy_step",
    "TraceDataset",
    "DatasetFormatError",
    "run_closed_loop",
    "run_open_loop",
    "spectral_efficiency",
    "default_rate_table",
]


# -- SINR traces -------------------------------------------------------------

@dataclass(frozen=True)
class RandomWalk:
    """Gaussian random walk; reflected into ``bounds`` when given."""

    step_std: float
    start: float = 5.0
    bounds: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    period: float
    offset: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class StepChanges:
    """Piecewise-constant trace: ``levels[i]`` from ``change_slots[i-1]`` on."""

    levels: tuple[float, ...]
    change_slots: tuple[int, ...]


@dataclass(frozen=True)
class RegimeSwitch:
    """Concatenation of sub-traces; ``specs[i]`` is active from ``switch_slots[i-1]`` on."""

    specs: tuple
    switch_slots: tuple[int, ...]


TraceKind = Union[RandomWalk, Sinusoid, StepChanges, RegimeSwitch]


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    width = hi - lo
    y = np.mod(x - lo, 2 * width)
    return lo + np.where(y > width, 2 * width - y, y)


def _check_slots(slots: Sequence[int], length: int, what: str):
    if any(b <= a for a, b in zip(slots, slots[1:])):
        raise ValueError(f"{what} must be strictly increasing")
    if slots and (slots[0] < 0 or slots[-1] >= length):
        raise ValueError(f"{what} must lie in [0, length)")


def gen_trace(kind: TraceKind, length: int,
              seed: Union[int, np.random.SeedSequence, np.random.Generator] = 0) -> np.ndarray:
    """
    Ground-truth SINR trace [dB] of ``length`` slots, deterministic in
    ``seed`` (an integer, a seed sequence or the run's channel generator).
    """
    if length < 1:
        raise ValueError("trace length must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(kind, RandomWalk):
        steps = rng.normal(0.0, kind.step_std, size=length - 1)
        x = kind.start + np.concatenate(([0.0], np.cumsum(steps)))
        if kind.bounds is not None:
            x = _reflect(x, *kind.bounds)
        return x
    if isinstance(kind, Sinusoid):
        t = np.arange(length)
        return kind.offset + kind.amplitude * np.sin(2 * np.pi * t / kind.period + kind.phase)
    if isinstance(kind, StepChanges):
        if len(kind.levels) != len(kind.change_slots) + 1:
            raise ValueError("StepChanges needs one more level than change slots")
        _check_slots(kind.change_slots, length, "change_slots")
        idx = np.searchsorted(np.asarray(kind.change_slots, dtype=int), np.arange(length), side="right")
        return np.asarray(kind.levels, dtype=float)[idx]
    if isinstance(kind, RegimeSwitch):
        if len(kind.specs) != len(kind.switch_slots) + 1:
            raise ValueError("RegimeSwitch needs one more sub-spec than switch slots")
        _check_slots(kind.switch_slots, length, "switch_slots")
        bounds = [0, *kind.switch_slots, length]
        out = np.empty(length)
        for sub, a, b in zip(kind.specs, bounds, bounds[1:]):
            out[a:b] = gen_trace(sub, b - a, rng)
        return out
    raise TypeError(f"unknown trace spec {kind!r}")


# -- link configuration and feedback --------------------------------------------

class CqiNoise(str, enum.Enum):
    NONE = "none"
    PLUS_MINUS_ONE = "plus_minus_one"


@dataclass(frozen=True)
class LinkSimConfig:
    """
    Parameters
    ----------
        true_model : `SigmoidLinkModel`
            Link model that draws the ACK/NACK bits

        est_model : `SigmoidLinkModel`
            Link model used for MCS selection (and by the estimators)

        true_cbs : `int` (default: 1000)
            Code block size actually transmitted

        est_cbs : `int` | `None` (default: `None`)
            Code block size the estimator believes in; `None` means "same as
            the transmitted one"

        feedback_delay : `int` (default: 5)
            Feedback for slot ``t`` is consumed at the end of slot ``t + delay``

        cqi_delay : `int` | `None` (default: `None`)
            Age of the CQI report delivered with each ACK/NACK bit: the
            update at the end of slot ``t`` carries the report measured in
            slot ``t - cqi_delay`` (if one was made). `None` means "same as
            ``feedback_delay``", so each report travels with the bit of its
            own slot

        cqi_period : `int` | `None` (default: 10)
            CQI is reported on slots ``t % cqi_period == 0``; `None` disables CQI

        cqi_noise : `CqiNoise` (default: none)

        cqi_map : `CqiMap`
            Map used to quantize the true SINR into the reported CQI
    """

    true_model: SigmoidLinkModel
    est_model: SigmoidLinkModel
    true_cbs: int = 1000
    est_cbs: Optional[int] = None
    feedback_delay: int = 5
    cqi_delay: Optional[int] = None
    cqi_period: Optional[int] = 10
    cqi_noise: CqiNoise = CqiNoise.NONE
    cqi_map: CqiMap = field(default_factory=CqiMap.affine)

    def __post_init__(self):
        if self.feedback_delay < 0:
            raise ValueError("feedback_delay must be nonnegative")
        if self.cqi_delay is not None and self.cqi_delay < 0:
            raise ValueError("cqi_delay must be nonnegative")
        if self.cqi_period is not None and self.cqi_period < 1:
            raise ValueError("cqi_period must be at least 1")
        if self.true_cbs <= 0 or (self.est_cbs is not None and self.est_cbs <= 0):
            raise ValueError("code block sizes must be positive")
        object.__setattr__(self, "cqi_noise", CqiNoise(self.cqi_noise))

    @property
    def estimator_cbs(self) -> int:
        return self.true_cbs if self.est_cbs is None else self.est_cbs

    @property
    def report_delay(self) -> int:
        return self.feedback_delay if self.cqi_delay is None else self.cqi_delay


@dataclass
class SimStreams:
    """Independent generators for the four random roles of one run."""

    channel: np.random.Generator
    feedback: np.random.Generator
    cqi_noise: np.random.Generator
    policy: np.random.Generator

    @classmethod
    def from_seed(cls, seed: Union[int, np.random.SeedSequence]) -> "SimStreams":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(4)))


def draw_feedback(cfg: LinkSimConfig, true_sinr: float, mcs: int, rng: np.random.Generator) -> int:
    """NACK (1) with probability ``BLER_true(true_sinr, mcs)``, else ACK (0)."""
    p = cfg.true_model.bler(true_sinr, mcs, cfg.true_cbs)
    return int(rng.random() < p)


def make_cqi_report(cfg: LinkSimConfig, cqi_map: CqiMap, true_sinr: float, slot: int,
                    rng: np.random.Generator) -> Optional[int]:
    if cfg.cqi_period is None or slot % cfg.cqi_period != 0:
        return None
    cqi = cqi_map.from_sinr(true_sinr)
    if cfg.cqi_noise is CqiNoise.PLUS_MINUS_ONE:
        cqi += 1 if rng.random() < 0.5 else -1
    return min(max(cqi, 1), 15)


# -- MCS selection policies --------------------------------------------------

def select_mcs_target(est_model: SigmoidLinkModel, gamma_est: float, cbs: int, tau: float) -> int:
    """Highest MCS whose estimated BLER does not exceed ``tau``; MCS 0 if none does."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"BLER target must lie in [0, 1], got {tau}")
    # BLER is non-decreasing in the MCS index: bisect for the last qualifying one
    lo, hi = 0, est_model.n_mcs
    while lo < hi:
        mid = (lo + hi) // 2
        if est_model.bler(gamma_est, mid, cbs) <= tau:
            lo = mid + 1
        else:
            hi = mid
    return max(lo - 1, 0)


class TargetPolicy:
    """Fixed BLER target: pick the highest MCS meeting ``tau`` at the current estimate."""

    def __init__(self, est_model: SigmoidLinkModel, cbs: int, tau: float = 0.1):
        self.est_model = est_model
        self.cbs = cbs
        self.tau = tau

    def select(self, gamma_est: float, rng: np.random.Generator, true_sinr=None) -> tuple[int, float]:
        return select_mcs_target(self.est_model, gamma_est, self.cbs, self.tau), self.tau

    def observe(self, event: FeedbackEvent) -> None:
        pass


class OraclePolicy:
    """
    Picks the MCS from the *true* SINR at a fixed BLER target.

    The MCS stream ignores the estimate, so after an SINR jump the selected
    MCS is far more aggressive than the lagging estimate would choose.
    """

    def __init__(self, true_model: SigmoidLinkModel, cbs: int, tau: float = 0.1):
        self.true_model = true_model
        self.cbs = cbs
        self.tau = tau

    def select(self, gamma_est: float, rng: np.random.Generator, true_sinr=None) -> tuple[int, float]:
        if true_sinr is None:
            raise ValueError("OraclePolicy needs the true SINR")
        return select_mcs_target(self.true_model, true_sinr, self.cbs, self.tau), self.tau

    def observe(self, event: FeedbackEvent) -> None:
        pass


class ExplorationPolicy:
    """
    BLER-target policy with random exploration.

    With probability ``p_explore`` the instantaneous target is uniform in
    [0, 1]; otherwise it is ``clip(tau + gain * sum_i (tau - y_i), 0, 1)``
    where the sum runs over the feedback received so far. With
    ``integrate_explored=False`` feedback from exploratory slots is left out
    of the sum, so exploration no longer pushes the exploiting target down.
    """

    def __init__(self, est_model: SigmoidLinkModel, cbs: int, tau: float = 0.1,
                 p_explore: float = 0.0, gain: float = 0.02, integrate_explored: bool = True):
        if not 0.0 <= p_explore <= 1.0:
            raise ValueError("p_explore must lie in [0, 1]")
        self.est_model = est_model
        self.cbs = cbs
        self.tau = tau
        self.p_explore = p_explore
        self.gain = gain
        self.integrate_explored = integrate_explored
        self.integral_error = 0.0
        self._explored: dict[int, bool] = {}
        self._slot = 0

    def target(self, rng: np.random.Generator) -> float:
        # draw order is fixed (coin, then uniform) so runs are reproducible
        explore = self.p_explore > 0.0 and rng.random() < self.p_explore
        if not self.integrate_explored:
            self._explored[self._slot] = explore
        self._slot += 1
        if explore:
            return float(rng.random())
        return min(max(self.tau + self.gain * self.integral_error, 0.0), 1.0)

    def select(self, gamma_est: float, rng: np.random.Generator, true_sinr=None) -> tuple[int, float]:
        tau_t = self.target(rng)
        return select_mcs_target(self.est_model, gamma_est, self.cbs, tau_t), tau_t

    def observe(self, event: FeedbackEvent) -> None:
        if not self.integrate_explored and event.slot is not None and self._explored.pop(event.slot, False):
            return
        self.integral_error += self.tau - event.y


def exploration_policy_step(policy: ExplorationPolicy, gamma_est: float,
                            rng: np.random.Generator) -> tuple[int, float]:
    return policy.select(gamma_est, rng)


# -- datasets ---------------------------------------------------------------

COLUMNS = ("slot", "true_sinr", "mcs", "cbs", "y", "cqi", "estimate")


class DatasetFormatError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class TraceDataset:
    """
    Per-slot record of a closed-loop run.

    ``cqi`` is 0 where no report was made; ``true_sinr`` and ``estimate``
    are NaN where unknown (e.g. third-party logs).
    """

    true_sinr: np.ndarray
    mcs: np.ndarray
    cbs: np.ndarray
    y: np.ndarray
    cqi: np.ndarray
    estimate: np.ndarray
    tau: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.mcs)
        for name in ("true_sinr", "cbs", "y", "cqi", "estimate"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")

    def __len__(self):
        return len(self.mcs)

    @property
    def slot(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def has_truth(self) -> bool:
        return len(self) > 0 and not np.any(np.isnan(self.true_sinr))

    def events(self, est_cbs: Optional[int] = None):
        """Feedback events in slot order; ``est_cbs`` overrides the recorded CBS."""
        for t in range(len(self)):
            cqi = int(self.cqi[t])
            yield FeedbackEvent(mcs=int(self.mcs[t]),
                                cbs=int(self.cbs[t]) if est_cbs is None else est_cbs,
                                y=int(self.y[t]), cqi=cqi if cqi > 0 else None, slot=t)

    def to_csv(self, path_or_buf) -> None:
        if isinstance(path_or_buf, (str, Path)):
            with open(path_or_buf, "w", newline="") as fh:
                self.to_csv(fh)
            return
        w = csv.writer(path_or_buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for t in range(len(self)):
            w.writerow([t, _fmt(self.true_sinr[t]), int(self.mcs[t]), int(self.cbs[t]), int(self.y[t]),
                        int(self.cqi[t]) if self.cqi[t] > 0 else "", _fmt(self.estimate[t])])

    @classmethod
    def from_csv(cls, path_or_buf) -> "TraceDataset":
        if isinstance(path_or_buf, (str, Path)):
            with open(path_or_buf, newline="") as fh:
                return cls.from_csv(fh)
        reader = csv.reader(path_or_buf)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(1, "missing header") from None
        header = [h.strip() for h in header]
        required = ("mcs", "cbs", "y")
        missing = [c for c in required if c not in header]
        if missing:
            raise DatasetFormatError(1, f"header lacks column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in COLUMNS if name in header}
        cols = {name: [] for name in ("true_sinr", "mcs", "cbs", "y", "cqi", "estimate")}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetFormatError(lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                rec = _parse_row(row, col, expected_slot=len(cols["mcs"]))
            except ValueError as exc:
                raise DatasetFormatError(lineno, str(exc)) from None
            for k, v in rec.items():
                cols[k].append(v)
        return cls(true_sinr=np.array(cols["true_sinr"], dtype=float),
                   mcs=np.array(cols["mcs"], dtype=int),
                   cbs=np.array(cols["cbs"], dtype=int),
                   y=np.array(cols["y"], dtype=int),
                   cqi=np.array(cols["cqi"], dtype=int),
                   estimate=np.array(cols["estimate"], dtype=float))

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _fmt(x: float) -> str:
    # repr round-trips doubles exactly
    return "" if math.isnan(x) else repr(float(x))


def _parse_row(row, col, expected_slot):
    def field_(name):
        return row[col[name]].strip() if name in col else ""

    slot = field_("slot")
    if slot and int(slot) != expected_slot:
        raise ValueError(f"slot {slot} out of order, expected {expected_slot}")
    y = int(field_("y"))
    if y not in (0, 1):
        raise ValueError(f"y must be 0 or 1, got {y}")
    mcs = int(field_("mcs"))
    if mcs < 0:
        raise ValueError(f"negative MCS {mcs}")
    cbs = int(field_("cbs"))
    if cbs <= 0:
        raise ValueError(f"cbs must be positive, got {cbs}")
    cqi_s = field_("cqi")
    cqi = int(cqi_s) if cqi_s else 0
    if cqi_s and not 1 <= cqi <= 15:
        raise ValueError(f"CQI must lie in [1, 15], got {cqi}")
    truth = field_("true_sinr")
    est = field_("estimate")
    return {"true_sinr": float(truth) if truth else math.nan, "mcs": mcs, "cbs": cbs, "y": y,
            "cqi": cqi, "estimate": float(est) if est else math.nan}


# -- harness ------------------------------------------------------------------

def _delivered(t: int, delay: int, cqi_delay: int, mcs, cbs, y, cqi) -> Optional[FeedbackEvent]:
    """The event consumed at the end of slot ``t``, or `None` while the pipeline fills."""
    k = t - delay
    if k < 0:
        return None
    j = t - cqi_delay
    report = int(cqi[j]) if 0 <= j and cqi[j] > 0 else None
    return FeedbackEvent(mcs=int(mcs[k]), cbs=int(cbs[k]), y=int(y[k]), cqi=report, slot=k)


def run_closed_loop(cfg: LinkSimConfig, trace: np.ndarray, estimator, policy,
                    streams: Union[SimStreams, int, None] = None) -> TraceDataset:
    """
    Run ``estimator`` and ``policy`` in closed loop over ``trace``.

    Per slot ``t``: the estimator predicts, the policy picks the MCS from
    that prediction, the ACK/NACK bit is drawn from the true model and the
    CQI report (if due) from the true SINR; the feedback of slot
    ``t - feedback_delay`` is then delivered to estimator and policy,
    together with the CQI report of slot ``t - cqi_delay``.
    """
    if not isinstance(streams, SimStreams):
        streams = SimStreams.from_seed(0 if streams is None else streams)
    n = len(trace)
    mcs = np.zeros(n, dtype=int)
    y = np.zeros(n, dtype=int)
    cqi = np.zeros(n, dtype=int)
    est = np.zeros(n)
    taus = np.zeros(n)
    cbs_est = np.full(n, cfg.estimator_cbs, dtype=int)
    for t in range(n):
        g = estimator.predict()
        u, tau_t = policy.select(g, streams.policy, true_sinr=trace[t])
        bit = draw_feedback(cfg, trace[t], u, streams.feedback)
        report = make_cqi_report(cfg, cfg.cqi_map, trace[t], t, streams.cqi_noise)
        est[t], mcs[t], y[t], taus[t] = g, u, bit, tau_t
        cqi[t] = report or 0
        ev = _delivered(t, cfg.feedback_delay, cfg.report_delay, mcs, cbs_est, y, cqi)
        if ev is not None:
            estimator.update(ev)
            policy.observe(ev)
    return TraceDataset(true_sinr=np.asarray(trace, dtype=float), mcs=mcs,
                        cbs=np.full(n, cfg.true_cbs, dtype=int), y=y, cqi=cqi, estimate=est, tau=taus)


def run_open_loop(dataset: TraceDataset, cfg: Optional[LinkSimConfig], estimator,
                  feedback_delay: Optional[int] = None) -> np.ndarray:
    """
    Replay a recorded dataset through ``estimator`` without letting it act.

    Uses the same predict/deliver schedule as `run_closed_loop`, so replaying
    a dataset through the estimator that generated it reproduces the
    recorded estimates exactly.
    """
    if feedback_delay is None:
        feedback_delay = cfg.feedback_delay if cfg is not None else 0
    cqi_delay = cfg.cqi_delay if cfg is not None and cfg.cqi_delay is not None else feedback_delay
    cbs = dataset.cbs if cfg is None or cfg.est_cbs is None else np.full(len(dataset), cfg.est_cbs, dtype=int)
    out = np.empty(len(dataset))
    for t in range(len(dataset)):
        out[t] = estimator.predict()
        ev = _delivered(t, feedback_delay, cqi_delay, dataset.mcs, cbs, dataset.y, dataset.cqi)
        if ev is not None:
            estimator.update(ev)
    return out


def default_rate_table(n_mcs: int = 28) -> np.ndarray:
    return 0.2 * (np.arange(n_mcs) + 1)


def spectral_efficiency(y: np.ndarray, mcs: np.ndarray, rate_table: Optional[np.ndarray] = None) -> float:
    """Mean rate of successfully decoded slots [bit/symbol]."""
    y = np.asarray(y)
    mcs = np.asarray(mcs)
    if rate_table is None:
        rate_table = default_rate_table()
    if y.size == 0:
        return 0.0
    return float(np.mean((1 - y) * np.asarray(rate_table)[mcs]))
