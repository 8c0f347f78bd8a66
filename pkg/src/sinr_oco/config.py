"""
Experiment configuration: TOML files with nested sections.

Every experiment, shipped scenario or user-written, uses the same schema
(see ``README.md``). `load_config` parses and validates a file and returns
an `ExperimentConfig`; validation errors carry the config path, the dotted
key and, when it can be located, the line number.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .bler_model import CqiMap, SigmoidLinkModel
from .estimators import EstimatorParams, MomentumGate
from .meta_experts import LossKind
from .simulator import CqiNoise, LinkSimConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EstimatorConfig",
    "load_config",
    "parse_config",
    "load_estimator_config",
    "parse_estimator_config",
    "parse_seed_range",
    "sample_trace_spec",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = ("step_response", "replay", "selftuning", "sweep", "tradeoff", "regret")
ESTIMATOR_KINDS = ("olla", "nolla", "lts", "salad", "single", "fs")
TRACE_KINDS = ("random_walk", "sinusoid", "steps", "regime_switch")


class ConfigError(ValueError):
    """One or more semantic or syntax problems in a config file."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    seeds: list[int]
    length: int
    warmup: int
    true_model: SigmoidLinkModel
    est_model: SigmoidLinkModel
    cqi_map: CqiMap
    est_cqi_map: CqiMap
    sim: LinkSimConfig
    traces: list[dict]
    ensemble: dict
    generators: list[dict]
    policy: dict
    step: dict
    sweep: dict
    regret: dict
    replay: dict = field(default_factory=dict)
    save_datasets: bool = True
    raw: dict = field(repr=False, default_factory=dict)
    path: Optional[Path] = None

    def expert_params(self, alphas=None, betas=None, etas=None) -> list[EstimatorParams]:
        e = self.ensemble
        gate = MomentumGate(e["gate"])
        return [EstimatorParams(alpha=a, beta=b, eta=h, momentum_gate=gate)
                for a in (alphas or e["alphas"]) for b in (betas or e["betas"]) for h in (etas or e["etas"])]


class _Checker:
    """Collects problems with line numbers located in the source text."""

    def __init__(self, text: str, origin: str):
        self.lines = text.splitlines()
        self.origin = origin
        self.problems: list[str] = []

    def line_of(self, dotted: str) -> Optional[int]:
        parts = dotted.split(".")
        key = parts[-1].split("[")[0]
        section = ".".join(p.split("[")[0] for p in parts[:-1])
        current = ""
        fallback = None
        for no, raw in enumerate(self.lines, start=1):
            s = raw.strip()
            if s.startswith("["):
                current = s.strip("[]").strip()
                continue
            if s.split("=")[0].strip() == key:
                if current == section:
                    return no
                fallback = fallback or no
        return fallback

    def error(self, dotted: str, msg: str):
        no = self.line_of(dotted)
        where = f"{self.origin}:{no}" if no else self.origin
        self.problems.append(f"{where}: {dotted}: {msg}")


def _get(d: dict, key: str, default: Any) -> Any:
    return d.get(key, default)


def _build_link(sec: dict, chk: _Checker, prefix: str) -> Optional[SigmoidLinkModel]:
    kwargs = dict(
        ref_cbs=int(_get(sec, "ref_cbs", 1000)),
        cbs_slope=float(_get(sec, "cbs_slope", 0.5)),
        scale_exponent=float(_get(sec, "scale_exponent", 0.1)),
        scale_clip=tuple(_get(sec, "scale_clip", (0.5, 2.0))),
        bler_clip=tuple(_get(sec, "bler_clip", (0.01, 0.99))),
    )
    try:
        if "centers" in sec:
            scales = sec.get("scales", [1.0] * len(sec["centers"]))
            return SigmoidLinkModel(centers=tuple(sec["centers"]), scales=tuple(scales), **kwargs)
        return SigmoidLinkModel.linear(n_mcs=int(_get(sec, "n_mcs", 28)),
                                       center_base=float(_get(sec, "center_base", -6.0)),
                                       center_step=float(_get(sec, "center_step", 0.9)),
                                       scale=float(_get(sec, "scale", 1.0)), **kwargs)
    except (ValueError, TypeError) as exc:
        key = "centers" if "centers" in str(exc) else ("scales" if "scale" in str(exc) else "n_mcs")
        if "clip" in str(exc):
            key = "bler_clip" if "bler" in str(exc) else "scale_clip"
        chk.error(f"{prefix}.{key}", str(exc))
        return None


def _build_cqi(sec: dict, chk: _Checker, prefix: str) -> Optional[CqiMap]:
    try:
        if "table" in sec:
            return CqiMap(tuple(sec["table"]))
        return CqiMap.affine(float(_get(sec, "base", -8.0)), float(_get(sec, "step", 1.8)))
    except (ValueError, TypeError) as exc:
        chk.error(f"{prefix}.table" if "table" in sec else f"{prefix}.step", str(exc))
        return None


def _check_range(chk, dotted, value, lo=None, hi=None, lo_open=False):
    try:
        v = float(value)
    except (TypeError, ValueError):
        chk.error(dotted, f"expected a number, got {value!r}")
        return
    if lo is not None and (v < lo or (lo_open and v == lo)):
        chk.error(dotted, f"{v} is below the allowed range")
    if hi is not None and v > hi:
        chk.error(dotted, f"{v} is above the allowed range")


def _check_range_spec(chk, dotted, value):
    """Trace parameters are scalars or [lo, hi] ranges."""
    if isinstance(value, list):
        if len(value) != 2 or value[0] > value[1]:
            chk.error(dotted, "ranges must be [lo, hi] with lo <= hi")


RANGE_KEYS = ("step_std", "start", "amplitude", "period", "offset", "phase", "range")


def _check_trace(t: dict, chk: _Checker, dotted: str, length: int):
    kind = t.get("kind")
    if kind not in TRACE_KINDS:
        chk.error(f"{dotted}.kind", f"unknown trace kind {kind!r}, expected one of {TRACE_KINDS}")
        return
    for k in RANGE_KEYS:
        if isinstance(t.get(k), list):
            _check_range_spec(chk, f"{dotted}.{k}", t[k])
    if "step_std" in t and min(np.atleast_1d(t["step_std"])) < 0:
        chk.error(f"{dotted}.step_std", "step_std must be nonnegative")
    if kind == "regime_switch":
        segs = t.get("segments", [])
        at = t.get("switch_at", [])
        if len(segs) != len(at) + 1:
            chk.error(f"{dotted}.switch_at", "need exactly one switch slot fewer than segments")
        lows = [a[0] if isinstance(a, list) else a for a in at]
        highs = [a[1] if isinstance(a, list) else a + 1 for a in at]
        if (any(b <= a for a, b in zip(lows, lows[1:])) or any(h <= lo for lo, h in zip(lows, highs))
                or (at and (lows[0] <= 0 or highs[-1] > length))):
            chk.error(f"{dotted}.switch_at", "switch slots must be increasing and inside (0, length)")
        for i, seg in enumerate(segs):
            _check_trace(seg, chk, f"{dotted}.segments[{i}]", length)
    if kind == "steps" and "change_at" in t:
        at = t["change_at"]
        if len(t.get("levels", [])) != len(at) + 1:
            chk.error(f"{dotted}.levels", "need exactly one level more than change slots")
        if any(b <= a for a, b in zip(at, at[1:])) or (at and (at[0] < 0 or at[-1] >= length)):
            chk.error(f"{dotted}.change_at", "change slots must be increasing and inside [0, length)")
    if kind == "steps" and "change_at" not in t:
        lo_n, hi_n = t.get("n_levels", [2, 4])
        margin = int(t.get("margin", 300))
        if not 1 <= lo_n <= hi_n or length - 2 * margin < hi_n - 1:
            chk.error(f"{dotted}.n_levels", "level count range does not fit the trace length and margin")


def _check_estimator_spec(g: dict, chk: _Checker, prefix: str):
    gk = g.get("kind")
    if gk not in ESTIMATOR_KINDS:
        chk.error(f"{prefix}.kind", f"unknown estimator {gk!r}, expected one of {ESTIMATOR_KINDS}")
    for key in ("delta", "delta_inf", "rate"):
        if key in g:
            _check_range(chk, f"{prefix}.{key}", g[key], 0.0, lo_open=True)
    if gk == "nolla" and "delta_inf" not in g:
        chk.error(f"{prefix}.delta_inf", "nolla needs an asymptotic step delta_inf")
    if "delta_inf" in g and "delta" in g and g["delta_inf"] > g["delta"]:
        chk.error(f"{prefix}.delta_inf", "delta_inf must not exceed delta")
    if "tau" in g:
        _check_range(chk, f"{prefix}.tau", g["tau"], 0.0, 1.0, lo_open=True)
    if "alpha" in g:
        _check_range(chk, f"{prefix}.alpha", g["alpha"], 0.0, 1.0)
    for key in ("beta", "eta", "drift_std"):
        if key in g:
            _check_range(chk, f"{prefix}.{key}", g[key], 0.0)
    if "method" in g and g["method"] not in ("full", "ogd", "hb", "nag"):
        chk.error(f"{prefix}.method", f"unknown update method {g['method']!r}")
    if "gate" in g and g["gate"] not in [v.value for v in MomentumGate]:
        chk.error(f"{prefix}.gate", f"unknown momentum gate {g['gate']!r}")


def _check_ensemble(raw: dict, chk: _Checker) -> dict:
    ens = dict(alphas=[0.0], betas=[0.0, 0.15, 0.3], etas=[0.5, 1.0, 2.0, 3.0], epsilon=1.0, mu=1e-3,
               gate=MomentumGate.WHEN_CQI_ABSENT.value, loss=LossKind.THRESHOLD.value, gamma0=0.0)
    ens.update(raw.get("ensemble", {}))
    for key in ("alphas", "betas", "etas"):
        if not isinstance(ens[key], list) or not ens[key]:
            chk.error(f"ensemble.{key}", "grid must be a non-empty list")
            ens[key] = [0.0]
    for a in ens["alphas"]:
        _check_range(chk, "ensemble.alphas", a, 0.0, 1.0)
    for b in ens["betas"]:
        _check_range(chk, "ensemble.betas", b, 0.0)
    for h in ens["etas"]:
        _check_range(chk, "ensemble.etas", h, 0.0)
    _check_range(chk, "ensemble.epsilon", ens["epsilon"], 0.0, lo_open=True)
    _check_range(chk, "ensemble.mu", ens["mu"], 0.0, 1.0)
    if ens["gate"] not in [g.value for g in MomentumGate]:
        chk.error("ensemble.gate", f"unknown momentum gate {ens['gate']!r}")
    if ens["loss"] not in [k.value for k in LossKind]:
        chk.error("ensemble.loss", f"unknown expert loss {ens['loss']!r}")
    return ens


def _parse_seeds(value, chk) -> list[int]:
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        return parse_seed_range(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value):
        if value[1] < value[0]:
            chk.error("experiment.seeds", "seed range must be [first, last] with first <= last")
            return []
        return list(range(value[0], value[1] + 1))
    chk.error("experiment.seeds", "expected an integer, 'a..b' or [first, last]")
    return []


def parse_seed_range(text: str) -> list[int]:
    """Parse ``'a..b'`` (inclusive) or a single integer."""
    if ".." in text:
        a, b = text.split("..", 1)
        a, b = int(a), int(b)
        if b < a:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    return [int(text)]


def parse_config(text: str, origin: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{origin}: syntax error: {exc}"]) from None
    chk = _Checker(text, origin)

    exp = raw.get("experiment", {})
    kind = exp.get("kind")
    if kind not in EXPERIMENT_KINDS:
        chk.error("experiment.kind", f"unknown experiment kind {kind!r}, expected one of {EXPERIMENT_KINDS}")
    seeds = _parse_seeds(exp.get("seeds", [0, 0]), chk)
    length = exp.get("length", 3000)
    if not isinstance(length, int) or length < 1:
        chk.error("experiment.length", "length must be a positive integer")
        length = 1
    warmup = exp.get("warmup", 100)
    if not isinstance(warmup, int) or not 0 <= warmup < length:
        chk.error("experiment.warmup", "warmup must be an integer in [0, length)")
        warmup = 0

    link = raw.get("link", {})
    true_model = _build_link(link, chk, "link")
    est_link = dict(link)
    est_link.update(raw.get("est_link", {}))
    est_model = _build_link(est_link, chk, "est_link") if "est_link" in raw else true_model
    cqi_map = _build_cqi(raw.get("cqi", {}), chk, "cqi")
    est_cqi_map = _build_cqi(raw["est_cqi"], chk, "est_cqi") if "est_cqi" in raw else cqi_map

    simsec = raw.get("sim", {})
    for key in ("true_cbs", "est_cbs"):
        if key in simsec and (not isinstance(simsec[key], int) or simsec[key] <= 0):
            chk.error(f"sim.{key}", "code block size must be a positive integer")
    delay = simsec.get("feedback_delay", 5)
    if not isinstance(delay, int) or delay < 0:
        chk.error("sim.feedback_delay", "delay must be a nonnegative integer")
    cqi_delay = simsec.get("cqi_delay")
    if cqi_delay is not None and (not isinstance(cqi_delay, int) or cqi_delay < 0):
        chk.error("sim.cqi_delay", "delay must be a nonnegative integer")
    period = simsec.get("cqi_period", 10)
    if not isinstance(period, int) or period < 0:
        chk.error("sim.cqi_period", "cqi_period must be a nonnegative integer (0 disables CQI)")
    noise = simsec.get("cqi_noise", "none")
    if noise not in [n.value for n in CqiNoise]:
        chk.error("sim.cqi_noise", f"unknown CQI noise {noise!r}")

    traces = raw.get("traces", {}).get("mix", [])
    if kind in ("replay", "selftuning", "sweep", "tradeoff") and not traces:
        chk.error("traces.mix", "at least one trace template is required")
    for i, t in enumerate(traces):
        _check_trace(t, chk, f"traces.mix[{i}]", length)

    ens = _check_ensemble(raw, chk)

    generators = raw.get("generators", [])
    if kind == "replay" and not generators:
        chk.error("generators", "replay experiments need at least one [[generators]] entry")
    for i, g in enumerate(generators):
        _check_estimator_spec(g, chk, f"generators[{i}]")

    policy = dict(kind="target", tau=0.1, gain=0.02, p_explore=[0.0], integrate_explored=True)
    policy.update(raw.get("policy", {}))
    _check_range(chk, "policy.tau", policy["tau"], 0.0, 1.0)
    pe = policy["p_explore"] if isinstance(policy["p_explore"], list) else [policy["p_explore"]]
    for p in pe:
        _check_range(chk, "policy.p_explore", p, 0.0, 1.0)
    policy["p_explore"] = pe
    if policy["kind"] not in ("target", "oracle", "explore"):
        chk.error("policy.kind", f"unknown policy {policy['kind']!r}")

    step = dict(levels=[0.0, 10.0], change_at=None, band_db=2.0, hold=50, window=50,
                methods=[["ogd", 0.0], ["nag", 0.3], ["nag", 0.6], ["hb", 0.6]], eta=1.0)
    step.update(raw.get("step", {}))
    if kind == "step_response":
        if step["change_at"] is None:
            step["change_at"] = length // 2
        if not 0 < int(step["change_at"]) < length:
            chk.error("step.change_at", "step must lie inside the trace")
        for i, mth in enumerate(step["methods"]):
            if not (isinstance(mth, list) and len(mth) == 2 and mth[0] in ("ogd", "hb", "nag", "full")):
                chk.error("step.methods", f"entry {i} must be [method, beta] with method in ogd/hb/nag/full")

    replay = dict(estimators=["fs", "salad"])
    replay.update(raw.get("replay", {}))
    for i, name in enumerate(replay["estimators"]):
        if name not in ("fs", "salad", "ftl"):
            chk.error("replay.estimators", f"unknown replay estimator {name!r}, expected fs, salad or ftl")

    sweep = dict(etas=[0.2, 1.0, 1.8, 2.6], betas=[0.0, 0.2, 0.4, 0.6], alphas=[0.0, 0.1, 0.5, 1.0])
    sweep.update(raw.get("sweep", {}))
    regret_sec = dict(horizons=[1000, 2000, 4000, 8000], mcs=12, level_offsets=[-2.0, 2.0],
                      guess_offsets=[-4.0, -2.0, 0.5, 2.0, 4.0], mu=1e-3)
    regret_sec.update(raw.get("regret", {}))

    if chk.problems:
        raise ConfigError(chk.problems)

    sim = LinkSimConfig(true_model=true_model, est_model=est_model,
                        true_cbs=int(simsec.get("true_cbs", 1000)),
                        est_cbs=simsec.get("est_cbs"),
                        feedback_delay=int(delay), cqi_delay=cqi_delay, cqi_period=int(period) or None,
                        cqi_noise=CqiNoise(noise), cqi_map=cqi_map)
    return ExperimentConfig(name=str(exp.get("name", Path(origin).stem)), kind=kind, seeds=seeds,
                            length=length, warmup=warmup, true_model=true_model, est_model=est_model,
                            cqi_map=cqi_map, est_cqi_map=est_cqi_map, sim=sim, traces=traces,
                            ensemble=ens, generators=generators, policy=policy, step=step,
                            sweep=sweep, regret=regret_sec, replay=replay,
                            save_datasets=bool(exp.get("save_datasets", True)), raw=raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config: {exc.strerror}"]) from None
    cfg = parse_config(text, origin=str(path))
    cfg.path = path
    return cfg


def sample_trace_spec(template: dict, rng: np.random.Generator, length: int):
    """
    Draw a concrete trace spec from a template.

    ``[lo, hi]`` values are sampled uniformly. For ``steps`` without fixed
    ``change_at`` the number of levels is drawn from ``n_levels`` (inclusive),
    the change slots uniformly from ``[margin, length - margin)`` and every
    level from the previous one plus a jump in ``[-max_jump, max_jump]``,
    clipped to ``range``. For ``regime_switch`` a ``[lo, hi]`` switch slot is
    drawn from ``lo <= s < hi``, and ``swap = true`` reverses the segment
    order with probability 1/2.
    """
    from .simulator import RandomWalk, RegimeSwitch, Sinusoid, StepChanges

    def draw(key, default=None):
        v = template.get(key, default)
        if isinstance(v, list) and len(v) == 2 and not isinstance(v[0], (list, dict)):
            return float(rng.uniform(v[0], v[1]))
        return v

    kind = template["kind"]
    if kind == "random_walk":
        bounds = template.get("bounds")
        return RandomWalk(step_std=draw("step_std", 0.1), start=draw("start", 5.0),
                          bounds=tuple(bounds) if bounds else None)
    if kind == "sinusoid":
        return Sinusoid(amplitude=draw("amplitude", 3.0), period=draw("period", 500.0),
                        offset=draw("offset", 5.0), phase=draw("phase", 0.0))
    if kind == "steps":
        if "change_at" in template:
            return StepChanges(tuple(float(v) for v in template["levels"]),
                               tuple(int(v) for v in template["change_at"]))
        lo_n, hi_n = template.get("n_levels", [2, 4])
        n = int(rng.integers(lo_n, hi_n + 1))
        margin = int(template.get("margin", 300))
        slots = np.sort(rng.choice(np.arange(margin, length - margin), n - 1, replace=False))
        lv_lo, lv_hi = template.get("range", [-2.0, 16.0])
        jump = float(template.get("max_jump", 8.0))
        levels = [draw("start", [lv_lo, lv_hi])]
        for _ in range(n - 1):
            levels.append(float(np.clip(levels[-1] + rng.uniform(-jump, jump), lv_lo, lv_hi)))
        return StepChanges(tuple(levels), tuple(int(s) for s in slots))
    if kind == "regime_switch":
        segs = [sample_trace_spec(s, rng, length) for s in template["segments"]]
        at = [int(rng.integers(v[0], v[1])) if isinstance(v, list) else int(v) for v in template["switch_at"]]
        if template.get("swap", False) and rng.random() < 0.5:
            segs.reverse()
        return RegimeSwitch(tuple(segs), tuple(at))
    raise ValueError(f"unknown trace kind {kind!r}")


@dataclass
class EstimatorConfig:
    """Standalone estimator description, used to replay recorded datasets."""

    spec: dict
    model: SigmoidLinkModel
    cqi_map: CqiMap
    feedback_delay: int
    est_cbs: Optional[int]
    cqi_delay: Optional[int]
    ensemble: dict
    warmup: int


def parse_estimator_config(text: str, origin: str = "<estimator>") -> EstimatorConfig:
    """
    Parse an estimator config: an ``[estimator]`` table (``kind`` plus its
    parameters), optional ``[link]``, ``[cqi]``, ``[ensemble]`` tables and
    ``[sim]`` keys ``feedback_delay``, ``cqi_delay`` and ``est_cbs``.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{origin}: syntax error: {exc}"]) from None
    chk = _Checker(text, origin)
    spec = dict(raw.get("estimator", {}))
    if not spec:
        chk.error("estimator.kind", "missing [estimator] table")
    else:
        _check_estimator_spec(spec, chk, "estimator")
    model = _build_link(raw.get("link", {}), chk, "link")
    cqi_map = _build_cqi(raw.get("cqi", {}), chk, "cqi")
    ens = _check_ensemble(raw, chk)
    simsec = raw.get("sim", {})
    delay = simsec.get("feedback_delay", 5)
    if not isinstance(delay, int) or delay < 0:
        chk.error("sim.feedback_delay", "delay must be a nonnegative integer")
    cqi_delay = simsec.get("cqi_delay")
    if cqi_delay is not None and (not isinstance(cqi_delay, int) or cqi_delay < 0):
        chk.error("sim.cqi_delay", "delay must be a nonnegative integer")
    est_cbs = simsec.get("est_cbs")
    if est_cbs is not None and (not isinstance(est_cbs, int) or est_cbs <= 0):
        chk.error("sim.est_cbs", "code block size must be a positive integer")
    warmup = spec.pop("warmup", 100)
    if not isinstance(warmup, int) or warmup < 0:
        chk.error("estimator.warmup", "warmup must be a nonnegative integer")
    if chk.problems:
        raise ConfigError(chk.problems)
    return EstimatorConfig(spec=spec, model=model, cqi_map=cqi_map, feedback_delay=delay,
                           est_cbs=est_cbs, cqi_delay=cqi_delay, ensemble=ens, warmup=warmup)


def load_estimator_config(path) -> EstimatorConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config: {exc.strerror}"]) from None
    return parse_estimator_config(text, origin=str(path))
