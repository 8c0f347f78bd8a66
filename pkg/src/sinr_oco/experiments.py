"""
Experiment drivers behind ``sinr-oco run``.

Every experiment kind is a per-seed job (one synthetic UE per seed) plus a
summary step. Jobs are independent and may run in worker processes; their
results are always gathered in seed order so outputs do not depend on
``jobs``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .baselines import Lts, Olla, salad_estimator
from .bler_model import CqiMap, SigmoidLinkModel
from .config import ExperimentConfig, sample_trace_spec
from .estimators import EstimatorParams, FeedbackEvent, MomentumGate, SinrEstimator
from .meta_experts import ExpertEnsemble, LossKind
from .metrics import percentiles, ranking_cdf, rmse, step_response
from .simulator import (
    ExplorationPolicy,
    OraclePolicy,
    SimStreams,
    StepChanges,
    TargetPolicy,
    TraceDataset,
    gen_trace,
    run_closed_loop,
    run_open_loop,
    spectral_efficiency,
)

__all__ = [
    "build_estimator",
    "build_ensemble",
    "ue_trace",
    "run_experiment",
    "step_response_job",
    "replay_job",
    "selftuning_job",
    "sweep_job",
    "tradeoff_job",
    "regret_run",
    "write_csv",
]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def build_ensemble(model: SigmoidLinkModel, ens: dict, cqi_map: Optional[CqiMap] = None,
                   track_history: bool = False) -> ExpertEnsemble:
    gate = MomentumGate(ens["gate"])
    params = [EstimatorParams(alpha=a, beta=b, eta=h, momentum_gate=gate)
              for a in ens["alphas"] for b in ens["betas"] for h in ens["etas"]]
    return ExpertEnsemble(model, params, cqi_map=cqi_map, epsilon=ens["epsilon"], mu=ens["mu"],
                          loss=LossKind(ens["loss"]), gamma0=ens.get("gamma0", 0.0),
                          track_history=track_history)


def build_estimator(spec: dict, model: SigmoidLinkModel, cqi_map: Optional[CqiMap] = None,
                    ensemble: Optional[dict] = None, tau: float = 0.1):
    """Instantiate an estimator or baseline from a config table (``kind`` plus parameters)."""
    kind = spec["kind"]
    gamma0 = float(spec.get("gamma0", 0.0))
    if kind in ("olla", "nolla"):
        return Olla(spec.get("delta", 1.0), spec.get("tau", tau), gamma0,
                    delta_inf=spec.get("delta_inf"), rate=spec.get("rate", 1.0 / 500))
    if kind == "lts":
        return Lts(model, drift_std=spec.get("drift_std", 0.1))
    if kind == "salad":
        return salad_estimator(model, gamma0)
    if kind == "single":
        params = EstimatorParams(alpha=spec.get("alpha", 0.0), beta=spec.get("beta", 0.0),
                                 eta=spec.get("eta", 1.0),
                                 momentum_gate=MomentumGate(spec.get("gate", "when_cqi_absent")))
        return SinrEstimator(model, params, cqi_map=cqi_map, method=spec.get("method", "full"), gamma0=gamma0)
    if kind == "fs":
        return build_ensemble(model, ensemble, cqi_map)
    raise ValueError(f"unknown estimator kind {kind!r}")


def generator_name(spec: dict) -> str:
    parts = [spec["kind"]]
    for key in ("delta", "delta_inf", "drift_std"):
        if key in spec:
            parts.append(f"{key}={spec[key]:g}")
    return spec.get("name", "_".join(parts))


def ue_trace(cfg: ExperimentConfig, seed: int) -> tuple[np.ndarray, SimStreams]:
    """
    The SINR trace of synthetic UE ``seed``.

    UE ``seed`` uses template ``seed % len(mix)``; the template is sampled
    and the trace generated from the channel stream of the UE's seed.
    """
    streams = SimStreams.from_seed(seed)
    template = cfg.traces[seed % len(cfg.traces)]
    spec = sample_trace_spec(template, streams.channel, cfg.length)
    return gen_trace(spec, cfg.length, streams.channel), streams


def _policy(cfg: ExperimentConfig, p_explore: float = 0.0):
    pol = cfg.policy
    cbs = cfg.sim.estimator_cbs
    if pol["kind"] == "oracle":
        return OraclePolicy(cfg.true_model, cfg.sim.true_cbs, pol["tau"])
    if pol["kind"] == "explore":
        return ExplorationPolicy(cfg.est_model, cbs, pol["tau"], p_explore, pol["gain"],
                                 integrate_explored=pol["integrate_explored"])
    return TargetPolicy(cfg.est_model, cbs, pol["tau"])


def _rmse_pair(est, truth, warmup):
    return rmse(est, truth, warmup), rmse(est, truth, 0)


# -- step response ---------------------------------------------------------

def _step_trace(cfg: ExperimentConfig) -> np.ndarray:
    st = cfg.step
    levels = tuple(float(v) for v in st["levels"])
    return gen_trace(StepChanges(levels, (int(st["change_at"]),)), cfg.length)


def _method_label(method: str, beta: float) -> str:
    return method if method == "ogd" else f"{method}_{beta:g}"


def step_response_job(cfg: ExperimentConfig, seed: int) -> dict:
    st = cfg.step
    trace = _step_trace(cfg)
    k, w = int(st["change_at"]), int(st["window"])
    out = {"seed": seed, "estimates": {}, "rows": []}
    for method, beta in st["methods"]:
        est = SinrEstimator(cfg.est_model, EstimatorParams(beta=float(beta), eta=float(st["eta"])),
                            method=method, gamma0=float(st["levels"][0]))
        ds = run_closed_loop(cfg.sim, trace, est, _policy(cfg), SimStreams.from_seed(seed))
        settling = step_response(ds.estimate, trace, k, st["band_db"], st["hold"]).settling
        overshoot = step_response(ds.estimate[:k + w], trace[:k + w], k, st["band_db"], st["hold"]).overshoot
        label = _method_label(method, float(beta))
        out["estimates"][label] = ds.estimate
        out["rows"].append((label, seed, settling, overshoot))
    return out


def summarize_step_response(cfg, results, out_dir: Optional[Path]):
    labels = [_method_label(m, float(b)) for m, b in cfg.step["methods"]]
    med = {}
    for lab in labels:
        rows = [r for res in results for r in res["rows"] if r[0] == lab]
        med[lab] = (float(np.median([r[2] for r in rows])), float(np.median([r[3] for r in rows])))
    if out_dir is not None:
        write_csv(out_dir / "step_response.csv", ["method", "seed", "settling", "overshoot"],
                  [r for res in results for r in res["rows"]])
        write_csv(out_dir / "summary.csv", ["method", "median_settling", "median_overshoot"],
                  [(lab, *med[lab]) for lab in labels])
        trace = _step_trace(cfg)
        first = results[0]
        write_csv(out_dir / f"estimates_seed{first['seed']}.csv", ["slot", "true_sinr", *labels],
                  [(t, trace[t], *(first["estimates"][lab][t] for lab in labels)) for t in range(cfg.length)])
    return {"median": med}


# -- open-loop replay ------------------------------------------------------

def _replay_estimators(cfg: ExperimentConfig, names, track=False):
    out = {}
    for name in names:
        if name in ("fs", "ftl"):
            if "fs" not in out:
                out["fs"] = build_ensemble(cfg.est_model, cfg.ensemble, cfg.est_cqi_map, track_history=track)
        else:
            out[name] = salad_estimator(cfg.est_model, cfg.ensemble.get("gamma0", 0.0))
    return out


def replay_job(cfg: ExperimentConfig, seed: int, out_dir: Optional[Path] = None) -> dict:
    """Closed-loop datasets per generator, then open-loop RMSE of each replay estimator."""
    trace, _ = ue_trace(cfg, seed)
    names = cfg.replay["estimators"]
    rows = []
    for g in cfg.generators:
        gname = generator_name(g)
        gen = build_estimator(g, cfg.est_model, cfg.est_cqi_map, cfg.ensemble, cfg.policy["tau"])
        policy = TargetPolicy(cfg.est_model, cfg.sim.estimator_cbs, g.get("tau", cfg.policy["tau"]))
        ds = run_closed_loop(cfg.sim, trace, gen, policy, SimStreams.from_seed(seed))
        if out_dir is not None and cfg.save_datasets:
            ds.to_csv(out_dir / "datasets" / f"{gname}_ue{seed}.csv")
        rows.append((seed, gname, "generator", *_rmse_pair(ds.estimate, trace, cfg.warmup)))
        ests = _replay_estimators(cfg, names, track="ftl" in names)
        for name, est in ests.items():
            r = run_open_loop(ds, cfg.sim, est)
            if name == "fs" and "fs" in names:
                rows.append((seed, gname, "fs", *_rmse_pair(r, trace, cfg.warmup)))
            if name == "salad":
                rows.append((seed, gname, "salad", *_rmse_pair(r, trace, cfg.warmup)))
        if "ftl" in names:
            ftl = np.asarray(ests["fs"].history["ftl"])
            rows.append((seed, gname, "ftl", *_rmse_pair(ftl, trace, cfg.warmup)))
    return {"seed": seed, "rows": rows}


def summarize_replay(cfg, results, out_dir: Optional[Path]):
    rows = [r for res in results for r in res["rows"]]
    table = {}
    for gname in dict.fromkeys(r[1] for r in rows):
        for ename in dict.fromkeys(r[2] for r in rows):
            vals = [r for r in rows if r[1] == gname and r[2] == ename]
            if vals:
                table[(gname, ename)] = (percentiles([v[3] for v in vals]), percentiles([v[4] for v in vals]))
    if out_dir is not None:
        write_csv(out_dir / "rmse.csv", ["seed", "generator", "estimator", "rmse", "rmse_no_warmup"], rows)
        write_csv(out_dir / "percentiles.csv",
                  ["generator", "estimator", "p20", "p50", "p80", "p20_no_warmup", "p50_no_warmup", "p80_no_warmup"],
                  [(g, e, *p, *q) for (g, e), (p, q) in table.items()])
    return {"percentiles": table, "rows": rows}


# -- self-tuning -----------------------------------------------------------

def _generated_dataset(cfg: ExperimentConfig, seed: int) -> tuple[TraceDataset, np.ndarray]:
    trace, _ = ue_trace(cfg, seed)
    g = cfg.generators[0] if cfg.generators else {"kind": "salad"}
    gen = build_estimator(g, cfg.est_model, cfg.est_cqi_map, cfg.ensemble, cfg.policy["tau"])
    ds = run_closed_loop(cfg.sim, trace, gen, _policy(cfg), SimStreams.from_seed(seed))
    return ds, trace


def selftuning_job(cfg: ExperimentConfig, seed: int) -> dict:
    ds, trace = _generated_dataset(cfg, seed)
    ens = build_ensemble(cfg.est_model, cfg.ensemble, cfg.est_cqi_map, track_history=True)
    fs = run_open_loop(ds, cfg.sim, ens)
    experts = np.asarray(ens.history["experts"])
    expert_rmse = [rmse(experts[:, k], trace, cfg.warmup) for k in range(experts.shape[1])]
    fs_rmse = rmse(fs, trace, cfg.warmup)
    ftl_rmse = rmse(np.asarray(ens.history["ftl"]), trace, cfg.warmup)
    return {"seed": seed, "fs": fs_rmse, "ftl": ftl_rmse, "experts": expert_rmse,
            "rank_fs": ranking_cdf(fs_rmse, expert_rmse), "rank_ftl": ranking_cdf(ftl_rmse, expert_rmse),
            "params": [(p.alpha, p.beta, p.eta) for p in ens.params]}


def summarize_selftuning(cfg, results, out_dir: Optional[Path]):
    ranks = np.array([r["rank_fs"] for r in results])
    summary = {"median_fs": float(np.median([r["fs"] for r in results])),
               "median_ftl": float(np.median([r["ftl"] for r in results])),
               "ranks": ranks}
    if out_dir is not None:
        write_csv(out_dir / "ranking.csv", ["seed", "fs_rmse", "ftl_rmse", "best_expert_rmse", "rank_fs", "rank_ftl"],
                  [(r["seed"], r["fs"], r["ftl"], min(r["experts"]), r["rank_fs"], r["rank_ftl"]) for r in results])
        write_csv(out_dir / "experts.csv", ["seed", "expert", "alpha", "beta", "eta", "rmse"],
                  [(r["seed"], k, *r["params"][k], v) for r in results for k, v in enumerate(r["experts"])])
        write_csv(out_dir / "summary.csv", ["median_fs_rmse", "median_ftl_rmse", "frac_rank_fs_le_0.2",
                                            "frac_rank_fs_le_0.3"],
                  [(summary["median_fs"], summary["median_ftl"], float(np.mean(ranks <= 0.2)),
                    float(np.mean(ranks <= 0.3)))])
    return summary


# -- parameter sweep -------------------------------------------------------

def _sweep_grid(cfg):
    sw = cfg.sweep
    grid = [("eta_beta", 0.0, b, h) for b in sw["betas"] for h in sw["etas"]]
    grid += [("eta_alpha", a, 0.0, h) for a in sw["alphas"] for h in sw["etas"]]
    return grid


def sweep_job(cfg: ExperimentConfig, seed: int) -> dict:
    ds, trace = _generated_dataset(cfg, seed)
    grid = _sweep_grid(cfg)
    gate = MomentumGate(cfg.ensemble["gate"])
    params = [EstimatorParams(alpha=a, beta=b, eta=h, momentum_gate=gate) for _, a, b, h in grid]
    # experts do not interact, so one tracked ensemble replays every grid point at once
    ens = ExpertEnsemble(cfg.est_model, params, cfg.est_cqi_map, track_history=True)
    run_open_loop(ds, cfg.sim, ens)
    experts = np.asarray(ens.history["experts"])
    return {"seed": seed, "rmse": [rmse(experts[:, k], trace, cfg.warmup) for k in range(len(grid))]}


def summarize_sweep(cfg, results, out_dir: Optional[Path]):
    grid = _sweep_grid(cfg)
    rows = []
    for k, (name, a, b, h) in enumerate(grid):
        rows.append((name, a, b, h, *percentiles([r["rmse"][k] for r in results])))
    if out_dir is not None:
        write_csv(out_dir / "sweep.csv", ["grid", "alpha", "beta", "eta", "p20", "p50", "p80"], rows)
    return {"rows": rows}


# -- exploration trade-off -------------------------------------------------

def tradeoff_job(cfg: ExperimentConfig, seed: int) -> dict:
    trace, _ = ue_trace(cfg, seed)
    rows = []
    for pe in cfg.policy["p_explore"]:
        ens = build_ensemble(cfg.est_model, cfg.ensemble, cfg.est_cqi_map)
        ds = run_closed_loop(cfg.sim, trace, ens, _policy(cfg, pe), SimStreams.from_seed(seed))
        rows.append((seed, pe, rmse(ds.estimate, trace, cfg.warmup), spectral_efficiency(ds.y, ds.mcs),
                     float(np.mean(ds.y))))
    return {"seed": seed, "rows": rows}


def summarize_tradeoff(cfg, results, out_dir: Optional[Path]):
    rows = [r for res in results for r in res["rows"]]
    table = []
    for pe in cfg.policy["p_explore"]:
        sel = [r for r in rows if r[1] == pe]
        table.append((pe, float(np.median([r[2] for r in sel])), float(np.median([r[3] for r in sel])),
                      float(np.median([r[4] for r in sel]))))
    if out_dir is not None:
        write_csv(out_dir / "runs.csv", ["seed", "p_explore", "rmse", "spectral_efficiency", "bler"], rows)
        write_csv(out_dir / "tradeoff.csv", ["p_explore", "median_rmse", "median_spectral_efficiency",
                                             "median_bler"], table)
    return {"table": table}


# -- tracking regret -------------------------------------------------------

def regret_run(model: SigmoidLinkModel, horizon: int, seed: int, mcs: int = 12,
               level_offsets=(-2.0, 2.0), guess_offsets=(-4.0, -2.0, 0.5, 2.0, 4.0),
               mu: float = 1e-3, epsilon: float = 1.0, cbs: int = 1000) -> float:
    """
    Fixed-Share threshold-loss regret against the best expert of each segment.

    The true SINR sits at ``c + level_offsets[0]`` for the first half of the
    horizon and at ``c + level_offsets[1]`` for the second, with ``c`` the
    BLER-curve center of ``mcs``, which is used in every slot. Experts are
    frozen guesses ``c + guess_offsets`` (``eta = 0``), so each segment is
    stationary and has its own best experts.
    """
    c = model.params(mcs, cbs)[0]
    half = horizon // 2
    truth = np.where(np.arange(horizon) < half, c + level_offsets[0], c + level_offsets[1])
    p = np.array([model.bler(g, mcs, cbs) for g in truth])
    y = (np.random.default_rng([horizon, seed]).random(horizon) < p).astype(int)
    guesses = [c + g for g in guess_offsets]
    ens = ExpertEnsemble(model, [EstimatorParams(eta=0.0)] * len(guesses), gamma0=guesses,
                         mu=mu, epsilon=epsilon, loss=LossKind.THRESHOLD)
    losses = np.empty((horizon, len(guesses)))
    for t in range(horizon):
        ens.predict()
        ens.update(FeedbackEvent(mcs, cbs, int(y[t])))
        losses[t] = ens.last_losses
    oracle = losses[:half].sum(axis=0).min() + losses[half:].sum(axis=0).min()
    return float(np.sum(ens.mixture_losses) - oracle)


def regret_job(cfg: ExperimentConfig, seed: int) -> dict:
    rg = cfg.regret
    return {"seed": seed, "regret": [regret_run(cfg.est_model, int(T), seed, rg["mcs"], rg["level_offsets"],
                                                rg["guess_offsets"], rg["mu"], cfg.ensemble["epsilon"],
                                                cfg.sim.true_cbs) for T in rg["horizons"]]}


def summarize_regret(cfg, results, out_dir: Optional[Path]):
    hs = cfg.regret["horizons"]
    mean = [float(np.mean([r["regret"][k] for r in results])) for k in range(len(hs))]
    rows = [(T, m, m / T) for T, m in zip(hs, mean)]
    if out_dir is not None:
        write_csv(out_dir / "regret.csv", ["horizon", "mean_regret", "regret_per_slot"], rows)
    return {"rows": rows}


_JOBS: dict[str, tuple[Callable, Callable]] = {
    "step_response": (step_response_job, summarize_step_response),
    "replay": (replay_job, summarize_replay),
    "selftuning": (selftuning_job, summarize_selftuning),
    "sweep": (sweep_job, summarize_sweep),
    "tradeoff": (tradeoff_job, summarize_tradeoff),
    "regret": (regret_job, summarize_regret),
}


def _call(args):
    job, cfg, seed, out_dir = args
    if job is replay_job:
        return job(cfg, seed, out_dir)
    return job(cfg, seed)


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None, jobs: int = 1) -> dict:
    """
    Run every seed of ``cfg`` and write the result tables to ``out_dir``
    (nothing is written when it is `None`). Returns the summary.
    """
    job, summarize = _JOBS[cfg.kind]
    seeds = list(cfg.seeds if seeds is None else seeds)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if cfg.kind == "replay" and cfg.save_datasets:
            (out_dir / "datasets").mkdir(exist_ok=True)
    tasks = [(job, cfg, s, out_dir) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    summary = summarize(cfg, results, out_dir)
    summary["seeds"] = seeds
    return summary
