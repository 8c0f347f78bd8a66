"""
Regenerate the golden replay files (run from the repository root):

    python3 tests/data/make_golden.py

golden_dataset.csv   closed-loop OLLA run, 400 slots, noisy CQI every 10 slots
golden_salad.csv     its open-loop replay through estimators/salad
golden_fs12.csv      its open-loop replay through estimators/fs12

The replay test compares fresh replays byte for byte against these files,
so only regenerate them after an intentional change of numerics.
"""

from pathlib import Path

from sinr_oco.baselines import Olla
from sinr_oco.bler_model import SigmoidLinkModel
from sinr_oco.cli import main
from sinr_oco.simulator import (CqiNoise, LinkSimConfig, RandomWalk, SimStreams, TargetPolicy, gen_trace,
                                run_closed_loop)

HERE = Path(__file__).parent


def make_dataset(path: Path) -> None:
    model = SigmoidLinkModel.linear()
    cfg = LinkSimConfig(model, model, feedback_delay=5, cqi_period=10, cqi_noise=CqiNoise.PLUS_MINUS_ONE)
    streams = SimStreams.from_seed(2024)
    trace = gen_trace(RandomWalk(step_std=0.3, start=6.0, bounds=(-4.0, 18.0)), 400, streams.channel)
    ds = run_closed_loop(cfg, trace, Olla(1.0, 0.1), TargetPolicy(model, 1000, 0.1), streams)
    ds.to_csv(path)


if __name__ == "__main__":
    make_dataset(HERE / "golden_dataset.csv")
    for name in ("salad", "fs12"):
        main(["replay", str(HERE / "golden_dataset.csv"), "--estimator", f"estimators/{name}",
              "--out", str(HERE / f"golden_{name}.csv")])
