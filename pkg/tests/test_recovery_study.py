import math
from pathlib import Path

import pandas as pd

import scripts.recovery_study as recovery_study
from src.config.load_config import load_run_config

ROOT = Path(__file__).resolve().parents[1]


def test_study_rows_and_summary():
    config = load_run_config(str(ROOT / "src" / "config" / "run_config.yaml"))
    frame = recovery_study.run_study(config, n_seeds=3, first_seed=5)
    assert list(frame["seed"]) == [5, 6, 7]
    summary = recovery_study.summarise(frame)
    assert summary["runs"] == 3
    assert summary["failed"] == 0
    assert summary["median_gamma_sigma_hz"] > 0.0


def test_summary_skips_failed_runs():
    frame = pd.DataFrame(
        [
            {"seed": 0, "gamma_hz": 8.4e5, "gamma_sigma_hz": 4e4, "chi2_reduced": 1.0, "error": "", "z": 0.5},
            {"seed": 1, "gamma_hz": math.nan, "gamma_sigma_hz": math.nan, "chi2_reduced": math.nan, "error": "singular", "z": math.nan},
        ]
    )
    summary = recovery_study.summarise(frame)
    assert summary["failed"] == 1
    assert summary["within_2_sigma"] == 1
    assert summary["coverage_1_sigma"] == 1.0
