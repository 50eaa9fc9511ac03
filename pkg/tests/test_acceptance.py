"""Long Monte Carlo and training runs; select with `pytest -m slow`."""

import json
import os

import numpy as np
import pytest
from scipy.optimize import brentq

from sjed.baselines import detector_ber_ci, mrc_ber_bound
from sjed.cli import main
from sjed.hypernet import HyperNet, save_weights
from sjed.metrics import check_metric_consistency
from sjed.models import SnrGrid, SweepConfig, SystemConfig, TrainConfig
from sjed.simulation import run_sweep
from sjed.training import evaluate_bce, train


pytestmark = pytest.mark.slow

HOLDOUT_FRAMES = 2000
WORKERS = os.cpu_count() or 1


def ci_separated(better, worse) -> bool:
    """Upper CI bound of `better` lies below the lower bound of `worse`."""
    _, hi = detector_ber_ci(better.bit_errors, better.bits)
    lo, _ = detector_ber_ci(worse.bit_errors, worse.bits)
    return hi < lo


def test_simo_matches_mrc_closed_form():
    """Test the genie SIMO BER against Rayleigh MRC where the bound is 1e-3."""
    system = SystemConfig()
    snr_db = brentq(lambda s: mrc_ber_bound(s, system) - 1e-3, -10.0, 30.0)
    cfg = SweepConfig(
        system=system,
        detectors=["simo_perfect"],
        snr_grid=SnrGrid(lo=snr_db, hi=snr_db),
        frames_per_point=1100,
        seed=5,
    )
    (record,) = run_sweep(cfg)

    assert record.bits >= 2_000_000
    assert record.ber == pytest.approx(1e-3, rel=0.1)


def test_detector_ordering_perfect_csi():
    """Test genie SIMO < max-log ML < L-MMSE at 10 dB with clear margins."""
    cfg = SweepConfig(
        detectors=["simo_perfect", "maxlog_perfect", "lmmse_perfect"],
        snr_grid=SnrGrid(lo=10, hi=10),
        frames_per_point=16_000,
        seed=6,
    )
    simo, maxlog, lmmse = run_sweep(cfg, workers=WORKERS)

    assert lmmse.bits >= 30_000_000
    assert ci_separated(maxlog, lmmse)
    assert ci_separated(simo, maxlog)


def test_desk_training(tmp_path, desk_system):
    """Test desk-scale training beats the untrained net and L-MMSE."""
    train_cfg = TrainConfig(batch_size=100, total_frames=200_000, seed=7)
    untrained = HyperNet.for_system(
        desk_system, train_cfg.hidden_dims, np.random.default_rng(train_cfg.seed)
    )
    result = train(desk_system, train_cfg)

    before = evaluate_bce(
        untrained, desk_system, HOLDOUT_FRAMES, (0.0, 12.0), np.random.default_rng(99)
    )
    after = evaluate_bce(
        result.net, desk_system, HOLDOUT_FRAMES, (0.0, 12.0), np.random.default_rng(99)
    )
    assert after < before

    weights = tmp_path / "desk.json"
    save_weights(result.net, desk_system, weights)
    cfg = SweepConfig(
        system=desk_system,
        detectors=["sjed", "lmmse"],
        weights_path=weights,
        snr_grid=SnrGrid(lo=4, hi=12, step=2),
        frames_per_point=HOLDOUT_FRAMES,
        seed=100,
    )
    records = run_sweep(cfg, workers=WORKERS)
    sjed = [r for r in records if r.detector == "sjed"]
    lmmse = [r for r in records if r.detector == "lmmse"]

    for a, b in zip(sjed, lmmse, strict=True):
        assert a.ber <= b.ber, f"S-JED worse than L-MMSE at {a.snr_db} dB"
    assert check_metric_consistency(records) == []


def test_coded_maxlog_chain():
    """Test coded PER with max-log detection on the built-in code."""
    cfg = SweepConfig(
        detectors=["maxlog"],
        snr_grid=SnrGrid(lo=4, hi=12, step=4),
        frames_per_point=250,
        coded=True,
        seed=8,
    )
    records = run_sweep(cfg)

    assert records[-1].packets >= 1000
    assert records[-1].per < 1e-2
    for prev, cur in zip(records, records[1:], strict=False):
        _, hi = detector_ber_ci(prev.packet_errors, prev.packets)
        lo, _ = detector_ber_ci(cur.packet_errors, cur.packets)
        assert lo <= hi


def test_repro_sweep_is_byte_identical(tmp_path):
    """Test `sweep --repro` output does not depend on the worker count."""
    config = tmp_path / "sweep.json"
    config.write_text(
        json.dumps(
            {
                "detectors": ["lmmse", "simo_est"],
                "snr_grid": {"lo": 0, "hi": 12, "step": 4},
                "frames_per_point": 100,
                "seed": 9,
            }
        )
    )
    one, four = tmp_path / "one.csv", tmp_path / "four.csv"

    base = ["sweep", "--config", str(config), "--repro"]
    assert main([*base, "--out", str(one), "--workers", "1"]) == 0
    assert main([*base, "--out", str(four), "--workers", "4"]) == 0
    assert one.read_bytes() == four.read_bytes()
