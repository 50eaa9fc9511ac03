"""Tests for Pydantic models."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from sjed.models import (
    Detector,
    DetectorOutput,
    MetricsRecord,
    SnrGrid,
    SweepConfig,
    SystemConfig,
    TrainConfig,
    TrainJob,
    UnfoldedParams,
    pack_layer_params,
)


def test_system_config_defaults():
    """Test SystemConfig defaults match the 8x4 reference system."""
    cfg = SystemConfig()

    assert cfg.num_slots == 244
    assert cfg.param_dim == 10 * 6
    assert cfg.alpha == pytest.approx(1 / math.sqrt(2))
    assert cfg.fingerprint() == {"B": 8, "U": 4, "T": 4, "D": 240, "Tmax": 10}


def test_system_config_validation_errors():
    """Test SystemConfig validation errors."""
    # Fewer pilots than users
    with pytest.raises(ValidationError):
        SystemConfig(num_users=4, num_pilots=2)

    # Zero channel energy
    with pytest.raises(ValidationError):
        SystemConfig(channel_var=0.0)

    # Unknown keys are rejected
    with pytest.raises(ValidationError):
        SystemConfig.model_validate({"num_antennas": 8, "antennas": 8})


def test_train_config_validation_errors():
    """Test TrainConfig validation errors."""
    with pytest.raises(ValidationError):
        TrainConfig(snr_range_db=(12.0, 0.0))

    with pytest.raises(ValidationError):
        TrainConfig(hidden_dims=[64, 64])

    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)


def test_train_job_from_json():
    """Test TrainJob parses a partial JSON document."""
    job = TrainJob.model_validate_json('{"train": {"total_frames": 0, "seed": 3}}')

    assert job.system == SystemConfig()
    assert job.train.total_frames == 0
    assert job.train.seed == 3


def test_snr_grid_points():
    """Test SnrGrid produces an inclusive grid."""
    assert SnrGrid(lo=0, hi=12, step=2).points() == [0, 2, 4, 6, 8, 10, 12]
    assert SnrGrid(lo=5, hi=5).points() == [5]

    with pytest.raises(ValidationError):
        SnrGrid(lo=3, hi=1)


def test_sweep_config_requires_weights_for_sjed():
    """Test SweepConfig rejects sjed without a weight file."""
    with pytest.raises(ValidationError):
        SweepConfig(
            detectors=[Detector.SJED],
            snr_grid=SnrGrid(lo=0, hi=0),
            frames_per_point=1,
        )

    cfg = SweepConfig(
        detectors=["lmmse", "simo_perfect"],
        snr_grid=SnrGrid(lo=0, hi=0),
        frames_per_point=1,
    )
    assert cfg.detectors == [Detector.LMMSE, Detector.SIMO_PERFECT]


def test_sweep_config_rejects_unknown_detector():
    """Test SweepConfig rejects detector names it does not know."""
    with pytest.raises(ValidationError):
        SweepConfig(
            detectors=["zf"], snr_grid=SnrGrid(lo=0, hi=0), frames_per_point=1
        )


def test_unfolded_params_packing_order():
    """Test parameters are packed as [tau, lambda, eta_1..eta_U] per layer."""
    vector = np.arange(12.0)
    params = UnfoldedParams.from_vector(vector, num_layers=3, num_users=2)

    np.testing.assert_array_equal(params.tau, [0, 4, 8])
    np.testing.assert_array_equal(params.lam, [1, 5, 9])
    np.testing.assert_array_equal(params.eta, [[2, 3], [6, 7], [10, 11]])
    np.testing.assert_array_equal(params.to_vector(), vector)


def test_unfolded_params_batched():
    """Test batched unpacking keeps the leading batch axis."""
    vectors = np.arange(24.0).reshape(2, 12)
    params = UnfoldedParams.from_vector(vectors, num_layers=3, num_users=2)

    assert params.tau.shape == (2, 3)
    assert params.eta.shape == (2, 3, 2)
    np.testing.assert_array_equal(
        pack_layer_params(params.tau, params.lam, params.eta), vectors
    )


def test_unfolded_params_validation_errors():
    """Test UnfoldedParams rejects negative entries and shape mismatches."""
    with pytest.raises(ValidationError):
        UnfoldedParams(tau=np.array([-1.0]), lam=np.array([1.0]), eta=np.ones((1, 2)))

    with pytest.raises(ValidationError):
        UnfoldedParams(tau=np.ones(2), lam=np.ones(3), eta=np.ones((2, 2)))


def test_unfolded_params_constant():
    """Test constant parameters fill every layer."""
    params = UnfoldedParams.constant(4, 2, tau=0.5, lam=1.0, eta=2.0)

    assert params.num_layers == 4
    assert params.num_users == 2
    assert np.all(params.eta == 2.0)


def test_detector_output_hard_bits():
    """Test hard decisions map positive LLRs to bit 1."""
    out = DetectorOutput(llr=np.array([[[1.5, -0.2]], [[0.0, 3.0]]]))

    np.testing.assert_array_equal(out.hard_bits, [[[1, 0]], [[0, 1]]])
    assert out.clamped_bias is False


def test_metrics_record_rates():
    """Test MetricsRecord rates and merging."""
    empty = MetricsRecord(snr_db=0.0, detector="lmmse")
    assert math.isnan(empty.ber)
    assert math.isnan(empty.per)

    a = MetricsRecord(snr_db=0.0, detector="lmmse", bit_errors=3, bits=100, frames=1)
    b = MetricsRecord(
        snr_db=0.0,
        detector="lmmse",
        bit_errors=1,
        bits=100,
        packet_errors=0,
        packets=100,
        frames=1,
    )
    merged = a.merge(b)

    assert merged.ber == pytest.approx(0.02)
    assert merged.per == 0.0
    assert merged.frames == 2


def test_metrics_record_validation_errors():
    """Test MetricsRecord rejects more errors than trials."""
    with pytest.raises(ValidationError):
        MetricsRecord(snr_db=0.0, detector="lmmse", bit_errors=5, bits=4)
