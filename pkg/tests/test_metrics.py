"""Tests for metric accumulation and CSV output."""

import math

import numpy as np
import pytest

from sjed.metrics import (
    CSV_HEADER,
    PacketResult,
    bit_bce,
    check_metric_consistency,
    read_csv,
    update_metrics,
    write_csv,
)
from sjed.models import MetricsRecord


@pytest.fixture
def empty_record():
    """Fresh L-MMSE record at 0 dB."""
    return MetricsRecord(snr_db=0.0, detector="lmmse")


def test_bit_bce_values():
    """Test per-bit BCE examples."""
    np.testing.assert_allclose(bit_bce(np.array([0.0]), np.array([1])), [math.log(2)])
    np.testing.assert_allclose(
        bit_bce(np.array([60.0]), np.array([1])), [0.0], atol=1e-25
    )
    np.testing.assert_allclose(bit_bce(np.array([60.0]), np.array([0])), [60.0])


def test_update_metrics_counts(empty_record):
    """Test one frame with two wrong signs out of four bits."""
    bits = np.array([[[1, 0]], [[0, 1]]])
    llr = np.array([[[3.0, 1.0]], [[-2.0, -0.5]]])

    rec = update_metrics(empty_record, llr, bits)

    assert rec.bit_errors == 2
    assert rec.bits == 4
    assert rec.frames == 1
    assert rec.ber == 0.5
    assert rec.bce == pytest.approx(float(bit_bce(llr, bits).mean()))
    assert math.isnan(rec.per)


def test_update_metrics_batch(empty_record):
    """Test a batch of frames accumulates per frame."""
    bits = np.ones((3, 2, 2, 4), dtype=int)
    rec = update_metrics(empty_record, np.full(bits.shape, 5.0), bits)

    assert rec.frames == 3
    assert rec.bits == 48
    assert rec.bit_errors == 0


def test_update_metrics_packets(empty_record):
    """Test packet errors count mismatches and decoder failures."""
    bits = np.zeros((2, 1, 2), dtype=int)
    sent = np.array([[0, 1], [1, 1], [0, 0]])
    decoded = PacketResult(
        decoded=np.array([[0, 1], [1, 0], [0, 0]]),
        sent=sent,
        success=np.array([True, True, False]),
    )
    rec = update_metrics(empty_record, -np.ones((2, 1, 2)), bits, decoded)

    assert rec.packets == 3
    assert rec.packet_errors == 2
    assert rec.per == pytest.approx(2 / 3)


def test_update_metrics_zero_packet_errors(empty_record):
    """Test a clean decoded batch reports PER 0."""
    sent = np.array([[1, 0]])
    decoded = PacketResult(decoded=sent.copy(), sent=sent, success=np.array([True]))
    rec = update_metrics(
        empty_record, np.ones((2, 1, 1)), np.ones((2, 1, 1), dtype=int), decoded
    )

    assert rec.per == 0.0


def test_update_metrics_shape_mismatch(empty_record):
    """Test mismatched LLR and bit shapes."""
    with pytest.raises(ValueError):
        update_metrics(empty_record, np.zeros((2, 1, 3)), np.zeros((2, 1, 2)))


def test_write_csv_header_only(tmp_path):
    """Test an empty sweep writes the header alone."""
    path = tmp_path / "out" / "empty.csv"
    write_csv([], path, seed=0)

    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_write_csv_sorted_rows(tmp_path):
    """Test rows are ordered by detector then SNR with the seed in every row."""
    records = [
        MetricsRecord(snr_db=2.0, detector="lmmse", bit_errors=1, bits=10, frames=1),
        MetricsRecord(snr_db=0.0, detector="lmmse", bit_errors=2, bits=10, frames=1),
        MetricsRecord(snr_db=0.0, detector="sjed", bit_errors=0, bits=10, frames=1),
    ]
    path = tmp_path / "sweep.csv"
    write_csv(records, path, seed=7)

    lines = path.read_text().splitlines()
    assert lines[1].startswith("0,lmmse,0.2,nan,")
    assert lines[2].startswith("2,lmmse,0.1,")
    assert lines[3].startswith("0,sjed,0,")
    assert all(line.endswith(",7") for line in lines[1:])


def test_read_csv_round_trip(tmp_path):
    """Test counts survive writing and reading."""
    records = [
        MetricsRecord(
            snr_db=4.0,
            detector="sjed",
            bit_errors=37,
            bits=3840,
            packet_errors=3,
            packets=8,
            bce_sum=123.456,
            frames=2,
        )
    ]
    path = tmp_path / "sweep.csv"
    write_csv(records, path, seed=1)
    (back,) = read_csv(path)

    assert back.bit_errors == 37
    assert back.packet_errors == 3
    assert back.frames == 2
    assert back.bce == pytest.approx(records[0].bce, rel=1e-8)


def test_check_metric_consistency():
    """Test BCE order must follow a statistically clear BER order."""
    good = MetricsRecord(
        snr_db=0.0, detector="sjed", bit_errors=10, bits=10_000, bce_sum=500.0
    )
    bad = MetricsRecord(
        snr_db=0.0, detector="lmmse", bit_errors=500, bits=10_000, bce_sum=2000.0
    )
    assert check_metric_consistency([good, bad]) == []

    inverted = bad.model_copy(update={"bce_sum": 100.0})
    assert check_metric_consistency([good, inverted]) == [(0.0, "sjed", "lmmse")]

    # Overlapping intervals are not compared
    close = good.model_copy(
        update={"detector": "maxlog", "bit_errors": 11, "bce_sum": 1.0}
    )
    assert check_metric_consistency([good, close]) == []
