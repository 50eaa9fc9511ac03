"""Tests for the command-line interface."""

import json

import pytest

from sjed.cli import build_parser, main
from sjed.coding import parse_alist
from sjed.hypernet import load_weights
from sjed.metrics import CSV_HEADER
from sjed.models import SystemConfig


SMALL = {
    "num_antennas": 4,
    "num_users": 2,
    "num_pilots": 2,
    "num_data": 8,
    "num_layers": 3,
}


@pytest.fixture
def train_config(tmp_path):
    """Tiny training job file."""
    path = tmp_path / "train.json"
    path.write_text(
        json.dumps(
            {
                "system": SMALL,
                "train": {
                    "batch_size": 2,
                    "total_frames": 4,
                    "hidden_dims": [8, 8, 8, 8],
                },
            }
        )
    )
    return path


@pytest.fixture
def sweep_config(tmp_path):
    """Single-point L-MMSE sweep file."""
    path = tmp_path / "sweep.json"
    path.write_text(
        json.dumps(
            {
                "system": SMALL,
                "detectors": ["lmmse"],
                "snr_grid": {"lo": 0, "hi": 2, "step": 2},
                "frames_per_point": 2,
            }
        )
    )
    return path


def test_parser_requires_command():
    """Test a command is mandatory."""
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_make_code(tmp_path):
    """Test make-code writes a parseable alist."""
    out = tmp_path / "code.alist"

    assert main(["make-code", "--out", str(out), "--n", "48", "--m", "24"]) == 0
    code = parse_alist(out.read_text())
    assert (code.num_bits, code.num_checks) == (48, 24)


def test_train_writes_weights(tmp_path, train_config, capsys):
    """Test train saves a loadable weight file."""
    out = tmp_path / "net.json"

    assert main(["train", "--config", str(train_config), "--out", str(out)]) == 0
    assert "after 2 batches" in capsys.readouterr().out
    net = load_weights(out, SystemConfig(**SMALL))
    assert net.layer_dims == [17, 8, 8, 8, 8, 12]


def test_sweep_writes_csv(tmp_path, sweep_config):
    """Test sweep writes one row per SNR point."""
    out = tmp_path / "results" / "sweep.csv"

    args = ["sweep", "--config", str(sweep_config), "--out", str(out), "--repro"]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    assert lines[1].startswith("0,lmmse,")


def test_sweep_needs_output(sweep_config):
    """Test sweep fails without an output path."""
    assert main(["sweep", "--config", str(sweep_config)]) == 1


def test_bad_config_returns_error(tmp_path):
    """Test malformed or missing config files exit with status 1."""
    bad = tmp_path / "bad.json"
    bad.write_text('{"system": {"num_users": 4, "num_pilots": 2}}')

    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "n.json")]) == 1
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 1


@pytest.mark.slow
def test_gradcheck_passes(capsys):
    """Test every gradient suite is within tolerance."""
    assert main(["gradcheck", "--seed", "0"]) == 0
    assert "FAIL" not in capsys.readouterr().out
