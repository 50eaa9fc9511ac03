"""Monte Carlo metric accumulation and CSV persistence."""

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import detector_ber_ci
from .models import MetricsRecord


logger = logging.getLogger(__name__)

CSV_HEADER = [
    "snr_db",
    "detector",
    "ber",
    "per",
    "bce",
    "bits",
    "packets",
    "frames",
    "seed",
]


@dataclass
class PacketResult:
    """Decoder outcome for a batch of packets, shapes (P, K) and (P,)."""

    decoded: np.ndarray
    sent: np.ndarray
    success: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        mismatch = np.any(self.decoded != self.sent, axis=-1)
        return mismatch | ~np.asarray(self.success, dtype=bool)


def bit_bce(llr: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Per-bit -[b log s(L) + (1 - b) log(1 - s(L))] with s the logistic function."""
    signs = 2.0 * np.asarray(bits, dtype=float) - 1.0
    return np.logaddexp(0.0, -signs * llr)


def update_metrics(
    rec: MetricsRecord,
    llr: np.ndarray,
    bits: np.ndarray,
    decoded: PacketResult | None = None,
) -> MetricsRecord:
    """Add one frame (2, U, D) or a batch of frames (F, 2, U, D) to a record."""
    llr = np.asarray(llr, dtype=float)
    bits = np.asarray(bits)
    if llr.shape != bits.shape or llr.ndim < 3:
        msg = f"LLR shape {llr.shape} does not match bits {bits.shape}"
        raise ValueError(msg)

    update = {
        "bit_errors": rec.bit_errors + int(np.count_nonzero((llr > 0) != (bits == 1))),
        "bits": rec.bits + bits.size,
        "bce_sum": rec.bce_sum + float(bit_bce(llr, bits).sum()),
        "frames": rec.frames + math.prod(llr.shape[:-3]),
    }
    if decoded is not None:
        update["packet_errors"] = rec.packet_errors + int(decoded.errors.sum())
        update["packets"] = rec.packets + len(decoded.success)
    return rec.model_copy(update=update)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_csv(records: list[MetricsRecord], path: Path, seed: int) -> None:
    """Write one row per (detector, SNR) record, sorted by detector then SNR."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(records, key=lambda r: (r.detector, r.snr_db))
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    _fmt(r.snr_db),
                    r.detector,
                    _fmt(r.ber),
                    _fmt(r.per),
                    _fmt(r.bce),
                    r.bits,
                    r.packets,
                    r.frames,
                    seed,
                ]
            )
    logger.info(f"Wrote {len(rows)} records to {path}")


def read_csv(path: Path) -> list[MetricsRecord]:
    """Read records back; error counts are recovered from the rates."""
    records = []
    with Path(path).open(newline="") as f:
        for row in csv.DictReader(f):
            bits, packets = int(row["bits"]), int(row["packets"])
            ber, per, bce = float(row["ber"]), float(row["per"]), float(row["bce"])
            records.append(
                MetricsRecord(
                    snr_db=float(row["snr_db"]),
                    detector=row["detector"],
                    bit_errors=round(ber * bits) if bits else 0,
                    bits=bits,
                    packet_errors=round(per * packets) if packets else 0,
                    packets=packets,
                    bce_sum=bce * bits if bits else 0.0,
                    frames=int(row["frames"]),
                )
            )
    return records


def check_metric_consistency(
    records: list[MetricsRecord], z: float = 1.96
) -> list[tuple[float, str, str]]:
    """Detector pairs whose BCE order contradicts a statistically clear BER order.

    Returns (snr_db, better_by_ber, worse_by_ber) for every violation.
    """
    violations = []
    by_snr: dict[float, list[MetricsRecord]] = {}
    for r in records:
        by_snr.setdefault(r.snr_db, []).append(r)

    for snr_db, group in sorted(by_snr.items()):
        for a, b in itertools.combinations(group, 2):
            lo_a, hi_a = detector_ber_ci(a.bit_errors, a.bits, z)
            lo_b, hi_b = detector_ber_ci(b.bit_errors, b.bits, z)
            if hi_a < lo_b:
                better, worse = a, b
            elif hi_b < lo_a:
                better, worse = b, a
            else:
                continue
            if better.bce >= worse.bce:
                logger.warning(
                    f"SNR {snr_db} dB: {better.detector} has lower BER than "
                    f"{worse.detector} but BCE {better.bce:.4g} >= {worse.bce:.4g}"
                )
                violations.append((snr_db, better.detector, worse.detector))
    return violations
