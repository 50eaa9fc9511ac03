"""Data models for sjed."""

import math
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


QPSK_AMPLITUDE = 1.0 / math.sqrt(2.0)


class Detector(str, Enum):
    """Detector enumeration."""

    SJED = "sjed"
    LMMSE = "lmmse"
    LMMSE_PERFECT = "lmmse_perfect"
    MAXLOG = "maxlog"
    MAXLOG_PERFECT = "maxlog_perfect"
    SIMO_PERFECT = "simo_perfect"
    SIMO_EST = "simo_est"


class CsiMode(str, Enum):
    """Channel state information available to a baseline detector."""

    PERFECT = "perfect"
    ESTIMATED = "estimated"


class SystemConfig(BaseModel):
    """MU-MIMO block-fading system dimensions."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_antennas: int = Field(default=8, ge=1, description="BS antennas B")
    num_users: int = Field(default=4, ge=1, description="Single-antenna UEs U")
    num_pilots: int = Field(default=4, ge=1, description="Pilot slots T")
    num_data: int = Field(default=240, ge=1, description="Data slots D")
    channel_var: float = Field(
        default=1.0, gt=0, description="Channel entry variance Eh"
    )
    num_layers: int = Field(default=10, ge=1, description="Unfolded layers Tmax")
    modulation: Literal["qpsk"] = Field(default="qpsk", description="Constellation")

    @model_validator(mode="after")
    def _check_pilots(self) -> "SystemConfig":
        if self.num_pilots < self.num_users:
            msg = (
                f"num_pilots={self.num_pilots} must be >= num_users={self.num_users}"
            )
            raise ValueError(msg)
        return self

    @property
    def num_slots(self) -> int:
        """Coherence block length K = T + D."""
        return self.num_pilots + self.num_data

    @property
    def alpha(self) -> float:
        """QPSK per-component amplitude."""
        return QPSK_AMPLITUDE

    @property
    def param_dim(self) -> int:
        """Length of the packed per-frame parameter vector."""
        return self.num_layers * (2 + self.num_users)

    def fingerprint(self) -> dict[str, int]:
        """Dimensions a trained weight file is tied to."""
        return {
            "B": self.num_antennas,
            "U": self.num_users,
            "T": self.num_pilots,
            "D": self.num_data,
            "Tmax": self.num_layers,
        }


class TrainConfig(BaseModel):
    """Hyper-network training schedule."""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=1000, ge=1, description="Frames per batch")
    total_frames: int = Field(default=1_000_000, ge=0, description="Training frames")
    snr_range_db: tuple[float, float] = Field(
        default=(0.0, 12.0), description="Uniform training SNR range in dB"
    )
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    lr_decay: float = Field(default=0.5, gt=0, le=1, description="Step decay factor")
    decay_fraction: float = Field(
        default=0.2, gt=0, le=1, description="Fraction of training between decays"
    )
    hidden_dims: list[int] = Field(
        default=[256, 256, 128, 128], description="Widths of the 4 hidden layers"
    )
    seed: int = Field(default=0, description="Training seed")

    @field_validator("snr_range_db")
    @classmethod
    def _check_range(cls, value: tuple[float, float]) -> tuple[float, float]:
        lo, hi = value
        if lo > hi:
            msg = f"snr_range_db lower bound {lo} exceeds upper bound {hi}"
            raise ValueError(msg)
        return value

    @field_validator("hidden_dims")
    @classmethod
    def _check_hidden(cls, value: list[int]) -> list[int]:
        if len(value) != 4 or any(width < 1 for width in value):
            msg = f"hidden_dims needs 4 positive widths, got {value}"
            raise ValueError(msg)
        return value


class TrainJob(BaseModel):
    """Contents of a `train --config` file."""

    model_config = ConfigDict(extra="forbid")

    system: SystemConfig = Field(default_factory=SystemConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


class SnrGrid(BaseModel):
    """Inclusive SNR grid lo:step:hi in dB."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lo: float
    hi: float
    step: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_bounds(self) -> "SnrGrid":
        if self.lo > self.hi:
            msg = f"SNR grid is empty: lo={self.lo} > hi={self.hi}"
            raise ValueError(msg)
        return self

    def points(self) -> list[float]:
        """Grid points in ascending order."""
        count = math.floor((self.hi - self.lo) / self.step + 1e-9) + 1
        return [round(self.lo + i * self.step, 10) for i in range(count)]


class SweepConfig(BaseModel):
    """Contents of a `sweep --config` file."""

    model_config = ConfigDict(extra="forbid")

    system: SystemConfig = Field(default_factory=SystemConfig)
    detectors: list[Detector] = Field(..., min_length=1)
    weights_path: Path | None = Field(None, description="Trained hyper-network")
    snr_grid: SnrGrid
    frames_per_point: int = Field(..., ge=1)
    coded: bool = Field(default=False, description="Encode data with the LDPC code")
    code_path: Path | None = Field(
        None, description="alist file; the built-in PEG code when omitted"
    )
    seed: int = 0
    output_path: Path | None = None
    reproducible: bool = Field(
        default=False, description="Ordered reduction independent of workers"
    )
    workers: int | None = Field(None, ge=1)
    chunk_frames: int = Field(default=32, ge=1, description="Frames per work unit")

    @model_validator(mode="after")
    def _check_weights(self) -> "SweepConfig":
        if Detector.SJED in self.detectors and self.weights_path is None:
            msg = "detector 'sjed' requires weights_path"
            raise ValueError(msg)
        return self


class Frame(BaseModel):
    """One coherence block Y = H [S_T, S_D] + N."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bits: np.ndarray = Field(..., description="Data bits, shape (2, U, D)")
    pilots: np.ndarray = Field(..., description="S_T, shape (U, T)")
    data: np.ndarray = Field(..., description="S_D, shape (U, D)")
    channel: np.ndarray = Field(..., description="H, shape (B, U)")
    received: np.ndarray = Field(..., description="Y, shape (B, K)")
    noise_var: float = Field(..., ge=0, description="N0 per complex entry")
    snr_db: float = Field(..., description="Nominal SNR in dB")

    @model_validator(mode="after")
    def _check_shapes(self) -> "Frame":
        num_users, num_data = self.data.shape
        num_antennas = self.channel.shape[0]
        num_pilots = self.pilots.shape[1]
        if (
            self.bits.shape != (2, num_users, num_data)
            or self.channel.shape != (num_antennas, num_users)
            or self.received.shape != (num_antennas, num_pilots + num_data)
        ):
            msg = "inconsistent frame shapes"
            raise ValueError(msg)
        return self

    @property
    def symbols(self) -> np.ndarray:
        """S = [S_T, S_D]."""
        return np.hstack([self.pilots, self.data])

    @property
    def received_pilots(self) -> np.ndarray:
        """Y_T, the first T columns of Y."""
        return self.received[:, : self.pilots.shape[1]]

    @property
    def received_data(self) -> np.ndarray:
        """Y_D, the last D columns of Y."""
        return self.received[:, self.pilots.shape[1] :]


def pack_layer_params(
    tau: np.ndarray, lam: np.ndarray, eta: np.ndarray
) -> np.ndarray:
    """Pack per-layer values as [tau, lambda, eta_1..eta_U], layers ascending."""
    grid = np.concatenate([tau[..., None], lam[..., None], eta], axis=-1)
    return grid.reshape(*grid.shape[:-2], -1)


def unpack_layer_params(
    vector: np.ndarray, num_layers: int, num_users: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of `pack_layer_params`."""
    vector = np.asarray(vector, dtype=float)
    grid = vector.reshape(*vector.shape[:-1], num_layers, 2 + num_users)
    return grid[..., 0], grid[..., 1], grid[..., 2:]


class UnfoldedParams(BaseModel):
    """Per-layer step sizes, regularizers and normalized error precisions.

    Arrays may carry leading batch dimensions: tau and lam are (..., Tmax),
    eta is (..., Tmax, U).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    tau: np.ndarray
    lam: np.ndarray
    eta: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "UnfoldedParams":
        if self.tau.shape != self.lam.shape or self.eta.shape[:-1] != self.tau.shape:
            msg = "tau, lam and eta disagree on layer/batch shape"
            raise ValueError(msg)
        if (self.tau < 0).any() or (self.lam < 0).any() or (self.eta < 0).any():
            msg = "unfolded parameters must be nonnegative"
            raise ValueError(msg)
        return self

    @property
    def num_layers(self) -> int:
        return self.tau.shape[-1]

    @property
    def num_users(self) -> int:
        return self.eta.shape[-1]

    @classmethod
    def from_vector(
        cls, vector: np.ndarray, num_layers: int, num_users: int
    ) -> "UnfoldedParams":
        """Unpack a hyper-network output vector (or a batch of them)."""
        tau, lam, eta = unpack_layer_params(vector, num_layers, num_users)
        return cls(tau=tau.copy(), lam=lam.copy(), eta=eta.copy())

    @classmethod
    def constant(
        cls,
        num_layers: int,
        num_users: int,
        tau: float,
        lam: float,
        eta: float,
    ) -> "UnfoldedParams":
        """Same parameters in every layer, for running without a hyper-network."""
        return cls(
            tau=np.full(num_layers, tau, dtype=float),
            lam=np.full(num_layers, lam, dtype=float),
            eta=np.full((num_layers, num_users), eta, dtype=float),
        )

    def to_vector(self) -> np.ndarray:
        return pack_layer_params(self.tau, self.lam, self.eta)


class SoftOutput(BaseModel):
    """Final-layer soft information of the unfolded detector."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    llr: np.ndarray = Field(..., description="LLRs, shape (..., 2, U, D)")
    prob: np.ndarray = Field(..., description="P(bit = 1), shape (..., 2, U, D)")
    soft_symbols: np.ndarray = Field(..., description="Last iterate, (..., U, K)")
    per_layer_llr: np.ndarray | None = Field(
        None, description="LLRs of every layer, (..., Tmax, 2, U, D)"
    )


class DetectorOutput(BaseModel):
    """Soft output of a baseline detector."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    llr: np.ndarray = Field(..., description="LLRs, shape (2, U, D)")
    clamped_bias: bool = Field(
        default=False, description="L-MMSE bias left (0, 1) and was clamped"
    )

    @property
    def hard_bits(self) -> np.ndarray:
        """Bit 1 where the LLR is positive."""
        return (self.llr > 0).astype(np.int8)


class MetricsRecord(BaseModel):
    """Per-SNR, per-detector Monte Carlo accumulators."""

    model_config = ConfigDict(frozen=True)

    snr_db: float
    detector: str
    bit_errors: int = Field(default=0, ge=0)
    bits: int = Field(default=0, ge=0)
    packet_errors: int = Field(default=0, ge=0)
    packets: int = Field(default=0, ge=0)
    bce_sum: float = Field(default=0.0, ge=0)
    frames: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_counts(self) -> "MetricsRecord":
        if self.bit_errors > self.bits or self.packet_errors > self.packets:
            msg = "error counts exceed totals"
            raise ValueError(msg)
        return self

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def per(self) -> float:
        return self.packet_errors / self.packets if self.packets else float("nan")

    @property
    def bce(self) -> float:
        return self.bce_sum / self.bits if self.bits else float("nan")

    def merge(self, other: "MetricsRecord") -> "MetricsRecord":
        """Sum the accumulators of two records for the same point."""
        return self.model_copy(
            update={
                "bit_errors": self.bit_errors + other.bit_errors,
                "bits": self.bits + other.bits,
                "packet_errors": self.packet_errors + other.packet_errors,
                "packets": self.packets + other.packets,
                "bce_sum": self.bce_sum + other.bce_sum,
                "frames": self.frames + other.frames,
            }
        )
