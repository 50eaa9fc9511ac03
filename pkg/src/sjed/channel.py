"""Block-fading MU-MIMO channel model: channels, pilots, QPSK data and noise."""

import logging

import numpy as np
import scipy.linalg

from .exceptions import ConfigError
from .models import QPSK_AMPLITUDE, Frame, SystemConfig


logger = logging.getLogger(__name__)


def complex_gaussian(
    rng: np.random.Generator, shape: tuple[int, ...], variance: float
) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples, `variance` per entry."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_channel(rng: np.random.Generator, cfg: SystemConfig) -> np.ndarray:
    """i.i.d. Rayleigh channel H of shape (B, U) with entry variance Eh."""
    return complex_gaussian(rng, (cfg.num_antennas, cfg.num_users), cfg.channel_var)


def gen_pilots(cfg: SystemConfig) -> np.ndarray:
    """Orthogonal pilots S_T from the Sylvester Hadamard matrix of order U."""
    if cfg.num_pilots != cfg.num_users:
        msg = (
            f"Hadamard pilots need T == U, got T={cfg.num_pilots}, U={cfg.num_users}"
        )
        raise ConfigError(msg)
    try:
        hadamard = scipy.linalg.hadamard(cfg.num_users)
    except ValueError as e:
        msg = f"no Sylvester Hadamard matrix of order {cfg.num_users}"
        raise ConfigError(msg) from e
    return hadamard.astype(complex)


def gen_bits(rng: np.random.Generator, cfg: SystemConfig) -> np.ndarray:
    """Uniform data bits of shape (2, U, D)."""
    return rng.integers(0, 2, size=(2, cfg.num_users, cfg.num_data), dtype=np.int8)


def map_bits(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped QPSK; bit 1 maps to the positive component.

    bits has shape (..., 2, U, D) and the result (..., U, D).
    """
    signs = 2.0 * np.asarray(bits, dtype=float) - 1.0
    return QPSK_AMPLITUDE * (signs[..., 0, :, :] + 1j * signs[..., 1, :, :])


def demap_hard(symbols: np.ndarray) -> np.ndarray:
    """Componentwise sign demapping, the inverse of `map_bits` on the constellation."""
    return np.stack([symbols.real > 0, symbols.imag > 0], axis=-3).astype(np.int8)


def snr_to_noise_var(snr_db: float, cfg: SystemConfig) -> float:
    """N0 under the average per-receive-antenna SNR convention SNR = U Eh Es / N0."""
    if np.isposinf(snr_db):
        return 0.0
    return cfg.num_users * cfg.channel_var / 10.0 ** (snr_db / 10.0)


def gen_frame(
    rng: np.random.Generator,
    cfg: SystemConfig,
    snr_db: float,
    bits: np.ndarray | None = None,
) -> Frame:
    """Draw one coherence block; `bits` overrides the uniform data bits (coded runs)."""
    if bits is None:
        bits = gen_bits(rng, cfg)
    pilots = gen_pilots(cfg)
    data = map_bits(bits)
    channel = gen_channel(rng, cfg)
    noise_var = snr_to_noise_var(snr_db, cfg)
    symbols = np.hstack([pilots, data])
    noise = complex_gaussian(rng, (cfg.num_antennas, cfg.num_slots), noise_var)
    received = channel @ symbols + noise

    return Frame(
        bits=np.asarray(bits, dtype=np.int8),
        pilots=pilots,
        data=data,
        channel=channel,
        received=received,
        noise_var=noise_var,
        snr_db=snr_db,
    )


def stack_frames(frames: list[Frame]) -> dict[str, np.ndarray]:
    """Stack the arrays of several frames along a leading batch axis."""
    return {
        "bits": np.stack([f.bits for f in frames]),
        "channel": np.stack([f.channel for f in frames]),
        "received": np.stack([f.received for f in frames]),
        "noise_var": np.array([f.noise_var for f in frames]),
    }
