"""Reference detectors that separate channel estimation from detection, and bounds."""

import itertools
import logging
import math

import numpy as np
from scipy.special import comb

from .channel import snr_to_noise_var
from .exceptions import EnumerationError, SingularMatrixError
from .jed import hermitian
from .models import QPSK_AMPLITUDE, CsiMode, DetectorOutput, SystemConfig


logger = logging.getLogger(__name__)

LLR_CLIP = 60.0
MU_EPS = 1e-9
NOISE_FLOOR = 1e-30
MAX_ENUM_USERS = 8


def clip_llr(llr: np.ndarray) -> np.ndarray:
    """Clamp LLRs to +/-60, mapping infinities to the bound."""
    return np.clip(np.nan_to_num(llr, nan=0.0), -LLR_CLIP, LLR_CLIP)


def ls_channel_estimate(y_t: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """H_LS = Y_T S_T^H (S_T S_T^H)^{-1}, which is Y_T S_T^{-1} for square pilots."""
    pilot_gram = pilots @ hermitian(pilots)
    if np.linalg.matrix_rank(pilot_gram) < pilots.shape[-2]:
        msg = "pilot matrix is rank deficient"
        raise SingularMatrixError(msg)
    return y_t @ hermitian(pilots) @ np.linalg.inv(pilot_gram)


def lmmse_soft_detect(
    y_d: np.ndarray, h_hat: np.ndarray, noise_var: float
) -> DetectorOutput:
    """Soft-output L-MMSE equalizer with per-stream SINR max-log LLRs."""
    num_users = h_hat.shape[1]
    h_h = hermitian(h_hat)
    w = np.linalg.solve(h_h @ h_hat + noise_var * np.eye(num_users), h_h)
    z = w @ y_d
    mu = np.real(np.diag(w @ h_hat))

    clamped = bool(np.any((mu <= MU_EPS) | (mu >= 1.0 - MU_EPS)))
    if clamped:
        logger.warning(f"L-MMSE bias outside (0, 1) clamped: {mu}")
    mu = np.clip(mu, MU_EPS, 1.0 - MU_EPS)

    s_tilde = z / mu[:, None]
    sigma2 = ((1.0 - mu) / mu)[:, None]
    scale = 4.0 * QPSK_AMPLITUDE / sigma2
    llr = np.stack([scale * s_tilde.real, scale * s_tilde.imag])
    return DetectorOutput(llr=clip_llr(llr), clamped_bias=clamped)


def _hypotheses(num_users: int) -> tuple[np.ndarray, np.ndarray]:
    """All QPSK vectors of length U and their bits, (4^U, U) and (4^U, 2, U)."""
    grid = itertools.product((0, 1), repeat=2 * num_users)
    bits = np.array(list(grid), dtype=np.int8)
    bits = bits.reshape(-1, 2, num_users)
    signs = 2.0 * bits - 1.0
    symbols = QPSK_AMPLITUDE * (signs[:, 0, :] + 1j * signs[:, 1, :])
    return symbols, bits


def maxlog_soft_detect(
    y_d: np.ndarray,
    h_hat: np.ndarray,
    noise_var: float,
    max_users: int = MAX_ENUM_USERS,
) -> DetectorOutput:
    """Exhaustive max-log ML detection; output-identical to a max-log sphere decoder."""
    num_users = h_hat.shape[1]
    if num_users > max_users:
        msg = (
            f"exhaustive max-log over 4^{num_users} hypotheses "
            f"exceeds cap U<={max_users}"
        )
        raise EnumerationError(msg)

    symbols, bits = _hypotheses(num_users)
    candidates = h_hat @ symbols.T
    distances = np.sum(
        np.abs(y_d[:, None, :] - candidates[:, :, None]) ** 2, axis=0
    )

    llr = np.empty((2, num_users, y_d.shape[1]))
    for b, u in itertools.product(range(2), range(num_users)):
        is_one = bits[:, b, u] == 1
        d0 = distances[~is_one].min(axis=0)
        d1 = distances[is_one].min(axis=0)
        llr[b, u] = (d0 - d1) / max(noise_var, NOISE_FLOOR)
    return DetectorOutput(llr=clip_llr(llr))


def simo_genie_detect(
    y_d: np.ndarray,
    h: np.ndarray,
    s_true: np.ndarray,
    noise_var: float,
    csi_mode: CsiMode = CsiMode.PERFECT,
    h_est: np.ndarray | None = None,
) -> DetectorOutput:
    """Genie interference cancellation followed by per-UE MRC.

    With `CsiMode.ESTIMATED` the LS estimate `h_est` is used for both the
    cancellation and the combining.
    """
    if csi_mode == CsiMode.ESTIMATED:
        if h_est is None:
            msg = "estimated-CSI SIMO bound needs h_est"
            raise ValueError(msg)
        h = h_est

    residual = y_d - h @ s_true
    # y'_u = y - sum_{j != u} h_j s_j for every u at once, shape (U, B, D)
    y_clean = residual[None, :, :] + h.T[:, :, None] * s_true[:, None, :]
    gain = np.sum(np.abs(h) ** 2, axis=0)
    matched = np.einsum("bu,ubd->ud", np.conj(h), y_clean)

    with np.errstate(divide="ignore", invalid="ignore"):
        s_tilde = matched / gain[:, None]
        scale = 4.0 * QPSK_AMPLITUDE * gain[:, None] / max(noise_var, NOISE_FLOOR)
    llr = np.stack([scale * s_tilde.real, scale * s_tilde.imag])
    return DetectorOutput(llr=clip_llr(llr))


def mrc_ber_bound(snr_db: float, cfg: SystemConfig) -> float:
    """Closed-form uncoded BER of the perfect-CSI genie SIMO bound.

    Rayleigh MRC with B branches; each QPSK bit sees per-branch SNR
    gamma = Eh / (2 N0).
    """
    noise_var = snr_to_noise_var(snr_db, cfg)
    if noise_var == 0.0:
        return 0.0
    gamma = cfg.channel_var / (2.0 * noise_var)
    p = 0.5 * (1.0 - math.sqrt(gamma / (1.0 + gamma)))
    branches = cfg.num_antennas
    total = sum(
        comb(branches - 1 + k, k, exact=True) * (1.0 - p) ** k for k in range(branches)
    )
    return p**branches * total


def detector_ber_ci(errors: int, bits: int, z: float = 1.96) -> tuple[float, float]:
    """Normal-approximation confidence interval of a Monte Carlo error rate."""
    if bits == 0:
        return (0.0, 1.0)
    rate = errors / bits
    half = z * math.sqrt(max(rate * (1.0 - rate), 0.0) / bits)
    return (max(rate - half, 0.0), min(rate + half, 1.0))
