"""MAP-JED objective, its gradient, and the unfolded soft-output solver.

All functions accept leading batch dimensions on their array arguments, so a
whole batch of coherence blocks is processed with one call. Complex
gradients in the backward pass are carried as dL/dRe + 1j * dL/dIm.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import demap_hard
from .exceptions import ConfigError, SingularMatrixError, TapeError
from .models import (
    QPSK_AMPLITUDE,
    SoftOutput,
    SystemConfig,
    UnfoldedParams,
    pack_layer_params,
)


logger = logging.getLogger(__name__)

ETA_MIN = 1e-6
ETA_MAX = 1e6
NU_FLOOR = 1e-30
COND_LIMIT = 1e13


def hermitian(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose of the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def gram(y: np.ndarray) -> np.ndarray:
    """A = Y^H Y, computed once per block and shared by all layers."""
    return hermitian(y) @ y


def _batch_scalar(value: np.ndarray | float) -> np.ndarray:
    return np.asarray(value, dtype=float)[..., None, None]


def _invert(m: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(m)
    if not np.all(np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        msg = f"auxiliary matrix M is singular (condition number {np.max(cond):.3g})"
        raise SingularMatrixError(msg)
    return np.linalg.inv(m)


def compute_m(s: np.ndarray, lam: np.ndarray | float) -> np.ndarray:
    """M = S S^H + lambda I_U."""
    num_users = s.shape[-2]
    return s @ hermitian(s) + _batch_scalar(lam) * np.eye(num_users)


def channel_estimate(
    y: np.ndarray, s: np.ndarray, lam: np.ndarray | float
) -> np.ndarray:
    """Closed-form channel estimate H = Y S^H M^{-1}."""
    return y @ hermitian(s) @ _invert(compute_m(s, lam))


def map_jed_objective(
    y: np.ndarray, h: np.ndarray, s: np.ndarray, lam: np.ndarray | float
) -> np.ndarray:
    """||Y - H S||_F^2 + lambda ||H||_F^2."""
    residual = np.sum(np.abs(y - h @ s) ** 2, axis=(-2, -1))
    return residual + np.asarray(lam, dtype=float) * np.sum(
        np.abs(h) ** 2, axis=(-2, -1)
    )


def trace_objective(
    a: np.ndarray, s: np.ndarray, lam: np.ndarray | float
) -> np.ndarray:
    """Tr[A S^H M^{-1} S], the objective maximized over the transmit matrix."""
    p = hermitian(s) @ _invert(compute_m(s, lam)) @ s
    value = np.einsum("...ij,...ji->...", a, p)
    scale = np.maximum(np.abs(value), np.finfo(float).tiny)
    residue = float(np.max(np.abs(value.imag) / scale))
    if residue > 1e-9:
        logger.warning(f"Trace objective has imaginary residue {residue:.3g}")
    return value.real


@dataclass
class GradientTerms:
    """Intermediates of one gradient evaluation, reused by the backward pass."""

    minv: np.ndarray
    q: np.ndarray
    p: np.ndarray
    r: np.ndarray
    grad: np.ndarray


def gradient_terms(
    a: np.ndarray, s: np.ndarray, lam: np.ndarray | float
) -> GradientTerms:
    minv = _invert(compute_m(s, lam))
    q = minv @ s
    p = hermitian(s) @ q
    r = q @ a
    return GradientTerms(minv=minv, q=q, p=p, r=r, grad=r - r @ p)


def gradient(a: np.ndarray, s: np.ndarray, lam: np.ndarray | float) -> np.ndarray:
    """M^{-1} S A (I_K - S^H M^{-1} S), Wirtinger gradient of the trace objective."""
    return gradient_terms(a, s, lam).grad


def gradient_step(
    s: np.ndarray,
    grad: np.ndarray,
    tau: np.ndarray | float,
    pilots: np.ndarray,
) -> np.ndarray:
    """Ascent step X = S + tau * grad with the pilot columns reset to S_T."""
    x = s + _batch_scalar(tau) * grad
    x[..., : pilots.shape[-1]] = pilots
    return x


def project_hull(s: np.ndarray, alpha: float = QPSK_AMPLITUDE) -> np.ndarray:
    """Projection onto the QPSK convex hull: clip Re and Im to [-alpha, alpha]."""
    return np.clip(s.real, -alpha, alpha) + 1j * np.clip(s.imag, -alpha, alpha)


def pme_approx_step(
    x: np.ndarray, nu: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """LLR -> probability -> soft symbol chain approximating the QPSK posterior mean.

    x is a data block (..., U, D); nu holds per-UE error variances (..., U).
    Returns LLRs and P(bit = 1), both (..., 2, U, D), and soft symbols (..., U, D).
    """
    nu = np.maximum(np.asarray(nu, dtype=float), NU_FLOOR)[..., :, None]
    llr = np.stack([4.0 * x.real / nu, 4.0 * x.imag / nu], axis=-3)
    prob = 0.5 * (1.0 + np.tanh(llr / 2.0))
    soft = QPSK_AMPLITUDE * (
        (2.0 * prob[..., 0, :, :] - 1.0) + 1j * (2.0 * prob[..., 1, :, :] - 1.0)
    )
    return llr, prob, soft


def _initial_iterate(
    batch_shape: tuple[int, ...], pilots: np.ndarray, num_slots: int
) -> np.ndarray:
    # Data columns start at the posterior mean of an equiprobable QPSK prior.
    s = np.zeros((*batch_shape, pilots.shape[-2], num_slots), dtype=complex)
    s[..., : pilots.shape[-1]] = pilots
    return s


@dataclass
class FbsState:
    """Iterate of the projected solver, its cached Gram matrix and layer index."""

    s: np.ndarray
    gram: np.ndarray
    layer: int = 0


def fbs_iteration(
    state: FbsState,
    pilots: np.ndarray,
    tau: float,
    lam: float,
    alpha: float = QPSK_AMPLITUDE,
) -> FbsState:
    """One ascent step followed by the convex-hull projection."""
    x = gradient_step(state.s, gradient(state.gram, state.s, lam), tau, pilots)
    s = project_hull(x, alpha)
    s[..., : pilots.shape[-1]] = pilots
    return FbsState(s=s, gram=state.gram, layer=state.layer + 1)


def run_fbs(
    y: np.ndarray,
    pilots: np.ndarray,
    tau: float,
    lam: float,
    num_iters: int,
    alpha: float = QPSK_AMPLITUDE,
) -> tuple[np.ndarray, np.ndarray]:
    """Projected forward-backward splitting on the convex-hull relaxation.

    Returns the final iterate and the trace objective after every iteration.
    """
    start = _initial_iterate(y.shape[:-2], pilots, y.shape[-1])
    state = FbsState(s=start, gram=gram(y))
    history = []
    for _ in range(num_iters):
        state = fbs_iteration(state, pilots, tau, lam, alpha)
        history.append(trace_objective(state.gram, state.s, lam))
    return state.s, np.array(history)


def hard_decide(s: np.ndarray, num_pilots: int) -> np.ndarray:
    """Sign decisions on the data columns of an iterate, shape (..., 2, U, D)."""
    return demap_hard(s[..., num_pilots:])


@dataclass
class LayerTape:
    """Forward quantities of one unfolded layer."""

    s: np.ndarray
    terms: GradientTerms
    x: np.ndarray
    tau: np.ndarray
    eta_raw: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    prob: np.ndarray


@dataclass
class SjedTape:
    """Everything the backward pass needs; filled by `run_sjed_forward`."""

    pilots: np.ndarray | None = None
    gram: np.ndarray | None = None
    layers: list[LayerTape] = field(default_factory=list)


@dataclass
class ParamGrads:
    """Loss gradients w.r.t. the unfolded parameters."""

    tau: np.ndarray
    lam: np.ndarray
    eta: np.ndarray

    def to_vector(self) -> np.ndarray:
        """Same packing as the hyper-network output vector."""
        return pack_layer_params(self.tau, self.lam, self.eta)


def run_sjed_forward(
    y: np.ndarray,
    pilots: np.ndarray,
    params: UnfoldedParams,
    noise_var: np.ndarray | float,
    cfg: SystemConfig,
    tape: SjedTape | None = None,
    keep_layers: bool = False,
) -> SoftOutput:
    """Run the Tmax-layer unfolded S-JED detector.

    Each layer takes a gradient ascent step on the trace objective and maps the
    data block through the approximate PME; pilots are reset after every step.
    Pass a fresh `SjedTape` to record what `run_sjed_backward` needs.
    """
    if params.num_layers != cfg.num_layers or params.num_users != cfg.num_users:
        msg = (
            f"parameters for {params.num_layers} layers / {params.num_users} UEs "
            f"do not match Tmax={cfg.num_layers}, U={cfg.num_users}"
        )
        raise ConfigError(msg)

    noise_var = np.asarray(noise_var, dtype=float)
    num_pilots = pilots.shape[-1]
    a = gram(y)
    s = _initial_iterate(y.shape[:-2], pilots, y.shape[-1])
    if tape is not None:
        tape.pilots = pilots
        tape.gram = a
        tape.layers = []

    layer_llrs = []
    llr = prob = None
    for t in range(cfg.num_layers):
        tau = params.tau[..., t]
        eta_raw = params.eta[..., t, :]
        eta = np.clip(eta_raw, ETA_MIN, ETA_MAX)
        terms = gradient_terms(a, s, params.lam[..., t])
        x = gradient_step(s, terms.grad, tau, pilots)[..., num_pilots:]
        nu = noise_var[..., None] / eta
        llr, prob, soft = pme_approx_step(x, nu)

        if tape is not None:
            tape.layers.append(
                LayerTape(
                    s=s,
                    terms=terms,
                    x=x,
                    tau=np.asarray(tau, dtype=float),
                    eta_raw=eta_raw,
                    eta=eta,
                    nu=np.maximum(nu, NU_FLOOR),
                    prob=prob,
                )
            )
        if keep_layers:
            layer_llrs.append(llr)

        s_next = np.empty_like(s)
        s_next[..., :num_pilots] = pilots
        s_next[..., num_pilots:] = soft
        s = s_next

    return SoftOutput(
        llr=llr,
        prob=prob,
        soft_symbols=s,
        per_layer_llr=np.stack(layer_llrs, axis=-4) if keep_layers else None,
    )


def run_sjed_backward(tape: SjedTape | None, dprob: np.ndarray) -> ParamGrads:
    """Reverse-mode gradients of a loss on the final-layer probabilities.

    dprob is dLoss/dP at layer Tmax, shape (..., 2, U, D).
    """
    if tape is None or not tape.layers:
        msg = "backward pass needs the tape of a forward pass"
        raise TapeError(msg)

    num_pilots = tape.pilots.shape[-1]
    a_h = hermitian(tape.gram)
    grads_tau, grads_lam, grads_eta = [], [], []
    ds_data = None

    for t in reversed(range(len(tape.layers))):
        layer = tape.layers[t]
        terms = layer.terms

        if t == len(tape.layers) - 1:
            dp = dprob
        else:
            # Re{S'} = alpha (2 P_1 - 1), Im{S'} = alpha (2 P_2 - 1)
            dp = 2.0 * QPSK_AMPLITUDE * np.stack([ds_data.real, ds_data.imag], axis=-3)
        dllr = dp * layer.prob * (1.0 - layer.prob)

        # LLR = 4 x eta / N0 componentwise
        inv_nu = 1.0 / layer.nu[..., :, None]
        dx = 4.0 * inv_nu * (dllr[..., 0, :, :] + 1j * dllr[..., 1, :, :])
        weighted = np.sum(
            layer.x.real * dllr[..., 0, :, :] + layer.x.imag * dllr[..., 1, :, :],
            axis=-1,
        )
        g_eta = 4.0 * weighted / (layer.nu * layer.eta)
        # LLRs do not depend on eta where eta is clamped or nu sits on its floor
        inside = (layer.eta_raw >= ETA_MIN) & (layer.eta_raw <= ETA_MAX)
        active = inside & (layer.nu > NU_FLOOR)
        grads_eta.append(np.where(active, g_eta, 0.0))

        # X_D = S_D + tau G_D
        grads_tau.append(
            np.sum((np.conj(dx) * terms.grad[..., num_pilots:]).real, axis=(-2, -1))
        )
        dgrad = np.zeros_like(terms.grad)
        dgrad[..., num_pilots:] = layer.tau[..., None, None] * dx
        ds = np.zeros_like(layer.s)
        ds[..., num_pilots:] = dx

        # G = R - R P, R = Q A, P = S^H Q, Q = M^{-1} S, M = S S^H + lambda I
        dr = dgrad - dgrad @ hermitian(terms.p)
        dpmat = -hermitian(terms.r) @ dgrad
        dq = dr @ a_h + layer.s @ dpmat
        ds += terms.q @ hermitian(dpmat)
        minv_h = hermitian(terms.minv)
        dminv = dq @ hermitian(layer.s)
        ds += minv_h @ dq
        dm = -minv_h @ dminv @ minv_h
        ds += (dm + hermitian(dm)) @ layer.s
        grads_lam.append(np.trace(dm, axis1=-2, axis2=-1).real)

        ds_data = ds[..., num_pilots:]

    return ParamGrads(
        tau=np.stack(grads_tau[::-1], axis=-1),
        lam=np.stack(grads_lam[::-1], axis=-1),
        eta=np.stack(grads_eta[::-1], axis=-2),
    )
