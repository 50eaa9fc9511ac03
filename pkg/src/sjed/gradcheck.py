"""Finite-difference and closed-form self-checks of the detector and training chain."""

import logging

import numpy as np

from .baselines import ls_channel_estimate
from .channel import complex_gaussian, gen_frame, gen_pilots, stack_frames
from .hypernet import HyperNet, NetTape, bce_loss, bce_loss_grad, network_input
from .jed import (
    SjedTape,
    channel_estimate,
    gradient,
    map_jed_objective,
    pme_approx_step,
    run_sjed_backward,
    run_sjed_forward,
    trace_objective,
)
from .models import QPSK_AMPLITUDE, SystemConfig, UnfoldedParams


logger = logging.getLogger(__name__)

TOLERANCES = {
    "gradient": 1e-6,
    "substitution": 1e-10,
    "pme": 1e-14,
    "backprop_params": 1e-5,
    "backprop_weights": 1e-4,
}

TINY_SYSTEM = SystemConfig(
    num_antennas=2, num_users=2, num_pilots=2, num_data=2, num_layers=2
)
TINY_HIDDEN = [8, 8, 8, 8]
GRAD_FLOOR = 1e-6


def relative_error(
    a: np.ndarray | float, b: np.ndarray | float, floor: float = 0.0
) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    a, b = np.asarray(a), np.asarray(b)
    floor = max(floor, np.finfo(float).tiny)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / scale


def check_gradient(
    rng: np.random.Generator,
    num_instances: int = 50,
    shape: tuple[int, int, int] = (8, 4, 12),
    lams: tuple[float, ...] = (0.1, 1.0),
    step: float = 1e-5,
) -> float:
    """Analytic gradient against central differences of the trace objective."""
    num_antennas, num_users, num_slots = shape
    worst = 0.0
    for i in range(num_instances):
        lam = lams[i % len(lams)]
        y = complex_gaussian(rng, (num_antennas, num_slots), 1.0)
        s = complex_gaussian(rng, (num_users, num_slots), 0.5)
        direction = complex_gaussian(rng, (num_users, num_slots), 1.0)
        direction /= np.linalg.norm(direction)

        a = y.conj().T @ y
        analytic = 2.0 * np.real(np.vdot(gradient(a, s, lam), direction))
        numeric = (
            trace_objective(a, s + step * direction, lam)
            - trace_objective(a, s - step * direction, lam)
        ) / (2.0 * step)
        worst = max(worst, float(relative_error(analytic, numeric)))
    return worst


def check_substitution(
    rng: np.random.Generator,
    num_instances: int = 100,
    shape: tuple[int, int, int] = (8, 4, 12),
) -> float:
    """Objective at the closed-form channel is Tr[Y^H Y] minus the trace objective."""
    num_antennas, num_users, num_slots = shape
    worst = 0.0
    for i in range(num_instances):
        lam = (0.1, 1.0)[i % 2]
        y = complex_gaussian(rng, (num_antennas, num_slots), 1.0)
        s = complex_gaussian(rng, (num_users, num_slots), 0.5)
        lhs = map_jed_objective(y, channel_estimate(y, s, lam), s, lam)
        rhs = np.sum(np.abs(y) ** 2) - trace_objective(y.conj().T @ y, s, lam)
        worst = max(worst, float(relative_error(lhs, rhs)))
    return worst


def check_pme(rng: np.random.Generator, num_samples: int = 10_000) -> float:
    """LLR, probability and soft-symbol chain against alpha tanh(2 x / nu)."""
    x = complex_gaussian(rng, (num_samples, 1, 1), 2.0)
    nu = rng.uniform(0.05, 5.0, size=(num_samples, 1))
    _, _, soft = pme_approx_step(x, nu)
    re = QPSK_AMPLITUDE * np.tanh(2.0 * x.real / nu[..., None])
    im = QPSK_AMPLITUDE * np.tanh(2.0 * x.imag / nu[..., None])
    return float(max(np.max(np.abs(soft.real - re)), np.max(np.abs(soft.imag - im))))


def _tiny_batch(
    rng: np.random.Generator, cfg: SystemConfig, snr_db: float, frames: int
) -> dict[str, np.ndarray]:
    return stack_frames([gen_frame(rng, cfg, snr_db) for _ in range(frames)])


def check_backprop_params(
    rng: np.random.Generator,
    cfg: SystemConfig = TINY_SYSTEM,
    snr_db: float = 0.0,
    step: float = 1e-6,
) -> float:
    """Loss gradients w.r.t. every tau, lambda and eta against finite differences."""
    batch = _tiny_batch(rng, cfg, snr_db, 2)
    pilots = gen_pilots(cfg)
    vector = rng.uniform(0.2, 1.0, size=(2, cfg.param_dim))

    def loss_at(v: np.ndarray) -> float:
        params = UnfoldedParams.from_vector(v, cfg.num_layers, cfg.num_users)
        out = run_sjed_forward(
            batch["received"], pilots, params, batch["noise_var"], cfg
        )
        return bce_loss(out.prob, batch["bits"])

    tape = SjedTape()
    params = UnfoldedParams.from_vector(vector, cfg.num_layers, cfg.num_users)
    out = run_sjed_forward(
        batch["received"], pilots, params, batch["noise_var"], cfg, tape=tape
    )
    dprob = bce_loss_grad(out.prob, batch["bits"])
    analytic = run_sjed_backward(tape, dprob).to_vector()

    numeric = np.zeros_like(vector)
    for idx in np.ndindex(vector.shape):
        bumped = vector.copy()
        bumped[idx] += step
        up = loss_at(bumped)
        bumped[idx] -= 2.0 * step
        numeric[idx] = (up - loss_at(bumped)) / (2.0 * step)
    return float(np.max(relative_error(analytic, numeric, GRAD_FLOOR)))


def check_backprop_weights(
    rng: np.random.Generator,
    cfg: SystemConfig = TINY_SYSTEM,
    snr_db: float = 0.0,
    step: float = 1e-6,
) -> float:
    """End-to-end gradients of the loss w.r.t. every hyper-network weight."""
    batch = _tiny_batch(rng, cfg, snr_db, 2)
    pilots = gen_pilots(cfg)
    net = HyperNet.for_system(cfg, TINY_HIDDEN, rng)
    x = network_input(
        ls_channel_estimate(batch["received"][..., : cfg.num_pilots], pilots),
        batch["noise_var"],
    )

    def loss() -> float:
        params = net.unfolded_params(x, cfg)
        out = run_sjed_forward(
            batch["received"], pilots, params, batch["noise_var"], cfg
        )
        return bce_loss(out.prob, batch["bits"])

    net_tape, sjed_tape = NetTape(), SjedTape()
    params = net.unfolded_params(x, cfg, net_tape)
    out = run_sjed_forward(
        batch["received"], pilots, params, batch["noise_var"], cfg, tape=sjed_tape
    )
    dprob = bce_loss_grad(out.prob, batch["bits"])
    dv = run_sjed_backward(sjed_tape, dprob).to_vector()
    analytic = net.backward(net_tape, dv).to_list()

    worst = 0.0
    for param, grad in zip(net.parameters(), analytic, strict=True):
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + step
            up = loss()
            param[idx] = saved - step
            numeric[idx] = (up - loss()) / (2.0 * step)
            param[idx] = saved
        worst = max(worst, float(np.max(relative_error(grad, numeric, GRAD_FLOOR))))
    return worst


def run_all(seed: int = 0) -> dict[str, float]:
    """Run every suite; values are max relative (pme: absolute) errors."""
    results = {
        "gradient": check_gradient(np.random.default_rng([seed, 0])),
        "substitution": check_substitution(np.random.default_rng([seed, 1])),
        "pme": check_pme(np.random.default_rng([seed, 2])),
        "backprop_params": check_backprop_params(np.random.default_rng([seed, 3])),
        "backprop_weights": check_backprop_weights(np.random.default_rng([seed, 4])),
    }
    for name, value in results.items():
        level = logging.INFO if value < TOLERANCES[name] else logging.WARNING
        logger.log(level, f"{name}: {value:.3e} (tolerance {TOLERANCES[name]:g})")
    return results
