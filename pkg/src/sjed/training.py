"""Hyper-network training through the unfolded S-JED detector."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import gen_frame, gen_pilots, stack_frames
from .config import get_settings
from .exceptions import TrainingDivergedError
from .hypernet import (
    PROB_CLAMP,
    Adam,
    HyperNet,
    NetGrads,
    NetTape,
    bce_loss,
    bce_loss_grad,
    infer_params,
)
from .jed import SjedTape, run_sjed_backward, run_sjed_forward
from .models import SystemConfig, TrainConfig


logger = logging.getLogger(__name__)

EVAL_BATCH = 500


@dataclass
class TrainResult:
    net: HyperNet
    losses: list[float] = field(default_factory=list)


def sample_batch(
    rng: np.random.Generator,
    cfg: SystemConfig,
    num_frames: int,
    snr_range_db: tuple[float, float],
) -> dict[str, np.ndarray]:
    """Stacked frames with per-frame SNR uniform in dB.

    The range is cut into `num_frames` equal strata with one frame drawn in
    each, so every batch covers the whole range.
    """
    snrs = stratified_snrs(rng, num_frames, snr_range_db)
    return stack_frames([gen_frame(rng, cfg, snr) for snr in snrs])


def stratified_snrs(
    rng: np.random.Generator, num_frames: int, snr_range_db: tuple[float, float]
) -> np.ndarray:
    lo, hi = snr_range_db
    offsets = (np.arange(num_frames) + rng.uniform(size=num_frames)) / num_frames
    return lo + (hi - lo) * offsets


def loss_and_grads(
    net: HyperNet, cfg: SystemConfig, batch: dict[str, np.ndarray]
) -> tuple[float, NetGrads]:
    """BCE of the last-layer probabilities and its gradient w.r.t. every weight."""
    pilots = gen_pilots(cfg)
    net_tape = NetTape()
    sjed_tape = SjedTape()
    params = infer_params(
        net, batch["received"], pilots, batch["noise_var"], cfg, tape=net_tape
    )
    out = run_sjed_forward(
        batch["received"], pilots, params, batch["noise_var"], cfg, tape=sjed_tape
    )
    loss = bce_loss(out.prob, batch["bits"])
    param_grads = run_sjed_backward(sjed_tape, bce_loss_grad(out.prob, batch["bits"]))
    return loss, net.backward(net_tape, param_grads.to_vector())


def train(
    system: SystemConfig,
    train_cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    net: HyperNet | None = None,
) -> TrainResult:
    """Train one hyper-network for all SNRs in `train_cfg.snr_range_db`."""
    rng = rng if rng is not None else np.random.default_rng(train_cfg.seed)
    if net is None:
        net = HyperNet.for_system(system, train_cfg.hidden_dims, rng)
    if train_cfg.total_frames == 0:
        logger.info("No training frames requested, returning the initial network")
        return TrainResult(net=net)

    settings = get_settings()
    num_batches = math.ceil(train_cfg.total_frames / train_cfg.batch_size)
    decay_every = max(1, round(num_batches * train_cfg.decay_fraction))
    optimizer = Adam(
        net.parameters(),
        learning_rate=train_cfg.learning_rate,
        beta1=train_cfg.beta1,
        beta2=train_cfg.beta2,
        eps=train_cfg.eps,
    )
    logger.info(
        f"Training {net.layer_dims} on {train_cfg.total_frames} frames "
        f"in {num_batches} batches, SNR {train_cfg.snr_range_db} dB"
    )

    losses = []
    remaining = train_cfg.total_frames
    for step in range(num_batches):
        if step > 0 and step % decay_every == 0:
            optimizer.learning_rate *= train_cfg.lr_decay
            logger.debug(f"Learning rate decayed to {optimizer.learning_rate:.3g}")

        size = min(train_cfg.batch_size, remaining)
        remaining -= size
        batch = sample_batch(rng, system, size, train_cfg.snr_range_db)
        loss, grads = loss_and_grads(net, system, batch)
        if not math.isfinite(loss) or not all(
            np.all(np.isfinite(g)) for g in grads.to_list()
        ):
            msg = f"training diverged at batch {step}: loss={loss}"
            raise TrainingDivergedError(msg)

        optimizer.step(grads.to_list())
        losses.append(loss)
        if (step + 1) % settings.progress_every == 0 or step + 1 == num_batches:
            logger.info(f"Batch {step + 1}/{num_batches}: BCE {loss:.5f}")

    return TrainResult(net=net, losses=losses)


def evaluate_bce(
    net: HyperNet,
    system: SystemConfig,
    num_frames: int,
    snr_range_db: tuple[float, float],
    rng: np.random.Generator,
) -> float:
    """Average last-layer BCE over freshly drawn held-out frames."""
    pilots = gen_pilots(system)
    total, counted = 0.0, 0
    while counted < num_frames:
        size = min(EVAL_BATCH, num_frames - counted)
        batch = sample_batch(rng, system, size, snr_range_db)
        params = infer_params(
            net, batch["received"], pilots, batch["noise_var"], system
        )
        out = run_sjed_forward(
            batch["received"], pilots, params, batch["noise_var"], system
        )
        total += bce_loss(out.prob, batch["bits"]) * size
        counted += size
    return total / num_frames


def layer_bce(per_layer_llr: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """BCE of every unfolded layer; per_layer_llr is (..., Tmax, 2, U, D)."""
    prob = 0.5 * (1.0 + np.tanh(per_layer_llr / 2.0))
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    b = np.expand_dims(np.asarray(bits, dtype=float), axis=-4)
    terms = -(b * np.log(p) + (1.0 - b) * np.log(1.0 - p))
    layer_axis = per_layer_llr.ndim - 4
    axes = tuple(i for i in range(per_layer_llr.ndim) if i != layer_axis)
    return terms.mean(axis=axes)
