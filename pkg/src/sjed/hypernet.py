"""Hyper-network that maps the LS channel estimate and N0 to unfolded parameters.

Dense layers are stored as W with shape (out, in) and applied to row batches
as a @ W.T + b. Forward and backward passes are written out by hand.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .baselines import ls_channel_estimate
from .exceptions import TapeError, WeightFileError
from .models import SystemConfig, UnfoldedParams


logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
NUM_DENSE = 5
WEIGHT_FORMAT_VERSION = 2
NOISE_FEATURE_FLOOR = 1e-6


def build_input(h_ls: np.ndarray, noise_var: np.ndarray | float) -> np.ndarray:
    """[Re vec(H_LS); Im vec(H_LS); N0] with column-major vectorization.

    h_ls may carry leading batch dimensions; the result is (..., 2BU + 1).
    """
    h_ls = np.asarray(h_ls)
    vec = np.swapaxes(h_ls, -1, -2).reshape(*h_ls.shape[:-2], -1)
    n0 = np.broadcast_to(
        np.asarray(noise_var, dtype=float)[..., None], (*vec.shape[:-1], 1)
    )
    return np.concatenate([vec.real, vec.imag, n0], axis=-1)


def noise_feature(noise_var: np.ndarray | float) -> np.ndarray:
    """ln N0, floored so that the noiseless sentinel N0 = 0 stays finite."""
    return np.log(np.maximum(np.asarray(noise_var, dtype=float), NOISE_FEATURE_FLOOR))


def network_input(h_ls: np.ndarray, noise_var: np.ndarray | float) -> np.ndarray:
    """The `build_input` layout with the N0 entry replaced by `noise_feature`."""
    return build_input(h_ls, noise_feature(noise_var))


@dataclass
class NetTape:
    """Layer inputs and pre-activations recorded by `HyperNet.forward`."""

    inputs: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)


@dataclass
class NetGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def to_list(self) -> list[np.ndarray]:
        """Same order as `HyperNet.parameters`."""
        return [*self.weights, *self.biases]


class HyperNet:
    """Five dense layers, ReLU on the first four and |.| on the output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        """Wrap existing weight and bias arrays after checking their shapes."""
        if len(weights) != NUM_DENSE or len(biases) != NUM_DENSE:
            msg = f"expected {NUM_DENSE} dense layers, got {len(weights)}"
            raise ValueError(msg)
        for i, (w, b) in enumerate(zip(weights, biases, strict=True)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                msg = f"layer {i}: weight {w.shape} and bias {b.shape} disagree"
                raise ValueError(msg)
            if i > 0 and w.shape[1] != weights[i - 1].shape[0]:
                fan_in = weights[i - 1].shape[0]
                msg = f"layer {i} expects {w.shape[1]} inputs, got {fan_in}"
                raise ValueError(msg)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]

    @classmethod
    def init(cls, layer_dims: list[int], rng: np.random.Generator) -> "HyperNet":
        """Glorot-uniform weights and zero biases."""
        if len(layer_dims) != NUM_DENSE + 1:
            msg = f"layer_dims needs {NUM_DENSE + 1} entries, got {layer_dims}"
            raise ValueError(msg)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:], strict=True):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def for_system(
        cls, cfg: SystemConfig, hidden_dims: list[int], rng: np.random.Generator
    ) -> "HyperNet":
        """Freshly initialized network sized for `cfg`."""
        input_dim = 2 * cfg.num_antennas * cfg.num_users + 1
        return cls.init([input_dim, *hidden_dims, cfg.param_dim], rng)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1], *(w.shape[0] for w in self.weights)]

    def parameters(self) -> list[np.ndarray]:
        """Weights then biases; the arrays are updated in place by the optimizer."""
        return [*self.weights, *self.biases]

    def forward(self, x: np.ndarray, tape: NetTape | None = None) -> np.ndarray:
        """Output vector v >= 0 for a single input or a (N, in) batch."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        if tape is not None:
            tape.inputs = []
            tape.pre_activations = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            z = a @ w.T + b
            if tape is not None:
                tape.inputs.append(a)
                tape.pre_activations.append(z)
            a = np.maximum(z, 0.0) if i < NUM_DENSE - 1 else np.abs(z)
        return a[0] if np.ndim(x) == 1 else a

    def unfolded_params(
        self, x: np.ndarray, cfg: SystemConfig, tape: NetTape | None = None
    ) -> UnfoldedParams:
        return UnfoldedParams.from_vector(
            self.forward(x, tape), cfg.num_layers, cfg.num_users
        )

    def backward(self, tape: NetTape | None, dv: np.ndarray) -> NetGrads:
        """Gradients of the loss w.r.t. weights and biases, summed over the batch.

        Subgradients of ReLU and |.| are taken as 0 at 0.
        """
        if tape is None or len(tape.inputs) != NUM_DENSE:
            msg = "backward pass needs the tape of a forward pass"
            raise TapeError(msg)

        delta = np.atleast_2d(dv) * np.sign(tape.pre_activations[-1])
        grad_w: list[np.ndarray] = [np.empty(0)] * NUM_DENSE
        grad_b: list[np.ndarray] = [np.empty(0)] * NUM_DENSE
        for i in reversed(range(NUM_DENSE)):
            grad_w[i] = delta.T @ tape.inputs[i]
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (tape.pre_activations[i - 1] > 0)
        return NetGrads(weights=grad_w, biases=grad_b)


def bce_loss(prob: np.ndarray, bits: np.ndarray) -> float:
    """Mean binary cross-entropy of P(bit = 1) against the transmitted bits."""
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    b = np.asarray(bits, dtype=float)
    return float(-np.mean(b * np.log(p) + (1.0 - b) * np.log(1.0 - p)))


def bce_loss_grad(prob: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """d bce_loss / d prob; zero where the clamp is active."""
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    b = np.asarray(bits, dtype=float)
    grad = (-b / p + (1.0 - b) / (1.0 - p)) / p.size
    inside = (prob >= PROB_CLAMP) & (prob <= 1.0 - PROB_CLAMP)
    return np.where(inside, grad, 0.0)


class Adam:
    """Adam with bias-corrected moments, updating parameter arrays in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for param, g, m, v in zip(self.params, grads, self.m, self.v, strict=True):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


class WeightFile(BaseModel):
    """On-disk JSON layout of a trained hyper-network."""

    format_version: int = Field(default=WEIGHT_FORMAT_VERSION)
    layer_dims: list[int] = Field(..., min_length=NUM_DENSE + 1)
    weights: list[list[list[float]]] = Field(..., description="Row-major (out, in)")
    biases: list[list[float]]
    fingerprint: dict[str, int] = Field(..., description="B, U, T, D, Tmax")


def save_weights(net: HyperNet, cfg: SystemConfig, path: Path) -> None:
    """Write the network and the system fingerprint it was trained for."""
    document = WeightFile(
        layer_dims=net.layer_dims,
        weights=[w.tolist() for w in net.weights],
        biases=[b.tolist() for b in net.biases],
        fingerprint=cfg.fingerprint(),
    )
    Path(path).write_text(document.model_dump_json(indent=1))
    logger.info(f"Saved hyper-network {net.layer_dims} to {path}")


def load_weights(path: Path, cfg: SystemConfig) -> HyperNet:
    """Load a weight file, rejecting files trained for another system."""
    try:
        document = WeightFile.model_validate_json(Path(path).read_text())
    except (OSError, ValidationError) as e:
        msg = f"cannot read weight file {path}: {e}"
        raise WeightFileError(msg) from e

    if document.format_version != WEIGHT_FORMAT_VERSION:
        msg = f"unsupported weight file version {document.format_version}"
        raise WeightFileError(msg)
    if document.fingerprint != cfg.fingerprint():
        msg = (
            f"weight file {path} was trained for {document.fingerprint}, "
            f"system is {cfg.fingerprint()}"
        )
        raise WeightFileError(msg)

    try:
        net = HyperNet(
            [np.array(w, dtype=float) for w in document.weights],
            [np.array(b, dtype=float) for b in document.biases],
        )
    except ValueError as e:
        msg = f"inconsistent layer shapes in {path}: {e}"
        raise WeightFileError(msg) from e

    expected_io = (2 * cfg.num_antennas * cfg.num_users + 1, cfg.param_dim)
    if net.layer_dims != document.layer_dims or (
        net.layer_dims[0],
        net.layer_dims[-1],
    ) != expected_io:
        msg = f"layer_dims {document.layer_dims} do not fit system {cfg.fingerprint()}"
        raise WeightFileError(msg)

    logger.info(f"Loaded hyper-network {net.layer_dims} from {path}")
    return net


def infer_params(
    net: HyperNet,
    y: np.ndarray,
    pilots: np.ndarray,
    noise_var: np.ndarray | float,
    cfg: SystemConfig,
    tape: NetTape | None = None,
) -> UnfoldedParams:
    """LS estimate from the pilot slots, then one hyper-network forward pass."""
    h_ls = ls_channel_estimate(y[..., : pilots.shape[-1]], pilots)
    return net.unfolded_params(network_input(h_ls, noise_var), cfg, tape)
