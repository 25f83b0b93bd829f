"""Minimal dense network for Q-value regression.

A fixed MLP (ReLU hidden layers, linear scalar output) with hand-written
backpropagation, mean-squared-error + L2 loss and an Adam optimizer.  All
arithmetic is 64-bit so gradient checks against finite differences are not
fighting float32 noise; the network is tiny, so the cost is irrelevant.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_CKPT_MAGIC = b"WLNN"
_CKPT_VERSION = 1


class ShapeMismatch(Exception):
    pass


@dataclass(frozen=True)
class NetSpec:
    input_dim: int = 7
    hidden: tuple[int, ...] = (256, 128, 64)
    output_dim: int = 1

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


@dataclass
class NetParams:
    """Per-layer weight matrices (in_dim, out_dim) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "NetParams":
        return NetParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def spec(self) -> NetSpec:
        dims = [w.shape[0] for w in self.weights] + [self.weights[-1].shape[1]]
        return NetSpec(dims[0], tuple(dims[1:-1]), dims[-1])


def init_params(spec: NetSpec, rng) -> NetParams:
    """He-uniform for the ReLU layers; the output layer starts near zero so
    early Q-values stay small."""
    dims = spec.layer_dims
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        if i == len(dims) - 2:
            limit = 1e-3
        else:
            limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def _check_input(params: NetParams, x: np.ndarray, what: str = "input"):
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ShapeMismatch(
            f"{what} dim {x.shape[-1]} != expected {params.weights[0].shape[0]}")


def forward(params: NetParams, x) -> tuple[float, list[np.ndarray]]:
    """Scalar output for one input vector, plus the per-layer activations
    (needed by backprop)."""
    x = np.asarray(x, dtype=float)
    _check_input(params, x)
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)  # ReLU on hidden, linear on output
        acts.append(h)
    return float(h[..., 0]) if h.ndim == 1 else h[..., 0], acts


def forward_batch(params: NetParams, x: np.ndarray) -> np.ndarray:
    """Outputs for a (batch, input_dim) matrix; no activation cache."""
    x = np.asarray(x, dtype=float)
    _check_input(params, x)
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def loss_and_grad(params: NetParams, inputs: np.ndarray, targets: np.ndarray,
                  l2_lambda: float = 0.0,
                  sample_weights: np.ndarray | None = None):
    """Mean squared error plus l2_lambda * sum ||W||^2 (weights only, biases
    excluded), with gradients by backpropagation.

    Optional per-sample weights rescale each sample's squared error (used
    for importance-sampling corrections); they default to 1.
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ShapeMismatch("need a non-empty (batch, dim) input matrix "
                            "with matching targets")
    _check_input(params, x)
    n = x.shape[0]
    w_s = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)

    # forward with caches
    last = len(params.weights) - 1
    pre: list[np.ndarray] = []
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    out = h[:, 0]

    err = out - y
    loss = float(np.mean(w_s * err**2))
    if l2_lambda:
        loss += l2_lambda * sum(float(np.sum(w * w)) for w in params.weights)

    # backward
    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    delta = (2.0 / n) * (w_s * err)[:, None]  # d loss / d output
    for i in range(last, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if l2_lambda:
            grad_w[i] += 2.0 * l2_lambda * params.weights[i]
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0)
    return loss, NetParams(grad_w, grad_b)


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


def init_adam(params: NetParams, learning_rate: float) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
        learning_rate=learning_rate)


def adam_step(params: NetParams, grad: NetParams, adam: AdamState) -> NetParams:
    """One bias-corrected Adam update; advances `adam` in place and returns
    the updated parameters."""
    adam.step += 1
    t = adam.step
    b1, b2 = adam.beta1, adam.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_w, new_b = [], []
    for i, (w, gw) in enumerate(zip(params.weights, grad.weights)):
        adam.m_w[i] = b1 * adam.m_w[i] + (1 - b1) * gw
        adam.v_w[i] = b2 * adam.v_w[i] + (1 - b2) * gw**2
        m_hat = adam.m_w[i] / c1
        v_hat = adam.v_w[i] / c2
        new_w.append(w - adam.learning_rate * m_hat / (np.sqrt(v_hat) + adam.eps))
    for i, (b, gb) in enumerate(zip(params.biases, grad.biases)):
        adam.m_b[i] = b1 * adam.m_b[i] + (1 - b1) * gb
        adam.v_b[i] = b2 * adam.v_b[i] + (1 - b2) * gb**2
        m_hat = adam.m_b[i] / c1
        v_hat = adam.v_b[i] / c2
        new_b.append(b - adam.learning_rate * m_hat / (np.sqrt(v_hat) + adam.eps))
    return NetParams(new_w, new_b)


def soft_update(target: NetParams, online: NetParams, tau: float) -> NetParams:
    """Elementwise blend: tau * online + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    if [w.shape for w in target.weights] != [w.shape for w in online.weights]:
        raise ShapeMismatch("target/online layer shapes differ")
    return NetParams(
        [tau * wo + (1 - tau) * wt for wt, wo in zip(target.weights, online.weights)],
        [tau * bo + (1 - tau) * bt for bt, bo in zip(target.biases, online.biases)])


# ---------------------------------------------------------------------------
# checkpoint serialisation: magic, version, layer dims, then row-major
# little-endian float64 matrices.  Round trips must be bit-exact.


def save_checkpoint(path, params: NetParams):
    dims = [w.shape[0] for w in params.weights] + [params.weights[-1].shape[1]]
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError("not a windlab network checkpoint")
        version, n_dims = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        weights, biases = [], []
        for i in range(n_dims - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy())
    return NetParams(weights, biases)
