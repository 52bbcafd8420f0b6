"""Dense numeric kernel: affine layers, activations, dropout, losses, Adam,
and a finite-difference gradient oracle.

All math is float64 numpy and batch-first: a 1-D input is treated as a batch
of one and the output keeps the input's ndim. There is no hidden state;
randomness always comes from a caller-owned ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

ACTIVATIONS = ("identity", "relu")


def matmul(a, b):
    """Matrix product of two 2-D float64 arrays with shape validation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul needs 2-D operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax(z):
    """Row-wise softmax with max subtraction for stability."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mse_loss_and_grad(predicted, target):
    """Sum of squared errors and its gradient w.r.t. the predictions.

    loss = sum((t - p)^2), grad = -2 (t - p).
    """
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"mse length mismatch: {p.shape} vs {t.shape}")
    resid = t - p
    return float(np.sum(resid * resid)), -2.0 * resid


@dataclass
class DenseLayer:
    """One affine layer: out = activation(W x + b), W is (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"bias shape {self.bias.shape} does not match output dim {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def copy(self):
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


def init_layer(rng, n_in, n_out, activation="identity"):
    """New layer with uniform +-sqrt(6/(fan_in+fan_out)) weights, zero bias."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    weights = rng.uniform(-limit, limit, size=(n_out, n_in))
    return DenseLayer(weights, np.zeros(n_out), activation)


@dataclass
class DropoutMask:
    """Inverted-dropout mask: multiply by mask/keep_prob at train time only."""

    keep_prob: float
    mask: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        self.mask = np.asarray(self.mask, dtype=np.float64)

    @property
    def scale(self):
        return 1.0 / self.keep_prob

    def apply(self, values):
        return values * self.mask * self.scale


def make_dropout_mask(rng, shape, keep_prob):
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    mask = (rng.random(shape) < keep_prob).astype(np.float64)
    return DropoutMask(keep_prob, mask)


@dataclass
class LayerCache:
    """Activation record from one dense_forward, consumed by dense_backward."""

    inputs: np.ndarray
    pre_activation: np.ndarray
    dropout: DropoutMask | None
    squeeze: bool


def _promote(x, width, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != width:
            raise ValueError(f"{what} length {x.shape[0]} does not match expected {width}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != width:
            raise ValueError(f"{what} width {x.shape[1]} does not match expected {width}")
        return x, False
    raise ValueError(f"{what} must be 1-D or 2-D, got shape {x.shape}")


def dense_forward(layer, inputs, dropout=None):
    """Affine + activation (+ optional inverted dropout); returns (out, cache)."""
    x, squeeze = _promote(inputs, layer.n_in, "input")
    z = x @ layer.weights.T + layer.bias
    if layer.activation == "relu":
        out = np.maximum(z, 0.0)
    else:
        out = z
    if dropout is not None:
        if dropout.mask.shape != out.shape:
            raise ValueError(
                f"dropout mask shape {dropout.mask.shape} does not match output {out.shape}"
            )
        out = dropout.apply(out)
    cache = LayerCache(x, z, dropout, squeeze)
    return (out[0] if squeeze else out), cache


def dense_backward(layer, cache, grad_out):
    """Gradients of a scalar loss through one layer; reuses the cached mask.

    Returns (grad_weights, grad_bias, grad_inputs).
    """
    g, _ = _promote(grad_out, layer.n_out, "upstream gradient")
    if g.shape[0] != cache.inputs.shape[0]:
        raise ValueError("upstream gradient batch does not match cached forward pass")
    if cache.dropout is not None:
        g = cache.dropout.apply(g)
    if layer.activation == "relu":
        g = g * (cache.pre_activation > 0.0)
    grad_w = g.T @ cache.inputs
    grad_b = g.sum(axis=0)
    grad_in = g @ layer.weights
    return grad_w, grad_b, (grad_in[0] if cache.squeeze else grad_in)


def forward(layers, inputs, dropouts=None):
    """Run a stack of layers; returns (output, caches for backward)."""
    if dropouts is None:
        dropouts = [None] * len(layers)
    if len(dropouts) != len(layers):
        raise ValueError("one dropout slot per layer required")
    out = inputs
    caches = []
    for layer, mask in zip(layers, dropouts):
        out, cache = dense_forward(layer, out, mask)
        caches.append(cache)
    return out, caches


def backward(layers, caches, upstream):
    """Exact reverse-mode gradients for a stack of layers.

    Returns ([(grad_w, grad_b) per layer], grad_input).
    """
    if len(caches) != len(layers):
        raise ValueError(f"need {len(layers)} caches, got {len(caches)}")
    grads = [None] * len(layers)
    g = upstream
    for i in range(len(layers) - 1, -1, -1):
        gw, gb, g = dense_backward(layers[i], caches[i], g)
        grads[i] = (gw, gb)
    return grads, g


def layer_parameters(layers):
    """Flat parameter list [W0, b0, W1, b1, ...] sharing the layer arrays."""
    params = []
    for layer in layers:
        params.append(layer.weights)
        params.append(layer.bias)
    return params


def flatten_layer_grads(grads):
    """Flatten [(gw, gb), ...] into the layer_parameters ordering."""
    flat = []
    for gw, gb in grads:
        flat.append(gw)
        flat.append(gb)
    return flat


@dataclass
class AdamState:
    """Per-parameter Adam moments; step counts each update exactly once."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and Adam state must have matching lengths")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient for parameter {i} (shape {p.shape}); training halted"
            )
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def finite_diff_grad(loss_fn, params, h=1e-5):
    """Central-difference gradient oracle: (f(p+h) - f(p-h)) / 2h per entry.

    Slow test path; perturbs the live arrays in place and restores them.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            f_plus = loss_fn()
            flat_p[i] = orig - h
            f_minus = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads
