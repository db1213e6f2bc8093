"""Sparse autoencoder layers and their greedy stacking.

Batches are (m, n) arrays with one sample per row.  A layer maps
visible -> hidden with ``W1`` (hidden x visible) and back with ``W2``
(visible x hidden); both halves use the logistic sigmoid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fpsae import optim
from fpsae.optim import TrainingError
from fpsae.orientation import OrientationField, decode_features

RHO_HAT_CLAMP = 1e-8
# features in [-1, 1] are squeezed into the sigmoid's comfortable range
IN_LO, IN_SCALE = 0.1, 0.4

__all__ = [
    "LayerParams",
    "SaeHyper",
    "StackedEncoder",
    "TrainingError",
    "sigmoid",
    "kl_divergence",
    "sae_cost_grad",
    "sae_cost_terms",
    "gradient_check",
    "train_layer",
    "encode",
    "train_stack",
    "reconstruct",
]


@dataclass(frozen=True)
class SaeHyper:
    """Per-layer hyperparameters.

    The defaults keep deeper layers alive: with lam=3e-3, beta=3, rho=0.05
    the KL term outweighs the small variance of sparse codes and layers
    past the first collapse to a constant output.
    """

    lam: float = 1e-4
    beta: float = 0.3
    rho: float = 0.1
    max_iters: int = 400
    grad_tol: float = 1e-7

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be >= 0")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be > 0")


@dataclass(frozen=True)
class LayerParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        h, v = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (v, h) or self.b2.shape != (v,):
            raise ValueError(
                f"inconsistent layer shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )
        for a in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("layer parameters must be finite")

    @property
    def visible(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.W1, self.b1, self.W2, self.b2)])

    @classmethod
    def unflat(cls, theta: np.ndarray, visible: int, hidden: int) -> "LayerParams":
        hv = hidden * visible
        return cls(
            W1=theta[:hv].reshape(hidden, visible),
            b1=theta[hv : hv + hidden],
            W2=theta[hv + hidden : 2 * hv + hidden].reshape(visible, hidden),
            b2=theta[2 * hv + hidden :],
        )


@dataclass(frozen=True)
class StackedEncoder:
    layers: tuple[LayerParams, ...] = ()
    hypers: tuple[SaeHyper, ...] = ()

    def __post_init__(self):
        if len(self.layers) != len(self.hypers):
            raise ValueError("need one SaeHyper per layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.visible != prev.hidden:
                raise ValueError(
                    f"layer visible size {nxt.visible} != previous hidden size {prev.hidden}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int | None:
        return self.layers[0].visible if self.layers else None

    @property
    def code_dim(self) -> int | None:
        return self.layers[-1].hidden if self.layers else None


def sigmoid(z):
    """Logistic function, stable for large |z| (no overflow warnings)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def kl_divergence(rho: float, q):
    """Bernoulli KL(rho || q), elementwise in q."""
    q = np.asarray(q, dtype=np.float64)
    return rho * np.log(rho / q) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - q))


def to_unit(x):
    return (np.asarray(x, dtype=np.float64) + 1.0) * IN_SCALE + IN_LO


def from_unit(y):
    return (np.asarray(y, dtype=np.float64) - IN_LO) / IN_SCALE - 1.0


def _check_batch(p: LayerParams, batch) -> np.ndarray:
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if X.shape[0] < 1:
        raise ValueError("batch must contain at least one sample")
    if X.shape[1] != p.visible:
        raise ValueError(f"batch has {X.shape[1]} features, layer expects {p.visible}")
    if not np.all(np.isfinite(X)):
        raise ValueError("batch contains non-finite values")
    return X


def _forward(p: LayerParams, X):
    A2 = sigmoid(X @ p.W1.T + p.b1)
    A3 = sigmoid(A2 @ p.W2.T + p.b2)
    return A2, A3


def sae_cost_terms(p: LayerParams, batch, h: SaeHyper) -> dict:
    """The three objective terms separately: reconstruction, decay, sparsity."""
    X = _check_batch(p, batch)
    A2, A3 = _forward(p, X)
    m = X.shape[0]
    rho_hat = np.clip(A2.mean(axis=0), RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)
    return {
        "reconstruction": float(np.sum((A3 - X) ** 2) / m),
        "weight_decay": float(h.lam * (np.sum(p.W1**2) + np.sum(p.W2**2))),
        "sparsity": float(h.beta * np.sum(kl_divergence(h.rho, rho_hat))),
    }


def sae_cost_grad(p: LayerParams, batch, h: SaeHyper) -> tuple[float, LayerParams]:
    """Sparse autoencoder objective and its exact backprop gradient.

    cost = (1/m) sum ||x_hat - x||^2 + lam (|W1|^2 + |W2|^2)
           + beta sum_j KL(rho || rho_hat_j)
    """
    X = _check_batch(p, batch)
    m = X.shape[0]
    A2, A3 = _forward(p, X)
    raw_rho_hat = A2.mean(axis=0)
    rho_hat = np.clip(raw_rho_hat, RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)
    diff = A3 - X
    cost = (
        np.sum(diff**2) / m
        + h.lam * (np.sum(p.W1**2) + np.sum(p.W2**2))
        + h.beta * np.sum(kl_divergence(h.rho, rho_hat))
    )

    d3 = (2.0 / m) * diff * A3 * (1.0 - A3)
    gW2 = d3.T @ A2 + 2.0 * h.lam * p.W2
    gb2 = d3.sum(axis=0)
    # d(sparsity)/d(rho_hat), zero where the clamp is active
    dkl = h.beta * (-h.rho / rho_hat + (1.0 - h.rho) / (1.0 - rho_hat))
    dkl = np.where(rho_hat == raw_rho_hat, dkl, 0.0)
    d2 = (d3 @ p.W2 + dkl / m) * A2 * (1.0 - A2)
    gW1 = d2.T @ X + 2.0 * h.lam * p.W1
    gb1 = d2.sum(axis=0)
    return float(cost), LayerParams(gW1, gb1, gW2, gb2)


def gradient_check(p: LayerParams, batch, h: SaeHyper, eps: float = 1e-5) -> float:
    """Max relative gap between analytic and central-difference gradients."""
    if not eps > 0:
        raise ValueError("finite-difference step eps must be > 0")
    v, hid = p.visible, p.hidden
    theta = p.flat()
    analytic = sae_cost_grad(p, batch, h)[1].flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += eps
        tm = theta.copy()
        tm[i] -= eps
        jp = sae_cost_grad(LayerParams.unflat(tp, v, hid), batch, h)[0]
        jm = sae_cost_grad(LayerParams.unflat(tm, v, hid), batch, h)[0]
        numeric[i] = (jp - jm) / (2.0 * eps)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def init_layer(visible: int, hidden: int, seed: int) -> LayerParams:
    rng = np.random.default_rng(seed)
    r = np.sqrt(6.0) / np.sqrt(visible + hidden + 1)
    W1 = rng.uniform(-r, r, size=(hidden, visible))
    W2 = rng.uniform(-r, r, size=(visible, hidden))
    return LayerParams(W1, np.zeros(hidden), W2, np.zeros(visible))


def train_layer(
    data, visible: int, hidden: int, h: SaeHyper, seed: int, history: list | None = None
) -> LayerParams:
    """Fit one sparse autoencoder layer by full-batch descent.

    If ``history`` is given, the per-iteration costs are appended to it.
    """
    if hidden < 1:
        raise ValueError("hidden size must be >= 1")
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if X.shape[0] == 0 or X.size == 0:
        raise ValueError("training data is empty")
    p0 = init_layer(visible, hidden, seed)
    X = _check_batch(p0, X)

    def fun(theta):
        cost, grads = sae_cost_grad(LayerParams.unflat(theta, visible, hidden), X, h)
        return cost, grads.flat()

    res = optim.minimize(fun, p0.flat(), h.max_iters, h.grad_tol)
    if history is not None:
        history.extend(res.history)
    return LayerParams.unflat(res.x, visible, hidden)


def encode(layer: LayerParams, x) -> np.ndarray:
    """Hidden activations sigmoid(W1 x + b1); accepts one sample or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.visible:
        raise ValueError(f"input has {x.shape[-1]} features, layer expects {layer.visible}")
    return sigmoid(x @ layer.W1.T + layer.b1)


def decode(layer: LayerParams, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != layer.hidden:
        raise ValueError(f"code has {a.shape[-1]} entries, layer expects {layer.hidden}")
    return sigmoid(a @ layer.W2.T + layer.b2)


def encode_stack(enc: StackedEncoder, features) -> np.ndarray:
    """Top-level code for raw [-1, 1] features (input mapping included)."""
    a = to_unit(features)
    if enc.input_dim is not None and a.shape[-1] != enc.input_dim:
        raise ValueError(f"input has {a.shape[-1]} features, encoder expects {enc.input_dim}")
    for layer in enc.layers:
        a = encode(layer, a)
    return a


def train_stack(data, layer_sizes, hypers, seed: int, log=None) -> StackedEncoder:
    """Greedy layer-wise training; layer k learns to reconstruct layer k-1's codes.

    ``hypers`` is one SaeHyper for all layers or a sequence with one per layer.
    Layer k is initialised from ``seed + k``.
    """
    layer_sizes = list(layer_sizes)
    if not layer_sizes:
        raise ValueError("layer_sizes must be non-empty")
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if X.shape[0] == 0 or X.size == 0:
        raise ValueError("training data is empty")
    if isinstance(hypers, SaeHyper):
        hypers = [hypers] * len(layer_sizes)
    hypers = list(hypers)
    if len(hypers) != len(layer_sizes):
        raise ValueError("need one SaeHyper per layer")

    a = to_unit(X)
    layers = []
    for k, (size, h) in enumerate(zip(layer_sizes, hypers)):
        hist: list = []
        layer = train_layer(a, a.shape[1], size, h, seed + k, history=hist)
        if log is not None:
            log(
                f"layer {k + 1}: {a.shape[1]}->{size} cost {hist[0]:.6g} -> {hist[-1]:.6g} "
                f"({len(hist) - 1} iters)"
            )
        layers.append(layer)
        a = encode(layer, a)
    return StackedEncoder(tuple(layers), tuple(hypers))


@dataclass(frozen=True)
class Reconstruction:
    features: np.ndarray  # x_hat in the [-1, 1] feature space
    field: OrientationField


def reconstruct(enc: StackedEncoder, x, shape: tuple[int, int]) -> Reconstruction:
    """Encode through every layer, decode back in reverse, recover angles."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("reconstruct takes a single feature vector")
    if enc.input_dim is not None and x.size != enc.input_dim:
        raise ValueError(f"input has {x.size} features, encoder expects {enc.input_dim}")
    a = encode_stack(enc, x)
    for layer in reversed(enc.layers):
        a = decode(layer, a)
    x_hat = from_unit(a)
    return Reconstruction(x_hat, decode_features(x_hat, shape))


# -- model file ----------------------------------------------------------------

SAE_MAGIC = "SAEv1"


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def format_stack(enc: StackedEncoder) -> str:
    lines = [SAE_MAGIC]
    for layer, h in zip(enc.layers, enc.hypers):
        lines.append(
            f"layer {layer.visible} {layer.hidden} {h.lam!r} {h.beta!r} {h.rho!r}"
        )
        lines.extend(_fmt(row) for row in layer.W1)
        lines.append(_fmt(layer.b1))
        lines.extend(_fmt(row) for row in layer.W2)
        lines.append(_fmt(layer.b2))
    return "\n".join(lines) + "\n"


def parse_stack(lines: list[str], pos: int = 0) -> tuple[StackedEncoder, int]:
    """Parse an SAEv1 block starting at ``lines[pos]``; returns (encoder, next pos)."""

    def floats(i, n):
        vals = np.array([float(t) for t in lines[i].split()])
        if vals.size != n:
            raise ValueError(f"model line {i + 1}: expected {n} values, got {vals.size}")
        return vals

    if pos >= len(lines) or lines[pos].strip() != SAE_MAGIC:
        raise ValueError(f"model line {pos + 1}: expected {SAE_MAGIC!r}")
    pos += 1
    layers, hypers = [], []
    while pos < len(lines) and lines[pos].startswith("layer "):
        parts = lines[pos].split()
        if len(parts) != 6:
            raise ValueError(f"model line {pos + 1}: malformed layer header")
        v, hid = int(parts[1]), int(parts[2])
        lam, beta, rho = (float(t) for t in parts[3:])
        pos += 1
        if pos + hid + v + 2 > len(lines):
            raise ValueError("model file truncated inside a layer")
        W1 = np.vstack([floats(pos + i, v) for i in range(hid)])
        pos += hid
        b1 = floats(pos, hid)
        pos += 1
        W2 = np.vstack([floats(pos + i, hid) for i in range(v)])
        pos += v
        b2 = floats(pos, v)
        pos += 1
        layers.append(LayerParams(W1, b1, W2, b2))
        hypers.append(SaeHyper(lam=lam, beta=beta, rho=rho))
    return StackedEncoder(tuple(layers), tuple(hypers)), pos
