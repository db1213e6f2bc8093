"""L2-regularised softmax regression over encoded features.

``theta`` is a (k, n+1) array; column 0 holds the intercepts and is
regularised along with the weights, which keeps the objective strictly
convex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fpsae import optim
from fpsae.classes import ClassLabel

DEFAULT_LAMBDA = 1e-4
GRAD_TOL = 1e-7
MAX_ITERS = 50_000


@dataclass(frozen=True)
class SoftmaxModel:
    theta: np.ndarray
    lambda_reg: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.theta.ndim != 2 or self.theta.shape[0] < 2:
            raise ValueError("theta must be (k, n+1) with k >= 2")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")

    @property
    def k(self) -> int:
        return self.theta.shape[0]

    @property
    def n(self) -> int:
        return self.theta.shape[1] - 1


def _augment(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.concatenate([np.ones(X.shape[:-1] + (1,)), X], axis=-1)


_SCORE_FLOOR = -700.0  # keeps every probability strictly positive


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = np.maximum(scores - scores.max(axis=-1, keepdims=True), _SCORE_FLOOR)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(m: SoftmaxModel, x) -> np.ndarray:
    """Class probabilities for one sample (length k) or a batch (m, k)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.n:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {m.n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return _softmax_rows(_augment(x) @ m.theta.T)


def _check_labels(y, k: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 1 or y.max() > k):
        bad = y[(y < 1) | (y > k)][0]
        raise ValueError(f"label {bad} outside 1..{k}")
    return y


def cost_grad(theta, X, y, lambda_reg: float) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood + (lambda/2)|theta|^2 and its gradient."""
    theta = np.asarray(theta, dtype=np.float64)
    k = theta.shape[0]
    Xa = _augment(np.atleast_2d(X))
    m = Xa.shape[0]
    if m < 1:
        raise ValueError("need at least one sample")
    y = _check_labels(y, k)
    scores = Xa @ theta.T
    z = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z - log_norm[:, None]
    rows = np.arange(m)
    cost = -log_p[rows, y - 1].sum() / m + 0.5 * lambda_reg * np.sum(theta**2)
    resid = np.exp(log_p)
    resid[rows, y - 1] -= 1.0
    grad = resid.T @ Xa / m + lambda_reg * theta
    return float(cost), grad


def train(
    features,
    labels,
    lambda_reg: float = DEFAULT_LAMBDA,
    seed: int = 0,
    k: int = len(ClassLabel),
    max_iters: int = MAX_ITERS,
    grad_tol: float = GRAD_TOL,
) -> SoftmaxModel:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _check_labels(labels, k)
    missing = sorted(set(range(1, k + 1)) - set(y.tolist()))
    if missing:
        raise ValueError(f"no training samples for class(es) {missing}")
    n = X.shape[1]
    rng = np.random.default_rng(seed)
    theta0 = 0.005 * rng.standard_normal((k, n + 1))

    def fun(flat):
        c, g = cost_grad(flat.reshape(k, n + 1), X, y, lambda_reg)
        return c, g.ravel()

    res = optim.minimize(fun, theta0.ravel(), max_iters, grad_tol)
    return SoftmaxModel(res.x.reshape(k, n + 1), lambda_reg)


def _as_label(j: int, k: int):
    return ClassLabel(j) if k == len(ClassLabel) else j


def classify(m: SoftmaxModel, x) -> list[tuple]:
    """(label, probability) pairs, most probable first; ties go to the lower ordinal."""
    p = predict_proba(m, x)
    if p.ndim != 1:
        raise ValueError("classify takes a single feature vector")
    order = sorted(range(m.k), key=lambda j: (-p[j], j))
    return [(_as_label(j + 1, m.k), float(p[j])) for j in order]


# -- model file ----------------------------------------------------------------

SOFTMAX_MAGIC = "SOFTMAXv1"


def format_model(m: SoftmaxModel) -> str:
    lines = [SOFTMAX_MAGIC, f"{m.k} {m.n} {m.lambda_reg!r}"]
    lines.extend(" ".join(format(float(v), ".17g") for v in row) for row in m.theta)
    return "\n".join(lines) + "\n"


def parse_model(lines: list[str], pos: int = 0) -> tuple[SoftmaxModel, int]:
    if pos >= len(lines) or lines[pos].strip() != SOFTMAX_MAGIC:
        raise ValueError(f"model line {pos + 1}: expected {SOFTMAX_MAGIC!r}")
    try:
        k_s, n_s, lam_s = lines[pos + 1].split()
        k, n, lam = int(k_s), int(n_s), float(lam_s)
    except (IndexError, ValueError):
        raise ValueError(f"model line {pos + 2}: malformed softmax header") from None
    if pos + 2 + k > len(lines):
        raise ValueError("model file truncated inside softmax block")
    rows = []
    for i in range(k):
        vals = [float(t) for t in lines[pos + 2 + i].split()]
        if len(vals) != n + 1:
            raise ValueError(f"model line {pos + 3 + i}: expected {n + 1} values")
        rows.append(vals)
    return SoftmaxModel(np.array(rows), lam), pos + 2 + k

