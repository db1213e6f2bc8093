"""Deterministic full-batch gradient descent with Armijo backtracking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ARMIJO_C = 1e-4
SHRINK = 0.5
_MIN_STEP = 1e-20


class TrainingError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class DescentResult:
    x: np.ndarray
    cost: float
    grad_norm: float  # infinity norm
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iters: int,
    grad_tol: float,
    step0: float = 1.0,
) -> DescentResult:
    """Minimise ``fun`` (returning cost and gradient) by steepest descent.

    Each iteration tries a Barzilai-Borwein step length first and halves it
    until the Armijo condition f(x - t g) <= f(x) - c t |g|^2 holds, so the
    recorded cost sequence never increases.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    cost, grad = fun(x)
    if not np.isfinite(cost):
        raise TrainingError("non-finite cost", 0)
    history = [cost]
    step = step0
    prev_x = prev_g = None
    it = 0
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    while it < max_iters and gnorm > grad_tol:
        if prev_x is not None:
            s = x - prev_x
            y = grad - prev_g
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
            else:
                step *= 2.0
        g2 = float(grad @ grad)
        new_cost = cost
        while True:
            trial = x - step * grad
            if step < _MIN_STEP or np.array_equal(trial, x):
                # no representable move left along -grad
                if not np.isfinite(new_cost):
                    raise TrainingError("non-finite cost", it + 1)
                return DescentResult(x, cost, gnorm, it, False, history)
            new_cost, new_grad = fun(trial)
            if np.isfinite(new_cost) and new_cost <= cost - ARMIJO_C * step * g2:
                break
            step *= SHRINK
        it += 1
        prev_x, prev_g = x, grad
        x, cost, grad = trial, new_cost, new_grad
        history.append(cost)
        gnorm = float(np.max(np.abs(grad)))
    return DescentResult(x, cost, gnorm, it, gnorm <= grad_tol, history)
