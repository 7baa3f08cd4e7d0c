"""First-order adaptive-moment optimizer shared by regularization and retargeting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DivergenceError(FloatingPointError):
    def __init__(self, message, iteration=None, group=None):
        super().__init__(message)
        self.iteration = iteration
        self.group = group


@dataclass
class Adam:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def direction(self, grad):
        """Update the moment estimates with grad and return the step to subtract."""
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class OptimResult:
    x: np.ndarray
    cost: np.ndarray                    # per-group cost at x
    trace: list = field(default_factory=list)  # total cost per iteration, starting with the initial one


def minimize(fun, x0, lr=0.01, beta1=0.9, beta2=0.99, iterations=300,
             monotone=False, max_halvings=10, frozen=None, lr_final=None):
    """Minimize a sum of independent group costs with Adam.

    fun(x) -> (costs, grad) where costs has shape (G,) and x, grad have shape
    (G, ...). With monotone=True a step that raises a group's cost is halved
    until it does not (or discarded), so every group's cost is non-increasing.
    Without the guard the best iterate seen is returned. frozen is an optional
    boolean mask over x of entries held fixed. lr_final, when given, decays
    the learning rate geometrically from lr to lr_final over the run.
    """
    x = np.array(x0, dtype=float, copy=True)
    opt = Adam(lr=lr, beta1=beta1, beta2=beta2)
    costs, grad = fun(x)
    _check(costs, 0)
    trace = [float(np.sum(costs))]
    best_x, best_costs = x.copy(), costs.copy()
    keep = None if frozen is None else ~np.asarray(frozen, dtype=bool)
    for it in range(1, iterations + 1):
        if lr_final is not None:
            opt.lr = lr * (lr_final / lr) ** ((it - 1) / max(iterations - 1, 1))
        step = opt.direction(grad)
        if keep is not None:
            step = step * keep
        if not monotone:
            x = x - step
            costs, grad = fun(x)
            _check(costs, it)
            trace.append(float(np.sum(costs)))
            if np.sum(costs) < np.sum(best_costs):
                best_x, best_costs = x.copy(), costs.copy()
            continue
        scale = np.ones(len(x))
        pending = np.ones(len(x), dtype=bool)
        new_x = x.copy()
        new_costs = costs.copy()
        for _ in range(max_halvings + 1):
            shape = (-1,) + (1,) * (x.ndim - 1)
            trial = x - step * (scale * pending).reshape(shape)
            trial_costs, _ = fun(trial)
            ok = pending & np.isfinite(trial_costs) & (trial_costs <= costs)
            new_x[ok] = trial[ok]
            new_costs[ok] = trial_costs[ok]
            pending &= ~ok
            if not pending.any():
                break
            scale[pending] *= 0.5
        x = new_x
        costs, grad = fun(x)
        _check(costs, it)
        trace.append(float(np.sum(costs)))
    if monotone:
        return OptimResult(x, costs, trace)
    return OptimResult(best_x, best_costs, trace)


def _check(costs, iteration):
    bad = np.flatnonzero(~np.isfinite(costs))
    if bad.size:
        raise DivergenceError(
            f"non-finite loss at iteration {iteration} (group {int(bad[0])})",
            iteration=iteration, group=int(bad[0]))
