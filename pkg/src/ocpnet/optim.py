"""Full-batch Adam with step decay, followed by an optional L-BFGS polish."""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize as sp_minimize

from .autodiff import ParamVector, grad_of
from .exceptions import NumericalFailure, TrainingFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 1e-2
    decay_rate: float = 0.5
    decay_every: int = 2000
    max_iter: int = 20000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    polish: bool = True
    polish_max_iter: int = 5000

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class MinimizeResult:
    params: ParamVector
    loss: float
    history: list
    n_iter: int
    initial_loss: float


def minimize(loss_fn, init: ParamVector, settings: OptimizerSettings = OptimizerSettings()) -> MinimizeResult:
    """Minimise ``loss_fn`` from ``init``; returns the best parameters seen.

    ``history`` holds the loss at every Adam iterate followed by the loss
    after every polish iteration.
    """
    layout = init.layout
    x = init.values.copy()
    opt = Adam(x.size, settings.learning_rate, settings.beta1, settings.beta2, settings.eps)
    history = []
    best_x, best_loss = x.copy(), np.inf

    for it in range(settings.max_iter):
        if it and settings.decay_every and it % settings.decay_every == 0:
            opt.lr *= settings.decay_rate
        try:
            res = grad_of(loss_fn, ParamVector(x, layout))
        except NumericalFailure as exc:
            raise TrainingFailure(f"loss diverged at iteration {it}: {exc}", iteration=it) from exc
        history.append(res.loss)
        if res.loss < best_loss:
            best_loss, best_x = res.loss, x.copy()
        x = opt.step(x, res.grad)
    n_iter = settings.max_iter

    if settings.max_iter == 0:
        best_loss = grad_of(loss_fn, ParamVector(x, layout)).loss
        history.append(best_loss)
        best_x = x.copy()

    if settings.polish and settings.polish_max_iter > 0:
        cache = {}

        def fun(v):
            r = grad_of(loss_fn, ParamVector(v, layout))
            cache["last"] = r.loss
            return r.loss, r.grad

        def callback(v):
            history.append(cache["last"])

        try:
            out = sp_minimize(fun, best_x, jac=True, method="L-BFGS-B", callback=callback,
                              options=dict(maxiter=settings.polish_max_iter, maxcor=30, ftol=0.0, gtol=1e-12))
            n_iter += int(out.nit)
            if np.isfinite(out.fun) and out.fun < best_loss:
                best_loss, best_x = float(out.fun), np.array(out.x)
        except NumericalFailure as exc:
            log.warning("polish stopped on non-finite loss (%s); keeping Adam result", exc)

    initial = history[0] if history else best_loss
    return MinimizeResult(ParamVector(best_x, layout), float(best_loss), history, n_iter, float(initial))
