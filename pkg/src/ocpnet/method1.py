"""Time- and initial-condition-dependent network with PMP trial solutions.

Three parallel single-hidden-layer sigmoid networks n_x, n_lambda, n_u take
(t, x0) and feed the trial solutions

    x_hat   = x0 + t * n_x
    lam_hat = lambda_T + (t - T) * n_lambda
    u_hat   = n_u

which meet x_hat(0) = x0 and lam_hat(T) = lambda_T for any weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .autodiff import Layout
from .pmploss import TrialBundle, check_time_domain
from .problems import ProblemDef

TARGETS = ("x", "lambda", "u")


@dataclass
class SubNetParams:
    w: object  # (I, 2): columns multiply t and x0
    b: object  # (I,)
    v: object  # (I,)

    def __post_init__(self):
        I = np.shape(ad.value_of(self.w))[0]
        if np.shape(ad.value_of(self.w)) != (I, 2) or np.shape(ad.value_of(self.b)) != (I,) \
                or np.shape(ad.value_of(self.v)) != (I,) or I < 1:
            raise ValueError("inconsistent sub-network shapes")


def _subnet_forward(w, b, v, ts, xs, t_scale):
    w_t, w_x = w[:, 0], w[:, 1]
    s = ad._sigmoid(np.outer(ts, w_t) + np.outer(xs, w_x) + b)
    ds = s * (1.0 - s)
    return s, ds, s @ v, (ds * w_t) @ v * t_scale


def subnet_eval(p: SubNetParams, t, x0, t_scale: float = 1.0, x0_scale: float = 1.0):
    """Value v^T sigma(w [t, x0] + b) and its derivative in (unscaled) t.

    ``t`` and ``x0`` are broadcast together; the result has their common shape.
    When the weights are graph nodes the pair is recorded as a single fused
    node with a hand-derived backward rule.
    """
    t, x0 = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x0, dtype=float))
    shape = t.shape
    ts, xs = t.ravel() * t_scale, x0.ravel() * x0_scale
    w, b, v = (ad.value_of(a) for a in (p.w, p.b, p.v))
    s, ds, value, dvalue = _subnet_forward(w, b, v, ts, xs, t_scale)
    tracked = [a for a in (p.w, p.b, p.v) if isinstance(a, ad.Var)]
    if not tracked:
        return value.reshape(shape), dvalue.reshape(shape)

    cache = {}

    def grads(g):
        # g[0]: upstream for value, g[1]: upstream for dvalue
        if "g" not in cache or cache["g"][0] is not g:
            gv, gd = g[0], g[1]
            w_t = w[:, 0]
            d2s = ds * (1.0 - 2.0 * s)
            G = ds * np.outer(gv, v) + d2s * np.outer(gd, t_scale * v * w_t)
            dw = np.empty_like(w)
            dw[:, 0] = ts @ G + t_scale * v * (gd @ ds)
            dw[:, 1] = xs @ G
            db = G.sum(axis=0)
            dv = gv @ s + t_scale * w_t * (gd @ ds)
            cache["g"] = (g, {"w": dw, "b": db, "v": dv})
        return cache["g"][1]

    parents = []
    for name, a in (("w", p.w), ("b", p.b), ("v", p.v)):
        if isinstance(a, ad.Var):
            parents.append((a, lambda g, name=name: grads(g)[name]))
    both = ad.Var(np.stack([value, dvalue]), parents)
    return ad.reshape(both[0], shape), ad.reshape(both[1], shape)


@dataclass
class Method1Model:
    """Parameter layout and trial construction for one problem and width."""

    problem: ProblemDef
    hidden_I: int

    method = "method1"

    def __post_init__(self):
        if int(self.hidden_I) < 1:
            raise ValueError("hidden_I must be >= 1")
        self.hidden_I = int(self.hidden_I)

    @property
    def problem_id(self) -> str:
        return self.problem.id

    @cached_property
    def layout(self) -> Layout:
        I = self.hidden_I
        shapes = []
        for name in TARGETS:
            shapes += [(f"{name}.w", (I, 2)), (f"{name}.b", (I,)), (f"{name}.v", (I,))]
        return Layout.from_shapes(shapes)

    def init_values(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, self.layout.size)

    def subnets(self, blocks) -> dict:
        return {n: SubNetParams(blocks[f"{n}.w"], blocks[f"{n}.b"], blocks[f"{n}.v"]) for n in TARGETS}

    def trial(self, blocks, t, x0) -> TrialBundle:
        p = self.problem
        t = check_time_domain(p, t)
        t, x0 = np.broadcast_arrays(t, np.asarray(x0, dtype=float))
        nets = self.subnets(blocks)
        kw = dict(t_scale=p.t_scale, x0_scale=p.x0_scale)
        n_x, dn_x = subnet_eval(nets["x"], t, x0, **kw)
        n_l, dn_l = subnet_eval(nets["lambda"], t, x0, **kw)
        n_u, _ = subnet_eval(nets["u"], t, x0, **kw)
        T = p.horizon_T
        return TrialBundle(
            x_hat=x0 + t * n_x,
            lambda_hat=p.lambda_T + (t - T) * n_l,
            u_hat=n_u,
            x_hat_dot=n_x + t * dn_x,
            lambda_hat_dot=n_l + (t - T) * dn_l,
        )


def trial_eval(model: Method1Model, blocks, t, x0) -> TrialBundle:
    return model.trial(blocks, t, x0)
