"""Initial-condition network with a Fourier output layer, and the direct baseline.

Each target gets a map x0 -> Fourier coefficients

    Theta(x0) = v sigma(w x0 + b1) + b2

and the trial functions are half-range series in sin(k pi t / T), cos(k pi t / T)
with the cosine terms shifted by their value at the anchoring end, so that
x_hat(0) = x0 and lam_hat(T) = lambda_T hold for any coefficients.

Coefficient vectors are laid out as ``[a_1..a_N, b_1..b_N]`` for state and
costate and ``[a_0, a_1..a_M, b_1..b_M]`` for the control.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .autodiff import Layout
from .pmploss import TrialBundle, check_time_domain
from .problems import ProblemDef


@dataclass
class FourierLayerParams:
    w: object  # (I,)
    b1: object  # (I,)
    v: object  # (K, I)
    b2: object  # (K,)


@dataclass
class FourierCoeffs:
    target: str
    a: object  # sine coefficients, (..., n)
    b: object  # cosine coefficients, (..., n)
    a0: object = None  # control only

    @property
    def order(self) -> int:
        return int(np.shape(ad.value_of(self.a))[-1])


def coeff_count(target: str, order: int) -> int:
    return 2 * order + 1 if target == "u" else 2 * order


def split_coeffs(theta, target: str, order: int) -> FourierCoeffs:
    """Unpack a ``(P, K)`` coefficient array into a :class:`FourierCoeffs`."""
    if target == "u":
        return FourierCoeffs(target, a=theta[:, 1 : order + 1], b=theta[:, order + 1 : 2 * order + 1], a0=theta[:, 0])
    return FourierCoeffs(target, a=theta[:, :order], b=theta[:, order : 2 * order])


def coeffs_of(p: FourierLayerParams, x0, target: str, order: int, x0_scale: float = 1.0) -> FourierCoeffs:
    """Fourier coefficients at each x0 (one row per entry of ``x0``)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).ravel()
    s = ad.sigmoid((x0 * x0_scale)[:, None] * p.w + p.b1)
    theta = s @ ad.transpose(p.v) + p.b2
    return split_coeffs(theta, target, order)


def _basis(t, order: int, T: float):
    freq = np.arange(1, order + 1) * (np.pi / T)
    arg = np.asarray(t, dtype=float).reshape(-1, 1) * freq
    return np.sin(arg), np.cos(arg), freq


def series(c: FourierCoeffs, t, T: float, base=0.0, anchor=None):
    """Row-wise ``base + sum_k a_k sin + b_k (cos - anchor_k)`` and its time derivative.

    ``c`` holds one coefficient row per entry of ``t``. ``anchor`` is the
    cosine basis evaluated where the series must equal ``base``; subtracting
    it inside the sum makes the boundary value exact in floating point.
    """
    sin, cos, freq = _basis(t, c.order, T)
    shifted = cos if anchor is None else cos - anchor
    val = ad.vsum(c.a * sin + c.b * shifted, axis=1) + base
    dval = ad.vsum((c.a * cos - c.b * sin) * freq, axis=1)
    return val, dval


def _end_anchor(order: int) -> np.ndarray:
    # cos(k pi) = (-1)^k, the cosine basis at t = T
    return (-1.0) ** np.arange(1, order + 1)


def fourier_trial_eval(coeffs: dict, p: ProblemDef, t, x0) -> TrialBundle:
    """Boundary-corrected trial series at paired points ``(t[i], x0[i])``.

    ``coeffs`` maps ``"x"``, ``"u"`` and optionally ``"lambda"`` to
    :class:`FourierCoeffs` with one row per point.
    """
    t = np.atleast_1d(check_time_domain(p, t)).ravel()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).ravel()
    T = p.horizon_T
    cx, cu = coeffs["x"], coeffs["u"]
    x_hat, x_dot = series(cx, t, T, base=x0, anchor=np.ones(cx.order))
    u_hat, _ = series(cu, t, T, base=cu.a0)
    lam_hat = lam_dot = None
    if coeffs.get("lambda") is not None:
        cl = coeffs["lambda"]
        lam_hat, lam_dot = series(cl, t, T, base=p.lambda_T, anchor=_end_anchor(cl.order))
    return TrialBundle(x_hat=x_hat, lambda_hat=lam_hat, u_hat=u_hat, x_hat_dot=x_dot, lambda_hat_dot=lam_dot)


def fourier_trial_grid(coeffs: dict, p: ProblemDef, times, x0s) -> TrialBundle:
    """Trial series on the product grid ``times x x0s``; arrays are ``(n_time, n_x0)``.

    ``coeffs`` holds one coefficient row per entry of ``x0s``.
    """
    times = np.atleast_1d(check_time_domain(p, times)).ravel()
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float)).ravel()
    T = p.horizon_T

    def grid_series(c: FourierCoeffs, base, anchor=None):
        sin, cos, freq = _basis(times, c.order, T)
        a_t, b_t = ad.transpose(c.a), ad.transpose(c.b)
        shifted = cos if anchor is None else cos - anchor
        val = sin @ a_t + shifted @ b_t + base
        dval = (cos * freq) @ a_t - (sin * freq) @ b_t
        return val, dval

    cx, cu = coeffs["x"], coeffs["u"]
    x_hat, x_dot = grid_series(cx, x0s[None, :], np.ones(cx.order))
    u_hat, _ = grid_series(cu, ad.reshape(cu.a0, (1, x0s.size)))
    lam_hat = lam_dot = None
    if coeffs.get("lambda") is not None:
        cl = coeffs["lambda"]
        lam_hat, lam_dot = grid_series(cl, p.lambda_T, _end_anchor(cl.order))
    return TrialBundle(x_hat=x_hat, lambda_hat=lam_hat, u_hat=u_hat, x_hat_dot=x_dot, lambda_hat_dot=lam_dot)


def _shape_like(out: TrialBundle, shape) -> TrialBundle:
    return TrialBundle(*(None if v is None else ad.reshape(v, shape) for v in
                         (out.x_hat, out.lambda_hat, out.u_hat, out.x_hat_dot, out.lambda_hat_dot)))


@dataclass
class FourierLayerModel:
    """Shared-width Fourier-layer sub-networks for x, lambda and u."""

    problem: ProblemDef
    hidden_I: int
    M: int
    N: int

    method = "method2"

    def __post_init__(self):
        self.hidden_I, self.M, self.N = int(self.hidden_I), int(self.M), int(self.N)
        if self.hidden_I < 1 or self.M < 1 or self.N < 1:
            raise ValueError("hidden_I, M and N must be >= 1")

    @property
    def problem_id(self) -> str:
        return self.problem.id

    def order(self, target: str) -> int:
        return self.M if target == "u" else self.N

    @cached_property
    def layout(self) -> Layout:
        I = self.hidden_I
        shapes = []
        for name in ("x", "lambda", "u"):
            K = coeff_count(name, self.order(name))
            shapes += [(f"{name}.w", (I,)), (f"{name}.b1", (I,)), (f"{name}.v", (K, I)), (f"{name}.b2", (K,))]
        return Layout.from_shapes(shapes)

    def init_values(self, rng: np.random.Generator) -> np.ndarray:
        values = rng.uniform(-1.0, 1.0, self.layout.size)
        for b in self.layout.blocks:
            if b.name.endswith(".b2"):
                values[b.offset : b.offset + b.size] = 0.0
        return values

    def layer(self, blocks, target: str) -> FourierLayerParams:
        return FourierLayerParams(blocks[f"{target}.w"], blocks[f"{target}.b1"], blocks[f"{target}.v"],
                                  blocks[f"{target}.b2"])

    def coefficients(self, blocks, x0) -> dict:
        s = self.problem.x0_scale
        return {n: coeffs_of(self.layer(blocks, n), x0, n, self.order(n), s) for n in ("x", "lambda", "u")}

    def trial(self, blocks, t, x0) -> TrialBundle:
        t, x0 = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x0, dtype=float))
        out = fourier_trial_eval(self.coefficients(blocks, x0.ravel()), self.problem, t.ravel(), x0.ravel())
        return _shape_like(out, t.shape)

    def trial_grid(self, blocks, times, x0s) -> TrialBundle:
        return fourier_trial_grid(self.coefficients(blocks, x0s), self.problem, times, x0s)


def x0_basis(x0, order: int, lo: float, hi: float) -> np.ndarray:
    """Half-range Fourier basis ``[1, cos(k pi s), sin(k pi s)]`` on s = (x0 - lo)/(hi - lo)."""
    s = (np.atleast_1d(np.asarray(x0, dtype=float)).ravel() - lo) / (hi - lo)
    k = np.arange(1, order + 1)
    arg = np.outer(s, k) * np.pi
    return np.hstack([np.ones((s.size, 1)), np.cos(arg), np.sin(arg)])


@dataclass
class DirectFourierModel:
    """Direct baseline: a two-dimensional Fourier series in (t, x0).

    The coefficients of the time series are themselves Fourier series in x0
    of the same order, so there is no hidden layer and no costate.
    """

    problem: ProblemDef
    M: int
    N: int

    method = "direct"

    def __post_init__(self):
        self.M, self.N = int(self.M), int(self.N)
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")

    @property
    def problem_id(self) -> str:
        return self.problem.id

    def order(self, target: str) -> int:
        return self.M if target == "u" else self.N

    @cached_property
    def layout(self) -> Layout:
        return Layout.from_shapes([
            ("x.C", (2 * self.N + 1, coeff_count("x", self.N))),
            ("u.C", (2 * self.M + 1, coeff_count("u", self.M))),
        ])

    def init_values(self, rng: np.random.Generator) -> np.ndarray:
        # loss is a convex quadratic in C for the linear-quadratic benchmark
        return np.zeros(self.layout.size)

    def coefficients(self, blocks, x0) -> dict:
        lo, hi = self.problem.x0_hull
        out = {}
        for n in ("x", "u"):
            order = self.order(n)
            out[n] = split_coeffs(x0_basis(x0, order, lo, hi) @ blocks[f"{n}.C"], n, order)
        return out

    def trial(self, blocks, t, x0) -> TrialBundle:
        t, x0 = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x0, dtype=float))
        out = fourier_trial_eval(self.coefficients(blocks, x0.ravel()), self.problem, t.ravel(), x0.ravel())
        return _shape_like(out, t.shape)

    def trial_grid(self, blocks, times, x0s) -> TrialBundle:
        return fourier_trial_grid(self.coefficients(blocks, x0s), self.problem, times, x0s)
