"""Scalar Bolza optimal control problems and their Hamiltonians.

A problem is

    min_u  int_0^T f(x, u, t) dt + Psi(x(T))   s.t.  x' = g(x, u, t),  x(0) = x0,

with Hamiltonian H = f + lam * g. All callables accept floats, ndarrays or
:class:`~ocpnet.autodiff.Var` nodes so the same closed forms serve the oracle,
the residual losses and their gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError

PROBLEM_IDS = ("OCP1", "OCP2", "OCP3")


def _zeros_like(x):
    # keeps graph shape when f or g is identically zero
    return 0.0 * x


@dataclass(frozen=True, eq=False)
class ProblemDef:
    id: str
    horizon_T: float
    running_cost: Callable
    dynamics: Callable
    terminal_cost: Callable
    f_x: Callable
    f_u: Callable
    g_x: Callable
    g_u: Callable
    psi_x: Callable
    lambda_T: float
    x0_train: np.ndarray = field(repr=False)
    # control solving dH/du = 0, used by the shooting oracle
    stationary_u: Optional[Callable] = field(default=None, repr=False)
    g_t: Optional[Callable] = field(default=None, repr=False)
    # network input scaling (t -> t * t_scale, x0 -> x0 * x0_scale); the
    # benchmarks use 1/T and 1/max|X0| so both inputs lie in [0, 1]
    t_scale: float = 1.0
    x0_scale: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ConfigurationError("horizon_T must be positive")
        x0 = np.asarray(self.x0_train, dtype=float)
        if x0.ndim != 1 or x0.size == 0 or np.any(np.diff(x0) <= 0):
            raise ConfigurationError("x0_train must be a non-empty strictly increasing sequence")
        object.__setattr__(self, "x0_train", x0)

    @property
    def x0_hull(self) -> tuple[float, float]:
        return float(self.x0_train[0]), float(self.x0_train[-1])

    def in_hull(self, x0) -> np.ndarray:
        lo, hi = self.x0_hull
        x0 = np.asarray(x0, dtype=float)
        return (x0 >= lo) & (x0 <= hi)


@dataclass(frozen=True)
class HamiltonianEval:
    value: object
    dH_dx: object
    dH_du: object
    dH_dlambda: object


def hamiltonian(p: ProblemDef, x, u, lam, t) -> HamiltonianEval:
    """H = f + lam*g and its first partials from the stored closed forms."""
    g = p.dynamics(x, u, t)
    return HamiltonianEval(
        value=p.running_cost(x, u, t) + lam * g,
        dH_dx=p.f_x(x, u, t) + lam * p.g_x(x, u, t),
        dH_du=p.f_u(x, u, t) + lam * p.g_u(x, u, t),
        dH_dlambda=g,
    )


def _grid(start, stop, step):
    n = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(n), 12)


def _ocp1() -> ProblemDef:
    return ProblemDef(
        id="OCP1",
        horizon_T=1.0,
        running_cost=lambda x, u, t: x**2 + u**2,
        dynamics=lambda x, u, t: u + _zeros_like(x),
        terminal_cost=lambda x: _zeros_like(x),
        f_x=lambda x, u, t: 2.0 * x,
        f_u=lambda x, u, t: 2.0 * u,
        g_x=lambda x, u, t: _zeros_like(x) + _zeros_like(u),
        g_u=lambda x, u, t: 1.0 + _zeros_like(x) + _zeros_like(u),
        psi_x=lambda x: _zeros_like(x),
        lambda_T=0.0,
        x0_train=_grid(0.0, 1.0, 0.05),
        stationary_u=lambda x, lam, t: -0.5 * lam,
        g_t=lambda x, u, t: _zeros_like(x),
    )


def _ocp2() -> ProblemDef:
    return ProblemDef(
        id="OCP2",
        horizon_T=2.0,
        running_cost=lambda x, u, t: _zeros_like(x) + _zeros_like(u),
        dynamics=lambda x, u, t: 2.5 * (-x + u * x - u**2),
        terminal_cost=lambda x: -x,
        f_x=lambda x, u, t: _zeros_like(x) + _zeros_like(u),
        f_u=lambda x, u, t: _zeros_like(x) + _zeros_like(u),
        g_x=lambda x, u, t: 2.5 * (u - 1.0),
        g_u=lambda x, u, t: 2.5 * (x - 2.0 * u),
        psi_x=lambda x: -1.0 + _zeros_like(x),
        lambda_T=-1.0,
        x0_train=_grid(0.0, 1.0, 0.05),
        # dH/du = 2.5*lam*(x - 2u); lam(T) = -1 excludes the lam == 0 branch
        stationary_u=lambda x, lam, t: 0.5 * x,
        g_t=lambda x, u, t: _zeros_like(x),
        t_scale=0.5,
    )


def demand(t):
    """Inventory demand rate S(t) = t^3 - 12 t^2 + 32 t + 30."""
    return t**3 - 12.0 * t**2 + 32.0 * t + 30.0


def _ocp3(rho=0.0, h=1.0, c=1.0, x_target=15.0, u_target=30.0) -> ProblemDef:
    def disc(t):
        return np.exp(rho * np.asarray(t, dtype=float))

    return ProblemDef(
        id="OCP3",
        horizon_T=8.0,
        running_cost=lambda x, u, t: disc(t) * (0.5 * h * (x - x_target) ** 2 + 0.5 * c * (u - u_target) ** 2),
        dynamics=lambda x, u, t: u - demand(np.asarray(t, dtype=float)) + _zeros_like(x),
        terminal_cost=lambda x: _zeros_like(x),
        f_x=lambda x, u, t: disc(t) * h * (x - x_target),
        f_u=lambda x, u, t: disc(t) * c * (u - u_target),
        g_x=lambda x, u, t: _zeros_like(x) + _zeros_like(u),
        g_u=lambda x, u, t: 1.0 + _zeros_like(x) + _zeros_like(u),
        psi_x=lambda x: _zeros_like(x),
        lambda_T=0.0,
        x0_train=_grid(0.0, 40.0, 1.0),
        stationary_u=lambda x, lam, t: u_target - lam / (c * disc(t)),
        g_t=lambda x, u, t: -(3.0 * np.asarray(t) ** 2 - 24.0 * np.asarray(t) + 32.0) + _zeros_like(x),
        t_scale=1.0 / 8.0,
        x0_scale=1.0 / 40.0,
        params=dict(rho=rho, h=h, c=c, x_target=x_target, u_target=u_target),
    )


_FACTORIES = {"OCP1": _ocp1, "OCP2": _ocp2, "OCP3": _ocp3}


def normalize_id(problem_id) -> str:
    """Accept ``"OCP2"``, ``"ocp2"``, ``"2"`` or ``2``."""
    key = str(problem_id).strip().upper()
    if not key.startswith("OCP"):
        key = "OCP" + key
    if key not in _FACTORIES:
        raise ConfigurationError(f"unknown problem id {problem_id!r}; expected one of {PROBLEM_IDS}")
    return key


def make_problem(problem_id, **overrides) -> ProblemDef:
    """Build one of the three benchmark problems.

    Keyword overrides are only accepted by OCP3 (``rho``, ``h``, ``c``,
    ``x_target``, ``u_target``).
    """
    key = normalize_id(problem_id)
    if overrides and key != "OCP3":
        raise ConfigurationError(f"{key} takes no parameters, got {sorted(overrides)}")
    try:
        return _FACTORIES[key](**overrides)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


__all__ = ["ProblemDef", "HamiltonianEval", "hamiltonian", "make_problem", "normalize_id", "demand", "PROBLEM_IDS"]
