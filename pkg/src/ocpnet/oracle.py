"""Reference optimal solutions: LQR closed form and RK4 shooting on the costate."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy.integrate import trapezoid

from .exceptions import ConfigurationError, OracleFailure, UnsupportedProblem
from .problems import ProblemDef, hamiltonian


@dataclass
class ReferenceSolution:
    x0: float
    times: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray
    lambda_star: np.ndarray
    J_star: float
    source: str  # "closed-form" | "shooting"


def _check_times(p: ProblemDef, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly increasing sequence of at least two nodes")
    if times[0] < 0 or times[-1] > p.horizon_T + 1e-12:
        raise ValueError(f"times must lie in [0, {p.horizon_T}]")
    return times


def lqr_closed_form(p: ProblemDef, x0: float, times) -> ReferenceSolution:
    """Exact solution of min int x^2 + u^2, x' = u (OCP1)."""
    if p.id != "OCP1":
        raise ConfigurationError(f"closed form only available for OCP1, got {p.id}")
    times = _check_times(p, times)
    T = p.horizon_T
    x = x0 * np.cosh(T - times) / np.cosh(T)
    u = -x0 * np.sinh(T - times) / np.cosh(T)
    return ReferenceSolution(float(x0), times, x, u, -2.0 * u, float(x0**2 * np.tanh(T)), "closed-form")


def _rhs(p: ProblemDef, t, y):
    # y = (x, lam, running cost accumulator), each of shape (n_x0,)
    x, lam = y[0], y[1]
    u = p.stationary_u(x, lam, t)
    h = hamiltonian(p, x, u, lam, t)
    one = np.ones_like(x)
    return np.stack([h.dH_dlambda * one, -h.dH_dx * one, p.running_cost(x, u, t) * one])


def _integrate(p: ProblemDef, x0, lam0, times: np.ndarray, min_steps: int) -> np.ndarray:
    """RK4 through ``times`` with uniform substeps inside each interval.

    Returns an array of shape ``(n_time, 3, n_x0)``.
    """
    n_int = times.size - 1
    sub = max(1, int(np.ceil(min_steps / n_int)))
    y = np.stack([np.asarray(x0, dtype=float), np.asarray(lam0, dtype=float), np.zeros(np.shape(x0))])
    out = np.empty((times.size,) + y.shape)
    out[0] = y
    for i in range(n_int):
        t0, t1 = times[i], times[i + 1]
        h = (t1 - t0) / sub
        for j in range(sub):
            t = t0 + j * h
            k1 = _rhs(p, t, y)
            k2 = _rhs(p, t + 0.5 * h, y + 0.5 * h * k1)
            k3 = _rhs(p, t + 0.5 * h, y + 0.5 * h * k2)
            k4 = _rhs(p, t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = y
    return out


def _lambda_scale(p: ProblemDef, x0) -> np.ndarray:
    base = max(1.0, abs(p.lambda_T), *(abs(v) for v in p.params.values()))
    return np.maximum(base, np.abs(x0))


def shoot_many(p: ProblemDef, x0s, times, tol: float = 1e-10, steps: int = 1000,
               max_iter: int = 100) -> list[ReferenceSolution]:
    """Secant shooting on lambda(0) for several initial conditions at once.

    The control is eliminated through the problem's closed-form root of
    dH/du = 0. The running cost is carried as a third RK4 state, so J* is
    integrated to the same order as the trajectory.
    """
    if p.stationary_u is None:
        raise UnsupportedProblem(f"{p.id} has no unique closed-form stationary control")
    times = _check_times(p, times)
    if times[0] != 0.0 or abs(times[-1] - p.horizon_T) > 1e-12:
        raise ValueError("times must start at 0 and end at T")
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))

    def miss(lam0):
        traj = _integrate(p, x0s, lam0, times, steps)
        return traj[-1, 1] - p.lambda_T, traj

    scale = _lambda_scale(p, x0s)
    a, b = -10.0 * scale, 10.0 * scale
    fa, _ = miss(a)
    fb, traj = miss(b)
    for _ in range(max_iter):
        if np.all(np.abs(fb) <= tol):
            break
        if not np.all(np.isfinite(fb)):
            raise OracleFailure("shooting diverged", residual=float(np.max(np.abs(fb))))
        active = np.abs(fb) > tol
        denom = np.where(active, fb - fa, 1.0)
        if np.any(denom[active] == 0):
            raise OracleFailure("secant stalled: equal residuals", residual=float(np.max(np.abs(fb))))
        step = np.where(active, fb * (b - a) / denom, 0.0)
        a, fa = np.where(active, b, a), np.where(active, fb, fa)
        b = b - step
        fb, traj = miss(b)
    else:
        raise OracleFailure(f"secant did not converge in {max_iter} iterations",
                            residual=float(np.max(np.abs(fb))))

    sols = []
    for k, x0 in enumerate(x0s):
        x, lam, cost = traj[:, 0, k], traj[:, 1, k], traj[:, 2, k]
        u = np.asarray(p.stationary_u(x, lam, times), dtype=float) * np.ones_like(x)
        J = float(cost[-1] + p.terminal_cost(x[-1]))
        sols.append(ReferenceSolution(float(x0), times, x, u, lam, J, "shooting"))
    return sols


def shoot_tpbvp(p: ProblemDef, x0: float, times, tol: float = 1e-10, steps: int = 1000,
                max_iter: int = 100) -> ReferenceSolution:
    """Single-x0 shooting solve; see :func:`shoot_many`."""
    return shoot_many(p, [x0], times, tol=tol, steps=steps, max_iter=max_iter)[0]


def cost_of(p: ProblemDef, x_traj, u_traj, times) -> float:
    """Trapezoidal running cost plus terminal cost along a sampled trajectory."""
    x_traj, u_traj, times = (np.asarray(a, dtype=float) for a in (x_traj, u_traj, times))
    if not (x_traj.shape == u_traj.shape == times.shape) or times.ndim != 1:
        raise ValueError("x_traj, u_traj and times must be aligned 1-D sequences")
    f = np.asarray(p.running_cost(x_traj, u_traj, times), dtype=float) * np.ones_like(times)
    return float(trapezoid(f, times) + p.terminal_cost(x_traj[-1]))


def solve(p: ProblemDef, x0: float, times) -> ReferenceSolution:
    """Closed form where available, shooting otherwise."""
    if p.id == "OCP1":
        return lqr_closed_form(p, x0, times)
    return shoot_tpbvp(p, x0, times)


_CACHE: dict = {}


def reference_surface(p: ProblemDef, times, x0s) -> dict:
    """Oracle values on ``times x x0s``; arrays shaped ``(n_time, n_x0)``.

    Solutions are memoised per (problem, parameters, times, x0).
    """
    times = np.asarray(times, dtype=float)
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    key = (p.id, tuple(sorted(p.params.items())), times.tobytes())
    store = _CACHE.setdefault(key, {})
    missing = [float(x) for x in dict.fromkeys(x0s.tolist()) if float(x) not in store]
    if missing:
        if p.id == "OCP1":
            new = [lqr_closed_form(p, x, times) for x in missing]
        else:
            new = shoot_many(p, missing, times)
        store.update(zip(missing, new))
    sols = [store[float(x)] for x in x0s]
    return dict(
        x_star=np.column_stack([s.x_star for s in sols]),
        u_star=np.column_stack([s.u_star for s in sols]),
        lambda_star=np.column_stack([s.lambda_star for s in sols]),
        J_star=np.array([s.J_star for s in sols]),
        solutions=sols,
    )


def pmp_residuals(p: ProblemDef, sol: ReferenceSolution) -> dict:
    """Pointwise residuals of x' = dH/dlam, lam' = -dH/dx, dH/du = 0 along ``sol``.

    Time derivatives come from fourth-order finite differences on the
    solution nodes, which must be uniformly spaced.
    """
    t = sol.times
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=0):
        raise ValueError("pmp_residuals needs uniformly spaced nodes")
    ham = hamiltonian(p, sol.x_star, sol.u_star, sol.lambda_star, t)
    xdot, lamdot = _d4(sol.x_star, h), _d4(sol.lambda_star, h)
    return dict(
        state=xdot - np.asarray(ham.dH_dlambda) * np.ones_like(t),
        costate=lamdot + np.asarray(ham.dH_dx) * np.ones_like(t),
        stationarity=np.asarray(ham.dH_du) * np.ones_like(t),
    )


def _d4(y, h):
    # fourth-order central stencil inside, fourth-order one-sided at the ends
    y = np.asarray(y, dtype=float)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    for i in (0, 1):
        d[i] = (-25 * y[i] + 48 * y[i + 1] - 36 * y[i + 2] + 16 * y[i + 3] - 3 * y[i + 4]) / (12 * h)
    for i in (-1, -2):
        j = y.size + i
        d[j] = (25 * y[j] - 48 * y[j - 1] + 36 * y[j - 2] - 16 * y[j - 3] + 3 * y[j - 4]) / (12 * h)
    return d
