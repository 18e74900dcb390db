"""PMP residual losses and the direct (penalty) baseline loss.

Grids are product grids ``times x x0s`` flattened time-major, so a flat
array of point values reshapes to ``(n_time, n_x0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import DomainError, NumericalFailure
from .problems import ProblemDef, hamiltonian


@dataclass
class TrialBundle:
    """Trial state/costate/control and the analytic time derivatives.

    Entries are arrays (or graph nodes) sharing one point shape; the
    direct method leaves the costate fields as ``None``.
    """

    x_hat: object
    lambda_hat: object
    u_hat: object
    x_hat_dot: object
    lambda_hat_dot: object

    def values(self) -> "TrialBundle":
        """Detached copy holding plain arrays."""
        return TrialBundle(*(None if v is None else np.asarray(ad.value_of(v)) for v in
                             (self.x_hat, self.lambda_hat, self.u_hat, self.x_hat_dot, self.lambda_hat_dot)))


@dataclass
class ResidualTriple:
    e1: object
    e2: object
    e3: object


def check_time_domain(p: ProblemDef, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    lo, hi = (t.min(), t.max()) if t.size else (0.0, 0.0)
    # NaN fails both comparisons, so it is rejected here too
    if not (lo >= 0.0 and hi <= p.horizon_T):
        raise DomainError(f"t must lie in [0, {p.horizon_T}]")
    return t


def residuals(p: ProblemDef, tb: TrialBundle, t) -> ResidualTriple:
    """E1 = dH/dx + lam', E2 = dH/dlam - x', E3 = dH/du at the trial values."""
    h = hamiltonian(p, tb.x_hat, tb.u_hat, tb.lambda_hat, t)
    return ResidualTriple(
        e1=h.dH_dx + tb.lambda_hat_dot,
        e2=h.dH_dlambda - tb.x_hat_dot,
        e3=h.dH_du,
    )


@dataclass(frozen=True)
class PointGrid:
    """Product grid ``times x x0s``; point arrays are shaped ``(n_time, n_x0)``."""

    times: np.ndarray
    x0s: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.times.size, self.x0s.size

    @property
    def t(self) -> np.ndarray:
        return np.broadcast_to(self.times[:, None], self.shape)

    @property
    def x0(self) -> np.ndarray:
        return np.broadcast_to(self.x0s[None, :], self.shape)

    def point(self, flat_index: int) -> tuple[float, float]:
        i, j = np.unravel_index(int(flat_index), self.shape)
        return float(self.times[i]), float(self.x0s[j])


def as_point_grid(grid) -> PointGrid:
    if isinstance(grid, PointGrid):
        return grid
    return PointGrid(np.asarray(grid.time_points, dtype=float), np.asarray(grid.x0_points, dtype=float))


def trial_on_grid(model, blocks, grid: PointGrid) -> TrialBundle:
    """Trial bundle on a product grid, using the model's fast path when it has one."""
    if hasattr(model, "trial_grid"):
        return model.trial_grid(blocks, grid.times, grid.x0s)
    return model.trial(blocks, grid.t, grid.x0)


def _raise_nonfinite(values, locate):
    bad = np.flatnonzero(~np.isfinite(np.ravel(values)))
    if bad.size:
        raise NumericalFailure(f"non-finite residual at grid point (t, x0) = {locate(bad[0])}", where=locate(bad[0]))


def pointwise_pmp_error(r: ResidualTriple):
    return r.e1**2 + r.e2**2 + r.e3**2


def pmp_loss(model, blocks, p: ProblemDef, grid=None, t=None, x0=None):
    """Sum over grid points of E1^2 + E2^2 + E3^2.

    Either a product ``grid`` (:class:`PointGrid` or ``GridSpec``) or paired
    point arrays ``t``/``x0`` may be given. ``model.trial(blocks, t, x0)``
    must return a :class:`TrialBundle`.
    """
    if grid is not None:
        g = as_point_grid(grid)
        t = g.t
        tb = trial_on_grid(model, blocks, g)
        locate = g.point
    else:
        t, x0 = np.ravel(np.asarray(t, dtype=float)), np.ravel(np.asarray(x0, dtype=float))
        tb = model.trial(blocks, t, x0)
        locate = lambda k: (float(t[k]), float(x0[k]))  # noqa: E731
    if np.size(t) == 0:
        raise ValueError("empty grid")
    err = pointwise_pmp_error(residuals(p, tb, t))
    _raise_nonfinite(ad.value_of(err), locate)
    return ad.vsum(err)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def direct_loss_from_trial(tb: TrialBundle, p: ProblemDef, grid: PointGrid, penalty_mu: float = 100.0):
    """Penalty objective from a trial bundle shaped ``(n_time, n_x0)``.

    Per x0: trapezoidal running cost + terminal cost + mu * sum_t (x' - g)^2 dt,
    then summed over x0.
    """
    if not penalty_mu > 0:
        raise ValueError("penalty_mu must be positive")
    t = grid.t
    w = trapezoid_weights(grid.times)[:, None]
    dt = np.gradient(grid.times)[:, None]
    f = p.running_cost(tb.x_hat, tb.u_hat, t)
    defect = tb.x_hat_dot - p.dynamics(tb.x_hat, tb.u_hat, t)
    total = ad.vsum(f * w) + ad.vsum(p.terminal_cost(tb.x_hat[-1])) + penalty_mu * ad.vsum(defect**2 * dt)
    if not np.isfinite(ad.value_of(total)):
        raise NumericalFailure("non-finite direct loss", where="aggregate")
    return total


def direct_loss(model, blocks, p: ProblemDef, grid, penalty_mu: float = 100.0):
    g = as_point_grid(grid)
    return direct_loss_from_trial(trial_on_grid(model, blocks, g), p, g, penalty_mu)
