"""Grids, metrics and the benchmark experiment registry."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import DirectFourier, FourierPMPNetwork, PMPNetwork
from .exceptions import ConfigurationError
from .optim import OptimizerSettings
from .oracle import cost_of, reference_surface
from .problems import ProblemDef, make_problem, normalize_id

METHODS = ("method1", "method2", "direct")
MAPE_GUARD = 1e-9
J_GUARD = 1e-12


@dataclass(frozen=True, eq=False)
class GridSpec:
    time_points: np.ndarray
    x0_points: np.ndarray
    kind: str  # "training" | "testing"

    def __post_init__(self):
        t = np.asarray(self.time_points, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0) or t[0] != 0.0:
            raise ValueError("time_points must be strictly increasing and start at 0")
        if self.kind not in ("training", "testing"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        object.__setattr__(self, "time_points", t)
        object.__setattr__(self, "x0_points", np.asarray(self.x0_points, dtype=float))

    @property
    def shape(self):
        return self.time_points.size, self.x0_points.size


def make_grids(p: ProblemDef, n_time: int = 100) -> tuple[GridSpec, GridSpec]:
    """Training grid (n_time+1 nodes x X0) and testing grid (same nodes x midpoints of X0)."""
    if n_time < 2:
        raise ConfigurationError("n_time must be >= 2")
    times = np.linspace(0.0, p.horizon_T, n_time + 1)
    x0 = p.x0_train
    mid = 0.5 * (x0[:-1] + x0[1:])
    return GridSpec(times, x0.copy(), "training"), GridSpec(times.copy(), mid, "testing")


@dataclass
class MetricsReport:
    rmse_u: float
    mae_u: float
    mape_u: float
    j_pct_error: float
    final_loss: float = float("nan")
    grid_kind: str = "training"
    n_points: int = 0
    mape_excluded: int = 0
    j_excluded: int = 0

    def as_dict(self, prefix: str = "") -> dict:
        keys = ("rmse_u", "mae_u", "mape_u", "j_pct_error")
        return {prefix + k: getattr(self, k) for k in keys}


def control_metrics(u_hat, u_star) -> dict:
    """RMSE, MAE and guarded MAPE of ``u_hat`` against ``u_star``.

    MAPE skips points with ``|u*| <= 1e-9`` and reports how many it skipped.
    """
    u_hat, u_star = np.ravel(np.asarray(u_hat, dtype=float)), np.ravel(np.asarray(u_star, dtype=float))
    if u_hat.shape != u_star.shape or u_hat.size == 0:
        raise ValueError("u_hat and u_star must be non-empty and aligned")
    err = np.abs(u_hat - u_star)
    keep = np.abs(u_star) > MAPE_GUARD
    mape = 100.0 * float(np.mean(err[keep] / np.abs(u_star[keep]))) if keep.any() else float("nan")
    return dict(
        rmse_u=float(np.sqrt(np.mean(err**2))),
        mae_u=float(np.mean(err)),
        mape_u=mape,
        n_points=int(u_hat.size),
        mape_excluded=int(np.count_nonzero(~keep)),
    )


def j_percentage_error(J_hat, J_star) -> tuple[float, int]:
    """Mean of 100|J - J*|/|J*| over x0 with ``|J*| > 1e-12``; also returns the excluded count."""
    J_hat, J_star = np.asarray(J_hat, dtype=float), np.asarray(J_star, dtype=float)
    keep = np.abs(J_star) > J_GUARD
    if not keep.any():
        return float("nan"), int(J_star.size)
    return float(np.mean(100.0 * np.abs(J_hat[keep] - J_star[keep]) / np.abs(J_star[keep]))), int((~keep).sum())


def evaluate(est, p: ProblemDef, grid: GridSpec) -> MetricsReport:
    """Control and objective errors of a fitted estimator against the oracle."""
    times, x0s = grid.time_points, grid.x0_points
    ref = reference_surface(p, times, x0s)
    tb = est.trial_grid(times, x0s)
    m = control_metrics(tb.u_hat, ref["u_star"])
    J_hat = [cost_of(p, tb.x_hat[:, j], tb.u_hat[:, j], times) for j in range(x0s.size)]
    j_err, j_excl = j_percentage_error(J_hat, ref["J_star"])
    return MetricsReport(
        rmse_u=m["rmse_u"], mae_u=m["mae_u"], mape_u=m["mape_u"], j_pct_error=j_err,
        final_loss=float(getattr(est, "final_loss_", np.nan)), grid_kind=grid.kind,
        n_points=m["n_points"], mape_excluded=m["mape_excluded"], j_excluded=j_excl,
    )


# ---------------------------------------------------------------------------
# experiment registry


@dataclass(frozen=True)
class PaperRow:
    train: tuple  # rmse_u, mae_u, mape_u, j_pct_error
    test: tuple


@dataclass(frozen=True)
class ExperimentSpec:
    exp_id: int
    method: str
    problem_id: str
    M: int | None = None
    N: int | None = None
    I: int | None = None
    seed: int = 0
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    n_time: int = 100
    penalty_mu: float = 100.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "problem_id", normalize_id(self.problem_id))
        need = {"method1": ("I",), "method2": ("M", "N", "I"), "direct": ("M", "N")}[self.method]
        for name in ("M", "N", "I"):
            present = getattr(self, name) is not None
            if present and name not in need:
                raise ConfigurationError(f"{self.method} does not take {name}")
            if not present and name in need:
                raise ConfigurationError(f"{self.method} requires {name}")
            if present and int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    def estimator(self):
        common = dict(
            problem=self.problem_id, n_time=self.n_time, random_state=self.seed,
            learning_rate=self.settings.learning_rate, decay_rate=self.settings.decay_rate,
            decay_every=self.settings.decay_every, max_iter=self.settings.max_iter,
            polish=self.settings.polish, polish_max_iter=self.settings.polish_max_iter,
        )
        if self.method == "method1":
            return PMPNetwork(hidden_units=self.I, **common)
        if self.method == "method2":
            return FourierPMPNetwork(M=self.M, N=self.N, hidden_units=self.I, **common)
        return DirectFourier(M=self.M, N=self.N, penalty=self.penalty_mu, **common)


# Published benchmark results: (method, OCP, M, N, I), then training and
# testing (RMSE_u, MAE_u, MAPE_u, J%error).
_TABLE = {
    1: ("method1", 1, None, None, 2, (1.50e-02, 1.03e-02, 17.81, 0.55), (1.33e-02, 9.40e-03, 25.02, 0.61)),
    2: ("method1", 1, None, None, 6, (7.09e-05, 5.27e-05, 0.10, 0.02), (5.91e-05, 4.68e-05, 0.17, 0.03)),
    3: ("method1", 2, None, None, 2, (8.90e-03, 5.50e-03, 86.73, 1.08e03), (8.00e-03, 5.10e-03, 122.79, 1.44e03)),
    4: ("method1", 2, None, None, 6, (1.95e-04, 1.31e-04, 1.75, 2.35), (1.69e-04, 1.20e-04, 2.24, 1.97)),
    5: ("method1", 3, None, None, 10, (4.32e-01, 2.43e-01, 0.77, 1.80), (3.74e-01, 2.25e-01, 0.70, 1.78)),
    6: ("method1", 3, None, None, 30, (3.87e-02, 2.84e-02, 0.09, 0.09), (3.65e-02, 2.72e-02, 0.09, 0.09)),
    7: ("method2", 1, 4, 4, 2, (3.70e-04, 2.82e-04, 0.39, 0.06), (3.48e-04, 2.69e-04, 0.50, 0.07)),
    8: ("method2", 1, 4, 4, 6, (3.52e-04, 2.56e-04, 0.32, 0.05), (3.39e-04, 2.50e-04, 0.40, 0.05)),
    9: ("method2", 1, 5, 5, 2, (4.71e-04, 3.52e-04, 1.02, 0.07), (4.29e-04, 3.29e-04, 1.50, 0.08)),
    10: ("method2", 1, 5, 5, 6, (3.14e-04, 2.34e-04, 0.65, 0.05), (2.99e-04, 2.28e-04, 1.00, 0.07)),
    11: ("method2", 1, 6, 4, 2, (3.55e-04, 2.55e-04, 0.36, 0.04), (3.46e-04, 2.52e-04, 0.48, 0.04)),
    12: ("method2", 1, 6, 4, 6, (3.88e-04, 2.84e-04, 0.44, 0.06), (3.76e-04, 2.79e-04, 0.66, 0.08)),
    13: ("method2", 2, 4, 4, 2, (2.20e-03, 1.40e-03, 38.28, 6.33), (1.80e-03, 1.30e-03, 51.98, 10.51)),
    14: ("method2", 2, 4, 4, 6, (2.20e-03, 1.40e-03, 39.09, 11.26), (1.80e-03, 1.30e-03, 53.74, 17.13)),
    15: ("method2", 2, 5, 5, 2, (6.57e-04, 4.93e-04, 10.26, 3.90), (5.58e-04, 4.42e-04, 11.52, 5.25)),
    16: ("method2", 2, 5, 5, 6, (6.18e-04, 4.51e-04, 7.37, 5.84), (5.25e-04, 3.97e-04, 8.16, 7.87)),
    17: ("method2", 2, 6, 4, 2, (2.20e-03, 1.10e-03, 37.70, 7.48), (1.70e-03, 9.67e-04, 50.59, 12.35)),
    18: ("method2", 2, 6, 4, 6, (2.20e-03, 1.10e-03, 37.90, 7.81), (1.70e-03, 9.79e-04, 50.19, 12.90)),
    19: ("method2", 2, 8, 8, 2, (2.63e-04, 1.95e-04, 3.83, 2.32), (2.28e-04, 1.79e-04, 4.94, 3.91)),
    20: ("method2", 3, 4, 4, 3, (1.97e-01, 1.34e-01, 0.47, 0.12), (1.58e-01, 1.20e-01, 0.43, 0.07)),
    21: ("method2", 3, 4, 4, 6, (1.72e-01, 1.17e-01, 0.41, 0.10), (1.40e-01, 1.05e-01, 0.37, 0.06)),
    22: ("method2", 3, 5, 5, 3, (2.87e-01, 1.93e-01, 0.65, 0.14), (2.34e-01, 1.76e-01, 0.59, 0.13)),
    23: ("method2", 3, 5, 5, 6, (5.87e-02, 4.10e-02, 0.14, 0.06), (4.92e-02, 3.67e-02, 0.13, 0.06)),
    24: ("method2", 3, 6, 4, 3, (2.19e-01, 1.23e-01, 0.39, 0.21), (1.61e-01, 1.06e-01, 0.34, 0.24)),
    25: ("method2", 3, 6, 4, 6, (2.17e-01, 1.28e-01, 0.44, 0.17), (1.63e-01, 1.11e-01, 0.39, 0.12)),
    26: ("direct", 3, 4, 4, None, (3.50e00, 2.17e00, 6.13, 7.41), (3.23e00, 2.08e00, 5.95, 8.67)),
    27: ("direct", 3, 5, 5, None, (2.92e00, 1.87e00, 5.48, 3.59), (2.65e00, 1.79e00, 5.32, 4.42)),
    28: ("direct", 3, 6, 4, None, (4.54e00, 2.85e00, 8.27, 13.82), (4.22e00, 2.73e00, 7.96, 15.36)),
}

DEFAULT_SEED = 0

REGISTRY: dict[int, ExperimentSpec] = {
    k: ExperimentSpec(k, meth, f"OCP{ocp}", M, N, I, seed=DEFAULT_SEED)
    for k, (meth, ocp, M, N, I, _, _) in _TABLE.items()
}
PAPER: dict[int, PaperRow] = {k: PaperRow(row[5], row[6]) for k, row in _TABLE.items()}


def get_spec(exp_id: int, **overrides) -> ExperimentSpec:
    try:
        spec = REGISTRY[int(exp_id)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"experiment id must be in 1..{len(REGISTRY)}, got {exp_id!r}") from None
    return replace(spec, **overrides) if overrides else spec


def fit(spec: ExperimentSpec):
    """Train the estimator described by ``spec``; returns ``(estimator, loss_history)``."""
    est = spec.estimator().fit()
    return est, est.loss_history_


RESULT_COLUMNS = [
    "exp", "method", "ocp", "M", "N", "I",
    "train_rmse_u", "train_mae_u", "train_mape_u", "train_j_pct_error",
    "test_rmse_u", "test_mae_u", "test_mape_u", "test_j_pct_error",
    "final_loss", "seed", "wall_time_s",
]


def results_row(spec: ExperimentSpec, train: MetricsReport, test: MetricsReport, wall: float) -> dict:
    row = {"exp": spec.exp_id, "method": spec.method, "ocp": spec.problem_id, "M": spec.M, "N": spec.N, "I": spec.I}
    row.update(train.as_dict("train_"))
    row.update(test.as_dict("test_"))
    row.update(final_loss=train.final_loss, seed=spec.seed, wall_time_s=wall)
    return row


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    estimator: object
    train: MetricsReport
    test: MetricsReport
    wall_time_s: float

    @property
    def row(self) -> dict:
        return results_row(self.spec, self.train, self.test, self.wall_time_s)


def run_spec(spec: ExperimentSpec) -> ExperimentResult:
    start = time.perf_counter()
    est, _ = fit(spec)
    wall = time.perf_counter() - start
    p = make_problem(spec.problem_id)
    train_grid, test_grid = make_grids(p, spec.n_time)
    return ExperimentResult(spec, est, evaluate(est, p, train_grid), evaluate(est, p, test_grid), wall)


def run_experiment(exp_id: int, **overrides) -> ExperimentResult:
    """Fit and evaluate one registry experiment on its training and testing grids."""
    return run_spec(get_spec(exp_id, **overrides))
