"""scikit-learn style estimators wrapping the three solution methods.

Each estimator is fitted on a set of initial conditions (``X``, one column)
and predicts the control at ``(t, x0)`` pairs (``X``, two columns). The
time grid and problem are hyperparameters, so estimators can be cloned and
grid-searched like any other regressor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import ParamVector
from .exceptions import ConfigurationError
from .method1 import Method1Model
from .method2 import DirectFourierModel, FourierLayerModel
from .optim import OptimizerSettings, minimize
from .pmploss import PointGrid, TrialBundle, direct_loss, pmp_loss, trial_on_grid
from .problems import ProblemDef, make_problem


class _OCPEstimator(RegressorMixin, BaseEstimator):
    method: str = ""

    # -- construction -----------------------------------------------------
    def _problem(self) -> ProblemDef:
        if isinstance(self.problem, ProblemDef):
            return self.problem
        return make_problem(self.problem)

    def _build_model(self, problem: ProblemDef):
        raise NotImplementedError

    def _settings(self) -> OptimizerSettings:
        return OptimizerSettings(
            learning_rate=self.learning_rate,
            decay_rate=self.decay_rate,
            decay_every=self.decay_every,
            max_iter=self.max_iter,
            polish=self.polish,
            polish_max_iter=self.polish_max_iter,
        )

    def _loss(self, model, blocks, problem, grid):
        return pmp_loss(model, blocks, problem, grid)

    def _validate_x0(self, X, problem) -> np.ndarray:
        if X is None:
            return problem.x0_train.copy()
        X = np.asarray(X, dtype=float)
        X = check_array(X.reshape(-1, 1) if X.ndim == 1 else X)
        if X.shape[1] != 1:
            raise ValueError("fit expects initial conditions as a single column")
        return np.unique(X.ravel())

    # -- sklearn API ------------------------------------------------------
    def fit(self, X=None, y=None):
        """Train on the grid ``times x X``.

        Parameters
        ----------
        X : array-like of shape (n_x0,) or (n_x0, 1), optional
            Training initial conditions. Defaults to the problem's own set.
        y : ignored
        """
        problem = self._problem()
        if self.n_time < 2:
            raise ConfigurationError("n_time must be >= 2")
        x0s = self._validate_x0(X, problem)
        times = np.linspace(0.0, problem.horizon_T, self.n_time + 1)
        model = self._build_model(problem)
        rng = np.random.default_rng(self.random_state)
        init = ParamVector(model.init_values(rng), model.layout)
        grid = PointGrid(times, x0s)

        def loss_fn(blocks):
            return self._loss(model, blocks, problem, grid)

        result = minimize(loss_fn, init, self._settings())
        self.problem_ = problem
        self.model_ = model
        self.params_ = result.params
        self.init_params_ = init
        self.loss_history_ = np.asarray(result.history)
        self.initial_loss_ = result.initial_loss
        self.final_loss_ = result.loss
        self.n_iter_ = result.n_iter
        self.train_x0_ = x0s
        self.times_ = times
        return self

    def trial(self, t, x0) -> TrialBundle:
        """Trial values at broadcastable ``t`` and ``x0`` (plain arrays)."""
        check_is_fitted(self, "params_")
        return self.model_.trial(self.params_.blocks(), t, x0).values()

    def trial_grid(self, times, x0s) -> TrialBundle:
        """Trial values on ``times x x0s`` shaped ``(n_time, n_x0)``."""
        check_is_fitted(self, "params_")
        grid = PointGrid(np.asarray(times, dtype=float), np.asarray(x0s, dtype=float))
        return trial_on_grid(self.model_, self.params_.blocks(), grid).values()

    def predict(self, X) -> np.ndarray:
        """Approximate optimal control at rows ``(t, x0)`` of ``X``."""
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"predict expects columns (t, x0); got {X.shape[1]} columns")
        return self.trial(X[:, 0], X[:, 1]).u_hat

    def predict_state(self, X) -> np.ndarray:
        X = check_array(X)
        return self.trial(X[:, 0], X[:, 1]).x_hat

    def residual_loss(self, X=None) -> float:
        """Training loss of the fitted parameters on ``times_ x X``."""
        check_is_fitted(self, "params_")
        x0s = self.train_x0_ if X is None else self._validate_x0(X, self.problem_)
        grid = PointGrid(self.times_, x0s)
        return float(self._loss(self.model_, self.params_.blocks(), self.problem_, grid))


class PMPNetwork(_OCPEstimator):
    """Time- and initial-condition-dependent network trained on PMP residuals.

    Parameters
    ----------
    problem : str or ProblemDef
        ``"OCP1"``, ``"OCP2"``, ``"OCP3"`` or a custom problem.
    hidden_units : int
        Width I of each of the three sub-networks.
    n_time : int
        Number of time intervals; the grid has ``n_time + 1`` nodes.
    """

    method = "method1"

    def __init__(self, problem="OCP1", hidden_units=6, n_time=100, learning_rate=1e-2, decay_rate=0.5,
                 decay_every=2000, max_iter=20000, polish=True, polish_max_iter=5000, random_state=0):
        self.problem = problem
        self.hidden_units = hidden_units
        self.n_time = n_time
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.max_iter = max_iter
        self.polish = polish
        self.polish_max_iter = polish_max_iter
        self.random_state = random_state

    def _build_model(self, problem):
        return Method1Model(problem, self.hidden_units)


class FourierPMPNetwork(_OCPEstimator):
    """Initial-condition network with a Fourier output layer, trained on PMP residuals.

    ``M`` is the number of Fourier terms in the control, ``N`` in the state
    and costate.
    """

    method = "method2"

    def __init__(self, problem="OCP1", M=4, N=4, hidden_units=6, n_time=100, learning_rate=1e-2, decay_rate=0.5,
                 decay_every=2000, max_iter=20000, polish=True, polish_max_iter=5000, random_state=0):
        self.problem = problem
        self.M = M
        self.N = N
        self.hidden_units = hidden_units
        self.n_time = n_time
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.max_iter = max_iter
        self.polish = polish
        self.polish_max_iter = polish_max_iter
        self.random_state = random_state

    def _build_model(self, problem):
        return FourierLayerModel(problem, self.hidden_units, self.M, self.N)


class DirectFourier(_OCPEstimator):
    """Direct baseline: Fourier series in (t, x0) minimising cost plus a dynamics penalty."""

    method = "direct"

    def __init__(self, problem="OCP3", M=4, N=4, penalty=100.0, n_time=100, learning_rate=1e-2, decay_rate=0.5,
                 decay_every=2000, max_iter=20000, polish=True, polish_max_iter=5000, random_state=0):
        self.problem = problem
        self.M = M
        self.N = N
        self.penalty = penalty
        self.n_time = n_time
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.max_iter = max_iter
        self.polish = polish
        self.polish_max_iter = polish_max_iter
        self.random_state = random_state

    def _build_model(self, problem):
        return DirectFourierModel(problem, self.M, self.N)

    def _loss(self, model, blocks, problem, grid):
        return direct_loss(model, blocks, problem, grid, self.penalty)


ESTIMATORS = {"method1": PMPNetwork, "method2": FourierPMPNetwork, "direct": DirectFourier}


def estimator_from_model(model, params: ParamVector, **settings):
    """Rebuild a fitted estimator around deserialised parameters."""
    problem = model.problem
    # keep the plain id unless the problem was built with non-default parameters
    spec = problem.id if problem.params == make_problem(problem.id).params else problem
    if model.method == "method1":
        est = PMPNetwork(problem=spec, hidden_units=model.hidden_I, **settings)
    elif model.method == "method2":
        est = FourierPMPNetwork(problem=spec, M=model.M, N=model.N, hidden_units=model.hidden_I, **settings)
    else:
        est = DirectFourier(problem=spec, M=model.M, N=model.N, **settings)
    est.problem_ = problem
    est.model_ = model
    est.params_ = params
    est.times_ = np.linspace(0.0, problem.horizon_T, est.n_time + 1)
    est.train_x0_ = problem.x0_train.copy()
    return est
