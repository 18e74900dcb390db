"""Neural solvers for families of scalar optimal control problems.

Three estimators share a scikit-learn style interface:

* :class:`PMPNetwork` - sigmoid networks in (t, x0) trained on PMP residuals;
* :class:`FourierPMPNetwork` - an x0 network emitting Fourier coefficients,
  also trained on PMP residuals;
* :class:`DirectFourier` - a Fourier series in (t, x0) minimising cost plus
  a dynamics penalty.

Reference solutions come from :mod:`ocpnet.oracle`, the benchmark registry
and metrics from :mod:`ocpnet.train`.
"""

from .estimators import DirectFourier, FourierPMPNetwork, PMPNetwork
from .exceptions import (ConfigurationError, DomainError, NumericalFailure, OracleFailure, TrainingFailure,
                         UnsupportedProblem)
from .problems import ProblemDef, hamiltonian, make_problem
from .serialize import load_model, save_model
from .train import evaluate, make_grids, run_experiment

__version__ = "0.1.0"

__all__ = [
    "PMPNetwork", "FourierPMPNetwork", "DirectFourier",
    "ProblemDef", "make_problem", "hamiltonian",
    "evaluate", "make_grids", "run_experiment",
    "save_model", "load_model",
    "ConfigurationError", "DomainError", "NumericalFailure", "OracleFailure", "TrainingFailure",
    "UnsupportedProblem",
]
