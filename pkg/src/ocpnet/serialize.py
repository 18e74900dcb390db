"""Human-readable model files and atomic file output.

A model file is JSON with a metadata block (method, problem, architecture,
training settings) followed by one entry per named parameter block holding
its shape and a flat list of values. Floats are written with ``repr``
precision, so a save/load round trip reproduces the parameters bitwise.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .autodiff import Layout, ParamVector
from .estimators import ESTIMATORS, estimator_from_model
from .exceptions import ConfigurationError
from .problems import make_problem

FORMAT = "ocpnet-model"
VERSION = 1


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def model_to_dict(est) -> dict:
    """Serialisable description of a fitted estimator."""
    if not hasattr(est, "params_"):
        raise ValueError("estimator is not fitted")
    model = est.model_
    arch = {"hidden_units": getattr(model, "hidden_I", None), "M": getattr(model, "M", None),
            "N": getattr(model, "N", None)}
    training = {k: v for k, v in est.get_params().items() if k not in ("problem", "hidden_units", "M", "N")}
    training["final_loss"] = float(getattr(est, "final_loss_", float("nan")))
    blocks = est.params_.blocks()
    return {
        "format": FORMAT,
        "version": VERSION,
        "method": est.method,
        "problem": {"id": est.problem_.id, "params": dict(est.problem_.params)},
        "architecture": {k: v for k, v in arch.items() if v is not None},
        "training": training,
        "parameters": [
            {"name": b.name, "shape": list(b.shape), "values": np.asarray(blocks[b.name]).ravel().tolist()}
            for b in est.params_.layout.blocks
        ],
    }


def dumps(est) -> str:
    """Indented metadata; one line per parameter block so diffs stay readable."""
    doc = model_to_dict(est)
    blocks = doc.pop("parameters")
    head = json.dumps(doc, indent=1)
    body = ",\n".join("  " + json.dumps(b) for b in blocks)
    return head[:-2] + ',\n "parameters": [\n' + body + "\n ]\n}\n"


def save_model(est, path) -> Path:
    return atomic_write_text(path, dumps(est))


def model_from_dict(doc: dict):
    """Rebuild a fitted estimator from :func:`model_to_dict` output."""
    if doc.get("format") != FORMAT:
        raise ConfigurationError(f"not an {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ConfigurationError(f"unsupported model file version {doc.get('version')!r}")
    method = doc.get("method")
    if method not in ESTIMATORS:
        raise ConfigurationError(f"unknown method {method!r} in model file")
    prob = doc["problem"]
    problem = make_problem(prob["id"], **prob.get("params", {}))
    arch = doc.get("architecture", {})
    template = ESTIMATORS[method](problem=problem, **arch)
    model = template._build_model(problem)

    layout = Layout.from_shapes([(e["name"], tuple(e["shape"])) for e in doc["parameters"]])
    if layout.to_dict() != model.layout.to_dict():
        raise ConfigurationError("parameter blocks in the model file do not match the declared architecture")
    values = np.concatenate([np.asarray(e["values"], dtype=float) for e in doc["parameters"]])
    params = ParamVector(values, model.layout)

    settings = {k: v for k, v in doc.get("training", {}).items() if k in template.get_params() and k != "problem"}
    est = estimator_from_model(model, params, **settings)
    est.final_loss_ = doc.get("training", {}).get("final_loss", float("nan"))
    return est


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"model file not found: {path}")
    return loads(path.read_text(encoding="utf-8"))
