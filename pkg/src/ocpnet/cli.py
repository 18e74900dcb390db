"""Command-line front end.

Subcommands: ``train``, ``evaluate``, ``oracle``, ``surfaces``,
``trajectories`` and ``reproduce``. Settings come from an optional YAML
config file and are overridden by flags; ``OCPNET_OUTPUT_DIR`` overrides
the output directory named in the config (an explicit ``--output-dir``
still wins).

Exit codes: 0 success, 2 configuration error, 3 numerical or training
failure, 4 acceptance-band failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import yaml

from .exceptions import ConfigurationError, NumericalFailure, OracleFailure, TrainingFailure
from .optim import OptimizerSettings
from .oracle import reference_surface
from .problems import make_problem
from .serialize import atomic_write_text, load_model, save_model
from .train import (MAPE_GUARD, METHODS, PAPER, REGISTRY, RESULT_COLUMNS, ExperimentSpec, evaluate, get_spec,
                    make_grids, results_row, run_spec)

log = logging.getLogger("ocpnet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BAND = 0, 2, 3, 4
OUTPUT_ENV = "OCPNET_OUTPUT_DIR"
DEFAULT_OUTPUT = "ocpnet-output"


# ---------------------------------------------------------------------------
# configuration

_OPTIMIZER_KEYS = ("learning_rate", "decay_rate", "decay_every", "max_iter", "polish", "polish_max_iter")
_CONFIG_SCHEMA = {
    "exp": int,
    "problem": (str, int),
    "method": str,
    "M": int,
    "N": int,
    "I": int,
    "seed": int,
    "n_time": int,
    "penalty_mu": (int, float),
    "output_dir": str,
    "optimizer": {k: (int, float, bool) for k in _OPTIMIZER_KEYS},
}


@dataclass
class RunConfig:
    """Resolved settings for one ``train`` invocation."""

    problem: str | None = None
    method: str | None = None
    M: int | None = None
    N: int | None = None
    I: int | None = None
    seed: int = 0
    n_time: int = 100
    penalty_mu: float = 100.0
    exp: int | None = None
    optimizer: dict = field(default_factory=dict)
    output_dir: str | None = None


def _check_keys(doc: dict, schema: dict, path: str = "") -> None:
    for key, value in doc.items():
        where = f"{path}{key}"
        if key not in schema:
            raise ConfigurationError(f"unknown config key {where!r}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {where!r} must be a mapping")
            _check_keys(value, expected, where + ".")
        elif value is not None and not isinstance(value, expected):
            raise ConfigurationError(f"config key {where!r} has the wrong type ({type(value).__name__})")


def load_config(path) -> dict:
    """Parse and validate a YAML config file; returns a plain dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    _check_keys(doc, _CONFIG_SCHEMA)
    return doc


def resolve_config(args) -> RunConfig:
    doc = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig(**{k: v for k, v in doc.items() if v is not None})
    cfg.optimizer = dict(cfg.optimizer)
    for name in ("problem", "method", "M", "N", "I", "seed", "n_time", "exp"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    for name in _OPTIMIZER_KEYS:
        value = getattr(args, name, None)
        if value is not None:
            cfg.optimizer[name] = value
    cfg.output_dir = output_dir(args, cfg.output_dir)
    return cfg


def output_dir(args, configured: str | None = None) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(configured or DEFAULT_OUTPUT)


def spec_from_config(cfg: RunConfig) -> ExperimentSpec:
    settings = OptimizerSettings(**cfg.optimizer)
    if cfg.exp is not None:
        base = get_spec(cfg.exp)
        arch = {k: getattr(cfg, k) for k in ("M", "N", "I") if getattr(cfg, k) is not None}
        return replace(base, seed=cfg.seed, settings=settings, n_time=cfg.n_time, penalty_mu=cfg.penalty_mu, **arch)
    missing = [k for k in ("problem", "method") if getattr(cfg, k) is None]
    if missing:
        raise ConfigurationError("missing required config key(s): " + ", ".join(missing))
    if cfg.method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {cfg.method!r}")
    return ExperimentSpec(0, cfg.method, str(cfg.problem), cfg.M, cfg.N, cfg.I, seed=cfg.seed, settings=settings,
                          n_time=cfg.n_time, penalty_mu=cfg.penalty_mu)


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def append_csv(path: Path, columns, rows) -> Path:
    """Append rows, rewriting the whole file atomically."""
    path = Path(path)
    if path.exists():
        existing = path.read_text(encoding="utf-8")
        header = existing.split("\n", 1)[0]
        if header != ",".join(columns):
            raise ConfigurationError(f"{path} has a different header; refusing to append")
        body = csv_text(columns, rows).split("\n", 1)[1]
        return atomic_write_text(path, existing + body)
    return atomic_write_text(path, csv_text(columns, rows))


# ---------------------------------------------------------------------------
# commands


def _model_name(spec: ExperimentSpec) -> str:
    arch = "-".join(f"{k}{getattr(spec, k)}" for k in ("M", "N", "I") if getattr(spec, k) is not None)
    prefix = f"exp{spec.exp_id}-" if spec.exp_id else ""
    return f"{prefix}{spec.method}-{spec.problem_id}-{arch}-seed{spec.seed}.json"


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    spec = spec_from_config(cfg)
    result = run_spec(spec)
    out = Path(cfg.output_dir)
    model_path = Path(args.model_out) if args.model_out else out / _model_name(spec)
    save_model(result.estimator, model_path)
    row = dict(result.row, exp=spec.exp_id or None)
    append_csv(out / "metrics.csv", RESULT_COLUMNS, [row])
    print(f"trained {spec.method} on {spec.problem_id}: loss {result.estimator.final_loss_:.4g}, "
          f"train RMSE_u {result.train.rmse_u:.3g}, test RMSE_u {result.test.rmse_u:.3g}, "
          f"{result.wall_time_s:.1f}s -> {model_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    est = load_model(args.model)
    p = est.problem_
    train_grid, test_grid = make_grids(p, args.n_time or est.n_time)
    train, test = evaluate(est, p, train_grid), evaluate(est, p, test_grid)
    spec_like = SimpleNamespace(exp_id=None, method=est.method, problem_id=p.id, seed=est.random_state,
                                M=getattr(est.model_, "M", None), N=getattr(est.model_, "N", None),
                                I=getattr(est.model_, "hidden_I", None))
    row = results_row(spec_like, train, test, float("nan"))
    if args.output:
        append_csv(Path(args.output), RESULT_COLUMNS, [row])
    print(csv_text(RESULT_COLUMNS, [row]), end="")
    return EXIT_OK


ORACLE_COLUMNS = ["x0", "t", "x_star", "u_star", "lambda_star"]


def cmd_oracle(args) -> int:
    p = make_problem(args.problem)
    times = np.linspace(0.0, p.horizon_T, args.n_time + 1)
    x0s = np.asarray(args.x0 if args.x0 else p.x0_train, dtype=float)
    ref = reference_surface(p, times, x0s)
    rows = [dict(x0=x0, t=t, x_star=ref["x_star"][i, j], u_star=ref["u_star"][i, j],
                 lambda_star=ref["lambda_star"][i, j])
            for j, x0 in enumerate(x0s) for i, t in enumerate(times)]
    out = Path(args.output) if args.output else output_dir(args) / f"oracle-{p.id}.csv"
    atomic_write_text(out, csv_text(ORACLE_COLUMNS, rows))
    sidecar = {"problem": p.id, "source": ref["solutions"][0].source,
               "J_star": [{"x0": float(x0), "J_star": float(J)} for x0, J in zip(x0s, ref["J_star"])]}
    atomic_write_text(out.with_suffix(".json"), json.dumps(sidecar, indent=1) + "\n")
    print(f"oracle {p.id}: {len(x0s)} initial conditions x {times.size} nodes -> {out}")
    return EXIT_OK


SURFACE_COLUMNS = ["t", "x0", "u_hat", "x_hat", "lambda_hat", "u_star", "x_star", "ape_u", "ape_x"]
TRAJECTORY_COLUMNS = SURFACE_COLUMNS + ["in_hull"]


def _ape(approx, exact):
    """Absolute percentage error; blank where the exact value is within the MAPE guard."""
    if abs(exact) <= MAPE_GUARD:
        return None
    return 100.0 * abs(approx - exact) / abs(exact)


def trajectory_rows(est, times, x0: float) -> list[dict]:
    """Rows for one initial condition; surfaces are built from these slices."""
    p = est.problem_
    tb = est.trial_grid(times, [x0])
    ref = reference_surface(p, times, [x0])
    lam = tb.lambda_hat
    rows = []
    for i, t in enumerate(times):
        u_hat, x_hat = float(tb.u_hat[i, 0]), float(tb.x_hat[i, 0])
        u_star, x_star = float(ref["u_star"][i, 0]), float(ref["x_star"][i, 0])
        rows.append(dict(t=float(t), x0=float(x0), u_hat=u_hat, x_hat=x_hat,
                         lambda_hat=None if lam is None else float(lam[i, 0]),
                         u_star=u_star, x_star=x_star, ape_u=_ape(u_hat, u_star), ape_x=_ape(x_hat, x_star)))
    return rows


def cmd_surfaces(args) -> int:
    est = load_model(args.model)
    p = est.problem_
    times = np.linspace(0.0, p.horizon_T, args.n_time + 1)
    train, test = make_grids(p, args.n_time)
    x0s = (test if args.grid == "testing" else train).x0_points
    rows = [r for x0 in x0s for r in trajectory_rows(est, times, x0)]
    out = Path(args.output) if args.output else output_dir(args) / f"surface-{est.method}-{p.id}.csv"
    atomic_write_text(out, csv_text(SURFACE_COLUMNS, rows))
    print(f"surface: {times.size} x {x0s.size} rows -> {out}")
    return EXIT_OK


def cmd_trajectories(args) -> int:
    est = load_model(args.model)
    p = est.problem_
    times = np.linspace(0.0, p.horizon_T, args.n_time + 1)
    rows = []
    for x0 in args.x0:
        inside = bool(p.in_hull(x0))
        if not inside:
            lo, hi = p.x0_hull
            log.warning("x0 = %s lies outside the training range [%s, %s]; values are extrapolated", x0, lo, hi)
        rows += [dict(r, in_hull=inside) for r in trajectory_rows(est, times, float(x0))]
    out = Path(args.output) if args.output else output_dir(args) / f"trajectories-{est.method}-{p.id}.csv"
    atomic_write_text(out, csv_text(TRAJECTORY_COLUMNS, rows))
    print(f"trajectories: {len(args.x0)} x {times.size} rows -> {out}")
    return EXIT_OK


# Acceptance bands for single experiments: metric name -> upper bound.
BANDS = {
    2: {"train_rmse_u": 1e-3, "test_rmse_u": 1e-3},
    4: {"train_rmse_u": 2e-3, "train_j_pct_error": 25.0},
    10: {"train_rmse_u": 3e-3},
    21: {"train_rmse_u": 1.0, "train_mape_u": 2.0},
}

REPRODUCE_COLUMNS = (
    ["exp", "method", "ocp", "M", "N", "I", "seed", "repeat", "status"]
    + RESULT_COLUMNS[6:14]
    + ["paper_" + c for c in RESULT_COLUMNS[6:14]]
    + ["final_loss", "wall_time_s", "band", "band_pass"]
)


def _band_text(exp_id: int) -> str:
    return "; ".join(f"{k} <= {v:g}" for k, v in BANDS.get(exp_id, {}).items())


def reproduce_one(exp_id: int, seed: int | None, repeat: int, max_iter: int | None = None,
                  polish_max_iter: int | None = None) -> dict:
    spec = get_spec(exp_id)
    if seed is not None:
        spec = replace(spec, seed=seed + repeat)
    elif repeat:
        spec = replace(spec, seed=spec.seed + repeat)
    if max_iter is not None:
        spec = replace(spec, settings=replace(spec.settings, max_iter=max_iter))
    if polish_max_iter is not None:
        spec = replace(spec, settings=replace(spec.settings, polish_max_iter=polish_max_iter))
    paper = PAPER[exp_id]
    row = {"exp": exp_id, "method": spec.method, "ocp": spec.problem_id, "M": spec.M, "N": spec.N, "I": spec.I,
           "seed": spec.seed, "repeat": repeat, "band": _band_text(exp_id)}
    for i, name in enumerate(("rmse_u", "mae_u", "mape_u", "j_pct_error")):
        row["paper_train_" + name] = paper.train[i]
        row["paper_test_" + name] = paper.test[i]
    try:
        result = run_spec(spec)
    except (TrainingFailure, NumericalFailure, OracleFailure) as exc:
        row.update(status=f"failed: {exc}", band_pass=False if exp_id in BANDS else None)
        return row
    row.update({k: v for k, v in result.row.items() if k in REPRODUCE_COLUMNS and k not in row})
    row["status"] = "ok"
    if exp_id in BANDS:
        row["band_pass"] = all(row[k] <= bound for k, bound in BANDS[exp_id].items())
    return row


def _parse_ids(tokens) -> list[int]:
    if len(tokens) == 1 and tokens[0] == "all":
        return sorted(REGISTRY)
    ids = []
    for tok in tokens:
        try:
            ids.append(int(tok))
        except ValueError:
            raise ConfigurationError(f"experiment ids must be integers or 'all', got {tok!r}") from None
        if ids[-1] not in REGISTRY:
            raise ConfigurationError(f"experiment id must be in 1..{len(REGISTRY)}, got {ids[-1]}")
    return ids


def cmd_reproduce(args) -> int:
    ids = _parse_ids(args.experiments)
    if args.repeats < 1:
        raise ConfigurationError("--repeats must be >= 1")
    jobs = [(e, args.seed, r, args.max_iter, args.polish_max_iter) for e in ids for r in range(args.repeats)]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(reproduce_one, *zip(*jobs)))
    else:
        rows = []
        for job in jobs:
            start = time.perf_counter()
            rows.append(reproduce_one(*job))
            log.info("experiment %s repeat %s done in %.1fs", job[0], job[2], time.perf_counter() - start)
    out = Path(args.output) if args.output else output_dir(args) / "reproduce.csv"
    atomic_write_text(out, csv_text(REPRODUCE_COLUMNS, rows))
    failed = [r["exp"] for r in rows if r.get("band_pass") is False]
    print(f"reproduced {len(rows)} run(s) -> {out}" + (f"; band failures: {failed}" if failed else ""))
    return EXIT_BAND if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocpnet", description="Neural PMP solvers for scalar optimal control.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output(p):
        p.add_argument("--output-dir", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
        p.add_argument("--output", "-o", help="explicit output file")

    t = sub.add_parser("train", help="fit one model and save it")
    t.add_argument("--config", help="YAML config file")
    t.add_argument("--exp", type=int, help="start from a benchmark registry entry")
    t.add_argument("--problem", help="OCP1, OCP2 or OCP3")
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--M", type=_positive_int)
    t.add_argument("--N", type=_positive_int)
    t.add_argument("--I", type=_positive_int)
    t.add_argument("--seed", type=int)
    t.add_argument("--n-time", dest="n_time", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--decay-rate", dest="decay_rate", type=float)
    t.add_argument("--decay-every", dest="decay_every", type=int)
    t.add_argument("--max-iter", dest="max_iter", type=int)
    t.add_argument("--polish-max-iter", dest="polish_max_iter", type=int)
    t.add_argument("--no-polish", dest="polish", action="store_const", const=False)
    t.add_argument("--output-dir", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    t.add_argument("--model-out", help="explicit model file path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metrics of a saved model on the training and testing grids")
    e.add_argument("model")
    e.add_argument("--n-time", dest="n_time", type=int)
    e.add_argument("--output", "-o", help="append the metrics row to this CSV")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="reference solutions as CSV plus a JSON sidecar with J*")
    o.add_argument("--problem", required=True)
    o.add_argument("--x0", type=float, nargs="+")
    o.add_argument("--n-time", dest="n_time", type=int, default=100)
    add_output(o)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("surfaces", help="dense (t, x0) surface of a saved model against the oracle")
    s.add_argument("model")
    s.add_argument("--n-time", dest="n_time", type=int, default=100)
    s.add_argument("--grid", choices=("training", "testing"), default="training")
    add_output(s)
    s.set_defaults(func=cmd_surfaces)

    j = sub.add_parser("trajectories", help="time series of a saved model for chosen initial conditions")
    j.add_argument("model")
    j.add_argument("--x0", type=float, nargs="+", required=True)
    j.add_argument("--n-time", dest="n_time", type=int, default=100)
    add_output(j)
    j.set_defaults(func=cmd_trajectories)

    r = sub.add_parser("reproduce", help="rerun benchmark experiments and compare with the published table")
    r.add_argument("experiments", nargs="+", help="experiment ids or 'all'")
    r.add_argument("--seed", type=int, help="base seed override; repeat k uses seed + k")
    r.add_argument("--repeats", type=int, default=1)
    r.add_argument("--max-iter", dest="max_iter", type=int, help="Adam iteration override (quick runs)")
    r.add_argument("--polish-max-iter", dest="polish_max_iter", type=int, help="L-BFGS iteration override")
    r.add_argument("--jobs", type=_positive_int, default=1, help="experiments run in parallel processes")
    add_output(r)
    r.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingFailure, NumericalFailure, OracleFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
