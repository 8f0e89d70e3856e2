"""Command-line front end.

Subcommands: simulate | stats | estimate | sensitivity | report.
Experiments are described by a YAML config; every field is validated against
a strict schema (unknown fields are rejected by name) before any compute.
All numeric CSV output is written with full round-trip precision.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import pipelines as pl
from .errors import (
    ConfigError,
    EstimationError,
    ModelError,
    RespfitError,
    SimulationError,
    StatsError,
    SurrogateError,
)
from .models import get_model
from .sde import IntegratorConfig, load_trajectory, save_trajectory, simulate
from .sensitivity import pathwise_derivative, save_sensitivity_csv
from .solver import GaussNewtonConfig, save_start_records_csv
from .stats import LagGrid, save_statistics_csv, two_point_correlation
from .surrogate import save_surrogate

EXIT_CODES = {
    ConfigError: 2,
    ModelError: 3,
    SimulationError: 4,
    StatsError: 5,
    SurrogateError: 6,
    EstimationError: 7,
}

_TOP_FIELDS = {
    "pipeline", "model", "scheme", "dt", "lag", "n_samples", "burn_in",
    "seed", "threads", "out", "true_theta", "lag_grid", "max_order",
    "chebyshev_order", "solver", "node_n_samples", "node_seed",
    "sensitivity", "trajectory", "observable",
}
_LAG_GRID_FIELDS = {"start", "step", "count"}
_SOLVER_FIELDS = {"n_starts", "seed", "step_tol", "max_iter", "damping_floor"}
_SENS_FIELDS = {"parameter", "ensemble_size", "horizon", "dt", "seed",
                "initial_state", "y0"}
_OBS_FIELDS = {"a", "b"}

_PIPELINES = {
    "langevin_response": pl.langevin_response_pipeline,
    "triplewell_response": pl.triplewell_response_pipeline,
}


def _check_fields(doc: dict, allowed: set, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown field '{key}' in {where}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML in '{path}': {e}")
    if doc is None:
        doc = {}
    _check_fields(doc, _TOP_FIELDS, "config")
    for section, allowed in (("lag_grid", _LAG_GRID_FIELDS),
                             ("solver", _SOLVER_FIELDS),
                             ("sensitivity", _SENS_FIELDS),
                             ("observable", _OBS_FIELDS)):
        if section in doc and doc[section] is not None:
            _check_fields(doc[section], allowed, f"config.{section}")
    return doc


def _require(doc: dict, *fields):
    missing = [f for f in fields if doc.get(f) is None]
    if missing:
        raise ConfigError(f"missing required config field(s): {', '.join(missing)}")


def _lag_grid(doc) -> LagGrid:
    g = doc["lag_grid"]
    _require(g, "start", "step", "count")
    return LagGrid.uniform(float(g["start"]), float(g["step"]), int(g["count"]))


def _solver_config(doc) -> GaussNewtonConfig:
    s = doc.get("solver") or {}
    return GaussNewtonConfig(
        step_tol=float(s.get("step_tol", 1e-8)),
        max_iter=int(s.get("max_iter", 100)),
        damping_floor=float(s.get("damping_floor", 1e-8)),
        n_starts=int(s.get("n_starts", 50)),
        seed=int(s.get("seed", 0)),
    )


def _pipeline_config(doc, threads: int) -> pl.PipelineConfig:
    _require(doc, "model", "scheme", "dt", "lag", "n_samples", "true_theta",
             "lag_grid", "max_order", "chebyshev_order")
    return pl.PipelineConfig(
        model=doc["model"],
        true_theta={k: float(v) for k, v in doc["true_theta"].items()},
        scheme=doc["scheme"],
        dt=float(doc["dt"]),
        lag=float(doc["lag"]),
        n_samples=int(doc["n_samples"]),
        lag_grid=_lag_grid(doc),
        max_order=int(doc["max_order"]),
        chebyshev_order=int(doc["chebyshev_order"]),
        solver=_solver_config(doc),
        seed=int(doc.get("seed", 0)),
        node_n_samples=(None if doc.get("node_n_samples") is None
                        else int(doc["node_n_samples"])),
        node_seed=(None if doc.get("node_seed") is None
                   else int(doc["node_seed"])),
        burn_in=(None if doc.get("burn_in") is None
                 else float(doc["burn_in"])),
        threads=threads,
    )


def _out_dir(doc, args) -> Path:
    out = args.out or os.environ.get("RESPFIT_OUT") or doc.get("out")
    if out is None:
        raise ConfigError("no output directory: set --out, RESPFIT_OUT, or "
                          "the 'out' config field")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(doc, args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("RESPFIT_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"RESPFIT_THREADS must be an integer, got '{env}'")
    return int(doc.get("threads", 1))


def _apply_overrides(doc, args):
    if args.seed is not None:
        doc = dict(doc)
        doc["seed"] = args.seed
    return doc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    threads = _threads(doc, args)
    _require(doc, "model", "scheme", "dt", "lag", "n_samples", "true_theta")
    model = get_model(doc["model"])
    theta = model.params({k: float(v) for k, v in doc["true_theta"].items()})
    cfg = IntegratorConfig(
        doc["scheme"], float(doc["dt"]), float(doc["lag"]),
        int(doc["n_samples"]),
        burn_in=None if doc.get("burn_in") is None else float(doc["burn_in"]),
        seed=int(doc.get("seed", 0)),
    )
    if args.dry_run:
        print(f"plan: simulate {doc['model']} ({doc['scheme']}), "
              f"{cfg.n_samples} samples at lag {cfg.lag} (dt={cfg.dt}), "
              f"seed {cfg.seed}; threads={threads}")
        return 0
    out = _out_dir(doc, args)
    path = out / "data.traj"
    if args.resume and path.exists():
        print(f"resume: {path} exists, skipping simulation")
        return 0
    traj = simulate(model, theta.values, cfg)
    save_trajectory(traj, path)
    print(f"wrote {path} ({traj.n_samples} samples, dim {traj.dim})")
    return 0


def cmd_stats(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    _require(doc, "trajectory", "lag_grid")
    traj = load_trajectory(doc["trajectory"])
    grid = _lag_grid(doc)
    obs = doc.get("observable") or {}
    comp_a = int(obs.get("a", 0))
    comp_b = int(obs.get("b", 0))
    if args.dry_run:
        print(f"plan: correlations <x[{comp_a}](t) x[{comp_b}](0)> at "
              f"{grid.count} lags from {doc['trajectory']}")
        return 0
    out = _out_dir(doc, args)
    es = two_point_correlation(traj, comp_a, comp_b, grid,
                               names=(f"x{comp_a}", f"x{comp_b}"))
    path = out / "statistics.csv"
    save_statistics_csv(es, path)
    print(f"wrote {path} ({grid.count} lags)")
    return 0


def cmd_estimate(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    threads = _threads(doc, args)
    _require(doc, "pipeline")
    if doc["pipeline"] not in _PIPELINES:
        raise ConfigError(
            f"unknown pipeline '{doc['pipeline']}'; "
            f"known: {sorted(_PIPELINES)}"
        )
    cfg = _pipeline_config(doc, threads)
    n_nodes = cfg.chebyshev_order ** 2
    if args.dry_run:
        print(f"plan: {doc['pipeline']} on {cfg.model}; data run of "
              f"{cfg.n_samples} samples (seed {cfg.seed}), {n_nodes} training "
              f"nodes of {cfg.node_n_samples or cfg.n_samples} samples, "
              f"surrogate order {cfg.max_order}, "
              f"{cfg.solver.n_starts} starts; threads={threads}")
        return 0
    out = _out_dir(doc, args)
    data = None
    data_path = out / "data.traj"
    if args.resume and data_path.exists():
        data = load_trajectory(data_path)
        print(f"resume: loaded {data_path}")
    result = _PIPELINES[doc["pipeline"]](cfg, data=data)
    if data is None:
        model = get_model(cfg.model)
        theta = model.params(cfg.true_theta).values
        data = simulate(model, theta, cfg.data_integrator())
        save_trajectory(data, data_path)
    pl.save_estimates_csv(result.estimate, out / "estimates.csv")
    save_start_records_csv(result.estimation, out / "starts.csv",
                           result.fit_names)
    save_statistics_csv(result.data_statistics, out / "data_statistics.csv")
    save_surrogate(result.surrogate, out / "surrogate.json")
    pl.write_manifest(out / "manifest.json", cfg, extra={
        "pipeline": doc["pipeline"],
        "estimate": result.estimate,
        "reduction": result.reduction.as_dict(),
        "n_converged": result.estimation.n_converged,
        "n_inliers": result.estimation.n_inliers,
    })
    print(f"pipeline {doc['pipeline']} finished "
          f"({result.estimation.n_inliers} inlier starts)")
    for name, value in result.estimate.items():
        print(f"  {name:12s} {value: .6g}")
    print(f"artifacts in {out}")
    return 0


def cmd_sensitivity(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    _require(doc, "model", "true_theta", "sensitivity")
    sens = doc["sensitivity"]
    _require(sens, "parameter", "ensemble_size", "horizon", "dt")
    model = get_model(doc["model"])
    if args.dry_run:
        print(f"plan: pathwise derivative of {doc['model']} wrt "
              f"'{sens['parameter']}', ensemble {sens['ensemble_size']}, "
              f"horizon {sens['horizon']} (dt={sens['dt']})")
        return 0
    out = _out_dir(doc, args)
    report = pathwise_derivative(
        model,
        {k: float(v) for k, v in doc["true_theta"].items()},
        sens["parameter"],
        ensemble_size=int(sens["ensemble_size"]),
        horizon=float(sens["horizon"]),
        dt=float(sens["dt"]),
        seed=int(sens.get("seed", doc.get("seed", 0))),
        initial_state=sens.get("initial_state"),
        y0=sens.get("y0"),
    )
    path = out / f"sensitivity_{sens['parameter']}.csv"
    save_sensitivity_csv(report, path)
    print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    out = _out_dir(doc, args)
    manifest = out / "manifest.json"
    if not manifest.exists():
        raise ConfigError(f"no manifest at {manifest}; run 'estimate' first")
    import json
    with open(manifest) as fh:
        m = json.load(fh)
    print(f"pipeline: {m.get('pipeline', '?')}")
    print(f"model:    {m['config']['model']}")
    truth = m["config"]["true_theta"]
    est = m.get("estimate", {})
    print(f"{'parameter':12s} {'true':>12s} {'estimate':>12s}")
    for name in est:
        t = truth.get(name, float("nan"))
        print(f"{name:12s} {t:12.6g} {est[name]:12.6g}")
    print(f"converged starts: {m.get('n_converged')}, "
          f"inliers: {m.get('n_inliers')}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="respfit",
        description="Parameter estimation for ergodic diffusions from "
                    "two-point response statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": ("generate and store a trajectory", cmd_simulate),
        "stats": ("two-point correlations from a stored trajectory", cmd_stats),
        "estimate": ("run a full estimation pipeline", cmd_estimate),
        "sensitivity": ("pathwise-derivative sensitivity curves",
                        cmd_sensitivity),
        "report": ("summarize an existing run directory", cmd_report),
    }
    for name, (help_text, fn) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--dry-run", action="store_true",
                       help="validate and print the plan, no compute")
        p.add_argument("--resume", action="store_true",
                       help="reuse existing trajectories in the output dir")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except RespfitError as e:
        code = EXIT_CODES.get(type(e), 1)
        category = type(e).__name__
        print(f"error [{category}]: {e}", file=sys.stderr)
        return code
    except OSError as e:
        print(f"error [IO]: {e}", file=sys.stderr)
        return 8


if __name__ == "__main__":
    sys.exit(main())
