"""Command-line pipeline: simulate, make-dataset, train, evaluate, export."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .autodiff import AutodiffError
from .config import (ConfigError, SCHEMA_VERSION, build_domain, build_grid,
                     build_ic_spec, build_network_config, build_params,
                     build_train_config, load_config, store_stride)
from .datagen import (DatasetError, make_dataset, param_report, read_dataset,
                      write_dataset)
from .model import ModelError, build_initial_conditions
from .network import NetworkError, PinnModel, load_checkpoint, save_checkpoint
from .nsfd import SolverError, solve
from .optim import OptimError
from .trainer import TrainingError, evaluate as evaluate_model, predict_on_trajectory, train
from .trajio import read_trajectory, write_trajectory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMPARTMENTS = ("S", "E", "I", "R")
LOG_COLUMNS = ("epoch", "stage", "lr", "pde", "ic", "bc", "data", "nonneg",
               "pop", "param", "total")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _json_dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _run_solver(cfg):
    params = build_params(cfg)
    domain = build_domain(cfg)
    grid = build_grid(cfg, domain)
    ic_spec = build_ic_spec(cfg)
    ic = build_initial_conditions(domain, grid, ic_spec)
    traj = solve(ic, params, grid, store_stride=store_stride(cfg, grid), T=domain.T)
    for st in traj.states:
        if not np.all(np.isfinite(st.stack())):
            raise SolverError("non-finite values in solver trajectory")
    return traj, grid, domain, params, ic_spec


def cmd_simulate(cfg) -> int:
    traj, grid, domain, params, _ = _run_solver(cfg)
    outdir = Path(cfg["output_dir"]) / "trajectory"
    manifest = write_trajectory(traj, grid, domain, params, outdir)
    print(f"stored {len(traj)} time levels on a {grid.shape} grid")
    print(f"min value {min(st.min() for st in traj.states):.6g}, "
          f"max total {max(st.total().max() for st in traj.states):.6g}")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_make_dataset(cfg) -> int:
    traj, grid, domain, params, _ = _run_solver(cfg)
    d = cfg["dataset"]
    ds = make_dataset(traj, grid, domain, params, n_d=d["n_d"],
                      mask=tuple(d["observed_compartments"]),
                      noise_rel=d["noise_rel"], seed=cfg["seed"])
    path = write_dataset(ds, Path(cfg["output_dir"]) / "dataset.csv")
    print(f"wrote {d['n_d']} observations to {path}")
    return EXIT_OK


def _load_observations(cfg, traj, grid, domain, params, mode: str):
    d = cfg["dataset"]
    if d["path"] is not None:
        return read_dataset(d["path"]).observations
    if mode == "inverse":
        raise ConfigError("inverse mode requires dataset.path (run make-dataset first)")
    if d["use_in_forward"] and d["n_d"] > 0:
        return make_dataset(traj, grid, domain, params, n_d=d["n_d"],
                            mask=tuple(d["observed_compartments"]),
                            noise_rel=d["noise_rel"], seed=cfg["seed"]).observations
    return None


def _metric_table(report) -> str:
    lines = [f"{'Compartment':<12}{'Rel. L2':>12}{'MAE':>12}{'RMSE':>12}{'Max':>12}"]
    for name in COMPARTMENTS:
        m = report.metrics[name]
        lines.append(f"{name:<12}" + "".join(f"{v:>12.4e}" for v in m))
    return "\n".join(lines)


def _param_table(report) -> str:
    lines = [f"{'Parameter':<12}{'True':>10}{'Estimated':>12}{'Abs.Err':>12}{'Rel.Err':>10}"]
    for name, (tv, ev, ae, re) in report.rows.items():
        lines.append(f"{name:<12}{tv:>10.4f}{ev:>12.4f}{ae:>12.4e}{re * 100:>9.2f}%")
    return "\n".join(lines)


def cmd_train(cfg, inverse: bool) -> int:
    mode = "inverse" if inverse else "forward"
    traj, grid, domain, params, ic_spec = _run_solver(cfg)
    obs = _load_observations(cfg, traj, grid, domain, params, mode)
    net_cfg = build_network_config(cfg)
    model = PinnModel.xavier_init(net_cfg, domain, seed=cfg["seed"])
    train_cfg = build_train_config(cfg, mode)
    artifacts = train(train_cfg, model, domain, params, ic_spec, dataset=obs)

    outdir = Path(cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "training_log.csv", "w") as f:
        f.write(",".join(LOG_COLUMNS) + "\n")
        for row in artifacts.loss_history:
            f.write(",".join("%.17g" % row[c] if c not in ("epoch", "stage")
                             else str(row[c]) for c in LOG_COLUMNS) + "\n")
    with open(outdir / "theta_history.csv", "w") as f:
        f.write("epoch,beta,delta,gamma,lambda_diff\n")
        for epoch, *theta in artifacts.theta_history:
            f.write(str(epoch) + "," + ",".join("%.17g" % v for v in theta) + "\n")
    save_checkpoint(artifacts.model, outdir / "checkpoint.ckpt")

    report = evaluate_model(artifacts.model, traj, grid, domain)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "seed": cfg["seed"],
        "config": cfg,
        "epochs_run": artifacts.epochs_run,
        "stopped_early": artifacts.stopped_early,
        "final_loss": artifacts.loss_history[-1],
        "metrics": report.as_dict(),
        "carrying_capacity": params.Lambda / params.mu,
        "max_total_population": float(max(st.total().max() for st in traj.states)),
    }
    print("Error metrics vs NSFD reference:")
    print(_metric_table(report))
    if mode == "inverse":
        est = artifacts.model.transformed_params_np()
        true = {"beta": params.beta, "delta": params.delta, "gamma": params.gamma,
                "lambda_diff": params.lambda_diff}
        prep = param_report(true, dict(zip(true.keys(), map(float, est))))
        summary["parameter_recovery"] = prep.as_dict()
        print("Parameter recovery:")
        print(_param_table(prep))
    _json_dump(summary, outdir / "run_summary.json")
    print(f"epochs run: {artifacts.epochs_run}"
          + (" (early stop)" if artifacts.stopped_early else ""))
    print(f"wall clock: {artifacts.timings['total_seconds']:.1f}s "
          f"(adam {artifacts.timings['adam_seconds']:.1f}s)")
    return EXIT_OK


def cmd_evaluate(checkpoint: str, manifest: str, out: str | None) -> int:
    model = load_checkpoint(checkpoint)
    traj, grid, domain, _ = read_trajectory(manifest)
    if grid.dim != model.config.dim:
        raise ConfigError(f"checkpoint is {model.config.dim}D but trajectory is {grid.dim}D")
    report = evaluate_model(model, traj, grid, domain)
    print(_metric_table(report))
    payload = {"schema_version": SCHEMA_VERSION, "metrics": report.as_dict()}
    if out is not None:
        _json_dump(payload, Path(out))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export(checkpoint: str, manifest: str, out: str, for_plot: bool) -> int:
    if not for_plot:
        raise ConfigError("export currently supports only --for-plot")
    model = load_checkpoint(checkpoint)
    traj, grid, domain, _ = read_trajectory(manifest)
    if grid.dim != model.config.dim:
        raise ConfigError(f"checkpoint is {model.config.dim}D but trajectory is {grid.dim}D")
    preds = predict_on_trajectory(model, traj, grid, domain)
    pts = grid.node_points(domain)
    coord_names = ["x", "y"][:grid.dim]
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("t," + ",".join(coord_names) + ",compartment,source,value\n")
        for li, t in enumerate(traj.times):
            for ci, name in enumerate(COMPARTMENTS):
                truth = traj.states[li].stack()[ci].ravel()
                pred = preds[name][li].ravel()
                for ni in range(len(pts)):
                    coords = ",".join("%.17g" % c for c in pts[ni])
                    f.write(f"%.17g,{coords},{name},truth,%.17g\n" % (t, truth[ni]))
                    f.write(f"%.17g,{coords},{name},pinn,%.17g\n" % (t, pred[ni]))
                    f.write(f"%.17g,{coords},{name},abs_error,%.17g\n"
                            % (t, abs(pred[ni] - truth[ni])))
    print(f"wrote tidy plot data to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seirpinn",
        description="NSFD solvers and constraint-aware PINNs for a spatial "
                    "SEIR model with vital dynamics")
    parser.add_argument("--version", action="version",
                        version=f"seirpinn {__version__} (schema {SCHEMA_VERSION})")
    parser.add_argument("--threads", type=int, default=1,
                        help="torch thread count (default 1, deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="run-config JSON file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY.PATH=VALUE", help="override a config leaf")

    with_config(sub.add_parser("simulate", help="run the NSFD solver, export trajectory"))
    with_config(sub.add_parser("make-dataset", help="sample noisy observations"))
    p_train = sub.add_parser("train", help="train the PINN (forward or inverse)")
    with_config(p_train)
    p_train.add_argument("--inverse", action="store_true",
                         help="train the physical parameters from data")
    p_eval = sub.add_parser("evaluate", help="error metrics of a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("manifest", help="trajectory manifest.json")
    p_eval.add_argument("--out", default=None, help="write metrics JSON here")
    p_exp = sub.add_parser("export", help="tidy long-format CSV for plotting")
    p_exp.add_argument("checkpoint")
    p_exp.add_argument("manifest")
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--for-plot", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        if args.command in ("simulate", "make-dataset", "train"):
            cfg = load_config(args.config, args.overrides)
            if args.command == "simulate":
                return cmd_simulate(cfg)
            if args.command == "make-dataset":
                return cmd_make_dataset(cfg)
            return cmd_train(cfg, inverse=args.inverse)
        if args.command == "evaluate":
            return cmd_evaluate(args.checkpoint, args.manifest, args.out)
        if args.command == "export":
            return cmd_export(args.checkpoint, args.manifest, args.out, args.for_plot)
        return _fail(EXIT_CONFIG, f"unknown command {args.command}")
    except (ConfigError, ModelError, NetworkError, DatasetError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except SolverError as exc:
        # shape/sign violations are config-level; non-finite is numerical
        code = EXIT_NUMERICAL if "non-finite" in str(exc) else EXIT_CONFIG
        return _fail(code, str(exc))
    except (TrainingError, AutodiffError, OptimError) as exc:
        msg = str(exc)
        if "dataset" in msg or "requires" in msg:
            return _fail(EXIT_CONFIG, msg)
        return _fail(EXIT_NUMERICAL, msg)


if __name__ == "__main__":
    sys.exit(main())
