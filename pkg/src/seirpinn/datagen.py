"""Synthetic observation sets from solver trajectories, plus error metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import COMPARTMENT_INDEX, ObservationSet
from .model import DomainSpec, EpidemicParams
from .nsfd import GridSpec, Trajectory

COMPARTMENTS = ("S", "E", "I", "R")
CSV_FMT = "%.17g"


class DatasetError(ValueError):
    """Invalid dataset request (too many records, bad mask)."""


@dataclass(frozen=True)
class SyntheticDataset:
    observations: ObservationSet
    provenance: dict


@dataclass(frozen=True)
class ErrorReport:
    """Per-compartment metrics: dict name -> (relL2, MAE, RMSE, maxErr)."""

    metrics: dict

    def as_dict(self):
        return {name: {"rel_l2": m[0], "mae": m[1], "rmse": m[2], "max_error": m[3]}
                for name, m in self.metrics.items()}


@dataclass(frozen=True)
class ParamRecoveryReport:
    """Per-parameter rows: dict name -> (true, estimated, abs_error, rel_error)."""

    rows: dict

    def as_dict(self):
        return {name: {"true": r[0], "estimated": r[1], "abs_error": r[2],
                       "rel_error": r[3]} for name, r in self.rows.items()}


def make_dataset(traj: Trajectory, grid: GridSpec, domain: DomainSpec,
                 params: EpidemicParams, n_d: int, mask=COMPARTMENTS,
                 noise_rel: float = 0.0, seed: int = 0) -> SyntheticDataset:
    """Draw n_d records uniformly without replacement from the trajectory.

    Each record is one (time level, node, compartment) triple restricted to the
    observed mask; multiplicative Gaussian noise value*(1 + noise_rel*z) is
    applied and clamped at zero.
    """
    mask = tuple(mask)
    if any(c not in COMPARTMENTS for c in mask):
        raise DatasetError(f"unknown compartments in mask {mask}")
    pts = grid.node_points(domain)
    n_levels, n_nodes, n_comp = len(traj), pts.shape[0], len(mask)
    n_avail = n_levels * n_nodes * n_comp
    if n_d > n_avail:
        raise DatasetError(f"requested {n_d} records but only {n_avail} available")
    rng = np.random.default_rng(seed)
    flat = rng.choice(n_avail, size=n_d, replace=False)
    flat.sort()
    li = flat // (n_nodes * n_comp)
    rem = flat % (n_nodes * n_comp)
    ni = rem // n_comp
    ci = rem % n_comp
    comp_codes = np.array([COMPARTMENT_INDEX[c] for c in mask])
    values = np.empty(n_d)
    stacked = np.stack([st.stack().reshape(4, -1) for st in traj.states])  # (L, 4, nodes)
    values = stacked[li, comp_codes[ci], ni]
    if noise_rel > 0.0:
        values = np.maximum(values * (1.0 + noise_rel * rng.standard_normal(n_d)), 0.0)
    obs = ObservationSet(t=np.asarray(traj.times)[li], x=pts[ni],
                         comp=comp_codes[ci], value=values, mask=mask)
    provenance = {
        "grid": {"dim": grid.dim, "M": grid.M, "My": grid.My, "h": grid.h,
                 "k": grid.k, "n_steps": grid.n_steps},
        "domain": {"lengths": list(domain.lengths), "T": domain.T},
        "params": {"Lambda": params.Lambda, "mu": params.mu, "beta": params.beta,
                   "p": params.p, "delta": params.delta, "eta": params.eta,
                   "gamma": params.gamma, "lambda_diff": params.lambda_diff},
        "seed": seed, "noise_rel": noise_rel, "n_d": n_d, "mask": list(mask),
        "split": "train",
    }
    return SyntheticDataset(observations=obs, provenance=provenance)


def error_metrics(pred: np.ndarray, truth: np.ndarray):
    """(relL2, MAE, RMSE, maxErr) over all samples; relL2 is inf for zero truth."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise DatasetError("pred/truth shapes differ")
    diff = pred - truth
    denom = np.linalg.norm(truth)
    rel_l2 = np.linalg.norm(diff) / denom if denom > 0 else (
        0.0 if np.all(diff == 0) else np.inf)
    mae = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff**2)))
    max_err = float(np.max(np.abs(diff)))
    return float(rel_l2), mae, rmse, max_err


def error_report(pred_fields: dict, truth_fields: dict) -> ErrorReport:
    return ErrorReport(metrics={
        name: error_metrics(pred_fields[name], truth_fields[name])
        for name in COMPARTMENTS})


def param_report(true_params: dict, estimated: dict) -> ParamRecoveryReport:
    rows = {}
    for name, tv in true_params.items():
        ev = estimated[name]
        abs_err = abs(ev - tv)
        rows[name] = (tv, ev, abs_err, abs_err / abs(tv) if tv != 0 else np.inf)
    return ParamRecoveryReport(rows=rows)


# -- dataset file format ---------------------------------------------------

def write_dataset(ds: SyntheticDataset, path) -> Path:
    """CSV with columns t, x[, y], compartment, value plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    obs = ds.observations
    dim = obs.x.shape[1]
    names = np.array(COMPARTMENTS)
    header = "t," + ",".join("xy"[:dim][a] for a in range(dim)) + ",compartment,value"
    with open(path, "w") as f:
        f.write(header + "\n")
        for i in range(len(obs)):
            coords = ",".join(CSV_FMT % c for c in obs.x[i])
            f.write(f"{CSV_FMT % obs.t[i]},{coords},{names[obs.comp[i]]},{CSV_FMT % obs.value[i]}\n")
    sidecar = path.with_suffix(".provenance.json")
    with open(sidecar, "w") as f:
        json.dump(ds.provenance, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_dataset(path) -> SyntheticDataset:
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip().split(",")
        dim = len(header) - 3
        t, xs, comps, vals = [], [], [], []
        for line in f:
            parts = line.strip().split(",")
            t.append(float(parts[0]))
            xs.append([float(v) for v in parts[1:1 + dim]])
            comps.append(COMPARTMENT_INDEX[parts[1 + dim]])
            vals.append(float(parts[2 + dim]))
    sidecar = path.with_suffix(".provenance.json")
    provenance = {}
    if sidecar.exists():
        with open(sidecar) as f:
            provenance = json.load(f)
    mask = tuple(provenance.get("mask", COMPARTMENTS))
    obs = ObservationSet(t=np.array(t), x=np.array(xs).reshape(len(t), dim),
                         comp=np.array(comps, dtype=int), value=np.array(vals), mask=mask)
    return SyntheticDataset(observations=obs, provenance=provenance)
