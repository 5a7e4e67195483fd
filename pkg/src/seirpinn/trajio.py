"""Trajectory export/import: per-compartment CSVs plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import CompartmentFields, DomainSpec, EpidemicParams
from .nsfd import GridSpec, SolverError, Trajectory

SCHEMA_VERSION = "1"
COMPARTMENTS = ("S", "E", "I", "R")
CSV_FMT = "%.17g"


def _params_dict(params: EpidemicParams) -> dict:
    return {
        "Lambda": params.Lambda, "mu": params.mu, "beta": params.beta, "p": params.p,
        "delta": params.delta, "eta": params.eta, "gamma": params.gamma,
        "lambda_diff": params.lambda_diff,
    }


def write_trajectory(traj: Trajectory, grid: GridSpec, domain: DomainSpec,
                     params: EpidemicParams, outdir) -> Path:
    """Write trajectory CSVs and manifest into outdir; returns the manifest path.

    1D: one CSV per compartment (rows = stored time levels, cols = nodes).
    2D: one CSV per compartment per stored time level.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict = {}
    if grid.dim == 1:
        for ci, name in enumerate(COMPARTMENTS):
            arr = np.stack([st.stack()[ci] for st in traj.states])
            fname = f"{name}.csv"
            np.savetxt(out / fname, arr, fmt=CSV_FMT, delimiter=",")
            files[name] = fname
    else:
        for ci, name in enumerate(COMPARTMENTS):
            flist = []
            for li, st in enumerate(traj.states):
                fname = f"{name}_t{li:04d}.csv"
                np.savetxt(out / fname, st.stack()[ci], fmt=CSV_FMT, delimiter=",")
                flist.append(fname)
            files[name] = flist
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "trajectory",
        "dim": grid.dim,
        "grid": {"M": grid.M, "My": grid.My, "h": grid.h, "k": grid.k,
                 "phi": grid.phi, "n_steps": grid.n_steps, "store_stride": traj.store_stride},
        "domain": {"lengths": list(domain.lengths), "T": domain.T},
        "params": _params_dict(params),
        "times": [float(t) for t in traj.times],
        "files": files,
    }
    mpath = out / "manifest.json"
    with open(mpath, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return mpath


def read_trajectory(manifest_path):
    """Load a trajectory written by write_trajectory.

    Returns (traj, grid, domain, params).
    """
    mpath = Path(manifest_path)
    with open(mpath) as f:
        manifest = json.load(f)
    if manifest.get("kind") != "trajectory":
        raise SolverError(f"{mpath} is not a trajectory manifest")
    g = manifest["grid"]
    dim = manifest["dim"]
    grid = GridSpec(dim=dim, M=g["M"], My=g["My"], h=g["h"], k=g["k"],
                    phi=g["phi"], n_steps=g["n_steps"])
    domain = DomainSpec(dim=dim, lengths=tuple(manifest["domain"]["lengths"]),
                        T=manifest["domain"]["T"])
    params = EpidemicParams(**manifest["params"])
    times = np.array(manifest["times"])
    states = []
    base = mpath.parent
    if dim == 1:
        arrs = {name: np.atleast_2d(np.loadtxt(base / manifest["files"][name], delimiter=","))
                for name in COMPARTMENTS}
        for li in range(len(times)):
            states.append(CompartmentFields(
                S=arrs["S"][li], E=arrs["E"][li], I=arrs["I"][li], R=arrs["R"][li], grid=grid))
    else:
        for li in range(len(times)):
            fields = {name: np.loadtxt(base / manifest["files"][name][li], delimiter=",")
                      for name in COMPARTMENTS}
            states.append(CompartmentFields(grid=grid, **fields))
    traj = Trajectory(times=times, states=states,
                      store_stride=g.get("store_stride", 1))
    return traj, grid, domain, params
