"""End-to-end acceptance checks.

Each test prints one `[PASS]`/`[FAIL]` line naming the criterion it gates.
The three training runs (forward, inverse, 2D) use the packaged defaults at
desk scale and dominate the runtime of this module; run it with
`pytest tests/test_acceptance.py -v -s` to watch the lines appear.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from seirpinn import (DomainSpec, EpidemicParams, GridSpec, InitialConditionSpec,
                      build_initial_conditions, nsfd_step_1d, nsfd_step_2d,
                      population_identity_residual, solve)
from seirpinn.autodiff import batch_jets, loss_gradient
from seirpinn.cli import main
from seirpinn.losses import LossEvaluator, LossWeights
from seirpinn.model import CompartmentFields, initial_condition_values
from seirpinn.network import DTYPE, NetworkConfig, PinnModel
from seirpinn.optim import (CosineSchedule, LbfgsState, clip_gradient,
                            cosine_lr, lbfgs_minimize)
from seirpinn.trainer import SamplingConfig, sample_collocation

from conftest import random_params


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def random_state(grid, rng, scale):
    shape = grid.shape
    return CompartmentFields(S=scale * rng.uniform(0, 1, shape),
                             E=scale * rng.uniform(0, 1, shape),
                             I=scale * rng.uniform(0, 1, shape),
                             R=scale * rng.uniform(0, 1, shape), grid=grid)


# -- solver structure preservation ------------------------------------------

def test_nsfd_positivity():
    with criterion("NSFD positivity: 200 random trials, 500 steps, values >= 0 exactly"):
        start = time.perf_counter()
        rng = np.random.default_rng(101)
        ks = (0.01, 0.1, 1.0)
        for trial in range(200):
            k = ks[trial % 3]
            if trial % 10 < 7:
                grid = GridSpec(dim=1, M=21, h=0.05, k=k, n_steps=500)
                step = nsfd_step_1d
            else:
                grid = GridSpec(dim=2, M=11, My=11, h=0.1, k=k, n_steps=500)
                step = nsfd_step_2d
            params = random_params(rng)
            state = random_state(grid, rng, scale=rng.uniform(0.1, 5.0))
            for _ in range(500):
                state = step(state, params, grid)
                assert state.min() >= 0.0
        assert time.perf_counter() - start < 60.0


def test_boundedness():
    with criterion("Boundedness: total population stays <= Lambda/mu + 1e-12, 50 trials"):
        rng = np.random.default_rng(102)
        for trial in range(50):
            params = random_params(rng)
            cap = params.Lambda / params.mu
            if trial % 2 == 0:
                grid = GridSpec(dim=1, M=21, h=0.05, k=0.1, n_steps=300)
                step = nsfd_step_1d
            else:
                grid = GridSpec(dim=2, M=11, My=11, h=0.1, k=0.1, n_steps=300)
                step = nsfd_step_2d
            state = random_state(grid, rng, scale=1.0)
            shrink = cap * rng.uniform(0.2, 1.0) / state.total().max()
            state = CompartmentFields(S=state.S * shrink, E=state.E * shrink,
                                      I=state.I * shrink, R=state.R * shrink,
                                      grid=grid)
            for _ in range(300):
                state = step(state, params, grid)
                assert state.total().max() <= cap + 1e-12


def test_population_identity():
    with criterion("Population identity: residual <= 1e-10 relative to Lambda, 20 solves"):
        rng = np.random.default_rng(103)
        for trial in range(20):
            while True:
                params = random_params(rng)
                if params.Lambda >= 0.5:
                    break
            if trial % 2 == 0:
                grid = GridSpec(dim=1, M=21, h=0.05, k=0.05, n_steps=25)
                domain = DomainSpec(dim=1, lengths=(1.0,), T=25 * 0.05)
            else:
                grid = GridSpec(dim=2, M=11, My=11, h=0.1, k=0.05, n_steps=25)
                domain = DomainSpec(dim=2, lengths=(1.0, 1.0), T=25 * 0.05)
            ic = build_initial_conditions(domain, grid, InitialConditionSpec())
            traj = solve(ic, params, grid)
            for prev, nxt in zip(traj.states, traj.states[1:]):
                res = population_identity_residual(prev, nxt, params, grid)
                assert res <= 1e-10 * params.Lambda


def test_convergence_order():
    with criterion("NSFD convergence order in [1.5, 2.5] along k = 0.5 h^2"):
        start = time.perf_counter()
        params = EpidemicParams(Lambda=1.0, mu=0.01, beta=0.4, p=0.3, delta=0.3,
                                eta=0.1, gamma=0.2, lambda_diff=0.05)
        domain = DomainSpec(dim=1, lengths=(1.0,), T=1.0)
        spec = InitialConditionSpec()

        def final_s(h):
            M = int(round(1.0 / h)) + 1
            k = 0.5 * h * h
            n = int(round(1.0 / k))
            grid = GridSpec.from_domain(domain, M=M, k=k, n_steps=n)
            ic = build_initial_conditions(domain, grid, spec)
            return solve(ic, params, grid, store_stride=n, T=1.0).states[-1].S

        ref = final_s(0.0025)
        hs = np.array([0.04, 0.02, 0.01])
        errs = []
        for h in hs:
            S = final_s(h)
            sub = ref[::int(round(h / 0.0025))]
            errs.append(np.sqrt(np.mean((S - sub) ** 2)))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        print(f"  observed order {slope:.3f}, errors {errs}")
        assert 1.5 <= slope <= 2.5
        assert time.perf_counter() - start < 120.0


# -- derivative and optimizer oracles ---------------------------------------

BASE_PARAMS = EpidemicParams(Lambda=1.0, mu=0.01, beta=0.4, p=0.3, delta=0.3,
                             eta=0.1, gamma=0.2, lambda_diff=0.05)
IC_SPEC = InitialConditionSpec()


def _oracle_model(dim, seed):
    domain = DomainSpec(dim=dim, lengths=(1.0,) * dim, T=5.0)
    config = NetworkConfig(dim=dim, n_hidden=2, width=6, n_frequencies=3)
    return PinnModel.xavier_init(config, domain, seed=seed), domain


def _fd_jets(model, t, x, h1=1e-4, h2=3e-4):
    dim = x.shape[0]
    f = lambda tt, xx: model.forward_np(np.array([tt]), xx[None, :])[0]

    def d1(g, h):
        return (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h)

    val = f(t, x)
    d_t = d1(lambda s: f(t + s, x), h1)
    d_x = np.zeros((4, dim))
    d_x2 = np.zeros((4, dim))
    for a in range(dim):
        ea = np.zeros(dim)
        ea[a] = 1.0
        g = lambda s: f(t, x + s * ea)
        d_x[:, a] = d1(g, h1)
        d_x2[:, a] = (-g(2 * h2) + 16 * g(h2) - 30 * val
                      + 16 * g(-h2) - g(-2 * h2)) / (12 * h2**2)
    return d_t, d_x, d_x2


def test_autodiff_jet_oracles():
    with criterion("Autodiff jets: 100 random (model, point) pairs within 1e-6 of FD"):
        start = time.perf_counter()
        rng = np.random.default_rng(104)
        rel = lambda a, b: np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))
        for mi in range(10):
            dim = 1 if mi % 2 == 0 else 2
            model, _ = _oracle_model(dim, seed=200 + mi)
            for _ in range(10):
                t = rng.uniform(0.2, 4.8)
                x = rng.uniform(0.1, 0.9, dim)
                jets = batch_jets(model, torch.tensor([t], dtype=DTYPE),
                                  torch.as_tensor(x[None, :], dtype=DTYPE))
                d_t, d_x, d_x2 = _fd_jets(model, t, x)
                assert rel(jets.d_t[0].numpy(), d_t) < 1e-6
                assert rel(jets.d_x[0].numpy(), d_x) < 1e-6
                assert rel(jets.d_x2[0].numpy(), d_x2) < 1e-6
        assert time.perf_counter() - start < 120.0


def test_autodiff_gradient_oracles():
    with criterion("Autodiff gradients: 20 full-loss gradients within 1e-5 of FD"):
        start = time.perf_counter()
        for seed in range(20):
            model, domain = _oracle_model(1, seed=300 + seed)
            mode = "inverse" if seed % 2 == 0 else "forward"
            ev = LossEvaluator(BASE_PARAMS, LossWeights(),
                               lambda x: initial_condition_values(domain, IC_SPEC, x),
                               mode=mode)
            rng = np.random.default_rng(seed)
            batch = sample_collocation(
                domain, SamplingConfig(n_interior=16, n_ic=8, n_boundary=8,
                                       probe_cells=4), rng)

            def evaluator(m):
                return ev.total(m, batch, None)[0]

            _, g = loss_gradient(model, evaluator)
            flat = model.get_flat()
            h = 1e-4
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                vals = []
                for s in (2 * h, h, -h, -2 * h):
                    v = flat.copy()
                    v[i] += s
                    model.set_flat(v)
                    vals.append(loss_gradient(model, evaluator)[0])
                fd[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
            model.set_flat(flat)
            keep = np.abs(g) > 1e-8
            assert keep.any()
            assert np.max(np.abs(g - fd)[keep] / np.abs(fd)[keep]) < 1e-5
        assert time.perf_counter() - start < 120.0


def test_optimizer_oracles():
    with criterion("Optimizer oracles: cosine endpoints, clipping, L-BFGS quadratic"):
        sched = CosineSchedule(lr_max=1e-3, lr_min=1e-5, total_epochs=777)
        assert cosine_lr(sched, 0) == 1e-3
        assert cosine_lr(sched, 777) == pytest.approx(1e-5, abs=1e-20)

        rng = np.random.default_rng(105)
        for _ in range(100):
            g = rng.normal(0, 10, rng.integers(1, 200))
            assert np.linalg.norm(clip_gradient(g, 1.0)) <= 1.0 + 1e-12

        Q = np.linalg.qr(rng.normal(size=(10, 10)))[0]
        A = Q @ np.diag(np.linspace(1.0, 40.0, 10)) @ Q.T
        x, _, it = lbfgs_minimize(LbfgsState(),
                                  lambda v: (float(0.5 * v @ A @ v), A @ v),
                                  rng.normal(size=10))
        assert np.linalg.norm(x) < 1e-8
        assert it <= 30


# -- desk-scale training runs -----------------------------------------------

def _write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_forward_desk_scale(tmp_path):
    with criterion("Forward run: rel L2 <= 5e-2 (S) and <= 1.5e-1 (E, I, R)"):
        start = time.perf_counter()
        out = tmp_path / "fwd"
        cfg = _write_config(tmp_path / "fwd.json", {
            "output_dir": str(out), "training": {"epochs": 3000}})
        assert main(["train", cfg]) == 0
        summary = json.loads((out / "run_summary.json").read_text())
        m = summary["metrics"]
        print("  rel L2: " + ", ".join(f"{c}={m[c]['rel_l2']:.3e}" for c in "SEIR"))
        assert m["S"]["rel_l2"] <= 5e-2
        for c in ("E", "I", "R"):
            assert m[c]["rel_l2"] <= 1.5e-1
        assert time.perf_counter() - start < 900.0


def test_inverse_desk_scale(tmp_path):
    with criterion("Inverse run: beta within 15%, gamma within 30%; "
                   "delta and lambda reported"):
        start = time.perf_counter()
        out = tmp_path / "inv"
        ds_cfg = _write_config(tmp_path / "ds.json", {"output_dir": str(out)})
        assert main(["make-dataset", ds_cfg]) == 0
        cfg = _write_config(tmp_path / "inv.json", {
            "output_dir": str(out), "training": {"epochs": 3000},
            "dataset": {"path": str(out / "dataset.csv")}})
        assert main(["train", cfg, "--inverse"]) == 0
        summary = json.loads((out / "run_summary.json").read_text())
        rec = summary["parameter_recovery"]
        print("  recovery: " + ", ".join(
            f"{k}={v['estimated']:.4f} ({v['rel_error'] * 100:.2f}%)"
            for k, v in rec.items()))
        assert rec["beta"]["rel_error"] <= 0.15
        assert rec["gamma"]["rel_error"] <= 0.30
        for name in ("delta", "lambda_diff"):
            assert np.isfinite(rec[name]["estimated"])
        assert time.perf_counter() - start < 1200.0


def test_2d_smoke(tmp_path):
    with criterion("2D run: losses finite, final total < initial / 10, "
                   "report well-formed"):
        start = time.perf_counter()
        out = tmp_path / "smoke"
        cfg = _write_config(tmp_path / "smoke.json", {
            "output_dir": str(out),
            "grid": {"dim": 2, "M": 31, "My": 31, "k": 5e-4, "store_stride": 100},
            "training": {"epochs": 1500},
            "dataset": {"n_d": 2000}})
        assert main(["train", cfg]) == 0
        rows = (out / "training_log.csv").read_text().strip().splitlines()[1:]
        totals = [float(r.split(",")[-1]) for r in rows]
        assert all(np.isfinite(totals))
        assert totals[-1] < totals[0] / 10.0
        summary = json.loads((out / "run_summary.json").read_text())
        for c in ("S", "E", "I", "R"):
            metrics = summary["metrics"][c]
            assert set(metrics) == {"rel_l2", "mae", "rmse", "max_error"}
            assert all(np.isfinite(v) for v in metrics.values())
        assert time.perf_counter() - start < 1800.0


def test_determinism(tmp_path):
    with criterion("Determinism: rerun with identical config + seed is byte-identical"):
        payload = {
            "grid": {"M": 21, "k": 0.05},
            "network": {"width": 8, "n_hidden": 2, "n_frequencies": 4},
            "sampling": {"n_interior": 32, "n_ic": 8, "n_boundary": 8,
                         "probe_cells": 4},
            "training": {"epochs": 10, "stage3_max_iter": 3},
            "dataset": {"n_d": 100},
        }
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            cfg = _write_config(tmp_path / f"{run}.json",
                                {**payload, "output_dir": str(out)})
            assert main(["simulate", cfg]) == 0
            assert main(["make-dataset", cfg]) == 0
            assert main(["train", cfg]) == 0
            outputs.append(out)
        a, b = outputs
        for rel in ("trajectory/manifest.json", "trajectory/S.csv",
                    "trajectory/I.csv", "dataset.csv", "training_log.csv",
                    "theta_history.csv", "checkpoint.ckpt"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        sa = json.loads((a / "run_summary.json").read_text())
        sb = json.loads((b / "run_summary.json").read_text())
        sa["config"]["output_dir"] = sb["config"]["output_dir"]
        assert sa == sb
