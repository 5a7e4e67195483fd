"""Staged training loop: Adam phases, adaptive collocation resampling,
early stopping, and L-BFGS refinement on a frozen batch."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .autodiff import AutodiffError
from .datagen import ErrorReport, error_report
from .losses import (ALL_COMPONENTS, CollocationBatch, LossEvaluator, LossWeights,
                     ObservationSet)
from .model import DomainSpec, EpidemicParams, InitialConditionSpec, initial_condition_values
from .network import DTYPE, PinnModel
from .nsfd import GridSpec, Trajectory
from .optim import AdamState, CosineSchedule, LbfgsState, adam_step, cosine_lr, lbfgs_minimize

STAGE1_COMPONENTS = ("data", "ic")


class TrainingError(RuntimeError):
    """Aborted training run (non-finite loss, missing dataset)."""


@dataclass(frozen=True)
class SamplingConfig:
    n_interior: int = 2048
    n_ic: int = 256
    n_boundary: int = 256
    alpha: float = 1.0
    uniform_fraction: float = 0.5
    probe_cells: int = 64

    def __post_init__(self):
        if min(self.n_interior, self.n_ic, self.n_boundary) <= 0:
            raise TrainingError("sample counts must be > 0")
        if self.alpha < 0 or not 0.0 <= self.uniform_fraction <= 1.0:
            raise TrainingError("need alpha >= 0 and uniform_fraction in [0, 1]")
        if self.probe_cells < 1:
            raise TrainingError("probe_cells must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "forward"
    epochs: int = 8000
    stage1_fraction: float = 0.1
    stage3_max_iter: int = 500
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    clip_norm: float = 1.0
    early_stop_tol: float = 1e-8
    early_stop_window: int = 500
    weights: LossWeights = field(default_factory=LossWeights)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("forward", "inverse"):
            raise TrainingError(f"unknown mode {self.mode!r}")
        if self.epochs <= 0:
            raise TrainingError("epochs must be > 0")
        if not 0.0 <= self.stage1_fraction <= 1.0:
            raise TrainingError("stage1_fraction must lie in [0, 1]")


@dataclass
class RunArtifacts:
    loss_history: list
    theta_history: list
    model: PinnModel
    config: TrainConfig
    timings: dict
    epochs_run: int
    stopped_early: bool = False


# -- collocation sampling --------------------------------------------------

def _probe_shape(dim: int, cells: int):
    return (cells,) * (1 + dim)


def sample_collocation(domain: DomainSpec, config: SamplingConfig,
                       rng: np.random.Generator,
                       residual_map: np.ndarray | None = None) -> CollocationBatch:
    """Mixture of uniform and residual-weighted interior points, plus uniform
    initial and boundary points.

    residual_map holds pointwise residual magnitudes on the probe grid over the
    space-time cylinder (axis 0 = time); a missing or all-zero map degrades to
    fully uniform sampling.
    """
    dim = domain.dim
    extents = np.array([domain.T] + list(domain.lengths))
    n_adapt = 0
    weights = None
    if residual_map is not None and config.alpha >= 0:
        w = np.asarray(residual_map, dtype=float) ** config.alpha
        total = w.sum()
        if total > 0 and np.all(np.isfinite(w)):
            weights = w.ravel() / total
            n_adapt = int(round((1.0 - config.uniform_fraction) * config.n_interior))
    n_uni = config.n_interior - n_adapt

    pts = rng.uniform(0.0, 1.0, size=(n_uni, 1 + dim)) * extents
    if n_adapt > 0:
        shape = _probe_shape(dim, config.probe_cells)
        cells = rng.choice(len(weights), size=n_adapt, p=weights)
        idx = np.stack(np.unravel_index(cells, shape), axis=1)
        offs = rng.uniform(0.0, 1.0, size=(n_adapt, 1 + dim))
        pts_a = (idx + offs) / config.probe_cells * extents
        pts = np.concatenate([pts, pts_a], axis=0)
    interior_t, interior_x = pts[:, 0], pts[:, 1:]

    ic_x = rng.uniform(0.0, 1.0, size=(config.n_ic, dim)) * np.array(domain.lengths)

    walls = rng.integers(0, 2 * dim, size=config.n_boundary)
    bt = rng.uniform(0.0, domain.T, size=config.n_boundary)
    bx = rng.uniform(0.0, 1.0, size=(config.n_boundary, dim)) * np.array(domain.lengths)
    normals = np.zeros((config.n_boundary, dim))
    for w_id in range(2 * dim):
        sel = walls == w_id
        axis, side = w_id // 2, w_id % 2
        bx[sel, axis] = side * domain.lengths[axis]
        normals[sel, axis] = -1.0 if side == 0 else 1.0
    return CollocationBatch(interior_t=interior_t, interior_x=interior_x, ic_x=ic_x,
                            boundary_t=bt, boundary_x=bx, boundary_normal=normals)


def _bin_residuals(residual_map: np.ndarray, batch: CollocationBatch,
                   magnitudes: np.ndarray, domain: DomainSpec, cells: int) -> np.ndarray:
    """Scatter per-point residual magnitudes into probe cells (mean per cell);
    cells not hit this epoch keep their previous value."""
    extents = np.array([domain.T] + list(domain.lengths))
    pts = np.column_stack([batch.interior_t, batch.interior_x])
    idx = np.minimum((pts / extents * cells).astype(int), cells - 1)
    flat = np.ravel_multi_index(tuple(idx.T), residual_map.shape)
    sums = np.zeros(residual_map.size)
    counts = np.zeros(residual_map.size)
    np.add.at(sums, flat, magnitudes)
    np.add.at(counts, flat, 1.0)
    new = residual_map.ravel().copy()
    hit = counts > 0
    new[hit] = sums[hit] / counts[hit]
    return new.reshape(residual_map.shape)


# -- training loop ---------------------------------------------------------

def _stage_for_epoch(epoch: int, config: TrainConfig) -> int:
    return 1 if epoch < round(config.stage1_fraction * config.epochs) else 2


def train(config: TrainConfig, model: PinnModel, domain: DomainSpec,
          params: EpidemicParams, ic_spec: InitialConditionSpec,
          dataset: ObservationSet | None = None) -> RunArtifacts:
    """Run Algorithm stages I-III and collect run artifacts.

    Forward mode keeps the physical parameters fixed at `params`; inverse mode
    trains them through the bounded transform and requires observations.
    """
    if config.mode == "inverse" and (dataset is None or len(dataset) == 0):
        raise TrainingError("inverse mode requires a non-empty dataset")

    t_start = time.perf_counter()
    evaluator = LossEvaluator(params, config.weights,
                              lambda x: initial_condition_values(domain, ic_spec, x),
                              mode=config.mode)
    rng = np.random.default_rng(config.seed)
    schedule = CosineSchedule(config.lr_max, config.lr_min, config.epochs)
    flat = model.get_flat()
    adam = AdamState.init(len(flat))
    raw_slice = model.raw_param_slice

    loss_history: list = []
    theta_history: list = []
    residual_map = None
    probe_shape = _probe_shape(domain.dim, config.sampling.probe_cells)
    stage2_best: list = []  # running best of the full loss, stage II only
    stopped_early = False
    epoch = -1

    for epoch in range(config.epochs):
        stage = _stage_for_epoch(epoch, config)
        components = STAGE1_COMPONENTS if stage == 1 else ALL_COMPONENTS
        batch = sample_collocation(domain, config.sampling, rng,
                                   residual_map if stage == 2 else None)
        model.set_flat(flat)
        model.zero_grad()
        try:
            total, breakdown = evaluator.total(model, batch, dataset,
                                               components=components)
        except AutodiffError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        _check_breakdown(breakdown, epoch)
        total.backward()
        grad = model.grad_flat()
        if config.mode == "forward":
            grad[raw_slice] = 0.0
        lr = cosine_lr(schedule, epoch)
        adam, flat = adam_step(adam, flat, grad, lr, clip_norm=config.clip_norm)

        if stage == 2 and evaluator.last_pde_residuals is not None:
            mags = torch.sqrt((evaluator.last_pde_residuals**2).sum(dim=1)).numpy()
            if residual_map is None:
                residual_map = np.zeros(probe_shape)
            residual_map = _bin_residuals(residual_map, batch, mags, domain,
                                          config.sampling.probe_cells)

        loss_history.append({"epoch": epoch, "stage": stage, "lr": lr, **_row(breakdown)})
        theta_history.append((epoch, *_current_theta(model, evaluator)))

        # stage I totals exclude the PDE terms, so they must not seed the
        # early-stopping window
        if stage == 2:
            stage2_best.append(min(stage2_best[-1], breakdown.total)
                               if stage2_best else breakdown.total)
            w = config.early_stop_window
            if len(stage2_best) > w:
                prev, cur = stage2_best[-1 - w], stage2_best[-1]
                if (prev - cur) / max(abs(prev), 1e-300) < config.early_stop_tol:
                    stopped_early = True
                    break
    model.set_flat(flat)
    t_adam = time.perf_counter()

    # Stage III: L-BFGS on the full loss with a frozen batch.
    if config.stage3_max_iter > 0:
        frozen = sample_collocation(domain, config.sampling, rng, residual_map)
        last = {}

        def loss_and_grad(x):
            model.set_flat(x)
            model.zero_grad()
            try:
                total, breakdown = evaluator.total(model, frozen, dataset,
                                                   components=ALL_COMPONENTS)
            except AutodiffError as exc:
                raise TrainingError(f"stage III: {exc}") from exc
            total.backward()
            g = model.grad_flat()
            if config.mode == "forward":
                g[raw_slice] = 0.0
            last["breakdown"] = breakdown
            return float(total.detach()), g

        def record(it, x, f, g):
            loss_history.append({"epoch": epoch + it, "stage": 3, "lr": 0.0,
                                 **_row(last["breakdown"])})
            model.set_flat(x)
            theta_history.append((epoch + it, *_current_theta(model, evaluator)))

        state = LbfgsState(max_iter=config.stage3_max_iter)
        flat, _, _ = lbfgs_minimize(state, loss_and_grad, flat, callback=record)
        model.set_flat(flat)

    timings = {"adam_seconds": t_adam - t_start,
               "total_seconds": time.perf_counter() - t_start}
    return RunArtifacts(loss_history=loss_history, theta_history=theta_history,
                        model=model, config=config, timings=timings,
                        epochs_run=len(loss_history), stopped_early=stopped_early)


def _row(breakdown) -> dict:
    return {"pde": breakdown.pde, "ic": breakdown.ic, "bc": breakdown.bc,
            "data": breakdown.data, "nonneg": breakdown.nonneg, "pop": breakdown.pop,
            "param": breakdown.param, "total": breakdown.total}


def _current_theta(model: PinnModel, evaluator: LossEvaluator) -> tuple:
    with torch.no_grad():
        return tuple(float(v) for v in evaluator.effective_theta(model))


def _check_breakdown(breakdown, epoch: int):
    for name, value in _row(breakdown).items():
        if not np.isfinite(value):
            raise TrainingError(f"epoch {epoch}: non-finite {name} loss component")


# -- evaluation against a reference trajectory -----------------------------

def predict_on_trajectory(model: PinnModel, traj: Trajectory, grid: GridSpec,
                          domain: DomainSpec, chunk: int = 8192) -> dict:
    """Model predictions on every stored level of the reference grid; returns
    dict name -> array of shape (levels, *grid.shape)."""
    pts = grid.node_points(domain)
    n_nodes = pts.shape[0]
    preds = {name: [] for name in ("S", "E", "I", "R")}
    for li, t in enumerate(traj.times):
        rows = []
        for lo in range(0, n_nodes, chunk):
            sub = pts[lo:lo + chunk]
            rows.append(model.forward_np(np.full(len(sub), t), sub))
        out = np.concatenate(rows, axis=0)
        for ci, name in enumerate(("S", "E", "I", "R")):
            preds[name].append(out[:, ci].reshape(grid.shape))
    return {name: np.stack(v) for name, v in preds.items()}


def evaluate(model: PinnModel, traj: Trajectory, grid: GridSpec,
             domain: DomainSpec) -> ErrorReport:
    """Per-compartment error metrics of the model on the reference grid."""
    preds = predict_on_trajectory(model, traj, grid, domain)
    truth = {name: np.stack([st.stack()[ci] for st in traj.states])
             for ci, name in enumerate(("S", "E", "I", "R"))}
    return error_report(preds, truth)
