"""The five composite-loss components and their weighted total."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .autodiff import BatchJets, batch_jets
from .model import EpidemicParams
from .network import DTYPE, PinnModel

ALL_COMPONENTS = ("pde", "ic", "bc", "data", "constraints")
COMPARTMENT_INDEX = {"S": 0, "E": 1, "I": 2, "R": 3}


class LossInputError(ValueError):
    """Invalid loss inputs (bad shapes, empty mandatory batches)."""


@dataclass(frozen=True)
class LossWeights:
    pde: float = 1.0
    ic: float = 1.0
    bc: float = 1.0
    data: float = 1.0
    constraints: float = 1.0

    def __post_init__(self):
        if any(getattr(self, n) < 0 for n in ALL_COMPONENTS):
            raise LossInputError("loss weights must be >= 0")

    def as_dict(self):
        return {n: getattr(self, n) for n in ALL_COMPONENTS}


@dataclass(frozen=True)
class CollocationBatch:
    """Sampled interior, initial, and boundary points (numpy arrays).

    interior_t: (Nr,), interior_x: (Nr, dim); ic_x: (Nic, dim);
    boundary_t: (Nb,), boundary_x: (Nb, dim), boundary_normal: (Nb, dim)
    outward unit normals.
    """

    interior_t: np.ndarray
    interior_x: np.ndarray
    ic_x: np.ndarray
    boundary_t: np.ndarray
    boundary_x: np.ndarray
    boundary_normal: np.ndarray

    @property
    def n_interior(self):
        return len(self.interior_t)


@dataclass(frozen=True)
class ObservationSet:
    """Scattered observations (t, x, compartment, value) with an observed mask."""

    t: np.ndarray
    x: np.ndarray
    comp: np.ndarray
    value: np.ndarray
    mask: tuple = ("S", "E", "I", "R")

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.comp) == len(self.value) == n and self.x.shape[0] == n):
            raise LossInputError("observation arrays must have equal lengths")
        if not np.all(np.isfinite(self.value)):
            raise LossInputError("observation values must be finite")
        bad = set(np.unique(self.comp)) - set(COMPARTMENT_INDEX.values())
        if bad:
            raise LossInputError(f"unknown compartment codes {bad}")

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class LossBreakdown:
    pde: float = 0.0
    ic: float = 0.0
    bc: float = 0.0
    data: float = 0.0
    nonneg: float = 0.0
    pop: float = 0.0
    param: float = 0.0
    total: float = 0.0

    @property
    def constraints(self) -> float:
        return self.nonneg + self.pop + self.param


def pde_residuals_from_jets(jets: BatchJets, theta_p, fixed: EpidemicParams) -> torch.Tensor:
    """Assemble the four PDE residuals (N, 4) from jets and effective parameters.

    theta_p = (beta, delta, gamma, lambda_diff), torch tensor; Lambda, mu, p, eta
    come from the fixed parameter set.
    """
    beta, delta, gam, lam = theta_p[0], theta_p[1], theta_p[2], theta_p[3]
    P = fixed
    S, E, I, R = (jets.value[:, c] for c in range(4))
    lap = jets.laplacian
    r_s = jets.d_t[:, 0] - lam * lap[:, 0] - P.Lambda + beta * S * I + P.mu * S
    r_e = jets.d_t[:, 1] - lam * lap[:, 1] - beta * P.p * S * I + (delta + P.eta + P.mu) * E
    r_i = (jets.d_t[:, 2] - lam * lap[:, 2] - beta * (1.0 - P.p) * S * I
           - delta * E + (gam + P.mu) * I)
    r_r = jets.d_t[:, 3] - lam * lap[:, 3] - P.eta * E - gam * I + P.mu * R
    return torch.stack([r_s, r_e, r_i, r_r], dim=1)


def pde_residuals(model: PinnModel, theta_p, t, x, fixed: EpidemicParams,
                  create_graph: bool = False) -> torch.Tensor:
    """PDE residuals at arbitrary points; theta_p may be fixed values or the
    model's trainable transformed parameters."""
    tt = torch.as_tensor(np.atleast_1d(np.asarray(t, dtype=float)), dtype=DTYPE)
    xx = torch.as_tensor(np.atleast_2d(np.asarray(x, dtype=float)), dtype=DTYPE)
    jets = batch_jets(model, tt, xx, create_graph=create_graph)
    if not torch.is_tensor(theta_p):
        theta_p = torch.as_tensor(np.asarray(theta_p, dtype=float), dtype=DTYPE)
    return pde_residuals_from_jets(jets, theta_p, fixed)


def _mean_or_zero(v: torch.Tensor) -> torch.Tensor:
    if v.numel() == 0:
        return torch.zeros((), dtype=DTYPE)
    return v.mean()


class LossEvaluator:
    """Computes the weighted composite loss of a model on a sampled batch.

    mode 'inverse' draws (beta, delta, gamma, lambda_diff) from the model's
    bounded trainable parameters; mode 'forward' uses the fixed values.
    """

    def __init__(self, fixed_params: EpidemicParams, weights: LossWeights,
                 ic_targets_fn, mode: str = "forward", raw_param_penalty: float = 0.0):
        if mode not in ("forward", "inverse"):
            raise LossInputError(f"unknown mode {mode!r}")
        self.fixed = fixed_params
        self.weights = weights
        self.ic_targets_fn = ic_targets_fn
        self.mode = mode
        self.raw_param_penalty = raw_param_penalty
        self.last_pde_residuals = None

    def effective_theta(self, model: PinnModel) -> torch.Tensor:
        if self.mode == "inverse":
            return model.transformed_params()
        P = self.fixed
        return torch.tensor([P.beta, P.delta, P.gamma, P.lambda_diff], dtype=DTYPE)

    # -- individual components --------------------------------------------

    def loss_pde(self, residuals: torch.Tensor) -> torch.Tensor:
        return _mean_or_zero((residuals**2).sum(dim=1))

    def loss_ic(self, model: PinnModel, ic_x: np.ndarray) -> torch.Tensor:
        if len(ic_x) == 0:
            return torch.zeros((), dtype=DTYPE)
        t0 = torch.zeros(len(ic_x), dtype=DTYPE)
        xx = torch.as_tensor(ic_x, dtype=DTYPE)
        pred = model.forward(t0, xx)
        target = torch.as_tensor(np.stack(self.ic_targets_fn(ic_x), axis=1), dtype=DTYPE)
        return ((pred - target) ** 2).sum(dim=1).mean()

    def loss_bc(self, model: PinnModel, t: np.ndarray, x: np.ndarray,
                normal: np.ndarray, create_graph: bool) -> torch.Tensor:
        if len(t) == 0:
            return torch.zeros((), dtype=DTYPE)
        jets = batch_jets(model, torch.as_tensor(t, dtype=DTYPE),
                          torch.as_tensor(x, dtype=DTYPE), create_graph=create_graph)
        nrm = torch.as_tensor(normal, dtype=DTYPE)
        flux = (jets.d_x * nrm[:, None, :]).sum(dim=2)
        return (flux**2).sum(dim=1).mean()

    def loss_data(self, model: PinnModel, obs: ObservationSet) -> torch.Tensor:
        if obs is None or len(obs) == 0:
            return torch.zeros((), dtype=DTYPE)
        keep = np.isin(obs.comp, [COMPARTMENT_INDEX[c] for c in obs.mask])
        if not keep.any():
            return torch.zeros((), dtype=DTYPE)
        tt = torch.as_tensor(obs.t[keep], dtype=DTYPE)
        xx = torch.as_tensor(obs.x[keep], dtype=DTYPE)
        pred = model.forward(tt, xx)
        idx = torch.as_tensor(obs.comp[keep], dtype=torch.long)
        picked = pred.gather(1, idx[:, None]).squeeze(1)
        val = torch.as_tensor(obs.value[keep], dtype=DTYPE)
        return ((picked - val) ** 2).mean()

    def loss_constraints(self, model: PinnModel, values: torch.Tensor):
        """Returns (nonneg, pop, param) terms evaluated at interior points."""
        if values.numel() == 0:
            zero = torch.zeros((), dtype=DTYPE)
            return zero, zero, zero
        nonneg = (torch.clamp(-values, min=0.0) ** 2).sum(dim=1).mean()
        cap = self.fixed.Lambda / self.fixed.mu
        pop = (torch.clamp(values.sum(dim=1) - cap, min=0.0) ** 2).mean()
        if self.raw_param_penalty > 0.0 and self.mode == "inverse":
            param = self.raw_param_penalty * (model.raw_params**2).mean()
        else:
            param = torch.zeros((), dtype=DTYPE)
        return nonneg, pop, param

    # -- total -------------------------------------------------------------

    def total(self, model: PinnModel, batch: CollocationBatch,
              observations: ObservationSet | None = None,
              components: tuple = ALL_COMPONENTS,
              create_graph: bool = True):
        """Weighted total over the requested components.

        Components outside `components` are not evaluated (their breakdown
        entries are 0 and they contribute nothing to the gradient). Returns
        (torch scalar, LossBreakdown).
        """
        w = self.weights
        zero = torch.zeros((), dtype=DTYPE)
        l_pde = l_ic = l_bc = l_data = l_nn = l_pop = l_par = zero
        self.last_pde_residuals = None

        need_interior_values = "constraints" in components
        if "pde" in components and batch.n_interior > 0:
            jets = batch_jets(model, torch.as_tensor(batch.interior_t, dtype=DTYPE),
                              torch.as_tensor(batch.interior_x, dtype=DTYPE),
                              create_graph=create_graph)
            residuals = pde_residuals_from_jets(jets, self.effective_theta(model), self.fixed)
            l_pde = self.loss_pde(residuals)
            self.last_pde_residuals = residuals.detach()
            interior_values = jets.value
        elif need_interior_values and batch.n_interior > 0:
            interior_values = model.forward(torch.as_tensor(batch.interior_t, dtype=DTYPE),
                                            torch.as_tensor(batch.interior_x, dtype=DTYPE))
        else:
            interior_values = torch.zeros((0, 4), dtype=DTYPE)

        if "ic" in components:
            l_ic = self.loss_ic(model, batch.ic_x)
        if "bc" in components:
            l_bc = self.loss_bc(model, batch.boundary_t, batch.boundary_x,
                                batch.boundary_normal, create_graph)
        if "data" in components:
            l_data = self.loss_data(model, observations)
        if "constraints" in components:
            l_nn, l_pop, l_par = self.loss_constraints(model, interior_values)

        l_constraints = l_nn + l_pop + l_par
        total = (w.pde * l_pde + w.ic * l_ic + w.bc * l_bc
                 + w.data * l_data + w.constraints * l_constraints)
        def val(x):
            return float(x.detach()) if torch.is_tensor(x) else float(x)

        breakdown = LossBreakdown(
            pde=val(l_pde), ic=val(l_ic), bc=val(l_bc), data=val(l_data),
            nonneg=val(l_nn), pop=val(l_pop), param=val(l_par), total=val(total))
        return total, breakdown
