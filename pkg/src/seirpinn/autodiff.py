"""Exact derivatives of network outputs and losses.

Input derivatives (d/dt, d/dx, d2/dx2 per axis) are obtained by differentiating
the computational graph of the network itself, so they carry no finite-difference
truncation error; parameter gradients are exact reverse accumulation through the
same graph, including the paths that run through input-derivative terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .network import DTYPE, PinnModel


class AutodiffError(RuntimeError):
    """Non-finite values encountered during differentiation."""


@dataclass(frozen=True)
class InputJet:
    """Value and input derivatives of one scalar output at one point."""

    value: float
    d_t: float
    d_x: tuple
    d_xx: tuple


@dataclass(frozen=True)
class BatchJets:
    """Jets of all four outputs on a batch: value/d_t are (N, 4); spatial
    derivatives are (N, 4, dim)."""

    value: torch.Tensor
    d_t: torch.Tensor
    d_x: torch.Tensor
    d_x2: torch.Tensor

    @property
    def laplacian(self) -> torch.Tensor:
        return self.d_x2.sum(dim=2)


def batch_jets(model: PinnModel, t: torch.Tensor, x: torch.Tensor,
               create_graph: bool = False) -> BatchJets:
    """Jets of all compartments at a batch of points.

    t: (N,) or (N,1); x: (N, dim). With create_graph=True the jets remain
    differentiable w.r.t. the model parameters.
    """
    dim = model.config.dim
    t = t.reshape(-1, 1).detach().clone().requires_grad_(True)
    x = x.reshape(-1, dim).detach().clone().requires_grad_(True)
    u = model.forward(t, x)
    dts, dxs, dx2s = [], [], []
    for c in range(4):
        gt, gx = torch.autograd.grad(u[:, c].sum(), [t, x], create_graph=True)
        dts.append(gt.reshape(-1))
        dxs.append(gx)
        seconds = []
        for a in range(dim):
            keep = create_graph
            (gxx,) = torch.autograd.grad(gx[:, a].sum(), x, create_graph=keep,
                                         retain_graph=True)
            seconds.append(gxx[:, a])
        dx2s.append(torch.stack(seconds, dim=1))
    d_t = torch.stack(dts, dim=1)
    d_x = torch.stack(dxs, dim=1)
    d_x2 = torch.stack(dx2s, dim=0).permute(1, 0, 2)
    jets = BatchJets(value=u, d_t=d_t, d_x=d_x, d_x2=d_x2)
    if not create_graph:
        jets = BatchJets(value=u.detach(), d_t=d_t.detach(),
                         d_x=d_x.detach(), d_x2=d_x2.detach())
    for tensor in (jets.value, jets.d_t, jets.d_x, jets.d_x2):
        if not torch.isfinite(tensor).all():
            raise AutodiffError("non-finite jet entries")
    return jets


def evaluate_with_input_derivatives(model: PinnModel, t: float, x) -> list:
    """Per-compartment jets at a single point; returns four InputJet objects."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if len(pt) != model.config.dim:
        raise AutodiffError(f"point dim {len(pt)} does not match model dim {model.config.dim}")
    jets = batch_jets(model,
                      torch.tensor([t], dtype=DTYPE),
                      torch.as_tensor(pt[None, :], dtype=DTYPE))
    out = []
    for c in range(4):
        out.append(InputJet(value=float(jets.value[0, c]),
                            d_t=float(jets.d_t[0, c]),
                            d_x=tuple(float(v) for v in jets.d_x[0, c]),
                            d_xx=tuple(float(v) for v in jets.d_x2[0, c])))
    return out


def loss_gradient(model: PinnModel, loss_evaluator):
    """Evaluate a scalar loss functional of the model and its exact gradient.

    loss_evaluator(model) must return a torch scalar built from the model's
    parameters (possibly through batch_jets with create_graph=True). Returns
    (loss_value, flat gradient in the canonical parameter ordering).
    """
    model.zero_grad()
    loss = loss_evaluator(model)
    if not torch.is_tensor(loss):
        raise AutodiffError("loss evaluator must return a torch scalar")
    if not torch.isfinite(loss):
        raise AutodiffError(f"non-finite loss value {float(loss)}")
    loss.backward()
    grad = model.grad_flat()
    if not np.all(np.isfinite(grad)):
        raise AutodiffError("non-finite gradient entries")
    return float(loss.detach()), grad
