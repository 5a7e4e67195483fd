"""Positivity-preserving NSFD time steppers for the SEIR reaction-diffusion system.

The spatial Laplacian is discretized in 'skew' form (old-time neighbors, new-time
center) and the reactive losses are treated implicitly, which makes every update a
ratio of a nonnegative numerator and a positive denominator. Zero-flux Neumann
boundaries are realized by mirror ghost nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import CompartmentFields, DomainSpec, EpidemicParams, ModelError


class SolverError(ValueError):
    """Invalid solver input (negative state, shape mismatch, bad grid)."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time discretization.

    M (and My in 2D) are node counts per axis, h the spatial step, k the time
    step, phi the nonstandard denominator function value phi(k) (identity choice
    phi(k)=k by default), n_steps the number of time steps.
    """

    dim: int
    M: int
    h: float
    k: float
    n_steps: int
    phi: float | None = None
    My: int | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise SolverError(f"dim must be 1 or 2, got {self.dim}")
        if self.M < 3 or (self.dim == 2 and (self.My is None or self.My < 3)):
            raise SolverError("need at least 3 nodes per axis")
        if self.h <= 0 or self.k <= 0:
            raise SolverError("h and k must be > 0")
        if self.phi is None:
            object.__setattr__(self, "phi", self.k)
        if self.phi <= 0:
            raise SolverError("phi(k) must be > 0")
        if self.n_steps < 0:
            raise SolverError("n_steps must be >= 0")

    @classmethod
    def from_domain(cls, domain: DomainSpec, M: int, k: float, n_steps: int | None = None,
                    My: int | None = None, phi: float | None = None) -> "GridSpec":
        """Build a grid covering the domain; checks n_steps * k == T."""
        h = domain.Lx / (M - 1)
        if domain.dim == 2:
            My = My if My is not None else M
            hy = domain.Ly / (My - 1)
            if abs(hy - h) > 1e-12 * max(h, hy):
                raise SolverError(f"grid requires hx == hy, got {h} vs {hy}")
        if n_steps is None:
            n_steps = int(round(domain.T / k))
        if abs(n_steps * k - domain.T) > 1e-9:
            raise SolverError(f"n_steps * k = {n_steps * k} does not match T = {domain.T}")
        return cls(dim=domain.dim, M=M, h=h, k=k, n_steps=n_steps, My=My, phi=phi)

    @property
    def shape(self):
        return (self.M,) if self.dim == 1 else (self.M, self.My)

    @property
    def mesh_ratio(self) -> float:
        """Generalized parabolic mesh ratio phi(k)/h^2."""
        return self.phi / self.h**2

    def axes(self, domain: DomainSpec):
        if self.dim == 1:
            return (np.linspace(0.0, domain.Lx, self.M),)
        return (np.linspace(0.0, domain.Lx, self.M), np.linspace(0.0, domain.Ly, self.My))

    def node_points(self, domain: DomainSpec) -> np.ndarray:
        """All grid nodes as an (n_nodes, dim) array, row-major over axes."""
        ax = self.axes(domain)
        if self.dim == 1:
            return ax[0][:, None]
        X, Y = np.meshgrid(ax[0], ax[1], indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class Trajectory:
    """Stored time levels of a solver run."""

    times: np.ndarray
    states: list
    store_stride: int = 1

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise SolverError("times and states lengths differ")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise SolverError("times must be strictly increasing")

    def __len__(self):
        return len(self.states)


def _neighbor_sum(u: np.ndarray, dim: int) -> np.ndarray:
    """Sum of grid neighbors with mirror ghost nodes (U_-1 = U_1, U_M = U_{M-2})."""
    if dim == 1:
        up = np.pad(u, 1, mode="reflect")
        return up[:-2] + up[2:]
    up = np.pad(u, 1, mode="reflect")
    return up[:-2, 1:-1] + up[2:, 1:-1] + up[1:-1, :-2] + up[1:-1, 2:]


def _check_state(state: CompartmentFields, grid: GridSpec):
    if state.shape != grid.shape:
        raise SolverError(f"state shape {state.shape} does not match grid {grid.shape}")
    if state.min() < 0:
        raise SolverError("state contains negative entries")


def _nsfd_step(state: CompartmentFields, params: EpidemicParams, grid: GridSpec) -> CompartmentFields:
    _check_state(state, grid)
    P, lam = params, params.lambda_diff
    phi, r = grid.phi, grid.mesh_ratio
    diag = 2 * grid.dim * lam * r
    S, E, I, R = state.S, state.E, state.I, state.R

    S1 = (S + lam * r * _neighbor_sum(S, grid.dim) + phi * P.Lambda) / (
        1.0 + diag + phi * (P.beta * I + P.mu))
    E1 = (E + lam * r * _neighbor_sum(E, grid.dim) + phi * P.beta * P.p * S1 * I) / (
        1.0 + diag + phi * (P.delta + P.eta + P.mu))
    I1 = (I + lam * r * _neighbor_sum(I, grid.dim) + phi * (P.beta * (1.0 - P.p) * S1 * I + P.delta * E1)) / (
        1.0 + diag + phi * (P.gamma + P.mu))
    R1 = (R + lam * r * _neighbor_sum(R, grid.dim) + phi * (P.eta * E1 + P.gamma * I1)) / (
        1.0 + diag + phi * P.mu)
    return CompartmentFields(S=S1, E=E1, I=I1, R=R1, grid=grid)


def nsfd_step_1d(state: CompartmentFields, params: EpidemicParams, grid: GridSpec) -> CompartmentFields:
    """One sequentially explicit NSFD update in 1D (S then E then I then R)."""
    if grid.dim != 1:
        raise SolverError("nsfd_step_1d requires a 1D grid")
    return _nsfd_step(state, params, grid)


def nsfd_step_2d(state: CompartmentFields, params: EpidemicParams, grid: GridSpec) -> CompartmentFields:
    """One sequentially explicit NSFD update in 2D (five-point skew Laplacian)."""
    if grid.dim != 2:
        raise SolverError("nsfd_step_2d requires a 2D grid")
    return _nsfd_step(state, params, grid)


def solve(ic: CompartmentFields, params: EpidemicParams, grid: GridSpec,
          store_stride: int = 1, T: float | None = None) -> Trajectory:
    """Run n_steps NSFD updates, storing every store_stride-th level plus t=0, t=T."""
    if T is not None and abs(grid.n_steps * grid.k - T) > 1e-9:
        raise SolverError(f"n_steps * k = {grid.n_steps * grid.k} does not match T = {T}")
    _check_state(ic, grid)
    if store_stride < 1:
        raise SolverError("store_stride must be >= 1")
    times = [0.0]
    states = [ic]
    state = ic
    for n in range(1, grid.n_steps + 1):
        state = _nsfd_step(state, params, grid)
        if n % store_stride == 0 or n == grid.n_steps:
            times.append(n * grid.k)
            states.append(state)
    return Trajectory(times=np.array(times), states=states, store_stride=store_stride)


def population_identity_residual(prev: CompartmentFields, next: CompartmentFields,
                                 params: EpidemicParams, grid: GridSpec) -> float:
    """Max-abs residual of the discrete total-population equation over interior nodes.

    (N^{n+1} - N^n)/phi - lambda * skew Laplacian of N - Lambda + mu * N^{n+1},
    where the skew Laplacian uses level-n neighbors and the level-n+1 center.
    """
    if prev.shape != next.shape or prev.shape != grid.shape:
        raise SolverError("state shapes do not match grid")
    Nn = prev.total()
    Nn1 = next.total()
    lap = (_neighbor_sum(Nn, grid.dim) - 2 * grid.dim * Nn1) / grid.h**2
    res = (Nn1 - Nn) / grid.phi - params.lambda_diff * lap - params.Lambda + params.mu * Nn1
    interior = res[1:-1] if grid.dim == 1 else res[1:-1, 1:-1]
    return float(np.max(np.abs(interior)))
