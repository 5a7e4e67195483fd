"""Continuous SEIR reaction-diffusion model: parameters, domains, kinetics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters or specifications."""


@dataclass(frozen=True)
class EpidemicParams:
    """The eight rates of the SEIR model with vital dynamics.

    Lambda      recruitment rate (population / time)
    mu          natural mortality rate (1 / time)
    beta        transmission coefficient (1 / (population * time))
    p           direct-exposure fraction, in [0, 1]
    delta       progression rate E -> I (1 / time)
    eta         recovery rate E -> R (1 / time)
    gamma       recovery rate I -> R (1 / time)
    lambda_diff diffusion coefficient (length^2 / time)
    """

    Lambda: float = 1.0
    mu: float = 0.01
    beta: float = 0.4
    p: float = 0.3
    delta: float = 0.3
    eta: float = 0.1
    gamma: float = 0.2
    lambda_diff: float = 0.05

    def __post_init__(self):
        for name in ("Lambda", "mu", "beta", "p", "delta", "eta", "gamma", "lambda_diff"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ModelError(f"parameter {name} must be finite and >= 0, got {v}")
        if self.mu <= 0:
            raise ModelError(f"mu must be > 0, got {self.mu}")
        if not 0.0 <= self.p <= 1.0:
            raise ModelError(f"p must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class DomainSpec:
    """Spatial extents and time horizon of the space-time cylinder."""

    dim: int
    lengths: tuple
    T: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ModelError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim:
            raise ModelError("lengths must have one entry per spatial dimension")
        if any(L <= 0 for L in self.lengths):
            raise ModelError("spatial extents must be > 0")
        if self.T <= 0:
            raise ModelError("T must be > 0")

    @property
    def Lx(self) -> float:
        return self.lengths[0]

    @property
    def Ly(self) -> float:
        if self.dim != 2:
            raise ModelError("Ly is only defined for 2D domains")
        return self.lengths[1]

    def contains(self, point) -> bool:
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        return len(pt) == self.dim and all(0.0 <= c <= L for c, L in zip(pt, self.lengths))


@dataclass(frozen=True)
class InitialConditionSpec:
    """Uniform susceptible/recovered levels plus a Gaussian seed of E and I.

    seed_center=None places the seed at the domain midpoint.
    """

    s0_level: float = 0.9
    seed_center: tuple | None = None
    seed_amplitude_E: float = 0.05
    seed_amplitude_I: float = 0.05
    seed_width: float = 0.05
    r0_level: float = 0.0

    def __post_init__(self):
        for name in ("s0_level", "seed_amplitude_E", "seed_amplitude_I", "r0_level"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")
        if self.seed_width <= 0:
            raise ModelError("seed_width must be > 0")

    def center_for(self, domain: DomainSpec) -> np.ndarray:
        if self.seed_center is None:
            return np.array([L / 2.0 for L in domain.lengths])
        c = np.atleast_1d(np.asarray(self.seed_center, dtype=float))
        if not domain.contains(c):
            raise ModelError(f"seed_center {tuple(c)} lies outside the domain")
        return c


@dataclass(frozen=True)
class CompartmentFields:
    """The four state fields sampled on a spatial grid."""

    S: np.ndarray
    E: np.ndarray
    I: np.ndarray
    R: np.ndarray
    grid: object = None

    def __post_init__(self):
        shapes = {self.S.shape, self.E.shape, self.I.shape, self.R.shape}
        if len(shapes) != 1:
            raise ModelError(f"compartment arrays must share one shape, got {shapes}")

    @property
    def shape(self):
        return self.S.shape

    def stack(self) -> np.ndarray:
        return np.stack([self.S, self.E, self.I, self.R])

    def total(self) -> np.ndarray:
        return self.S + self.E + self.I + self.R

    def min(self) -> float:
        return min(self.S.min(), self.E.min(), self.I.min(), self.R.min())


def reaction_terms(s, e, i, r, params: EpidemicParams):
    """Right-hand-side kinetics of the four compartments (diffusion excluded).

    Accepts scalars or arrays; returns (fS, fE, fI, fR).
    """
    P = params
    f_s = P.Lambda - P.beta * s * i - P.mu * s
    f_e = P.beta * P.p * s * i - (P.delta + P.eta + P.mu) * e
    f_i = P.beta * (1.0 - P.p) * s * i + P.delta * e - (P.gamma + P.mu) * i
    f_r = P.eta * e + P.gamma * i - P.mu * r
    return f_s, f_e, f_i, f_r


def carrying_capacity(params: EpidemicParams) -> float:
    """Asymptotic bound Lambda/mu on the total population."""
    if params.mu <= 0:
        raise ModelError("carrying capacity requires mu > 0")
    return params.Lambda / params.mu


def initial_condition_values(domain: DomainSpec, spec: InitialConditionSpec, points: np.ndarray):
    """Evaluate the initial fields at arbitrary points of shape (N, dim).

    Returns arrays (S0, E0, I0, R0) of shape (N,).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != domain.dim:
        raise ModelError("points dimension does not match domain")
    c = spec.center_for(domain)
    sq = np.sum((pts - c[None, :]) ** 2, axis=1)
    bump = np.exp(-sq / (2.0 * spec.seed_width**2))
    n = pts.shape[0]
    s0 = np.full(n, spec.s0_level)
    r0 = np.full(n, spec.r0_level)
    return s0, spec.seed_amplitude_E * bump, spec.seed_amplitude_I * bump, r0


def build_initial_conditions(domain: DomainSpec, grid, spec: InitialConditionSpec) -> CompartmentFields:
    """Sample the initial conditions on the solver grid."""
    pts = grid.node_points(domain)
    s0, e0, i0, r0 = initial_condition_values(domain, spec, pts)
    shape = grid.shape
    return CompartmentFields(
        S=s0.reshape(shape), E=e0.reshape(shape), I=i0.reshape(shape), R=r0.reshape(shape),
        grid=grid,
    )
