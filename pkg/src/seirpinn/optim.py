"""From-scratch optimizers: Adam with cosine annealing and gradient clipping,
and L-BFGS with a strong-Wolfe line search."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class OptimError(RuntimeError):
    """Optimizer failure (repeated line-search breakdown, bad inputs)."""


# -- learning-rate schedule and clipping -----------------------------------

@dataclass(frozen=True)
class CosineSchedule:
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    total_epochs: int = 1

    def __post_init__(self):
        if not self.lr_max >= self.lr_min > 0:
            raise OptimError("need lr_max >= lr_min > 0")
        if self.total_epochs < 1:
            raise OptimError("total_epochs must be >= 1")


def cosine_lr(schedule: CosineSchedule, epoch: int) -> float:
    """Annealed rate: lr_min + (lr_max - lr_min) (1 + cos(pi e / E)) / 2."""
    s = schedule
    frac = min(max(epoch / s.total_epochs, 0.0), 1.0)
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + np.cos(np.pi * frac))


def clip_gradient(g: np.ndarray, max_norm: float = 1.0) -> np.ndarray:
    """Rescale g to Euclidean norm max_norm when it exceeds it."""
    norm = float(np.linalg.norm(g))
    if norm <= max_norm:
        return g
    return g * (max_norm / norm)


# -- Adam ------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int, **kw) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **kw)


def adam_step(state: AdamState, params: np.ndarray, g: np.ndarray, lr: float,
              clip_norm: float | None = 1.0):
    """One bias-corrected Adam update; clipping is applied before the moments.

    Returns (new_state, new_params); inputs are not mutated.
    """
    if g.shape != params.shape or g.shape != state.m.shape:
        raise OptimError("gradient/parameter/state shapes differ")
    if clip_norm is not None:
        g = clip_gradient(g, clip_norm)
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step_count=t), new_params


# -- L-BFGS ----------------------------------------------------------------

@dataclass
class LbfgsState:
    history: list = field(default_factory=list)  # (s, y, rho) with s.y > 0
    window: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    max_iter: int = 500
    gtol: float = 1e-9
    ftol: float = 1e-12

    def push(self, s: np.ndarray, y: np.ndarray):
        sy = float(s @ y)
        if sy > 0.0:
            self.history.append((s, y, 1.0 / sy))
            if len(self.history) > self.window:
                self.history.pop(0)


def two_loop_direction(g: np.ndarray, history: list) -> np.ndarray:
    """Two-loop recursion; -g when the history is empty."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _cubic_step(a_lo, f_lo, g_lo, a_hi, f_hi) -> float:
    # quadratic interpolation with bisection fallback
    denom = 2.0 * (f_hi - f_lo - g_lo * (a_hi - a_lo))
    if abs(denom) > 1e-300:
        a = a_lo - g_lo * (a_hi - a_lo) ** 2 / denom
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        if lo + 0.1 * (hi - lo) <= a <= hi - 0.1 * (hi - lo):
            return a
    return 0.5 * (a_lo + a_hi)


def strong_wolfe_search(f_and_g, x: np.ndarray, f0: float, g0: np.ndarray,
                        d: np.ndarray, c1: float = 1e-4, c2: float = 0.9,
                        alpha0: float = 1.0, max_evals: int = 25):
    """Line search satisfying the strong Wolfe conditions along d.

    f_and_g(x) -> (f, g). Returns (alpha, f_new, g_new) or None on failure.
    """
    dg0 = float(g0 @ d)
    if dg0 >= 0.0:
        return None

    def phi(alpha):
        f, g = f_and_g(x + alpha * d)
        return f, g, float(g @ d)

    def zoom(a_lo, f_lo, dg_lo, a_hi, f_hi, evals):
        for _ in range(max_evals - evals):
            a = _cubic_step(a_lo, f_lo, dg_lo, a_hi, f_hi)
            f, g, dg = phi(a)
            if f > f0 + c1 * a * dg0 or f >= f_lo:
                a_hi, f_hi = a, f
            else:
                if abs(dg) <= -c2 * dg0:
                    return a, f, g
                if dg * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, dg_lo = a, f, dg
            if abs(a_hi - a_lo) < 1e-16:
                break
        return None

    a_prev, f_prev, dg_prev = 0.0, f0, dg0
    a = alpha0
    for i in range(max_evals):
        f, g, dg = phi(a)
        if f > f0 + c1 * a * dg0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, dg_prev, a, f, i + 1)
        if abs(dg) <= -c2 * dg0:
            return a, f, g
        if dg >= 0.0:
            return zoom(a, f, dg, a_prev, f_prev, i + 1)
        a_prev, f_prev, dg_prev = a, f, dg
        a *= 2.0
    return None


def lbfgs_minimize(state: LbfgsState, loss_and_grad, params: np.ndarray,
                   callback=None):
    """Quasi-Newton minimization on a fixed objective.

    loss_and_grad(x) -> (f, g) must be deterministic for the whole run.
    Returns (final_params, final_loss, iterations). Terminates on the
    max-norm gradient tolerance, relative loss stagnation, or max_iter;
    a failed line search falls back to a steepest-descent step once, and
    aborts with a diagnostic when the fallback fails repeatedly.
    """
    x = np.asarray(params, dtype=float).copy()
    f, g = loss_and_grad(x)
    fallback_used = False
    it = 0
    for it in range(1, state.max_iter + 1):
        if np.max(np.abs(g)) < state.gtol:
            break
        d = two_loop_direction(g, state.history)
        result = strong_wolfe_search(loss_and_grad, x, f, g, d,
                                     c1=state.c1, c2=state.c2)
        if result is None:
            d = -g
            scale = 1.0 / max(1.0, float(np.linalg.norm(g)))
            result = strong_wolfe_search(loss_and_grad, x, f, g, d,
                                         c1=state.c1, c2=state.c2, alpha0=scale)
            if result is None:
                if fallback_used:
                    raise OptimError(
                        f"line search failed twice at iteration {it}; |g|_inf="
                        f"{np.max(np.abs(g)):.3e}, f={f:.6e}")
                fallback_used = True
                break
            fallback_used = True
        alpha, f_new, g_new = result
        x_new = x + alpha * d
        state.push(x_new - x, g_new - g)
        rel_change = abs(f - f_new) / max(abs(f), 1e-300)
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(it, x, f, g)
        if rel_change < state.ftol:
            break
    return x, f, it
