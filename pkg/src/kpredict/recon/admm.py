"""Regularized weighted least squares by ADMM.

Solves ``min_m 0.5 * ||W y - W F m||^2 + lam * R(m)`` with ``F`` the centered
unitary DFT and ``W`` diagonal. Splitting ``m = z`` makes the data step
diagonal in k-space::

    m_k = (w_k**2 y_k + mu * F(z - u)_k) / (w_k**2 + mu)
    z   = prox_{(lam / mu) R}(m + u)
    u   = u + m - z
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..grid import as_grid, check_same_shape, fft2_centered, ifft2_centered
from .tv import prox_tv_dual, tv_iso, tv_prox_objective
from .wavelet import check_levels, prox_wavelet_cyclespin, wavelet_l1
from .weights import WlsWeights

Regularizer = Literal["tv", "wavelet", "none"]


class ReconError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverConfig:
    max_iters: int = 200
    admm_penalty: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-4
    cycle_spin_shifts: int = 8
    wavelet_levels: int = 4
    tv_inner_iters: int = 10
    # residual balancing: rescale mu by `penalty_factor` when one residual
    # exceeds the other by `balance_ratio`; 0 disables
    balance_ratio: float = 10.0
    penalty_factor: float = 2.0
    balance_every: int = 10

    def __post_init__(self):
        for name in ("max_iters", "cycle_spin_shifts", "wavelet_levels", "tv_inner_iters",
                     "balance_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("admm_penalty", "abs_tol", "rel_tol", "penalty_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.balance_ratio < 0:
            raise ValueError("balance_ratio must be >= 0")


@dataclass
class ReconProblem:
    y: np.ndarray
    weights: WlsWeights
    regularizer: Regularizer = "tv"
    lam: float = 0.0

    def __post_init__(self):
        self.y = as_grid(self.y, name="y")
        check_same_shape(self.y, self.weights.w, names=("y", "weights"))
        if self.regularizer not in ("tv", "wavelet", "none"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass
class ConvergenceTrace:
    objective: list[float] = field(default_factory=list)
    primal_residual: list[float] = field(default_factory=list)
    dual_residual: list[float] = field(default_factory=list)
    converged: bool = False
    final_penalty: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def rows(self):
        for i, row in enumerate(zip(self.objective, self.primal_residual, self.dual_residual)):
            yield (i + 1,) + row


def data_objective(m, prob: ReconProblem) -> float:
    """``0.5 * sum_k w_k**2 |y_k - (F m)_k|**2``."""
    r = prob.y - fft2_centered(m)
    return 0.5 * float(np.sum(prob.weights.w**2 * (r.real**2 + r.imag**2)))


def data_gradient(m, prob: ReconProblem) -> np.ndarray:
    """Gradient ``F^H W^2 (F m - y)`` with respect to the real and imaginary parts."""
    return ifft2_centered(prob.weights.w**2 * (fft2_centered(m) - prob.y))


def regularizer_value(m, prob: ReconProblem, cfg: SolverConfig) -> float:
    if prob.regularizer == "tv":
        return tv_iso(m)
    if prob.regularizer == "wavelet":
        return wavelet_l1(m, cfg.wavelet_levels, cfg.cycle_spin_shifts)
    return 0.0


def objective(m, prob: ReconProblem, cfg: SolverConfig | None = None) -> float:
    cfg = cfg or SolverConfig()
    reg = regularizer_value(m, prob, cfg) if prob.lam > 0 else 0.0
    return data_objective(m, prob) + prob.lam * reg


def least_squares_solution(prob: ReconProblem) -> np.ndarray:
    """Minimum-norm minimizer of the data term alone: zero-filled inverse DFT."""
    w2 = prob.weights.w**2
    return ifft2_centered(np.where(w2 > 0, prob.y, 0.0))


def admm_solve(prob: ReconProblem, cfg: SolverConfig | None = None, x0=None):
    """Minimize the regularized WLS objective; returns ``(image, trace)``.

    With ``lam == 0`` or no regularizer the problem is diagonal in k-space and
    the closed-form minimum-norm solution is returned. Otherwise ADMM runs until
    the primal and dual residuals meet ``abs_tol * sqrt(n) + rel_tol * scale``
    or ``max_iters`` is reached; ``trace.converged`` tells which. The returned
    image is the regularized split variable ``z``.
    """
    cfg = cfg or SolverConfig()
    trace = ConvergenceTrace()
    if prob.lam == 0 or prob.regularizer == "none":
        m = least_squares_solution(prob)
        trace.objective.append(data_objective(m, prob))
        trace.primal_residual.append(0.0)
        trace.dual_residual.append(0.0)
        trace.converged = True
        return m, trace
    if prob.regularizer == "wavelet":
        check_levels(prob.y.shape, cfg.wavelet_levels)

    mu = cfg.admm_penalty
    w2 = prob.weights.w**2
    wy = w2 * prob.y
    sqrt_n = np.sqrt(prob.y.size)

    z = np.zeros_like(prob.y) if x0 is None else as_grid(x0, name="x0").copy()
    u = np.zeros_like(prob.y)
    dual_state = None

    # overflow surfaces as a ReconError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(cfg.max_iters):
            t = prob.lam / mu
            m = ifft2_centered((wy + mu * fft2_centered(z - u)) / (w2 + mu))
            v = m + u
            z_old = z
            if prob.regularizer == "tv":
                z, dual_state = prox_tv_dual(v, t, cfg.tv_inner_iters, dual_state)
                # inexact prox; fall back to v if the step made things worse
                if tv_prox_objective(z, v, t) > tv_prox_objective(v, v, t):
                    z, dual_state = v.copy(), None
            else:
                z = prox_wavelet_cyclespin(v, t, cfg)
            u = u + m - z

            r = float(np.linalg.norm(m - z))
            s = mu * float(np.linalg.norm(z - z_old))
            trace.objective.append(objective(z, prob, cfg))
            trace.primal_residual.append(r)
            trace.dual_residual.append(s)
            if not (np.isfinite(r) and np.isfinite(s) and np.isfinite(trace.objective[-1])):
                raise ReconError(f"non-finite values at iteration {it + 1}", trace)

            eps_pri = sqrt_n * cfg.abs_tol + cfg.rel_tol * max(np.linalg.norm(m), np.linalg.norm(z))
            eps_dual = sqrt_n * cfg.abs_tol + cfg.rel_tol * mu * np.linalg.norm(u)
            if it > 0 and r <= eps_pri and s <= eps_dual:
                trace.converged = True
                break
            if cfg.balance_ratio and (it + 1) % cfg.balance_every == 0:
                if r > cfg.balance_ratio * s:
                    mu, u = mu * cfg.penalty_factor, u / cfg.penalty_factor
                elif s > cfg.balance_ratio * r:
                    mu, u = mu / cfg.penalty_factor, u * cfg.penalty_factor
    trace.final_penalty = mu
    return z, trace
