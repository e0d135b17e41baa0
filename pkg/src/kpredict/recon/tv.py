"""Isotropic total variation with periodic boundaries.

The gradient of a complex image stacks forward differences of the real and
imaginary parts, and the per-pixel norm couples all four components.
"""

from __future__ import annotations

import numpy as np


def gradient(x: np.ndarray) -> np.ndarray:
    """Periodic forward differences along rows and columns, shape ``(2, h, w)``."""
    return np.stack([np.roll(x, -1, axis=-2) - x, np.roll(x, -1, axis=-1) - x])


def gradient_adjoint(p: np.ndarray) -> np.ndarray:
    return (np.roll(p[0], 1, axis=-2) - p[0]) + (np.roll(p[1], 1, axis=-1) - p[1])


def _magnitude(p: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(p.real**2 + p.imag**2, axis=0))


def tv_iso(x) -> float:
    return float(_magnitude(gradient(np.asarray(x))).sum())


def tv_prox_objective(x, v, threshold: float) -> float:
    d = np.asarray(x) - np.asarray(v)
    return 0.5 * float(np.sum(d.real**2 + d.imag**2)) + threshold * tv_iso(x)


def _project(p: np.ndarray) -> np.ndarray:
    return p / np.maximum(1.0, _magnitude(p))


def prox_tv_dual(v: np.ndarray, threshold: float, inner_iters: int, p0=None):
    """Fast gradient projection on the TV dual (Beck-Teboulle).

    Returns ``(x, p)`` where ``x = v - threshold * D^T p``; ``p`` can warm
    start the next call with the same threshold.
    """
    p = np.zeros((2,) + v.shape, dtype=v.dtype) if p0 is None else p0
    q = p
    tk = 1.0
    # ||D||^2 <= 8 for periodic forward differences in 2D
    step = 1.0 / (8.0 * threshold)
    for _ in range(inner_iters):
        x = v - threshold * gradient_adjoint(q)
        p_next = _project(q + step * gradient(x))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        q = p_next + ((tk - 1.0) / t_next) * (p_next - p)
        p, tk = p_next, t_next
    return v - threshold * gradient_adjoint(p), p


def prox_tv_iso(v, threshold: float, inner_iters: int = 100) -> np.ndarray:
    """Approximate ``argmin_x 0.5 ||x - v||^2 + threshold * TV(x)``.

    The result never has a larger prox objective than ``v`` itself.
    """
    v = np.asarray(v, dtype=np.complex128)
    if threshold <= 0:
        return v.copy()
    x, _ = prox_tv_dual(v, threshold, inner_iters)
    if tv_prox_objective(x, v, threshold) > tv_prox_objective(v, v, threshold):
        return v.copy()
    return x
