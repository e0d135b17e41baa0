"""Periodic orthogonal Daubechies-4 (four-tap) wavelet transform and cycle spinning.

Transforms act on the last two axes, so a stack of images is processed in
one call. Coefficients use the Mallat layout: after ``levels`` steps the
approximation band is the top-left ``(h >> levels, w >> levels)`` block.
"""

from __future__ import annotations

import numpy as np

_S3 = np.sqrt(3.0)
D4_LOWPASS = np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * np.sqrt(2.0))
D4_HIGHPASS = np.array([(-1) ** k * D4_LOWPASS[len(D4_LOWPASS) - 1 - k] for k in range(4)])


def _analysis(x, axis):
    n = x.shape[axis]
    even = [slice(None)] * x.ndim
    even[axis] = slice(0, n, 2)
    even = tuple(even)
    lo = 0.0
    hi = 0.0
    for k in range(len(D4_LOWPASS)):
        xk = np.roll(x, -k, axis=axis)[even]
        lo = lo + D4_LOWPASS[k] * xk
        hi = hi + D4_HIGHPASS[k] * xk
    return np.concatenate([lo, hi], axis=axis)


def _synthesis(c, axis):
    n = c.shape[axis]
    half = n // 2
    lo = np.take(c, np.arange(half), axis=axis)
    hi = np.take(c, np.arange(half, n), axis=axis)
    even = [slice(None)] * c.ndim
    even[axis] = slice(0, n, 2)
    even = tuple(even)
    out = np.zeros_like(c)
    for k in range(len(D4_LOWPASS)):
        up = np.zeros_like(c)
        up[even] = D4_LOWPASS[k] * lo + D4_HIGHPASS[k] * hi
        out += np.roll(up, k, axis=axis)
    return out


def check_levels(shape, levels: int) -> None:
    h, w = shape[-2:]
    step = 2**levels
    if levels < 1 or h % step or w % step:
        raise ValueError(f"grid {w}x{h} is not divisible by 2**{levels}")
    if (h >> levels) < 2 or (w >> levels) < 2:
        raise ValueError(f"{levels} levels leave a coarsest band smaller than 2x2")


def dwt2(x, levels: int) -> np.ndarray:
    x = np.asarray(x)
    check_levels(x.shape, levels)
    c = np.array(x, dtype=np.result_type(x.dtype, float), copy=True)
    h, w = c.shape[-2:]
    for _ in range(levels):
        band = c[..., :h, :w]
        band = _analysis(band, axis=-1)
        c[..., :h, :w] = _analysis(band, axis=-2)
        h, w = h // 2, w // 2
    return c


def idwt2(c, levels: int) -> np.ndarray:
    c = np.asarray(c)
    check_levels(c.shape, levels)
    x = np.array(c, copy=True)
    h, w = x.shape[-2] >> (levels - 1), x.shape[-1] >> (levels - 1)
    for _ in range(levels):
        band = _synthesis(x[..., :h, :w], axis=-2)
        x[..., :h, :w] = _synthesis(band, axis=-1)
        h, w = h * 2, w * 2
    return x


def detail_mask(shape, levels: int) -> np.ndarray:
    """True on detail coefficients, False on the coarsest approximation band."""
    h, w = shape[-2:]
    mask = np.ones((h, w), dtype=bool)
    mask[: h >> levels, : w >> levels] = False
    return mask


def soft_threshold(c, threshold: float):
    """Complex soft threshold by magnitude, ``c * max(0, 1 - t / |c|)``."""
    mag = np.abs(c)
    scale = np.maximum(0.0, 1.0 - threshold / np.maximum(mag, np.finfo(float).tiny))
    return c * scale


def _shifts(n: int):
    return [(sy, sx) for sy in range(n) for sx in range(n)]


def _shifted_stack(v, n):
    return np.stack([np.roll(v, (-sy, -sx), axis=(0, 1)) for sy, sx in _shifts(n)])


def prox_wavelet_cyclespin(v, threshold: float, cfg=None, *, levels=None, shifts=None):
    """Translation-averaged wavelet soft thresholding.

    Each of ``shifts**2`` circular shifts of ``v`` is transformed, its detail
    coefficients soft-thresholded, inverse transformed and shifted back; the
    results are averaged.
    """
    levels = levels if levels is not None else (cfg.wavelet_levels if cfg else 4)
    shifts = shifts if shifts is not None else (cfg.cycle_spin_shifts if cfg else 8)
    v = np.asarray(v, dtype=np.complex128)
    check_levels(v.shape, levels)
    stack = _shifted_stack(v, shifts)
    coeffs = dwt2(stack, levels)
    mask = detail_mask(v.shape, levels)
    coeffs[:, mask] = soft_threshold(coeffs[:, mask], threshold)
    rec = idwt2(coeffs, levels)
    out = np.zeros_like(v)
    for (sy, sx), r in zip(_shifts(shifts), rec):
        out += np.roll(r, (sy, sx), axis=(0, 1))
    return out / len(rec)


def wavelet_l1(x, levels: int = 4, shifts: int = 8) -> float:
    """Detail-band l1 norm averaged over the cycle-spinning shifts."""
    x = np.asarray(x)
    coeffs = dwt2(_shifted_stack(x, shifts), levels)
    mask = detail_mask(x.shape, levels)
    return float(np.abs(coeffs[:, mask]).sum() / coeffs.shape[0])
