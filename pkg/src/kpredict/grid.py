"""Complex grids, centered unitary Fourier operators and image metrics.

A grid is a plain 2D ``numpy`` array of shape ``(height, width)``. Image and
k-space data share the same representation; k-space arrays always have DC at
index ``(height // 2, width // 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


def as_grid(data, *, name: str = "grid") -> np.ndarray:
    """Validate ``data`` as a complex grid and return it as ``complex128``.

    Grids must be 2D with even, positive dimensions and finite samples.
    """
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise GridError(f"{name} must be 2D, got shape {arr.shape}")
    h, w = arr.shape
    if h == 0 or w == 0 or h % 2 or w % 2:
        raise GridError(f"{name} dimensions must be even and positive, got {w}x{h}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains non-finite samples")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if a.shape != b.shape:
        (ha, wa), (hb, wb) = a.shape, b.shape
        raise GridError(
            f"dimension mismatch: {names[0]} is {wa}x{ha}, {names[1]} is {wb}x{hb}"
        )


def fft2_centered(img) -> np.ndarray:
    """Unitary 2D DFT with the zero frequency moved to the grid center."""
    img = np.asarray(img)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(img, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )


def ifft2_centered(ksp) -> np.ndarray:
    """Exact inverse (and adjoint) of :func:`fft2_centered`."""
    ksp = np.asarray(ksp)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(ksp, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )


def mse(a, b) -> float:
    """Mean over pixels of ``|a - b|**2``."""
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b)
    d = a - b
    return float(np.mean(d.real**2 + d.imag**2))


def snr_db(signal_level: float, noise_variance: float) -> float:
    """SNR in decibels, signal level over noise standard deviation."""
    if not noise_variance > 0:
        raise ValueError(f"noise_variance must be positive, got {noise_variance}")
    return 20.0 * float(np.log10(signal_level / np.sqrt(noise_variance)))


@dataclass
class MetricReport:
    mse: float
    snr_db: float
    extra: dict[str, float] = field(default_factory=dict)


def metric_report(estimate, truth, **extra: float) -> MetricReport:
    """MSE of ``estimate`` against ``truth`` plus an image SNR.

    The SNR uses the mean magnitude of ``truth`` as signal level and the MSE
    as the error variance; it is ``inf`` for a perfect estimate.
    """
    err = mse(estimate, truth)
    level = float(np.mean(np.abs(truth)))
    snr = snr_db(level, err) if err > 0 else float("inf")
    return MetricReport(mse=err, snr_db=snr, extra=dict(extra))
