"""Time-variance noise model and prediction-noise injection.

All variances are per real/imaginary component: a complex sample with
component variance ``v`` has ``E|z|^2 = 2 v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .grid import as_grid
from .phantom import complex_normal, entry_rng

if TYPE_CHECKING:
    from .sampling import DensityMap

# relative slack before a prediction time counts as longer than the reference
_TIME_RTOL = 1e-12


@dataclass(frozen=True)
class NoiseSpec:
    """Acquisition noise parameters.

    ``sigma_ref_sq`` defaults to the model value
    ``sigma_acq_sq / (tau_acq * n_ref)``; pass a measured value to override it.
    """

    sigma_acq_sq: float
    tau_acq: float = 1.0
    n_ref: int = 1
    sigma_ref_sq: float | None = None

    def __post_init__(self):
        if not self.sigma_acq_sq > 0 or not self.tau_acq > 0 or self.n_ref < 1:
            raise ValueError("sigma_acq_sq and tau_acq must be positive, n_ref >= 1")
        if self.sigma_ref_sq is None:
            object.__setattr__(self, "sigma_ref_sq", self.sigma_acq_sq / self.tau_ref)
        elif self.sigma_ref_sq < 0:
            raise ValueError("sigma_ref_sq must be >= 0")

    @property
    def tau_ref(self) -> float:
        return self.tau_acq * self.n_ref

    @classmethod
    def from_reference(cls, sigma_ref_sq: float, n_ref: int = 1, tau_acq: float = 1.0):
        """NoiseSpec whose acquisition variance is implied by a measured reference variance."""
        return cls(sigma_ref_sq * tau_acq * n_ref, tau_acq, n_ref, sigma_ref_sq)


def acquisition_variance(noise: NoiseSpec, tau_k):
    """Component variance ``sigma_acq_sq / tau_k`` of a measurement of duration ``tau_k``."""
    tau_k = np.asarray(tau_k, dtype=float)
    if np.any(tau_k <= 0):
        raise ValueError("measurement time must be positive")
    out = noise.sigma_acq_sq / tau_k
    return float(out) if out.ndim == 0 else out


def added_noise_variance(noise: NoiseSpec, tau_pred):
    """Variance to add to reference data so it looks like a ``tau_pred`` acquisition.

    ``(tau_ref / tau_pred - 1) * sigma_ref_sq``; raises when ``tau_pred``
    exceeds the reference time, which would need negative variance.
    """
    tau_pred = np.asarray(tau_pred, dtype=float)
    if np.any(tau_pred <= 0):
        raise ValueError("prediction time must be positive")
    if np.any(tau_pred > noise.tau_ref * (1 + _TIME_RTOL)):
        raise ValueError(
            f"prediction time exceeds reference time ({tau_pred.max():.6g} > {noise.tau_ref:.6g})"
        )
    out = np.maximum(noise.tau_ref / tau_pred - 1.0, 0.0) * noise.sigma_ref_sq
    return float(out) if out.ndim == 0 else out


def inject_prediction_noise(ref_ksp, density: "DensityMap", noise: NoiseSpec, seed: int):
    """Add Gaussian noise to fully sampled reference k-space to mimic ``density``.

    Location ``k`` receives zero-mean complex noise with component variance
    ``added_noise_variance(noise, tau_acq * n_ref * rho_k)``.
    """
    from .sampling import expected_time_map

    ref_ksp = as_grid(ref_ksp, name="ref_ksp")
    if density.shape != ref_ksp.shape:
        raise ValueError(f"density shape {density.shape} != k-space shape {ref_ksp.shape}")
    var = added_noise_variance(noise, expected_time_map(density, noise))
    rng = entry_rng(seed, 0)
    return ref_ksp + complex_normal(rng, ref_ksp.shape, np.sqrt(var))


Rect = tuple[int, int, int, int]


def tile_patches(patch: Rect, patches: int) -> list[Rect]:
    """``patches`` disjoint copies of ``patch`` laid side by side to the right."""
    r0, c0, h, w = patch
    return [(r0, c0 + i * w, h, w) for i in range(patches)]


def estimate_noise_background(
    img, patch: Rect | Sequence[Rect] = (0, 0, 11, 11), patches: int = 1
) -> float:
    """Component noise variance from signal-free patches of an image.

    ``patch`` is ``(row0, col0, rows, cols)`` or a list of such rectangles.
    With a single rectangle and ``patches > 1`` the rectangle is tiled to the
    right. Each patch contributes the mean of its real and imaginary sample
    variances; the patch estimates are averaged.
    """
    img = np.asarray(img)
    if len(patch) == 4 and all(isinstance(v, (int, np.integer)) for v in patch):
        rects = tile_patches(tuple(patch), patches)
    else:
        rects = [tuple(p) for p in patch]
    h, w = img.shape
    estimates = []
    for r0, c0, ph, pw in rects:
        if r0 < 0 or c0 < 0 or ph < 2 or pw < 1 or r0 + ph > h or c0 + pw > w:
            raise ValueError(f"patch {(r0, c0, ph, pw)} out of bounds for {w}x{h} image")
        block = img[r0 : r0 + ph, c0 : c0 + pw]
        estimates.append(0.5 * (np.var(block.real, ddof=1) + np.var(block.imag, ddof=1)))
    return float(np.mean(estimates))


def corner_patches(shape, size: int = 11) -> list[Rect]:
    """The four ``size x size`` corner patches of an image."""
    h, w = shape
    return [(0, 0, size, size), (0, w - size, size, size),
            (h - size, 0, size, size), (h - size, w - size, size, size)]
