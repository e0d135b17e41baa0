"""Diagonal least-squares weights for the three data regimes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Regime = Literal["full", "undersampled", "prediction", "custom"]


@dataclass(frozen=True)
class WlsWeights:
    """Diagonal of ``W``; the data term is ``0.5 * sum(w**2 * |y - F m|**2)``."""

    w: np.ndarray
    regime: Regime = "custom"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2D, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < 0:
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")
        object.__setattr__(self, "w", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def scaled(self, factor: float) -> "WlsWeights":
        return WlsWeights(self.w * factor, self.regime)


def weights_full(counts) -> WlsWeights:
    """``sqrt(n_k)`` for data with at least one sample at every location."""
    counts = np.asarray(counts)
    if counts.min() < 1:
        raise ValueError(
            "fully sampled weights need n_k >= 1 everywhere; use weights_undersampled"
        )
    return WlsWeights(np.sqrt(counts.astype(float)), "full")


def weights_undersampled(pattern) -> WlsWeights:
    """0/1 weights from a binary sampling pattern."""
    pattern = np.asarray(pattern)
    if not np.all((pattern == 0) | (pattern == 1)):
        raise ValueError(
            "under-sampled weights need a binary pattern; stack counts such as "
            "{0, 144} must be rescaled to 0/1 first"
        )
    return WlsWeights(pattern.astype(float), "undersampled")


def weights_prediction(density) -> WlsWeights:
    """``sqrt(rho_k)`` for reference data carrying injected prediction noise."""
    rho = getattr(density, "rho", density)
    return WlsWeights(np.sqrt(np.asarray(rho, dtype=float)), "prediction")
