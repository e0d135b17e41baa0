"""Sampling densities, random patterns and stack subset selection.

Conventions: arrays are ``(height, width)`` with k-space DC at the grid
center. Axis 0 is the phase-encode direction, so 1D patterns switch whole
rows on or off.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .noise import NoiseSpec
from .phantom import KSpaceStack, entry_rng


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMap:
    """Fractional measurement time per k-space location, all values in (0, 1]."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 2:
            raise SamplingError(f"density must be 2D, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)) or rho.min() <= 0 or rho.max() > 1:
            raise SamplingError("density values must lie in (0, 1]")
        object.__setattr__(self, "rho", rho)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape

    @property
    def acceleration(self) -> float:
        return 1.0 / float(self.rho.mean())

    @classmethod
    def uniform(cls, shape, acceleration: float) -> "DensityMap":
        return cls(np.full(shape, 1.0 / acceleration))


def _center_block(shape, size: int) -> tuple[slice, slice]:
    h, w = shape
    return (
        slice(h // 2 - size // 2, h // 2 - size // 2 + size),
        slice(w // 2 - size // 2, w // 2 - size // 2 + size),
    )


def _center_rows(h: int, lines: int) -> slice:
    return slice(h // 2 - lines // 2, h // 2 - lines // 2 + lines)


def normalized_radius(shape) -> np.ndarray:
    """Distance from the k-space center, scaled so the grid corners sit at 1."""
    h, w = shape
    ky = (np.arange(h) - h // 2) / (h / 2)
    kx = (np.arange(w) - w // 2) / (w / 2)
    r = np.hypot(ky[:, None], kx[None, :]) / np.sqrt(2.0)
    return np.clip(r, 0.0, 1.0)


def variable_density_map(
    width: int,
    height: int,
    acceleration: float,
    exponent: float = 0.0,
    calib: int = 0,
    rho_min: float = 0.02,
) -> DensityMap:
    """Polynomial-decay density ``s * (1 - r)**exponent`` with mean ``1/acceleration``.

    Values are clamped to ``[rho_min, 1]`` and the central ``calib x calib``
    block is set to 1; the scale ``s`` is found by bisection so the clamped
    map hits the requested mean.
    """
    if not acceleration > 1:
        raise SamplingError(f"acceleration must be > 1, got {acceleration}")
    if exponent < 0:
        raise SamplingError("exponent must be >= 0")
    if not 0 < rho_min < 1:
        raise SamplingError("rho_min must lie in (0, 1)")
    if calib < 0 or calib >= min(width, height):
        raise SamplingError(f"calib region {calib} does not fit a {width}x{height} grid")
    shape = (height, width)
    target = 1.0 / acceleration
    profile = (1.0 - normalized_radius(shape)) ** exponent
    block = _center_block(shape, calib)

    def build(scale):
        rho = np.clip(scale * profile, rho_min, 1.0)
        rho[block] = 1.0
        return rho

    lo_mean = build(0.0).mean()
    if lo_mean > target:
        raise SamplingError(
            f"infeasible density: calibration and rho_min floor alone give mean "
            f"{lo_mean:.4g} > 1/R = {target:.4g}"
        )
    lo, hi = 0.0, 1.0
    while build(hi).mean() < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if build(mid).mean() < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    rho = build(hi)
    if abs(rho.mean() - target) > 1e-6:
        raise SamplingError(f"density mean {rho.mean():.8f} did not converge to {target:.8f}")
    return DensityMap(rho)


def bernoulli_pattern(density: DensityMap, seed: int) -> np.ndarray:
    """Independent Bernoulli(rho_k) draw at every location, as an int array."""
    rng = entry_rng(seed, 0)
    return (rng.random(density.shape) < density.rho).astype(np.int64)


# -- Poisson disc -----------------------------------------------------------


def _dart_throw_2d(order, radius, skip):
    h, w = radius.shape
    taken = np.zeros((h, w), dtype=bool)
    rmax = int(np.ceil(radius.max()))
    offs = np.arange(-rmax, rmax + 1)
    dist = np.hypot(offs[:, None], offs[None, :])
    for flat in order:
        i, j = divmod(int(flat), w)
        if skip[i, j]:
            continue
        r = radius[i, j]
        if r <= 1.0:
            taken[i, j] = True
            continue
        ri = int(np.ceil(r)) - 1
        i0, i1 = max(i - ri, 0), min(i + ri + 1, h)
        j0, j1 = max(j - ri, 0), min(j + ri + 1, w)
        window = taken[i0:i1, j0:j1]
        if window.any():
            d = dist[i0 - i + rmax : i1 - i + rmax, j0 - j + rmax : j1 - j + rmax]
            if np.any(window & (d < r)):
                continue
        taken[i, j] = True
    return taken


def _dart_throw_1d(order, radius, skip):
    (n,) = radius.shape
    taken = np.zeros(n, dtype=bool)
    for i in order:
        if skip[i]:
            continue
        r = radius[i]
        ri = int(np.ceil(r)) - 1
        lo, hi = max(i - ri, 0), min(i + ri + 1, n)
        idx = np.nonzero(taken[lo:hi])[0] + lo
        if idx.size and np.any(np.abs(idx - i) < r):
            continue
        taken[i] = True
    return taken


def poisson_disc_radius(density: DensityMap, dims: str, scale: float) -> np.ndarray:
    """Local exclusion radius ``scale / sqrt(rho)`` (2D) or ``scale / rho`` (1D lines)."""
    if dims == "2d":
        return scale / np.sqrt(density.rho)
    return scale / line_density(density)


def line_density(density: DensityMap) -> np.ndarray:
    """Mean density of each phase-encode line."""
    return density.rho.mean(axis=1)


def poisson_disc_pattern(
    density: DensityMap,
    dims: Literal["1d", "2d"] = "2d",
    calib: int = 0,
    seed: int = 0,
    *,
    rate_tol: float = 0.03,
    max_rounds: int = 40,
    return_scale: bool = False,
):
    """Variable-density Poisson-disc pattern by grid dart throwing.

    Candidates are visited in a seeded random order and accepted when no
    earlier accepted candidate lies closer than the candidate's own radius,
    so every sampled pair outside the calibration region is at least
    ``min(r_i, r_j)`` apart. The radius scale is bisected until the overall
    sampling rate is within ``rate_tol`` of ``mean(rho)``.

    ``calib`` is a centered block size in 2D mode and a number of central
    lines in 1D mode; it is always fully sampled. With ``return_scale`` the
    radius scale of the returned pattern is returned too, see
    :func:`poisson_disc_radius`.
    """
    dims = dims.lower()
    if dims not in ("1d", "2d"):
        raise SamplingError(f"dims must be '1d' or '2d', got {dims!r}")
    h, w = density.shape
    target = float(density.rho.mean())
    order_rng = entry_rng(seed, 0)
    if dims == "2d":
        skip = np.zeros((h, w), dtype=bool)
        if calib:
            skip[_center_block((h, w), calib)] = True
        order = order_rng.permutation(h * w)
    else:
        skip = np.zeros(h, dtype=bool)
        if calib:
            skip[_center_rows(h, calib)] = True
        order = order_rng.permutation(h)

    def pattern_for(scale):
        radius = poisson_disc_radius(density, dims, scale)
        if dims == "2d":
            taken = _dart_throw_2d(order, radius, skip)
            taken |= skip
            return taken.astype(np.int64)
        taken = _dart_throw_1d(order, radius, skip) | skip
        return np.repeat(taken[:, None], w, axis=1).astype(np.int64)

    if np.all(density.rho == 1.0):
        full = np.ones((h, w), dtype=np.int64)
        return (full, 0.0) if return_scale else full

    # rate falls as the scale grows; bracket then bisect
    lo, hi = 0.0, 1.0
    best, best_err, best_scale = None, np.inf, 0.0
    for _ in range(max_rounds):
        pat = pattern_for(hi)
        rate = pat.mean()
        err = abs(rate - target) / target
        if err < best_err:
            best, best_err, best_scale = pat, err, hi
        if rate <= target:
            break
        lo, hi = hi, hi * 2.0
    for _ in range(max_rounds):
        if best_err <= rate_tol:
            break
        mid = 0.5 * (lo + hi)
        pat = pattern_for(mid)
        rate = pat.mean()
        err = abs(rate - target) / target
        if err < best_err:
            best, best_err, best_scale = pat, err, mid
        if rate > target:
            lo = mid
        else:
            hi = mid
    if best_err > 0.10:
        raise SamplingError(
            f"Poisson-disc packing reached rate {best.mean():.4f}, target {target:.4f}"
        )
    return (best, best_scale) if return_scale else best


# -- time maps and density estimation -----------------------------------------


def expected_time_map(density: DensityMap, noise: NoiseSpec) -> np.ndarray:
    """Expected measurement time ``tau_acq * n_ref * rho_k`` per location."""
    return noise.tau_acq * noise.n_ref * density.rho


def estimate_density(pattern, window: int = 11) -> DensityMap:
    """Local-average density of a sampling pattern.

    Sampled locations (any nonzero count) count as 1. The window mean uses
    mirror padding and is floored at ``1 / window**2`` so every location keeps
    a positive expected time.
    """
    if window < 3 or window % 2 == 0:
        raise SamplingError(f"window must be an odd integer >= 3, got {window}")
    binary = (np.asarray(pattern) > 0).astype(float)
    local = ndimage.uniform_filter(binary, size=window, mode="mirror")
    return DensityMap(np.clip(local, 1.0 / window**2, 1.0))


# -- stack subset selection -------------------------------------------------


def _location_budget(density: DensityMap) -> int:
    return int(round(density.rho.sum()))


def _capped_inclusion(rho: np.ndarray, total: float, cap: float = 1.0) -> np.ndarray:
    """Scale ``rho`` to sum to ``total`` with every value at most ``cap``."""
    if total > cap * rho.size:
        raise SamplingError(f"budget {total} exceeds {rho.size} locations at cap {cap}")
    capped = np.zeros(rho.shape, dtype=bool)
    p = np.empty(rho.shape)
    while True:
        free = ~capped
        p[capped] = cap
        p[free] = rho[free] * ((total - cap * capped.sum()) / rho[free].sum())
        new = free & (p > cap)
        if not new.any():
            return p
        capped |= new


def fully_determined_counts(density: DensityMap, n_ref: int) -> np.ndarray:
    """Integer sample counts following ``rho`` with an exact total budget.

    The budget is ``n_ref * round(sum(rho))`` samples, the same total an
    underdetermined pattern of ``round(sum(rho))`` fully averaged locations uses.
    Counts are split by largest remainder and capped at ``n_ref``.
    """
    budget = n_ref * _location_budget(density)
    ideal = _capped_inclusion(density.rho, budget, cap=float(n_ref))
    if ideal.min() < 0.5:
        k = np.unravel_index(int(np.argmin(ideal)), ideal.shape)
        raise SamplingError(
            f"fully determined sampling infeasible: location {k} would need "
            f"{ideal[k]:.3f} samples (fractional samples are not possible)"
        )
    counts = np.floor(ideal).astype(np.int64)
    short = budget - int(counts.sum())
    if short > 0:
        remainder = (ideal - counts).ravel()
        remainder[(counts >= n_ref).ravel()] = -1.0
        # stable sort keeps ties deterministic
        pick = np.argsort(-remainder, kind="stable")[:short]
        counts.ravel()[pick] += 1
    if counts.min() < 1:
        k = np.unravel_index(int(np.argmin(counts)), counts.shape)
        raise SamplingError(
            f"fully determined sampling left location {k} without samples "
            f"(ideal {ideal[k]:.3f}); fractional samples are not possible"
        )
    return counts


def underdetermined_locations(density: DensityMap, seed: int) -> np.ndarray:
    """Exactly ``round(sum(rho))`` locations with inclusion probability ~ rho.

    Systematic sampling over a random ordering: each location covers an
    interval of length equal to its inclusion probability, and one point per
    unit is drawn with a single uniform offset.
    """
    m = _location_budget(density)
    p = _capped_inclusion(density.rho, m).ravel()
    rng = entry_rng(seed, 1)
    order = rng.permutation(p.size)
    u = rng.random()
    edges = np.concatenate([[0.0], np.cumsum(p[order])])
    edges *= m / edges[-1]
    hits = np.floor(edges - u)
    chosen = order[np.diff(hits) > 0]
    mask = np.zeros(p.size, dtype=bool)
    mask[chosen] = True
    if mask.sum() != m:
        raise SamplingError(f"selected {mask.sum()} locations, expected {m}")
    return mask.reshape(density.shape)


def average_first(stack: KSpaceStack, counts: np.ndarray) -> np.ndarray:
    """Per-location mean of the first ``counts[k]`` stack entries (0 where unsampled)."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.max() > stack.count:
        raise SamplingError(f"counts up to {counts.max()} exceed stack size {stack.count}")
    csum = np.cumsum(stack.entries, axis=0)
    idx = np.maximum(counts - 1, 0)[None]
    total = np.take_along_axis(csum, idx, axis=0)[0]
    avg = np.zeros(counts.shape, dtype=np.complex128)
    nz = counts > 0
    avg[nz] = total[nz] / counts[nz]
    return avg


def select_stack_subset(
    stack: KSpaceStack,
    mode: Literal["reference", "fully_determined", "underdetermined"],
    density: DensityMap | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Choose per-location sample counts from a stack and average them.

    Returns ``(counts, averaged_kspace)``.
    """
    n_ref = stack.count
    if mode == "reference":
        counts = np.full(stack.shape, n_ref, dtype=np.int64)
        return counts, stack.mean()
    if density is None:
        raise SamplingError(f"mode {mode!r} needs a density map")
    if density.shape != stack.shape:
        raise SamplingError(f"density shape {density.shape} != stack shape {stack.shape}")
    if mode == "fully_determined":
        counts = fully_determined_counts(density, n_ref)
    elif mode == "underdetermined":
        counts = underdetermined_locations(density, seed).astype(np.int64) * n_ref
    else:
        raise SamplingError(f"unknown selection mode {mode!r}")
    return counts, average_first(stack, counts)
