"""Modified Shepp-Logan phantom, resolution bars and noisy k-space stacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import as_grid, fft2_centered

# Modified (Toft) Shepp-Logan table, one row per ellipse:
# additive intensity, semi-axis x, semi-axis y, center x, center y, angle (deg).
# Coordinates span [-1, 1] on both axes with +y at the top row.
SHEPP_LOGAN_ELLIPSES = np.array(
    [
        [1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
        [-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
        [-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
        [-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
        [0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
        [0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
        [0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
        [0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
        [0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
        [0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
    ]
)


class PhantomError(ValueError):
    pass


def pixel_coordinates(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates ``(x, y)`` in [-1, 1], row 0 at ``y = +1``."""
    c = (np.arange(size) - (size - 1) / 2.0) / (size / 2.0)
    x, y = np.meshgrid(c, -c)
    return x, y


def inside_ellipse(x, y, a, b, x0, y0, phi_deg):
    phi = np.deg2rad(phi_deg)
    dx, dy = x - x0, y - y0
    u = dx * np.cos(phi) + dy * np.sin(phi)
    v = -dx * np.sin(phi) + dy * np.cos(phi)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def shepp_logan(size: int) -> np.ndarray:
    """Ten-ellipse modified Shepp-Logan phantom of shape ``(size, size)``.

    Ellipse membership is hard (no anti-aliasing) so the image is exactly
    piecewise constant. Values lie in [0, 1]; the imaginary part is zero.
    """
    if not isinstance(size, (int, np.integer)) or size < 32 or size % 2:
        raise PhantomError(f"size must be an even integer >= 32, got {size!r}")
    x, y = pixel_coordinates(size)
    img = np.zeros((size, size))
    for amp, a, b, x0, y0, phi in SHEPP_LOGAN_ELLIPSES:
        img[inside_ellipse(x, y, a, b, x0, y0, phi)] += amp
    # a few boundary pixels pick up -1e-16 style round-off
    img = np.clip(np.round(img, 12), 0.0, 1.0)
    return img.astype(np.complex128)


@dataclass(frozen=True)
class BarSpec:
    """Parallel vertical bars drawn inside ``region = (row0, col0, rows, cols)``.

    Bars start at ``col0`` and repeat every ``bar_width + gap`` columns.
    """

    count: int
    bar_width: int
    gap: int
    intensity: float
    region: tuple[int, int, int, int]

    def __post_init__(self):
        if self.count < 0 or self.bar_width < 1 or self.gap < 1:
            raise PhantomError("bar count must be >= 0, width and gap >= 1")
        if not 0.0 <= self.intensity < 1.0:
            raise PhantomError(f"bar intensity must be in [0, 1), got {self.intensity}")
        r0, c0, nr, nc = self.region
        if min(r0, c0) < 0 or nr < 1 or nc < 1:
            raise PhantomError(f"invalid bar region {self.region}")
        if self.span > nc:
            raise PhantomError(f"{self.count} bars need {self.span} columns, region has {nc}")

    @property
    def span(self) -> int:
        if self.count == 0:
            return 0
        return self.count * self.bar_width + (self.count - 1) * self.gap


def default_bars(size: int) -> BarSpec:
    """Five 2-pixel bars with 2-pixel gaps, centered in the lower half of the head.

    The bars sit in the flat band between the two dark inner ellipses and the
    three small ellipses near the bottom, roughly ``y`` in [-0.55, -0.43].
    """
    count, width, gap = 5, 2, 2
    span = count * width + (count - 1) * gap
    rows = max(size // 16, 4)
    row0 = int(round(0.715 * size))
    col0 = size // 2 - span // 2
    return BarSpec(count, width, gap, 0.0, (row0, col0, rows, span))


def add_resolution_bars(img, spec: BarSpec) -> np.ndarray:
    img = as_grid(img, name="img")
    h, w = img.shape
    r0, c0, nr, nc = spec.region
    if r0 + nr > h or c0 + nc > w:
        raise PhantomError(f"bar region {spec.region} exceeds {w}x{h} image")
    out = img.copy()
    pitch = spec.bar_width + spec.gap
    for i in range(spec.count):
        c = c0 + i * pitch
        out[r0 : r0 + nr, c : c + spec.bar_width] = spec.intensity
    return out


def bar_phantom(size: int) -> np.ndarray:
    """Shepp-Logan phantom with the default resolution bars."""
    return add_resolution_bars(shepp_logan(size), default_bars(size))


def entry_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for stream ``index`` of ``seed``.

    Streams are independent of each other and of the order they are drawn in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def complex_normal(rng: np.random.Generator, shape, sigma) -> np.ndarray:
    """Complex Gaussian with standard deviation ``sigma`` on each component."""
    z = rng.standard_normal((2,) + tuple(shape))
    return sigma * (z[0] + 1j * z[1])


@dataclass
class KSpaceStack:
    """``count`` noisy k-space acquisitions of one object, shape ``(count, h, w)``."""

    entries: np.ndarray
    noise_sigma: float
    seed: int

    @property
    def count(self) -> int:
        return self.entries.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape[1:]

    def mean(self) -> np.ndarray:
        return self.entries.mean(axis=0)


def make_kspace_stack(img, count: int, noise_sigma: float, seed: int) -> KSpaceStack:
    """Stack of ``fft2_centered(img) + noise`` with independent noise per entry.

    Entry ``i`` draws its noise from stream ``(seed, i)``, so any entry can be
    regenerated on its own.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    ksp = fft2_centered(as_grid(img, name="img"))
    entries = np.empty((count,) + ksp.shape, dtype=np.complex128)
    for i in range(count):
        entries[i] = ksp
        if noise_sigma > 0:
            entries[i] += complex_normal(entry_rng(seed, i), ksp.shape, noise_sigma)
    return KSpaceStack(entries=entries, noise_sigma=float(noise_sigma), seed=int(seed))
