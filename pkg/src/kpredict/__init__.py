"""Image-quality prediction for under-sampled Fourier imaging."""

from .grid import MetricReport, fft2_centered, ifft2_centered, metric_report, mse, snr_db

__version__ = "0.1.0"

__all__ = [
    "MetricReport",
    "fft2_centered",
    "ifft2_centered",
    "metric_report",
    "mse",
    "snr_db",
]
