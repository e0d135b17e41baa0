"""Seeded experiment harnesses: stack comparison, noise/rate grid, prediction workflow.

All reconstructions inside one experiment share a weight scale expressed in
units of the reference measurement time, so a single ``lam`` means the same
prior strength for every mode:

* reference: ``w = 1``
* fully determined: ``w = sqrt(n_k / n_ref)``
* underdetermined (``n_k`` in ``{0, n_ref}``): binary ``w``
* prediction: ``w = sqrt(rho_k)``
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .grid import ifft2_centered, metric_report
from .noise import NoiseSpec, corner_patches, estimate_noise_background, inject_prediction_noise
from .phantom import bar_phantom, make_kspace_stack, shepp_logan
from .recon import (
    ReconError,
    ReconProblem,
    SolverConfig,
    admm_solve,
    weights_full,
    weights_prediction,
    weights_undersampled,
)
from .sampling import (
    DensityMap,
    estimate_density,
    poisson_disc_pattern,
    select_stack_subset,
    variable_density_map,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("reference", "fully_determined", "underdetermined", "prediction")


@dataclass
class DensityParams:
    exponent: float = 0.25
    calib: int = 16
    rho_min: float = 0.02


@dataclass
class ExperimentConfig:
    """Parameters of one harness run; seeds derive from ``master_seed``.

    ``lam`` fixes the regularization weight. When it is ``None`` the weight is
    ``lam_factor * noise_sigma / sqrt(stack_count)``, i.e. proportional to the
    noise standard deviation of the reference data, but at least ``lam_floor``
    so noiseless runs stay regularized.
    """

    name: str = "experiment"
    grid_size: int = 64
    stack_count: int = 144
    accelerations: list[float] = field(default_factory=lambda: [2, 4, 8, 12])
    noise_sigmas: list[float] = field(default_factory=lambda: [1.0, 5.0, 8.0])
    repetitions: int = 20
    density: DensityParams = field(default_factory=DensityParams)
    regularizer: str = "tv"
    lam: float | None = None
    lam_factor: float = 0.33
    lam_floor: float = 1e-3
    solver: SolverConfig = field(default_factory=SolverConfig)
    master_seed: int = 0
    output_dir: str | None = None
    signal_scale: float = 100.0
    bars: bool = True
    include_reference: bool = False
    save_images: bool = True
    pattern: str = "poisson2d"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if isinstance(self.density, dict):
            self.density = DensityParams(**self.density)
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.pattern not in ("poisson1d", "poisson2d"):
            raise ValueError(f"pattern must be 'poisson1d' or 'poisson2d', got {self.pattern!r}")
        if self.regularizer not in ("tv", "wavelet", "none"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {self.schema_version}")

    def lam_for(self, sigma: float) -> float:
        if self.lam is not None:
            return float(self.lam)
        return max(self.lam_factor * sigma / np.sqrt(self.stack_count), self.lam_floor)

    def ground_truth(self) -> np.ndarray:
        img = bar_phantom(self.grid_size) if self.bars else shepp_logan(self.grid_size)
        return self.signal_scale * img

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed from ``master_seed`` and integer keys, independent of run order."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


RECORD_COLUMNS = (
    "experiment",
    "rep",
    "mode",
    "sigma_added",
    "acceleration",
    "seed",
    "mse",
    "snr_db",
    "iterations",
    "status",
    "wall_seconds",
)


@dataclass
class RunRecord:
    experiment: str
    rep: int
    mode: str
    sigma_added: float
    acceleration: float
    seed: int
    mse: float
    snr_db: float
    iterations: int
    status: str = "converged"
    wall_seconds: float = 0.0
    image: np.ndarray | None = field(default=None, repr=False, compare=False)

    def row(self) -> list[str]:
        return [
            self.experiment,
            str(self.rep),
            self.mode,
            repr(float(self.sigma_added)),
            repr(float(self.acceleration)),
            str(self.seed),
            repr(float(self.mse)),
            repr(float(self.snr_db)),
            str(self.iterations),
            self.status,
            f"{self.wall_seconds:.6f}",
        ]

    @property
    def failed(self) -> bool:
        return self.status == "failed"


def _solve(y, weights, cfg: ExperimentConfig, lam: float):
    """Reconstruct and classify the run as converged, max_iters or failed."""
    prob = ReconProblem(y, weights, cfg.regularizer, lam)
    t0 = time.perf_counter()
    try:
        img, trace = admm_solve(prob, cfg.solver)
    except ReconError as exc:
        log.warning("reconstruction failed: %s", exc)
        iters = exc.trace.iterations if exc.trace is not None else 0
        return None, iters, "failed", time.perf_counter() - t0
    status = "converged" if trace.converged else "max_iters"
    return img, trace.iterations, status, time.perf_counter() - t0


def _record(cfg, truth, mode, rep, sigma, accel, seed, y, weights, lam) -> RunRecord:
    img, iters, status, wall = _solve(y, weights, cfg, lam)
    if img is None:
        err, snr = float("nan"), float("nan")
    else:
        report = metric_report(img, truth)
        err, snr = report.mse, report.snr_db
    return RunRecord(
        cfg.name, rep, mode, float(sigma), float(accel), seed, err, snr, iters, status, wall,
        image=np.abs(img) if (img is not None and cfg.save_images) else None,
    )


def stack_modes(stack, density: DensityMap, noise: NoiseSpec, under_seed: int, pred_seed: int):
    """Data and weights for the four comparison modes drawn from one stack.

    Returns a dict ``mode -> (y, weights)``. The prediction density is the
    achieved fully determined count map divided by ``n_ref``, so both modes
    carry the same expected measurement time at every location.
    """
    n_ref = stack.count
    counts_ref, y_ref = select_stack_subset(stack, "reference")
    counts_fd, y_fd = select_stack_subset(stack, "fully_determined", density)
    counts_ud, y_ud = select_stack_subset(stack, "underdetermined", density, under_seed)
    pred_density = DensityMap(counts_fd / n_ref)
    y_pred = inject_prediction_noise(y_ref, pred_density, noise, pred_seed)
    scale = 1.0 / np.sqrt(n_ref)
    return {
        "reference": (y_ref, weights_full(counts_ref).scaled(scale)),
        "fully_determined": (y_fd, weights_full(counts_fd).scaled(scale)),
        "underdetermined": (y_ud, weights_undersampled(counts_ud // n_ref)),
        "prediction": (y_pred, weights_prediction(pred_density)),
    }


def _stack_noise(sigma: float, n_ref: int) -> NoiseSpec:
    # stack entries carry component variance sigma**2 per sample (tau_acq = 1)
    if sigma == 0:
        return NoiseSpec(sigma_acq_sq=1.0, tau_acq=1.0, n_ref=n_ref, sigma_ref_sq=0.0)
    return NoiseSpec(sigma_acq_sq=sigma**2, tau_acq=1.0, n_ref=n_ref)


def run_stack_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Reference / fully determined / prediction / underdetermined comparison.

    Uses ``cfg.accelerations[0]`` and ``cfg.noise_sigmas[0]``; each repetition
    draws a fresh stack.
    """
    truth = cfg.ground_truth()
    accel = float(cfg.accelerations[0])
    sigma = float(cfg.noise_sigmas[0])
    d = cfg.density
    density = variable_density_map(cfg.grid_size, cfg.grid_size, accel, d.exponent, d.calib, d.rho_min)
    lam = cfg.lam_for(sigma)
    records = []
    for rep in range(cfg.repetitions):
        seed = derive_seed(cfg.master_seed, 0, rep)
        stack = make_kspace_stack(truth, cfg.stack_count, sigma, seed)
        data = stack_modes(
            stack, density, _stack_noise(sigma, cfg.stack_count),
            derive_seed(seed, 1), derive_seed(seed, 2),
        )
        for mode in MODES:
            y, w = data[mode]
            records.append(_record(cfg, truth, mode, rep, sigma, accel, seed, y, w, lam))
        log.info("stack rep %d done", rep)
    return sort_records(records)


def run_noise_rate_grid(cfg: ExperimentConfig) -> list[RunRecord]:
    """Fully determined, underdetermined and prediction runs over sigma x R cells.

    The stack for a given ``(sigma, rep)`` is shared by all accelerations.
    With ``include_reference`` one reference run per ``(sigma, rep)`` is added,
    recorded with ``acceleration = 1``.
    """
    truth = cfg.ground_truth()
    d = cfg.density
    densities = [
        variable_density_map(cfg.grid_size, cfg.grid_size, float(r), d.exponent, d.calib, d.rho_min)
        for r in cfg.accelerations
    ]
    records = []
    for si, sigma in enumerate(cfg.noise_sigmas):
        noise = _stack_noise(sigma, cfg.stack_count)
        lam = cfg.lam_for(sigma)
        for rep in range(cfg.repetitions):
            seed = derive_seed(cfg.master_seed, 1, si, rep)
            stack = make_kspace_stack(truth, cfg.stack_count, sigma, seed)
            for ri, (accel, density) in enumerate(zip(cfg.accelerations, densities)):
                cell_seed = derive_seed(seed, ri)
                data = stack_modes(
                    stack, density, noise, derive_seed(cell_seed, 1), derive_seed(cell_seed, 2)
                )
                modes = ["fully_determined", "underdetermined", "prediction"]
                if cfg.include_reference and ri == 0:
                    y, w = data["reference"]
                    records.append(_record(cfg, truth, "reference", rep, sigma, 1.0, seed, y, w, lam))
                for mode in modes:
                    y, w = data[mode]
                    records.append(
                        _record(cfg, truth, mode, rep, sigma, float(accel), cell_seed, y, w, lam)
                    )
            log.info("grid sigma=%g rep %d done", sigma, rep)
    return sort_records(records)


@dataclass
class PredictionResult:
    prediction: np.ndarray
    undersampled: np.ndarray
    reference: np.ndarray
    metrics: dict[str, Any]
    density: DensityMap
    noise: NoiseSpec
    traces: dict[str, Any]


def run_prediction_workflow(
    ref_ksp,
    pattern,
    noise: NoiseSpec | None = None,
    *,
    regularizer: str = "tv",
    lam: float = 0.0,
    solver: SolverConfig | None = None,
    density: DensityMap | None = None,
    truth=None,
    seed: int = 0,
    window: int = 11,
) -> PredictionResult:
    """Predict the image quality of an under-sampling pattern from reference data.

    When ``noise`` is ``None`` the reference noise variance is measured from
    the four 11x11 corner patches of the direct inverse DFT of ``ref_ksp``
    (single reference sample, ``n_ref = 1``). The density defaults to a local
    average of ``pattern``. Metrics compare against ``truth`` when given and
    against the reference image otherwise.
    """
    solver = solver or SolverConfig()
    pattern = np.asarray(pattern)
    reference = ifft2_centered(ref_ksp)
    if noise is None:
        sigma_ref_sq = estimate_noise_background(reference, corner_patches(reference.shape))
        noise = NoiseSpec.from_reference(max(sigma_ref_sq, np.finfo(float).tiny))
    if density is None:
        density = DensityMap(np.ones(pattern.shape)) if pattern.min() > 0 else estimate_density(pattern, window)
    y_pred = inject_prediction_noise(ref_ksp, density, noise, seed)
    pred, pred_trace = admm_solve(ReconProblem(y_pred, weights_prediction(density), regularizer, lam), solver)
    binary = (pattern > 0).astype(int)
    under, under_trace = admm_solve(
        ReconProblem(np.asarray(ref_ksp) * binary, weights_undersampled(binary), regularizer, lam), solver
    )
    target = reference if truth is None else truth
    metrics = {
        "prediction": metric_report(pred, target),
        "undersampled": metric_report(under, target),
        "reference": metric_report(reference, target),
    }
    return PredictionResult(
        pred, under, reference, metrics, density, noise,
        {"prediction": pred_trace, "undersampled": under_trace},
    )


def run_prediction_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Prediction workflow on the phantom with Poisson-disc patterns per acceleration.

    Reference data is one noisy acquisition with component standard deviation
    ``noise_sigmas[0]``; its noise level is measured from background patches.
    """
    truth = cfg.ground_truth()
    sigma = float(cfg.noise_sigmas[0])
    d = cfg.density
    # reference weights are 1, so the scale is one sample's noise level
    lam_of = cfg.lam if cfg.lam is not None else max(cfg.lam_factor * sigma, cfg.lam_floor)
    records = []
    for rep in range(cfg.repetitions):
        seed = derive_seed(cfg.master_seed, 2, rep)
        ref = make_kspace_stack(truth, 1, sigma, seed).entries[0]
        for ri, accel in enumerate(cfg.accelerations):
            cell_seed = derive_seed(seed, ri)
            density = variable_density_map(cfg.grid_size, cfg.grid_size, float(accel), d.exponent, d.calib, d.rho_min)
            dims = "1d" if cfg.pattern == "poisson1d" else "2d"
            pattern = poisson_disc_pattern(density, dims, d.calib, derive_seed(cell_seed, 1))
            t0 = time.perf_counter()
            res = run_prediction_workflow(
                ref, pattern, regularizer=cfg.regularizer, lam=lam_of, solver=cfg.solver,
                truth=truth, seed=derive_seed(cell_seed, 2),
            )
            wall = time.perf_counter() - t0
            for mode, img, key in (
                ("reference", res.reference, "reference"),
                ("prediction", res.prediction, "prediction"),
                ("underdetermined", res.undersampled, "undersampled"),
            ):
                m = res.metrics[key]
                trace = res.traces.get(key)
                iters = trace.iterations if trace is not None else 0
                status = "converged" if trace is None or trace.converged else "max_iters"
                records.append(RunRecord(
                    cfg.name, rep, mode, sigma, float(accel), cell_seed, m.mse, m.snr_db,
                    iters, status, wall, image=np.abs(img) if cfg.save_images else None,
                ))
    return sort_records(records)


_MODE_ORDER = {m: i for i, m in enumerate(MODES)}


def sort_records(records):
    """Canonical order: experiment, sigma, acceleration, rep, mode."""
    return sorted(
        records,
        key=lambda r: (r.experiment, r.sigma_added, r.acceleration, r.rep, _MODE_ORDER.get(r.mode, 99)),
    )


def summarize(records) -> list[dict[str, Any]]:
    """Per (experiment, sigma, acceleration, mode) mean and std of MSE.

    Failed runs are counted but excluded from the statistics.
    """
    cells: dict[tuple, list[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.experiment, r.sigma_added, r.acceleration, r.mode), []).append(r)
    out = []
    for (exp, sigma, accel, mode), rs in sorted(
        cells.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], _MODE_ORDER.get(kv[0][3], 99))
    ):
        ok = np.array([r.mse for r in rs if not r.failed])
        out.append({
            "experiment": exp,
            "sigma_added": sigma,
            "acceleration": accel,
            "mode": mode,
            "runs": len(rs),
            "failed": len(rs) - ok.size,
            "mean_mse": float(ok.mean()) if ok.size else None,
            "std_mse": float(ok.std(ddof=1)) if ok.size > 1 else 0.0,
        })
    return out


def cell_means(records) -> dict[tuple, float]:
    """``(sigma, acceleration, mode) -> mean MSE`` over non-failed runs."""
    return {
        (c["sigma_added"], c["acceleration"], c["mode"]): c["mean_mse"] for c in summarize(records)
    }


def window_image(img: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max window to 16 bits; a constant image maps to mid-gray."""
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.full(img.shape, 32768, dtype=np.uint16), lo, hi
    scaled = np.round((img - lo) / (hi - lo) * 65535.0)
    return scaled.astype(np.uint16), lo, hi


def image_name(r: RunRecord) -> str:
    return f"{r.experiment}_s{r.sigma_added:g}_R{r.acceleration:g}_rep{r.rep:03d}_{r.mode}.png"


def write_png16(path: Path, img16: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(img16.astype("<u2")).save(path, format="PNG")


def emit_report(records, output_dir) -> dict[str, Path]:
    """Write ``records.csv``, ``summary.json`` and one windowed PNG per reconstruction.

    CSV columns follow :data:`RECORD_COLUMNS`. Each PNG has a ``.json`` sidecar
    with the window bounds in image units.
    """
    if not records:
        raise ValueError("no records to report")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "records.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RECORD_COLUMNS)
            for r in records:
                writer.writerow(r.row())
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summarize(records), indent=2, sort_keys=True) + "\n")
        img_dir = out / "images"
        for r in records:
            if r.image is None:
                continue
            img_dir.mkdir(exist_ok=True)
            img16, lo, hi = window_image(r.image)
            name = image_name(r)
            write_png16(img_dir / name, img16)
            (img_dir / (name + ".json")).write_text(
                json.dumps({"window_min": lo, "window_max": hi}, sort_keys=True) + "\n"
            )
    except OSError as exc:
        raise OSError(f"writing report to {out}: {exc}") from exc
    return {"records": csv_path, "summary": summary_path}
