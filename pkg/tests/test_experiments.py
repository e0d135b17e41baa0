import csv
import json

import numpy as np
import pytest
from PIL import Image

from kpredict.experiments import (
    RECORD_COLUMNS,
    DensityParams,
    ExperimentConfig,
    RunRecord,
    cell_means,
    derive_seed,
    emit_report,
    run_noise_rate_grid,
    run_prediction_experiment,
    run_prediction_workflow,
    run_stack_experiment,
    stack_modes,
    summarize,
    window_image,
)
from kpredict.grid import fft2_centered, ifft2_centered
from kpredict.noise import NoiseSpec
from kpredict.phantom import make_kspace_stack, shepp_logan
from kpredict.recon import SolverConfig
from kpredict.sampling import variable_density_map

SMALL = dict(
    grid_size=32,
    repetitions=2,
    accelerations=[2, 4],
    noise_sigmas=[1.0, 5.0],
    density=DensityParams(0.25, 8, 0.02),
    solver=SolverConfig(max_iters=30),
)


def strip_wall(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    idx = rows[0].index("wall_seconds")
    return [r[:idx] + r[idx + 1 :] for r in rows]


def test_derive_seed():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    seeds = {derive_seed(0, 1, k) for k in range(100)} | {derive_seed(1, 1, k) for k in range(100)}
    assert len(seeds) == 200
    assert 0 <= derive_seed(5) < 2**64


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(name="x", **SMALL)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.from_json(path)
    assert back == cfg
    assert isinstance(back.density, DensityParams) and isinstance(back.solver, SolverConfig)
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"nmae": "typo"})
    with pytest.raises(ValueError):
        ExperimentConfig(repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig(schema_version=99)
    with pytest.raises(ValueError):
        ExperimentConfig(pattern="spiral")


def test_lam_rule():
    cfg = ExperimentConfig(lam_factor=0.5, stack_count=16)
    assert cfg.lam_for(4.0) == pytest.approx(0.5)
    assert cfg.lam_for(0.0) == cfg.lam_floor
    assert ExperimentConfig(lam=2.0).lam_for(8.0) == 2.0


def test_stack_modes_budget_parity_and_weights():
    truth = 100 * shepp_logan(32)
    stack = make_kspace_stack(truth, 144, 1.0, 0)
    density = variable_density_map(32, 32, 4, 0.25, 8, 0.02)
    data = stack_modes(stack, density, NoiseSpec(1.0, 1.0, 144), 1, 2)
    w_fd = data["fully_determined"][1].w
    w_ud = data["underdetermined"][1].w
    w_pr = data["prediction"][1].w
    # time in reference units: sum of squared weights is the budget / n_ref
    assert np.sum(w_fd**2) == pytest.approx(np.sum(w_ud**2))
    assert np.sum(w_fd**2) == pytest.approx(np.sum(w_pr**2))
    assert set(np.unique(w_ud)) == {0.0, 1.0}
    np.testing.assert_allclose(data["reference"][1].w, 1.0)
    np.testing.assert_allclose(w_fd, w_pr)


def test_grid_row_count_and_reference_flag():
    recs = run_noise_rate_grid(ExperimentConfig(name="g", **SMALL))
    assert len(recs) == 2 * 2 * 2 * 3
    assert {r.mode for r in recs} == {"fully_determined", "underdetermined", "prediction"}
    ref = run_noise_rate_grid(ExperimentConfig(name="g", include_reference=True, **SMALL))
    assert len(ref) == len(recs) + 2 * 2
    assert all(r.acceleration == 1.0 for r in ref if r.mode == "reference")
    # canonical order: sigma, acceleration, rep, mode
    keys = [(r.sigma_added, r.acceleration, r.rep) for r in recs]
    assert keys == sorted(keys)


def test_grid_rows_full_desk_scale_count():
    cfg = ExperimentConfig(name="count", repetitions=20)
    assert len(cfg.noise_sigmas) * len(cfg.accelerations) * cfg.repetitions * 3 == 720


def test_determinism_and_report(tmp_path):
    cfg = ExperimentConfig(name="d", **SMALL)
    a = emit_report(run_noise_rate_grid(cfg), tmp_path / "a")
    b = emit_report(run_noise_rate_grid(cfg), tmp_path / "b")
    assert strip_wall(a["records"]) == strip_wall(b["records"])
    assert a["summary"].read_bytes() == b["summary"].read_bytes()
    rows = strip_wall(a["records"])
    assert rows[0] == [c for c in RECORD_COLUMNS if c != "wall_seconds"]
    assert len(rows) == 1 + 24
    pngs = sorted((tmp_path / "a" / "images").glob("*.png"))
    assert len(pngs) == 24
    assert pngs[0].read_bytes() == (tmp_path / "b" / "images" / pngs[0].name).read_bytes()
    side = json.loads((pngs[0].parent / (pngs[0].name + ".json")).read_text())
    assert side["window_min"] <= side["window_max"]
    with Image.open(pngs[0]) as im:
        assert im.mode.startswith("I;16") and im.size == (32, 32)


def test_single_record_report(tmp_path):
    rec = RunRecord("one", 0, "reference", 1.0, 1.0, 7, 0.5, 3.0, 4)
    paths = emit_report([rec], tmp_path)
    lines = paths["records"].read_text().splitlines()
    assert len(lines) == 2 and lines[0] == ",".join(RECORD_COLUMNS)
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_report_io_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rec = RunRecord("one", 0, "reference", 1.0, 1.0, 7, 0.5, 3.0, 4)
    with pytest.raises(OSError, match="file"):
        emit_report([rec], blocker / "sub")


def test_summary_excludes_failed_runs():
    recs = [
        RunRecord("e", 0, "underdetermined", 5.0, 12.0, 1, 2.0, 0.0, 10),
        RunRecord("e", 1, "underdetermined", 5.0, 12.0, 2, 4.0, 0.0, 10, status="max_iters"),
        RunRecord("e", 2, "underdetermined", 5.0, 12.0, 3, float("nan"), float("nan"), 3, status="failed"),
    ]
    (cell,) = summarize(recs)
    assert cell["runs"] == 3 and cell["failed"] == 1
    assert cell["mean_mse"] == pytest.approx(3.0)
    assert cell_means(recs)[(5.0, 12.0, "underdetermined")] == pytest.approx(3.0)


def test_window_image():
    img16, lo, hi = window_image(np.full((4, 4), 2.5))
    assert np.all(img16 == 32768) and lo == hi == 2.5
    img16, lo, hi = window_image(np.array([[0.0, 1.0], [0.5, 2.0]]))
    assert img16.dtype == np.uint16 and img16.min() == 0 and img16.max() == 65535
    assert (lo, hi) == (0.0, 2.0)


def test_stack_experiment_zero_noise_all_modes_exact():
    cfg = ExperimentConfig(
        name="s", grid_size=128, repetitions=1, accelerations=[8], noise_sigmas=[0.0],
        density=DensityParams(1.0, 8, 0.02), lam=2e-4, save_images=False,
        solver=SolverConfig(max_iters=500, admm_penalty=2e-4, abs_tol=1e-10, rel_tol=1e-10,
                            balance_ratio=0),
    )
    recs = run_stack_experiment(cfg)
    assert [r.mode for r in recs] == ["reference", "fully_determined", "underdetermined", "prediction"]
    power = np.mean(np.abs(cfg.ground_truth()) ** 2)
    for r in recs:
        assert r.mse / power < 1e-6, r.mode


def test_stack_experiment_ordering_at_eight():
    cfg = ExperimentConfig(name="s", repetitions=4, accelerations=[8], noise_sigmas=[5.0],
                           save_images=False)
    m = cell_means(run_stack_experiment(cfg))
    ref, fd, ud, pr = (m[(5.0, 8.0, k)] for k in
                       ("reference", "fully_determined", "underdetermined", "prediction"))
    assert ref <= pr and fd <= ud
    assert abs(pr / fd - 1) < 0.10


def test_workflow_fully_sampled_is_reference():
    truth = 100 * shepp_logan(64)
    ref = make_kspace_stack(truth, 1, 1.0, 3).entries[0]
    res = run_prediction_workflow(ref, np.ones((64, 64)), lam=0.0)
    np.testing.assert_allclose(res.prediction, res.reference, atol=1e-9)
    np.testing.assert_allclose(res.undersampled, res.reference, atol=1e-9)
    np.testing.assert_allclose(res.reference, ifft2_centered(ref))
    # measured noise from the corner patches is close to the truth
    assert abs(res.noise.sigma_ref_sq - 1.0) < 0.2


def test_workflow_with_measured_pattern_and_default_noise():
    truth = 100 * shepp_logan(64)
    ref = fft2_centered(truth) + make_kspace_stack(np.zeros((64, 64)), 1, 1.0, 4).entries[0]
    pattern = np.zeros((64, 64), dtype=int)
    pattern[::2, :] = 1
    res = run_prediction_workflow(ref, pattern, lam=1.0, truth=truth, solver=SolverConfig(max_iters=50))
    assert set(res.metrics) == {"prediction", "undersampled", "reference"}
    assert res.density.rho.min() > 0


def test_prediction_experiment_orderings():
    cfg = ExperimentConfig(name="p", repetitions=3, accelerations=[4, 12], noise_sigmas=[1.0],
                           lam_factor=1.0, save_images=False)
    m = cell_means(run_prediction_experiment(cfg))
    for r in (4.0, 12.0):
        assert m[(1.0, r, "reference")] <= m[(1.0, r, "prediction")] <= m[(1.0, r, "underdetermined")]
    gap4 = m[(1.0, 4.0, "underdetermined")] - m[(1.0, 4.0, "prediction")]
    gap12 = m[(1.0, 12.0, "underdetermined")] - m[(1.0, 12.0, "prediction")]
    assert gap12 > gap4
