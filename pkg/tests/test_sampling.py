import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.spatial import cKDTree

from kpredict.noise import NoiseSpec
from kpredict.phantom import make_kspace_stack
from kpredict.sampling import (
    DensityMap,
    SamplingError,
    average_first,
    bernoulli_pattern,
    estimate_density,
    expected_time_map,
    fully_determined_counts,
    normalized_radius,
    poisson_disc_pattern,
    poisson_disc_radius,
    select_stack_subset,
    underdetermined_locations,
    variable_density_map,
)


def binomial_band(n, p, level=0.9999):
    lo, hi = stats.binom.interval(level, n, p)
    return lo / n, hi / n


# -- density maps -----------------------------------------------------------


def test_density_map_validation():
    with pytest.raises(SamplingError):
        DensityMap(np.zeros((4, 4)))
    with pytest.raises(SamplingError):
        DensityMap(np.full((4, 4), 1.5))
    with pytest.raises(SamplingError):
        DensityMap(np.ones(4))
    d = DensityMap.uniform((4, 4), 8)
    assert d.acceleration == pytest.approx(8)


def test_uniform_when_flat():
    d = variable_density_map(32, 32, 8, exponent=0, calib=0)
    np.testing.assert_allclose(d.rho, 1 / 8, atol=1e-9)


def test_calibration_block_is_one():
    d = variable_density_map(64, 64, 8, exponent=3, calib=8)
    assert np.all(d.rho[28:36, 28:36] == 1.0)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(1.5, 16),
    st.floats(0, 6),
    st.sampled_from([0, 4, 8]),
    st.sampled_from([(32, 32), (64, 48)]),
)
def test_density_mean_and_bounds(accel, exponent, calib, shape):
    h, w = shape
    try:
        d = variable_density_map(w, h, accel, exponent, calib, 0.02)
    except SamplingError:
        # only when the calibration block and floor exceed the budget
        floor = 0.02 * (h * w - calib * calib) + calib * calib
        assert floor / (h * w) > 1 / accel
        return
    assert abs(d.rho.mean() - 1 / accel) < 1e-6
    assert d.rho.min() >= 0.02 - 1e-12 and d.rho.max() <= 1.0


def test_density_decreases_with_radius():
    d = variable_density_map(64, 64, 4, exponent=2, calib=0)
    r = normalized_radius(d.shape).ravel()
    order = np.argsort(r, kind="stable")
    assert np.all(np.diff(d.rho.ravel()[order]) <= 1e-12)


def test_infeasible_density():
    with pytest.raises(SamplingError, match="infeasible"):
        variable_density_map(32, 32, 12, 1, calib=16)
    with pytest.raises(SamplingError):
        variable_density_map(32, 32, 1.0)
    with pytest.raises(SamplingError):
        variable_density_map(32, 32, 4, calib=40)


# -- Bernoulli --------------------------------------------------------------


def test_bernoulli_trivial_and_deterministic():
    assert np.all(bernoulli_pattern(DensityMap(np.ones((8, 8))), 3) == 1)
    d = variable_density_map(32, 32, 4, 1)
    np.testing.assert_array_equal(bernoulli_pattern(d, 5), bernoulli_pattern(d, 5))
    assert not np.array_equal(bernoulli_pattern(d, 5), bernoulli_pattern(d, 6))


def test_bernoulli_per_location_rates():
    d = DensityMap.uniform((64, 64), 8)
    seeds = 1000
    rate = sum(bernoulli_pattern(d, s) for s in range(seeds)) / seeds
    lo, hi = binomial_band(seeds, 1 / 8)
    outside = np.count_nonzero((rate < lo) | (rate > hi))
    # 4096 locations at 1e-4 each: expect about 0.4 excursions
    assert outside <= 3
    assert abs(rate.mean() - 1 / 8) < 0.002


def test_bernoulli_total_rate_variable_density():
    d = variable_density_map(64, 64, 4, 2, calib=8)
    n = d.rho.size
    for s in range(20):
        k = bernoulli_pattern(d, s).sum()
        # Poisson-binomial total; normal band at 99.99%
        mu, sd = d.rho.sum(), np.sqrt(np.sum(d.rho * (1 - d.rho)))
        assert abs(k - mu) < 3.9 * sd
        assert 0 < k <= n


# -- Poisson disc -----------------------------------------------------------


def test_poisson_full_density():
    assert np.all(poisson_disc_pattern(DensityMap(np.ones((16, 16))), "2d", 0, 1) == 1)


def test_poisson_2d_calib_and_min_distance():
    n, calib = 256, 24
    d = variable_density_map(n, n, 4, exponent=1, calib=calib)
    pat, scale = poisson_disc_pattern(d, "2d", calib, seed=7, return_scale=True)
    c = n // 2 - calib // 2
    assert np.all(pat[c : c + calib, c : c + calib] == 1)
    assert abs(pat.mean() - 0.25) / 0.25 < 0.10
    # audit every sampled pair outside the calibration block
    outside = np.ones(pat.shape, dtype=bool)
    outside[c : c + calib, c : c + calib] = False
    pts = np.argwhere((pat == 1) & outside)
    radius = poisson_disc_radius(d, "2d", scale)
    pairs = cKDTree(pts).query_pairs(r=float(radius.max()), output_type="ndarray")
    a, b = pts[pairs[:, 0]], pts[pairs[:, 1]]
    dist = np.hypot(*(a - b).T)
    bound = np.minimum(radius[tuple(a.T)], radius[tuple(b.T)])
    assert np.all(dist >= bound - 1e-9)


def test_poisson_pairs_respect_radius_for_known_scale():
    from kpredict.sampling import _dart_throw_2d

    d = variable_density_map(64, 64, 6, exponent=2, calib=0)
    radius = poisson_disc_radius(d, "2d", 1.1)
    order = np.random.default_rng(0).permutation(d.rho.size)
    taken = _dart_throw_2d(order, radius, np.zeros(d.shape, dtype=bool))
    pts = np.argwhere(taken)
    for a in range(len(pts)):
        diff = np.hypot(*(pts[a + 1 :] - pts[a]).T)
        rmin = np.minimum(radius[tuple(pts[a])], radius[tuple(pts[a + 1 :].T)])
        assert np.all(diff >= rmin - 1e-12)


def test_poisson_1d_whole_lines():
    d = variable_density_map(64, 64, 4, exponent=2, calib=0)
    pat = poisson_disc_pattern(d, "1d", calib=8, seed=3)
    assert np.all(pat == pat[:, :1])
    assert np.all(pat[28:36] == 1)
    assert abs(pat.mean() - 0.25) / 0.25 < 0.10


def test_poisson_deterministic_and_rate():
    d = variable_density_map(64, 64, 8, exponent=1, calib=8)
    a = poisson_disc_pattern(d, "2d", 8, 11)
    np.testing.assert_array_equal(a, poisson_disc_pattern(d, "2d", 8, 11))
    assert abs(a.mean() - 1 / 8) * 8 < 0.10
    with pytest.raises(SamplingError):
        poisson_disc_pattern(d, "3d", 8, 11)


# -- time maps and density estimation -----------------------------------------


def test_expected_time_map():
    d = DensityMap.uniform((4, 4), 8)
    np.testing.assert_allclose(expected_time_map(d, NoiseSpec(1.0, 1.0, 144)), 18.0)
    np.testing.assert_allclose(expected_time_map(DensityMap(np.ones((2, 2))), NoiseSpec(1.0, 2.5)), 2.5)
    np.testing.assert_allclose(
        expected_time_map(DensityMap(np.full((2, 2), 0.5)), NoiseSpec(1.0, 3.0, 2)), 3.0
    )


def test_estimate_density_full_and_checkerboard():
    np.testing.assert_allclose(estimate_density(np.ones((16, 16)), 5).rho, 1.0)
    i, j = np.indices((16, 16))
    board = (i + j) % 2
    est = estimate_density(board, 3).rho[1:-1, 1:-1]
    inner = board[1:-1, 1:-1]
    np.testing.assert_allclose(est[inner == 1], 5 / 9)
    np.testing.assert_allclose(est[inner == 0], 4 / 9)
    with pytest.raises(SamplingError):
        estimate_density(board, 4)


def test_estimate_density_uniform_rate():
    # exact-rate uniform patterns: the mean estimate recovers 1/R within 1/window**2
    lattice = np.zeros((64, 64), dtype=int)
    lattice[::4, ::4] = 1
    assert abs(estimate_density(lattice, 11).rho.mean() - 1 / 16) <= 1 / 121
    for seed in range(5):
        mask = underdetermined_locations(DensityMap.uniform((64, 64), 8), seed)
        assert mask.sum() == 512
        assert abs(estimate_density(mask, 11).rho.mean() - 1 / 8) <= 1 / 121


def test_estimate_density_tracks_smooth_density():
    d = variable_density_map(128, 128, 4, exponent=2, calib=0, rho_min=0.05)
    est = estimate_density(bernoulli_pattern(d, 2), 11).rho
    assert np.mean(np.abs(est - d.rho)) < 0.05
    assert np.corrcoef(est.ravel(), d.rho.ravel())[0, 1] > 0.9


# -- stack subset selection -------------------------------------------------


def test_fully_determined_uniform_eighth():
    d = DensityMap.uniform((64, 64), 8)
    counts = fully_determined_counts(d, 144)
    assert np.all(counts == 18) and counts.sum() == 18 * 64 * 64


@settings(max_examples=30, deadline=None)
@given(st.floats(1.5, 12), st.floats(0, 4), st.sampled_from([0, 8]))
def test_budget_parity_property(accel, exponent, calib):
    try:
        d = variable_density_map(32, 32, accel, exponent, calib, 0.05)
    except SamplingError:
        assume(False)
    m = int(round(d.rho.sum()))
    counts = fully_determined_counts(d, 144)
    mask = underdetermined_locations(d, 3)
    assert counts.sum() == 144 * m == 144 * mask.sum()
    assert counts.min() >= 1 and counts.max() <= 144
    # largest remainder keeps every count within one sample of the ideal
    assert np.all(np.abs(counts - 144 * d.rho * m / d.rho.sum()) < 1 + 1e-9)


def test_fully_determined_infeasible():
    rho = np.full((8, 8), 0.5)
    rho[0, 0] = 0.001
    with pytest.raises(SamplingError, match="fractional"):
        fully_determined_counts(DensityMap(rho), 144)


def test_underdetermined_exact_and_proportional():
    d = DensityMap.uniform((64, 64), 8)
    mask = underdetermined_locations(d, 1)
    assert mask.sum() == 512
    vd = variable_density_map(32, 32, 4, exponent=2, calib=0, rho_min=0.05)
    hits = sum(underdetermined_locations(vd, s).astype(float) for s in range(2000)) / 2000
    p = vd.rho * round(vd.rho.sum()) / vd.rho.sum()
    sd = np.sqrt(p * (1 - p) / 2000) + 1e-12
    assert np.max(np.abs(hits - p) / sd) < 5


def test_average_first_matches_loop():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((8, 8))
    stack = make_kspace_stack(img, 10, 1.0, 2)
    counts = rng.integers(0, 11, size=(8, 8))
    avg = average_first(stack, counts)
    for i in range(8):
        for j in range(8):
            n = counts[i, j]
            expected = stack.entries[:n, i, j].mean() if n else 0
            assert abs(avg[i, j] - expected) < 1e-12
    with pytest.raises(SamplingError):
        average_first(stack, np.full((8, 8), 11))


def test_select_stack_subset_modes():
    img = np.random.default_rng(1).standard_normal((64, 64))
    stack = make_kspace_stack(img, 144, 1.0, 3)
    counts, avg = select_stack_subset(stack, "reference")
    assert np.all(counts == 144)
    np.testing.assert_allclose(avg, stack.mean())
    d = DensityMap.uniform((64, 64), 8)
    c_fd, _ = select_stack_subset(stack, "fully_determined", d)
    c_ud, avg_ud = select_stack_subset(stack, "underdetermined", d, seed=4)
    assert c_fd.sum() == c_ud.sum() == 18 * 64 * 64
    assert set(np.unique(c_ud)) == {0, 144}
    assert np.count_nonzero(c_ud) == 512
    assert np.all(avg_ud[c_ud == 0] == 0)
    with pytest.raises(SamplingError):
        select_stack_subset(stack, "fully_determined")
    with pytest.raises(SamplingError):
        select_stack_subset(stack, "sideways", d)
