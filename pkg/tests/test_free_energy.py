import math

import pytest

from polyfract import free_energy as fe
from polyfract import graphs
from polyfract.errors import ConfigError, DegenerateFitError

SEED = 414


@pytest.fixture(scope="module")
def line400():
    return graphs.build_line(400)


def synth_scan(betas, gaps, stderrs):
    """GapScan carrying synthetic estimates, for exercising the fit."""
    ests, used = [], []
    for b, gp, se in zip(betas, gaps, stderrs):
        ests.append(fe.FreeEnergyEstimate(b, 64, 2, 0.0, se, gp, gp, se))
        used.append(gp > 0)
    return fe.GapScan("line", 1.0, tuple(ests), tuple(used), 0.0,
                      (0.0, 0.0), 4.0)


BS = [0.4, 0.6, 0.8, 1.0, 1.2]


def test_beta_zero_is_exactly_free(line400, gauss):
    e = fe.estimate_free_energy(line400, gauss, 0.0, 128, 16, SEED)
    assert e.f_q_hat == 0.0 and e.gap_hat == 0.0 and e.stderr == 0.0


def test_replica_floor(line400, gauss):
    with pytest.raises(ConfigError):
        fe.estimate_free_energy(line400, gauss, 0.5, 64, 1, SEED)


def test_annealed_value_and_gap_sign(line400, gauss):
    e = fe.estimate_free_energy(line400, gauss, 0.8, 256, 48, SEED)
    assert e.f_a == gauss.log_mgf(0.8)
    # quenched never beats annealed beyond noise
    assert e.gap_hat >= -3 * e.gap_stderr
    # and at this (beta, n) the gap is already well resolved
    assert e.gap_hat > 3 * e.gap_stderr


def test_stderr_sqrt_replica_law(line400, gauss):
    e1 = fe.estimate_free_energy(line400, gauss, 0.8, 256, 48, SEED)
    e2 = fe.estimate_free_energy(line400, gauss, 0.8, 256, 96, SEED)
    ratio = e1.stderr / e2.stderr
    assert 0.7 * math.sqrt(2) < ratio < 1.3 * math.sqrt(2)


def test_concentration_check(line400, gauss):
    c0 = fe.concentration_check(line400, gauss, 0.0, [32, 64, 128], 8, SEED)
    assert all(v == 0.0 for _, v in c0.rows) and c0.k_hat == 0.0
    c1 = fe.concentration_check(line400, gauss, 0.5, [64, 128, 256], 64,
                                SEED)
    assert c1.k_hat >= 0.0
    assert 0 < c1.ratio_bound < 10
    # the traced variance at n=128 equals a direct estimate at that n
    e = fe.estimate_free_energy(line400, gauss, 0.5, 128, 64, SEED)
    var_direct = (e.stderr * math.sqrt(64) * 128) ** 2
    row = dict(c1.rows)[128]
    assert abs(row - var_direct) / var_direct < 1e-10


def test_schedule_steps():
    assert fe.schedule_steps(1.0, 1.0) == 64  # floor n_min binds
    assert fe.schedule_steps(0.4, 1.0) == math.ceil(32 * 0.4 ** -4)
    with pytest.raises(ConfigError):
        fe.schedule_steps(0.1, 1.0)  # needs n beyond n_max
    with pytest.raises(ConfigError):
        fe.schedule_steps(0.0, 1.0)


def test_default_beta_grid():
    grid = fe.default_beta_grid("line", 5)
    assert grid[0] == 0.4 and grid[-1] == 1.2 and len(grid) == 5
    with pytest.raises(ConfigError):
        fe.default_beta_grid("tree")


def test_fit_exponent_synthetic_power_laws():
    sl, _, _ = fe.fit_exponent(synth_scan(BS, [b ** 4 for b in BS], [0.0] * 5))
    assert abs(sl - 4.0) < 1e-9
    sl, _, _ = fe.fit_exponent(synth_scan(BS, [2.7 * b ** 6.3 for b in BS],
                                          [0.0] * 5))
    assert abs(sl - 6.3) < 1e-9


def test_fit_exponent_exact_point_constrains():
    # one exact point among noisy ones still recovers the clean slope
    scan = synth_scan(BS, [b ** 4 for b in BS], [0.0, 1e-3, 1e-3, 1e-3, 1e-3])
    sl, lo, hi = fe.fit_exponent(scan)
    assert abs(sl - 4.0) < 1e-9
    assert lo < sl < hi


def test_fit_exponent_needs_three_points():
    with pytest.raises(DegenerateFitError):
        fe.fit_exponent(synth_scan(BS[:2], [b ** 4 for b in BS[:2]],
                                   [0.0] * 2))


def test_gap_scan_small_line(line400, gauss):
    scan = fe.gap_scan(line400, gauss, [0.8, 1.0, 1.2], 24, SEED, C1=8.0,
                       n_min=16)
    assert len(scan.estimates) == 3
    assert scan.theoretical_exponent == 4.0
    assert math.isfinite(scan.slope)
    assert scan.ci[0] < scan.slope < scan.ci[1]
    rows = fe.scan_rows(scan)
    assert len(rows) == 3 and len(rows[0]) == len(fe.SCAN_HEADER)
    summ = fe.scan_summary(scan)
    assert set(summ) == {"graph", "ds", "slope", "ci", "theoretical_exponent"}
    refit = fe.fit_exponent(scan)
    assert abs(refit[0] - scan.slope) < 1e-12


def test_gap_scan_rejects_bad_grid(line400, gauss):
    with pytest.raises(ConfigError):
        fe.gap_scan(line400, gauss, [0.8, 0.8], 8, SEED, C1=8.0, n_min=16)
    with pytest.raises(ConfigError):
        fe.gap_scan(line400, gauss, [], 8, SEED)
    with pytest.raises(ConfigError):
        # schedule below the coarse-graining scale is refused
        fe.gap_scan(line400, gauss, [0.5], 8, SEED, schedule=lambda b: 16,
                    C1=32.0, n_min=16)


def test_gap_scan_noise_floor_diagnostic(line400, gauss):
    with pytest.raises(DegenerateFitError, match="noise floor"):
        fe.gap_scan(line400, gauss, [0.02, 0.03, 0.04], 2, SEED,
                    schedule=lambda b: 16, C1=0.0, n_min=16)


def test_gap_scan_used_flag_invariant():
    bad = fe.FreeEnergyEstimate(0.5, 64, 2, 0.1, 0.01, 0.05, -0.05, 0.01)
    with pytest.raises(ConfigError):
        fe.GapScan("line", 1.0, (bad,), (True,), 0.0, (0.0, 0.0), 4.0)
