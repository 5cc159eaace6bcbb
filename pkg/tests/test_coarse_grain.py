import math

import numpy as np
import pytest

from _oracles import dense_transition_matrix, percolation_survival_exact
from polyfract import coarse_grain as cg
from polyfract import graphs, kernels, polymer, walk
from polyfract.environment import DisorderSpec, OmegaField
from polyfract.errors import ConfigError, DomainError


# ---------------------------------------------------------------- helpers

def test_delta_n_closed_form_and_monotonicity():
    d = cg.delta_n(16, 4, 1, 1, 1)
    assert d == 0.125  # (1 * 16 * 4)**-0.5
    assert cg.delta_n(64, 4, 1, 1, 1) < d
    assert cg.delta_n(16, 4, 2, 1, 1) < d
    with pytest.raises(ConfigError):
        cg.delta_n(0, 4, 1, 1, 1)
    with pytest.raises(ConfigError):
        cg.delta_n(16, 4, 1, -1, 1)


def test_fit_c4_gaussian_tilt_is_one(gauss):
    # lambda(b-d) - lambda(b) - lambda(-d) = -b d exactly for gaussians
    assert abs(cg.fit_c4(gauss, 0.7) - 1.0) < 1e-12


def test_fit_c4_rademacher(rade):
    c4 = cg.fit_c4(rade, 0.5)
    assert 0 < c4 < 2
    # the grid minimum approaches the small-tilt limit tanh(beta)/beta
    # from above as the smallest grid delta shrinks
    limit = math.tanh(0.5) / 0.5
    assert limit - 1e-12 <= c4 < limit + 2e-4
    with pytest.raises(ConfigError):
        cg.fit_c4(DisorderSpec.gaussian(), 0.0)


def test_volume_constant_line(line120):
    # |B(x, 4)| = 9 on the line away from the ends, so C = 9/2 at d_f=1
    assert abs(cg.volume_constant(line120, 1.0, radii=[4]) - 4.5) < 1e-12


def test_wilson_interval_edges():
    lo, hi = cg.wilson_interval(0, 10)
    assert lo == 0.0 and hi < 0.35
    lo, hi = cg.wilson_interval(10, 10)
    assert lo > 0.65 and hi == 1.0
    mid = cg.wilson_interval(5, 10)
    assert mid[0] < 0.5 < mid[1]


# ---------------------------------------------------------------- lattice

@pytest.fixture(scope="module")
def ray40(line120):
    return graphs.geodesic_ray(line120, 40)


@pytest.fixture(scope="module")
def lat(line120, ray40):
    return cg.build_cg_lattice(line120, ray40, 16, 5.0, 2)


def test_lattice_sites_and_scales(lat):
    assert lat.sites == ((0, 0), (1, 1), (2, 0), (2, 2))
    assert lat.n_w == 4  # 16**(1/2) on the line
    assert lat.r_tube == 20


def test_lattice_validation(line120, ray40):
    with pytest.raises(ConfigError):
        cg.build_cg_lattice(line120, ray40, 16, 4.9, 2)  # C7 floor is 5
    short = graphs.geodesic_ray(line120, 11)
    with pytest.raises(DomainError):
        cg.build_cg_lattice(line120, short, 16, 5.0, 2)


def test_lattice_masks(lat):
    # a block is the ball around the ray point at its row scale
    for J in (0, 1, 2):
        assert lat.block_mask(J)[lat.center(J)]
    with pytest.raises(ConfigError):
        lat.end_mask(0, 2)  # rows must be adjacent
    em = lat.end_mask(0, 1)
    assert em.dtype == np.uint8 and em.any()


def test_lattice_up_neighbors(lat):
    assert lat.up_neighbors((0, 0)) == ((1, 1),)
    assert set(lat.up_neighbors((1, 1))) == {(2, 0), (2, 2)}
    assert lat.up_neighbors((2, 0)) == ()


def test_lattice_gasket_scales():
    g = graphs.build_gasket(6)
    ray = graphs.geodesic_ray(g, 16)
    glat = cg.build_cg_lattice(g, ray, 25, 5.0, 2)
    assert glat.n_w == 4  # floor(25**(log2/log5)) = 4 exactly
    assert glat.r_tube == 20


# ------------------------------------------------------------ site states

@pytest.fixture(scope="module")
def ct(lat):
    return cg.default_c_tilde(lat)


def test_default_c_tilde_frozen(ct):
    assert ct == 0.112579345703125  # half the minimal tube transition


def test_c_tilde_validation(lat, rade):
    with pytest.raises(ConfigError):
        cg.assign_site_states(lat, OmegaField(rade, 7), 0.0, 1.0)


def test_beta_zero_states_are_walk_quantities(lat, ray40, line120, rade, ct):
    field = OmegaField(rade, 7, replica=0)
    ssf = cg.assign_site_states(lat, field, 0.0, ct)
    # the entry measure never spreads at beta = 0
    assert ssf.nu[(0, 0)] == {line120.origin: 1.0}
    w00 = walk.tube_transition_prob(line120, line120.origin, ray40, 0, 16,
                                    5.0, 1)
    assert abs(ssf.wtilde[(0, 0)][0] - w00) < 1e-14
    worst = 0.0
    for s in lat.sites:
        for k, dirn in ((0, 1), (1, -1)):
            if dirn == -1 and s[1] == 0:
                continue
            ref = sum(p * walk.tube_transition_prob(line120, x, ray40, s[1],
                                                    16, 5.0, dirn)
                      for x, p in ssf.nu[s].items())
            worst = max(worst, abs(ssf.wtilde[s][k] - ref))
    assert worst < 1e-12
    assert all(v == 1 for v in ssf.X.values())
    assert ssf.gamma_opt[(2, 0)] == (0, 1, 0)
    assert ssf.gamma_opt[(2, 2)] == (0, 1, 2)
    # beta=0 output cannot depend on the disorder replica
    again = cg.assign_site_states(lat, OmegaField(rade, 7, replica=3), 0.0,
                                  ct)
    assert again.X == ssf.X and again.wtilde == ssf.wtilde
    rows = cg.site_state_rows(ssf)
    assert len(rows) == 4 and len(rows[0]) == len(cg.SITE_HEADER)
    assert math.isnan(rows[0][4])  # no minus direction on row 0


@pytest.mark.parametrize("beta", [0.0, 0.4])
def test_telescoping_ratio_product(lat, ray40, line120, rade, ct, beta):
    """Products of consecutive W~ ratios collapse to the tube-restricted
    weight computed independently block by block."""
    field = OmegaField(rade, 11, replica=0)
    ssf = cg.assign_site_states(lat, field, beta, ct)
    prod = (math.log(ssf.wtilde[(0, 0)][0])
            + math.log(ssf.wtilde[(1, 1)][1])
            + math.log(ssf.wtilde[(2, 0)][0]))
    tube = polymer.TubeConstraint(ray40, 16, 5.0, (0, 1, 0, 1))
    blocks = polymer.restricted_partition(line120, field, tube, beta)
    assert abs(prod - blocks[-1]) < 1e-10
    assert abs(math.log(ssf.wtilde[(0, 0)][0]) - blocks[0]) < 1e-10


def test_assign_deterministic_on_reuse(lat, rade, ct):
    field = OmegaField(rade, 7, replica=0)
    a = cg.assign_site_states(lat, field, 0.3, ct)
    b = cg.assign_site_states(lat, field, 0.3, ct)
    assert a.wtilde == b.wtilde and a.X == b.X and a.gamma_opt == b.gamma_opt


def test_assign_gasket_runs():
    g = graphs.build_gasket(6)
    glat = cg.build_cg_lattice(g, graphs.geodesic_ray(g, 16), 25, 5.0, 2)
    ssf = cg.assign_site_states(glat, OmegaField(DisorderSpec.rademacher(),
                                                 5), 0.3,
                                cg.default_c_tilde(glat))
    assert set(ssf.X.values()) <= {0, 1}
    for s, nu in ssf.nu.items():
        if nu:
            bm = glat.block_mask(s[1])
            assert all(bm[x] for x in nu)


# ------------------------------------------------- conditional density

def test_density_beta_zero_is_deterministic(lat, rade, ct):
    rep = cg.conditional_density_check(lat, rade, 0.0, ct, samples=4,
                                       seed=3, variance_samples=2)
    ssf = cg.assign_site_states(lat, OmegaField(rade, 0), 0.0, ct)
    by_site = {(r.I, r.J): r for r in rep.rows}
    assert all(r.freq in (0.0, 1.0) for r in rep.rows)
    assert all(r.freq == 1.0 and r.freq_plus == 1.0 for r in rep.rows)
    assert rep.min_freq() == 1.0
    for s in ((0, 0), (1, 1), (2, 0), (2, 2)):
        assert abs(by_site[s].mean_plus - ssf.wtilde[s][0]) < 1e-12
    assert all(r.var_ratio_plus < 1e-10 for r in rep.rows)


def test_density_small_beta_rows(lat, rade, ct):
    rep = cg.conditional_density_check(lat, rade, 0.3, ct, samples=10,
                                       seed=3, variance_samples=2)
    for r in rep.rows:
        assert 0.0 <= r.freq <= 1.0
        assert r.var_ratio_plus > -1e-12
        if r.J == 0:
            assert math.isnan(r.freq_minus)
            assert math.isnan(r.var_ratio_minus)


def test_density_row_cap(line120, rade, ct):
    big = cg.build_cg_lattice(line120, graphs.geodesic_ray(line120, 40),
                              16, 5.0, 7)
    with pytest.raises(ConfigError):
        cg.conditional_density_check(big, rade, 0.1, ct, 2)


# ----------------------------------------------------------- percolation

def test_percolation_degenerate_densities():
    p1 = cg.percolation_simulate(1.0, 6, 9)
    assert p1.survival and all(p1.open_flags)
    p0 = cg.percolation_simulate(0.0, 6, 9)
    assert not p0.survival and not any(p0.open_flags)


def test_percolation_python_dp_matches_kernel():
    flags = kernels.perc_survival(3, 0.6, 8, 50)
    for r in range(50):
        assert cg.percolation_simulate(0.6, 8, 3, run=r).survival == bool(
            flags[r])


def test_percolation_coupled_monotone_in_rho():
    f3 = kernels.perc_survival(5, 0.3, 6, 200).astype(bool)
    f6 = kernels.perc_survival(5, 0.6, 6, 200).astype(bool)
    f9 = kernels.perc_survival(5, 0.9, 6, 200).astype(bool)
    assert np.all(f6 | ~f3) and np.all(f9 | ~f6)


def test_survival_rows_and_exact_oracle():
    surv = cg.survival_probability([0.3, 0.6, 0.9], 6, 4000, seed=5)
    assert len(surv) == 3
    for rho, horizon, runs, p_hat, lo, hi in surv:
        assert lo <= p_hat <= hi
        exact = percolation_survival_exact(rho, 6)
        assert lo - 1e-12 <= exact <= hi + 1e-12
    assert surv[0][3] <= surv[1][3] <= surv[2][3]


def test_survival_validation():
    with pytest.raises(ConfigError):
        cg.survival_probability([1.2], 6, 10)
    with pytest.raises(ConfigError):
        cg.survival_probability([0.5], 6, 0)
    with pytest.raises(ConfigError):
        cg.percolation_simulate(0.5, -1, 0)


# ------------------------------------------------------------ domination

def test_domination_forced_coin(lat, rade, ct):
    dom = cg.domination_check(lat, rade, 0.0, ct, r=0.8, alpha=0.7,
                              samples=400, seed=2, force_x=1)
    assert all(abs(row.min_freq - 0.8) < 0.15 for row in dom.rows)
    assert not dom.violations()
    assert dom.epsilon == 0.0
    dom1 = cg.domination_check(lat, rade, 0.0, ct, r=1.0, alpha=0.7,
                               samples=100, seed=2, force_x=1)
    assert all(row.min_freq == 1.0 for row in dom1.rows)
    assert dom1.feasible and dom1.epsilon == 0.0


def test_domination_infeasible_corner(lat, rade, ct):
    # alpha = r = 0.97 leaves no room: (1-a)(1-r)^5 >= eps fails
    dom = cg.domination_check(lat, rade, 0.0, ct, r=0.97, alpha=0.97,
                              samples=50, seed=2, force_x=1, epsilon=0.01)
    assert dom.constraint_alpha and not dom.constraint_r
    assert not dom.feasible


def test_domination_closed_sites_violate(lat, rade, ct):
    dom = cg.domination_check(lat, rade, 0.0, ct, r=0.8, alpha=0.7,
                              samples=400, seed=2, force_x=0)
    assert len(dom.violations()) == len(dom.rows)
    assert dom.epsilon == 1.0


def test_domination_real_states(lat, rade, ct):
    dom = cg.domination_check(lat, rade, 0.3, ct, r=0.9, alpha=0.6,
                              samples=60, seed=4, min_bucket=10)
    assert len(dom.rows) == 4
    assert 0.0 <= dom.epsilon <= 1.0


# --------------------------------------------------- fractional moment sum

@pytest.fixture(scope="module")
def cover(line120):
    region = np.flatnonzero(line120.dist_from(line120.origin) <= 60)
    return graphs.vitali_cover(line120, region, 4)


def test_fm_beta_zero_matches_dense_matrix_oracle(line120, cover):
    """The whole report at beta=0 against an independent dense-matrix
    walk: per-center tail/core and the worst-center selection."""
    rep = cg.fractional_moment_sum(line120, cover, 16, 0.0, C1=1.0, C2=1.0,
                                   R_split=3.0)
    assert abs(rep.total - rep.tail - rep.core) < 1e-12
    T = dense_transition_matrix(line120)
    n_w = 4
    brute_rows = []
    worst = None
    for y in cover.centers:
        dy = line120.dist_from(int(y))
        starts = np.flatnonzero(dy <= 5 * n_w)
        P = np.zeros((starts.size, line120.V))
        P[np.arange(starts.size), starts] = 1.0
        for _ in range(16):
            P = P @ T
        tail = core = 0.0
        for z in cover.centers:
            dz = line120.dist_from(int(z))
            gap = max(0, int(dz[int(y)]) - 10 * n_w)
            mass = math.sqrt(P[:, dz <= 5 * n_w].sum(axis=1).max())
            if gap >= 3.0 * n_w:
                tail += mass
            else:
                core += mass
        brute_rows.append((int(y), tail, core))
        if worst is None or tail + core > worst[1] + worst[2]:
            worst = (int(y), tail, core)
    assert rep.center == worst[0]
    assert abs(rep.tail - worst[1]) < 1e-12
    assert abs(rep.core - worst[2]) < 1e-12
    for got, want in zip(rep.per_center, brute_rows):
        assert abs(got[1] - want[1]) < 1e-12
        assert abs(got[2] - want[2]) < 1e-12


def test_fm_pinned_tilt_core_monotone_in_penalty_ball(line120, cover):
    cores = [cg.fractional_moment_sum(line120, cover, 16, 0.5, C1=1.0,
                                      C2=c, R_split=3.0, C4_hat=1.0,
                                      C_Vp=4.5, delta=0.05,
                                      centers=[0]).core
             for c in (1.0, 2.0, 3.0)]
    assert cores[0] >= cores[1] - 1e-12 >= cores[2] - 2e-12


def test_fm_split_radius_geometry(line120, cover):
    reps = [cg.fractional_moment_sum(line120, cover, 16, 0.0, C1=1.0,
                                     C2=1.0, R_split=R, centers=[0])
            for R in (1, 2, 4)]
    assert reps[0].tail > reps[1].tail > reps[2].tail
    # 16 steps cannot bridge the 10 n_w + R n_w gap at R = 4
    assert reps[2].tail == 0.0
    # at beta=0 the split only reshuffles terms between tail and core
    assert max(abs(reps[0].total - r.total) for r in reps) < 1e-12


def test_fm_penalty_bites(line120, cover):
    plain = cg.fractional_moment_sum(line120, cover, 16, 0.0, C1=1.0,
                                     C2=1.0, R_split=1.0, centers=[0])
    pen = cg.fractional_moment_sum(line120, cover, 16, 0.5, C1=1.0, C2=1.0,
                                   R_split=1.0, C4_hat=1.0, C_Vp=4.5,
                                   centers=[0])
    assert pen.core < plain.core
    # tail terms carry no penalty, so they agree
    assert abs(pen.tail - plain.tail) < 1e-12
    pen2 = cg.fractional_moment_sum(line120, cover, 16, 0.5, C1=1.0,
                                    C2=1.0, R_split=2.0, C4_hat=1.0,
                                    C_Vp=4.5, centers=[0])
    assert pen2.total <= pen.total + 1e-12


def test_fm_validation(line120, cover):
    region = np.flatnonzero(line120.dist_from(line120.origin) <= 60)
    cover5 = graphs.vitali_cover(line120, region, 5)
    with pytest.raises(ConfigError):
        cg.fractional_moment_sum(line120, cover5, 16, 0.0, C1=1.0, C2=1.0,
                                 R_split=3.0)  # cover built at wrong n_w
    other = graphs.build_line(120)
    with pytest.raises(ConfigError):
        cg.fractional_moment_sum(other, cover, 16, 0.0, C1=1.0, C2=1.0,
                                 R_split=3.0)  # cover from another graph
    with pytest.raises(ConfigError):
        cg.fractional_moment_sum(line120, cover, 16, 0.5, C1=2.0, C2=1.0,
                                 R_split=3.0)  # n below C1 beta^-4
    with pytest.raises(ConfigError):
        cg.fractional_moment_sum(line120, cover, 16, 0.0, C1=1.0, C2=1.0,
                                 R_split=3.0, centers=[999])


def test_fm_row_matches_header(line120, cover):
    rep = cg.fractional_moment_sum(line120, cover, 16, 0.0, C1=1.0, C2=1.0,
                                   R_split=3.0)
    assert len(cg.fm_row(rep)) == len(cg.FM_HEADER)
