import math

import numpy as np
import pytest

from polyfract import graphs, walk
from polyfract.errors import BoundaryError, DegenerateFitError, DomainError


@pytest.fixture(scope="module")
def line600():
    return graphs.build_line(600)


@pytest.fixture(scope="module")
def ray30(line120):
    return graphs.geodesic_ray(line120, 30)


def test_heat_kernel_one_step(line120):
    hk = walk.heat_kernel(line120, line120.origin, 1)
    assert hk.probs == {line120.origin - 1: 0.5, line120.origin + 1: 0.5}
    assert walk.heat_kernel(line120, 5, 0).probs == {5: 1.0}


def test_heat_kernel_gasket_two_step_return(gasket5):
    # degree 2 corner: return probability after two steps is 1/4
    hk2 = walk.heat_kernel(gasket5, gasket5.origin, 2)
    assert hk2.probs[gasket5.origin] == 0.25


def test_heat_kernel_conserves_mass(gasket5):
    hk = walk.heat_kernel(gasket5, gasket5.origin, 17)
    assert abs(sum(hk.probs.values()) - 1.0) < 1e-12
    arr = hk.as_array(gasket5.V)
    assert abs(arr.sum() - 1.0) < 1e-12


def test_heat_kernel_boundary_guard(line8):
    with pytest.raises(BoundaryError):
        walk.heat_kernel(line8, 1, 5)
    # explicit opt-out runs anyway
    walk.heat_kernel(line8, 1, 5, check_boundary=False)


def test_return_profile_line_parity_smoothed(line120):
    ns, rets = walk.return_profile(line120, line120.origin, 4)
    assert list(ns) == [0, 1, 2, 3, 4]
    # rets[n] = p_n(x,x) + p_{n+1}(x,x); simple walk returns are dyadic
    assert list(rets) == [1.0, 0.5, 0.5, 0.375, 0.375]


def test_pair_overlap_sum(line120):
    assert walk.pair_overlap_sum(line120, line120.origin, 0) == 0.0
    assert walk.pair_overlap_sum(line120, line120.origin, 1) == 0.5


def test_pair_overlap_profile_monotone(gasket2):
    ns, ov = walk.pair_overlap_profile(gasket2, gasket2.origin, 4,
                                       check_boundary=False)
    assert np.all(np.diff(ov) > 0)  # expected overlap accumulates


def test_exit_tail_frozen_line(line120):
    t, p = walk.exit_tail(line120, line120.origin, 16, [1.0, 1.5, 2.0, 5.0])
    assert list(p) == [0.04254150390625, 0.00103759765625, 0.0, 0.0]
    assert np.all(np.diff(p) <= 0)


def test_exit_tail_validation(line120):
    with pytest.raises(DomainError):
        walk.exit_tail(line120, line120.origin, 16, [0.5])
    with pytest.raises(DomainError):
        walk.exit_tail(line120, line120.origin, 0, [1.0])


def test_fit_exit_decay_recovers_synthetic():
    d_w = 2.0
    t = np.array([1.0, 1.25, 1.5, 2.0, 2.5])
    probs = 0.7 * np.exp(-1.9 * t ** (d_w / (d_w - 1.0)))
    c_hat, a_hat, resid = walk.fit_exit_decay(t, probs, d_w)
    assert abs(c_hat - 1.9) < 1e-10
    assert abs(a_hat - 0.7) < 1e-10
    assert resid < 1e-12
    with pytest.raises(DegenerateFitError):
        walk.fit_exit_decay(t[:2], probs[:2], d_w)


def test_reversibility_defect(gasket5):
    assert walk.reversibility_defect(gasket5, 40, n_triples=100,
                                     seed=7) <= 1e-12


def test_dimensions_line(line600):
    fit = walk.estimate_dimensions(line600, 512)
    assert abs(fit.d_f_hat - 1.0) < 0.05
    assert abs(fit.d_s_hat - 1.0) < 0.05
    assert abs(fit.d_w_hat - 2.0) < 0.1
    assert fit.strongly_recurrent


def test_dimensions_gasket_level5(gasket5):
    # level 5 is too small for the 5% contract; just pin the ballpark
    # and the exact d_s = 2 d_f / d_w identity
    fit = walk.estimate_dimensions(gasket5, 256, fit_envelope=True)
    assert abs(fit.d_f_hat - math.log(3) / math.log(2)) < 0.12
    assert abs(fit.d_s_hat - math.log(9) / math.log(5)) < 0.1
    assert fit.d_s_hat == 2.0 * fit.d_f_hat / fit.d_w_hat
    assert fit.strongly_recurrent
    assert fit.envelope is not None
    assert fit.envelope.c1_hat > 0 and fit.envelope.c2_hat > 0
    rows = fit.fit_rows()
    assert [r[0] for r in rows] == ["d_f", "d_s", "d_w"]


def test_uhk_envelope_bounds_actual_kernel(gasket5):
    """The fitted envelope should upper-bound the diagonal kernel on the
    window it was fitted over (that is what makes it an envelope)."""
    nom = graphs.nominal_dimensions("gasket")
    fit = walk.fit_uhk_envelope(gasket5, gasket5.origin, [6, 12, 24],
                                nom["d_f"], nom["d_w"])
    ns, rets = walk.return_profile(gasket5, gasket5.origin, 24)
    for n in (6, 12, 24):
        bound = fit.c1_hat * n ** (-nom["d_f"] / nom["d_w"])
        assert rets[n] <= bound * (1 + 1e-9)


def test_tube_transition_frozen_values(line120, ray30):
    got = walk.tube_transition_prob(line120, line120.origin, ray30, 0, 16,
                                    5.0, +1)
    assert got == 0.587554931640625
    got = walk.tube_transition_prob(line120, line120.origin, ray30, 1, 16,
                                    3.0, +1)
    assert got == 0.22698974609375
    got = walk.tube_transition_prob(line120, ray30[16], ray30, 1, 16,
                                    3.0, -1)
    assert got == 0.0018310546875


def test_tube_transition_decomposition(line120, ray30):
    v, free, escape = walk.tube_transition_decomposition(
        line120, line120.origin, ray30, 1, 16, 3.0, +1)
    assert v == 0.22698974609375
    assert v >= free - escape - 1e-15
    assert 0.0 <= escape <= 1.0


def test_tube_direction_validation(line120, ray30):
    with pytest.raises(DomainError):
        walk.tube_transition_prob(line120, line120.origin, ray30, 0, 16,
                                  3.0, -1)  # cannot step below row 0
    with pytest.raises(DomainError):
        walk.tube_transition_prob(line120, line120.origin, ray30, 0, 16,
                                  3.0, 2)


def test_tube_min_constant_frozen(line120, ray30):
    c = walk.tube_min_constant(line120, ray30, 2, 16, 3.0)
    assert c == 0.22515869140625
    assert 0.0 < c < 1.0


def test_tube_min_constant_gasket():
    g = graphs.build_gasket(6)
    ray = graphs.geodesic_ray(g, 32)
    c = walk.tube_min_constant(g, ray, 2, 125, 3.0)
    assert c == 0.08140472729773675
    assert 0.0 < c < 1.0


def test_profile_rows_shape(line120):
    ns, rets = walk.return_profile(line120, line120.origin, 8)
    rows = walk.profile_rows(ns, rets)
    assert len(rows) == 9 and rows[0] == (0, 1.0)
