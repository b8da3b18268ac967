import math

import numpy as np
import pytest

from a1k import estimates as est
from a1k import geometry as geo


def test_three_case():
    assert est.three_case(3, 4, 0.1) == 1.0
    assert est.three_case(4, 4, 0.1) == pytest.approx(1 + math.log(10))
    assert est.three_case(5, 4, 0.1) == pytest.approx(10.0)


def test_report_pass_logic():
    rep = est.EstimateReport("x", {}, 2.0, 1.0, 2.0, 3.0, True, 2.1)
    assert rep.stable and rep.passed
    assert not est.EstimateReport("x", {}, 2.0, 1.0, 2.0, 3.0, True, 2.5).stable
    assert not est.EstimateReport("x", {}, 2.0, 1.0, 4.0, 3.0).passed
    assert not est.EstimateReport("x", {}, 2.0, 1.0, math.inf, 3.0).passed
    assert set(rep.as_dict()) >= {"id", "params", "lhs", "bound", "ratio", "pass"}


def test_radial_ball_volume():
    rep = est.check_radial_integral(2, 0, 1e-8, 1.0)
    assert rep.lhs == pytest.approx(math.pi ** 2 / 2, rel=1e-8) and rep.passed


def test_radial_log_case():
    rep = est.check_radial_integral(2, 4, 0.1, 1.0)
    assert rep.lhs == pytest.approx(2 * math.pi ** 2 * math.log(10), rel=1e-8)
    assert rep.passed


def test_radial_high_power_ratio_tends_to_pi_squared():
    reps = [est.check_radial_integral(2, 6, r1, 1.0) for r1 in (0.1, 0.05, 0.025)]
    assert all(r.passed for r in reps)
    assert reps[-1].ratio == pytest.approx(math.pi ** 2 * (1 - 0.025 ** 2), rel=1e-8)
    assert est.dyadic_band(reps) <= 4


def test_two_pole_without_poles_is_volume():
    x = np.array([0.1, 0.0])
    rep = est.check_two_pole(x, -x, 0, 0)
    assert rep.lhs == pytest.approx(math.pi ** 2 / 2, rel=1e-6) and rep.passed


def test_two_pole_log_case():
    x = np.array([0.1, 0.0])
    rep = est.check_two_pole(x, x + np.array([0.25, 0.0]), 2, 2)
    assert rep.passed and rep.stable


def test_symmetric_pole_constant_case():
    rep = est.check_symmetric_pole(np.array([0.15, 0.2j]), 3, 3, 4)
    assert rep.passed


def test_log_annulus_tail_is_two():
    for k in (1, 2):
        assert est.log_annulus_tail(k) == pytest.approx(2.0, abs=1e-6)


def test_log_annulus_far_point():
    rep = est.check_log_annulus(np.array([0.54, 0.72j]), 1, 3, 3, 4)
    assert rep.passed


def test_kernel_factor_continuity_decreases():
    rep = est.check_kernel_factor_continuity(1, 4, [0.2, 0.1, 0.05])
    d = rep.extra["distances"]
    assert d[0] > d[1] > d[2] > 0 and rep.extra["sup_abs"] <= 1.0 and rep.passed
    assert est.check_kernel_factor_continuity(1, 4, [0.0]).extra["distances"] == [0.0]


def test_ball_area_at_vertex_is_twice_smooth():
    rep = est.check_variety_ball_area((0, 0, 0), [0.4, 0.2])
    assert np.allclose(rep.extra["ratios"], math.pi ** 2, rtol=1e-9)
    z = geo.cover_map(np.array([[0.5], [0.3]]))[:, 0]
    small = est.variety_ball_area(z, 0.02)
    assert small / 0.02 ** 4 == pytest.approx(math.pi ** 2 / 2, rel=0.02)


def test_sandwich_helpers_small():
    assert est.check_pair_sandwich(10_000)[0] == 0
    assert est.check_cover_norm_bounds(10_000)[0] == 0


def test_patch_area_matches_triangulation():
    c = (0.5, 0.3)
    assert est.triangulated_image_area(c, 0.05, 4) == pytest.approx(est.patch_area(c, 0.05), rel=0.01)


def test_preconditions():
    x = np.array([0.1, 0.0])
    with pytest.raises(ValueError):
        est.check_two_pole(x, x, 1, 1)
    with pytest.raises(ValueError):
        est.check_two_pole(x, -x, 4, 1)
    with pytest.raises(ValueError):
        est.check_symmetric_pole(np.zeros(2), 1, 1, 0)
    with pytest.raises(ValueError):
        est.check_log_annulus(x, 1, 3, 2, 4)
    with pytest.raises(ValueError):
        est.check_cover_kernel_integral(x, 0, "nope")
    with pytest.raises(ValueError):
        est.check_kernel_factor_continuity(4, 2, [0.1])
    with pytest.raises(ValueError):
        est.variety_ball_area((1, 0, 1), 0.1)
