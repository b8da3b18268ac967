import math

import numpy as np
import pytest
from scipy.integrate import quad

from a1k import geometry as geo
from a1k.quadrature import (
    Annulus4,
    Ball4,
    CoverBall,
    CoverShell,
    Partition,
    PreimageBall,
    QuadratureError,
    QuadratureSpec,
    cover_rule,
    integrate_annulus_cn,
    integrate_cover,
    parallel_map_reduce,
)

SPEC = QuadratureSpec(rtol=1e-7)
X0 = np.array([0.3 + 0.1j, -0.2j])


def ones(w):
    return np.ones(w.shape[1])


def cap_fraction(r, d):
    """Fraction of the 3-sphere of radius r about a point at distance d from 0 inside the unit ball."""
    c = np.clip((1 - d * d - r * r) / (2 * d * r), -1, 1)
    th = np.arccos(c)
    return 1 - (th - np.sin(th) * np.cos(th)) / np.pi


def off_centre_reference(s, d):
    f = lambda r: r ** (3 - s) * 2 * np.pi ** 2 * cap_fraction(r, d)
    return quad(f, 0, 1 - d)[0] + quad(f, 1 - d, 1 + d, epsabs=1e-13, epsrel=1e-13)[0]


def test_ball_volume():
    r = integrate_cover(ones, Ball4(), [], SPEC)
    assert r.converged
    assert r.value == pytest.approx(math.pi ** 2 / 2, rel=1e-12)


def test_radial_singularity_at_centre():
    r = integrate_cover(lambda w: geo.norm(w) ** -3.0, Ball4(), [(0, 0)], SPEC)
    assert r.value == pytest.approx(2 * math.pi ** 2, rel=1e-12)


@pytest.mark.parametrize("s", [1, 2, 3])
def test_off_centre_singularity(s):
    d = float(np.linalg.norm(X0))
    ref = off_centre_reference(s, d)
    r = integrate_cover(lambda w: geo.norm(w - X0[:, None]) ** -float(s), Ball4(), [X0], QuadratureSpec(rtol=1e-6))
    assert r.converged
    assert r.value == pytest.approx(ref, rel=1e-9)


def test_off_centre_reference_values():
    d = float(np.linalg.norm(X0))
    assert off_centre_reference(1, d) == pytest.approx(6.240436825921375, rel=1e-12)
    assert off_centre_reference(3, d) == pytest.approx(18.670663041599582, rel=1e-12)


def test_cover_ball_area_is_pi_squared():
    # 1/2 int_{|pi| < 1} det H = area of X cap B_1 = pi^2
    r = integrate_cover(lambda w: 0.5 * geo.metric_det(w), CoverBall(1.0), [], SPEC)
    assert r.value == pytest.approx(math.pi ** 2, rel=1e-10)


def test_shell_splits_ball():
    spec = QuadratureSpec(fixed_level=3)
    f = lambda w: geo.metric_det(w)
    inner = integrate_cover(f, CoverBall(0.3), [], spec).value
    shell = integrate_cover(f, CoverShell(0.3, 1.0), [], spec).value
    assert inner + shell == pytest.approx(2 * math.pi ** 2, rel=1e-7)
    assert inner == pytest.approx(2 * math.pi ** 2 * 0.3 ** 4, rel=1e-7)


def test_annulus_and_preimage_ball():
    r = integrate_cover(ones, Annulus4((0.0, 0.0), 0.5, 1.0), [], SPEC)
    assert r.value == pytest.approx(math.pi ** 2 / 2 * (1 - 0.5 ** 4), rel=1e-10)
    # X cap B_eps(0) has area pi^2 eps^4
    r = integrate_cover(lambda w: 0.5 * geo.metric_det(w), PreimageBall((0, 0, 0), 0.4), [], QuadratureSpec(fixed_level=4))
    assert r.value == pytest.approx(math.pi ** 2 * 0.4 ** 4, rel=1e-10)


def test_even_rule_matches_full_rule():
    x = np.array([0.4, 0.1j])
    f = lambda w: geo.norm(w - x[:, None]) ** -2.0 * geo.norm(w + x[:, None]) ** -2.0
    spec = QuadratureSpec(fixed_level=2)
    full = integrate_cover(f, Ball4(), [x, -x], spec).value
    half = integrate_cover(f, Ball4(), [x, -x], spec, even=True).value
    assert half == pytest.approx(full, rel=1e-3)


def test_vector_valued_integrand():
    r = integrate_cover(lambda w: np.stack([np.ones(w.shape[1]), geo.norm(w) ** 2]), Ball4(), [], SPEC)
    assert np.allclose(r.value, [math.pi ** 2 / 2, math.pi ** 2 / 3], rtol=1e-10)


def test_rule_never_samples_singular_points():
    rule = cover_rule(Ball4(), [X0], 2)
    assert np.min(geo.norm(rule.points - X0[:, None])) > 0


def test_partition_sums_to_one(rng):
    part = Partition.build([X0, -X0, np.array([0.5, 0.5])])
    w = rng.normal(size=(2, 1000)) + 1j * rng.normal(size=(2, 1000))
    total = part.background(w) + sum(part.bump(w, i) for i in range(part.size))
    assert np.allclose(total, 1.0)


def test_threads_do_not_change_result():
    f = lambda w: geo.norm(w - X0[:, None]) ** -2.0
    a = integrate_cover(f, Ball4(), [X0], QuadratureSpec(fixed_level=2, chunk=4096, threads=1)).value
    b = integrate_cover(f, Ball4(), [X0], QuadratureSpec(fixed_level=2, chunk=4096, threads=3)).value
    assert a == b


def test_pairwise_reduction_order():
    assert parallel_map_reduce([1.0, 2.0, 3.0], lambda v: v * 2, threads=2) == 12.0
    assert parallel_map_reduce([], lambda v: v) == 0.0


def test_budget_exhaustion_reports_nonconvergence():
    f = lambda w: geo.norm(w - X0[:, None]) ** -3.5
    r = integrate_cover(f, Ball4(), [X0], QuadratureSpec(rtol=1e-12, max_evals=50_000))
    assert not r.converged


def test_radial_annulus_in_log_variable():
    r = integrate_annulus_cn(lambda s: s ** -4.0, 2, 1e-9, 1.0, QuadratureSpec(rtol=1e-10))
    assert r.value == pytest.approx(2 * math.pi ** 2 * math.log(1e9), rel=1e-9)
    r = integrate_annulus_cn(lambda s: 1.0, 3, 0.0, 1.0)
    assert r.value == pytest.approx(math.pi ** 3 / 6, rel=1e-8)


def test_bad_requests():
    with pytest.raises(QuadratureError):
        Annulus4((0, 0), 1.0, 0.5)
    with pytest.raises(QuadratureError):
        QuadratureSpec(rtol=0)
    with pytest.raises(QuadratureError):
        integrate_annulus_cn(lambda s: 1.0, 3, 0.1, 1.0, radial=False)
