import numpy as np
import pytest

from a1k import geometry as geo
from a1k import identities as ids
from a1k import kernel as K
from a1k.exterior import AMBIENT

from conftest import random_c2


def test_smoothstep_ends_and_derivative():
    t = np.linspace(-0.5, 1.5, 201)
    for order in (3, 5, 7):
        s = K.smoothstep(t, order)
        assert s[0] == 0 and s[-1] == 1 and np.all(np.diff(s) >= 0)
        h = 1e-6
        mid = np.linspace(0.05, 0.95, 19)
        fd = (K.smoothstep(mid + h, order) - K.smoothstep(mid - h, order)) / (2 * h)
        assert np.allclose(fd, K.smoothstep_deriv(mid, order), atol=1e-8)
    with pytest.raises(ValueError):
        K.smoothstep(t, 4)


def test_cutoff_profile_support():
    prof = K.CutoffProfile.for_epsilon(0.25)
    assert prof.value(1.0) == 1.0 and prof.value(1.25) == 0.0
    assert 1.0 < prof.inner < prof.outer < 1.25
    with pytest.raises(ValueError):
        K.CutoffProfile(1.0, 0.9)


def _ctx(rng, n=20, convention="consistent"):
    ev = K.KernelEvaluator(convention=convention)
    w, x = random_c2(rng, n, 0.6), random_c2(rng, n, 0.4)
    return ev.context(w, x)


def test_interior_products_are_one(rng):
    ctx = _ctx(rng)
    s, _, _ = K.bm_block(ctx)
    sigma, _, _ = K.weight_block(ctx)
    for form in (s, sigma):
        c = K.contract_eta(form, ctx.eta).coefficient_of(0)
        assert np.allclose(c, 1.0)


def test_printed_normalisation_breaks_section_property(rng):
    ctx = _ctx(rng, convention="printed")
    s, _, _ = K.bm_block(ctx)
    c = K.contract_eta(s, ctx.eta).coefficient_of(0)
    assert np.allclose(c, 2j * np.pi)


def test_assembled_top_product_matches_closed_form(rng):
    ctx = _ctx(rng)
    kt = K.assemble_ktilde(ctx)
    a1, a2, b = K.ktilde_parts(ctx)
    for k in range(3):
        zb = kt.coefficient_of(1 << AMBIENT.index(K.ZETABAR[k]))
        z = kt.coefficient_of(1 << AMBIENT.index(K.ZBAR[k]))
        assert np.allclose(zb, a1[k] + a2[k], atol=1e-14)
        assert np.allclose(z, b[k], atol=1e-14)


def test_closed_and_exterior_routes_agree():
    assert ids.kernel_routes_agree(n=30).passed


def test_s3_expansion_termwise():
    assert ids.s3_termwise(n=30).passed


def test_dbar_blocks_against_differences():
    rep = ids.dbar_blocks_fd(n=10)
    assert rep.passed, rep.extra


def test_dbar_chi_part_annihilates_two_forms():
    assert ids.k2_annihilates_q2(n=30).passed


def test_kernel_invariant_under_deck_of_x(rng):
    ev = K.KernelEvaluator(calibration=-1.0)
    w, x = random_c2(rng, 50, 0.6), random_c2(rng, 50, 0.4)
    for q in (1, 2):
        a = ev.kernel_on_cover(w, x, q).density
        b = ev.kernel_on_cover(w, -x, q).density
        assert np.array_equal(a, b)


def test_kernel_vanishes_outside_cutoff(rng):
    ev = K.KernelEvaluator()
    w = random_c2(rng, 50)
    w = w / np.sqrt(geo.norm(geo.cover_map(w))) * np.sqrt(1.3)
    x = random_c2(rng, 50, 0.3)
    for q in (1, 2):
        assert np.all(ev.kernel_on_cover(w, x, q).density == 0)


def test_singular_points_raise():
    ev = K.KernelEvaluator()
    x = np.array([[0.3], [0.2j]])
    for w in (np.zeros((2, 1)), x, -x):
        with pytest.raises(K.SingularKernelError):
            ev.kernel_on_cover(w, x, 1)
    with pytest.raises(ValueError):
        ev.kernel_split(x * 2, x, 3)
