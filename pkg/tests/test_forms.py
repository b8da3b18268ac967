import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a1k import geometry as geo
from a1k.forms import HOMOTOPY_FORMS, TestForm, dzetabar, eval_poly

exps = st.tuples(*[st.integers(0, 2)] * 6)
coefs = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
polys = st.dictionaries(exps, coefs, min_size=1, max_size=4)


@st.composite
def forms(draw, q):
    basis = TestForm.basis(q)
    return TestForm(q, {I: draw(polys) for I in basis})


@given(forms(0))
@settings(max_examples=50)
def test_dbar_squared_zero_functions(phi):
    assert phi.dbar().dbar().is_zero()


@given(forms(1))
@settings(max_examples=50)
def test_dbar_squared_zero_one_forms(phi):
    assert phi.dbar().dbar().is_zero()


def test_dbar_of_conjugate_coordinate():
    u = TestForm(0, {(): {(0, 0, 0, 0, 0, 1): 1.0}})
    assert u.dbar().coeffs == dzetabar(2).coeffs


def test_dbar_sign_convention():
    # dbar(zetabar1 dzetabar2) = dzetabar1 ^ dzetabar2
    phi = dzetabar(1, {(0, 0, 0, 1, 0, 0): 1.0})
    assert phi.dbar().coeffs == {(0, 1): {(0,) * 6: 1.0}}
    # dbar(zetabar2 dzetabar1) = -dzetabar1 ^ dzetabar2
    psi = dzetabar(0, {(0, 0, 0, 0, 1, 0): 1.0})
    assert psi.dbar().coeffs == {(0, 1): {(0,) * 6: -1.0}}


def test_eval_and_pullback(rng):
    w = rng.normal(size=(2, 7)) + 1j * rng.normal(size=(2, 7))
    z = geo.cover_map(w)
    phi = dzetabar(0, {(1, 0, 0, 0, 0, 1): 2.0})
    assert np.allclose(eval_poly(phi.coeffs[(0,)], z), 2 * z[0] * z[2].conj())
    cover = phi.on_cover(w)
    # pi^* dzetabar1 = 2 conj(w1) dwbar1
    assert np.allclose(cover[0], 2 * z[0] * z[2].conj() * 2 * w[0].conj())
    assert np.allclose(cover[1], 0)
    top = TestForm(2, {(0, 1): {(0,) * 6: 1.0}}).on_cover(w)
    assert np.allclose(top, 4 * (w[0] * w[1]).conj())


def test_linear_structure():
    a = dzetabar(0)
    b = dzetabar(0).scale(-1)
    assert (a + b).is_zero()
    with pytest.raises(ValueError):
        a + TestForm(2, {})
    with pytest.raises(ValueError):
        TestForm(1, {(0, 1): {(0,) * 6: 1}})


def test_library_degrees():
    for q, fs in HOMOTOPY_FORMS.items():
        assert len(fs) >= 3 and all(f.q == q for f in fs.values())
