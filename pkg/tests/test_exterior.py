import numpy as np
import pytest

from a1k.exterior import AMBIENT, COVER, ExteriorElement, GeneratorSet, merge_sign, substitute, wedge_all


def gen(name, c=1.0, gens=AMBIENT):
    return ExteriorElement.generator(gens, name, c)


def test_anticommutation_and_square():
    a, b = gen("deta1"), gen("dzetabar2")
    assert (a.wedge(b) + b.wedge(a)).is_zero()
    assert a.wedge(a).is_zero()


def test_merge_sign():
    assert merge_sign(0b01, 0b10) == 1
    assert merge_sign(0b10, 0b01) == -1
    assert merge_sign(0b11, 0b01) == 0


def test_array_coefficients_and_scalar_multiplication():
    c = np.array([1.0, 2.0, 3.0])
    e = gen("deta1", c)
    doubled = np.array([2.0, 2.0, 2.0]) * e
    assert np.allclose(doubled.coefficient_of(AMBIENT.mask(["deta1"])), 2 * c)
    assert np.allclose((e / 2).coefficient_of(AMBIENT.mask(["deta1"])), c / 2)


def test_degree_filter_and_degrees():
    x = gen("deta1").wedge(gen("dzetabar1")) + gen("deta2").wedge(gen("deta3"))
    assert x.degrees() == {2}
    only = x.degree_filter(deta=2)
    assert only.coefficient_of(AMBIENT.mask(["deta2", "deta3"])) == 1.0
    assert only.coefficient_of(AMBIENT.mask(["deta1", "dzetabar1"])) == 0


def test_wedge_all_top_degree_sign():
    top = wedge_all(gen("deta3"), gen("deta2"), gen("deta1"))
    assert top.coefficient_of(AMBIENT.mask(["deta1", "deta2", "deta3"])) == -1.0


def test_substitution_is_a_pullback():
    # dzetabar1 -> 2 conj(w1) dwbar1, dzetabar2 -> 2 conj(w2) dwbar2
    rules = {"dzetabar1": gen("dwbar1", 2.0, COVER), "dzetabar2": gen("dwbar2", 3.0, COVER)}
    out = substitute(gen("dzetabar1").wedge(gen("dzetabar2")), rules, COVER)
    assert out.coefficient_of(COVER.mask(["dwbar1", "dwbar2"])) == 6.0


def test_mismatched_generators_raise():
    with pytest.raises(ValueError):
        gen("deta1") + gen("dw1", gens=COVER)
    with pytest.raises(ValueError):
        GeneratorSet(("a", "a"))
