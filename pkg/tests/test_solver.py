import math

import numpy as np
import pytest

from a1k import geometry as geo
from a1k import solver as S
from a1k.forms import HOMOTOPY_FORMS, TestForm, dzetabar
from a1k.quadrature import QuadratureSpec

OP = S.KoppelmanOperator(level=2)
PTS = S.sample_points(3, seed=4)


def test_sample_points_are_admissible():
    pts = S.sample_points(50, seed=0)
    assert pts.shape == (50, 2)
    assert np.all(geo.norm(pts.T) >= 0.3 - 1e-12)
    assert np.all(geo.norm(geo.cover_map(pts.T)) <= 0.7 + 1e-12)
    assert np.array_equal(pts, S.sample_points(50, seed=0))


def test_operator_reproduces_conjugate_coordinate():
    # dzetabar_3 = dbar zetabar_3 and K(dbar u) = u for this u on X cap B_1
    v = OP.apply(dzetabar(2), PTS)
    z3 = geo.cover_map(PTS.T)[2]
    assert np.allclose(v, z3.conj(), rtol=0, atol=5e-3 * np.max(np.abs(z3)))  # level-2 quadrature


def test_deck_invariance_and_linearity():
    phi, psi = HOMOTOPY_FORMS[1]["zb1 dzb2"], HOMOTOPY_FORMS[1]["dzb1"]
    a = OP.apply(phi, PTS)
    assert np.allclose(OP.apply(phi, -PTS), a, atol=1e-14)
    both = OP.apply(phi + psi.scale(2j), PTS)
    assert np.allclose(both, a + 2j * OP.apply(psi, PTS), atol=1e-14)


def test_zero_form_and_vertex():
    assert np.all(OP.apply(TestForm(1, {}), PTS) == 0)
    assert np.all(OP.apply(TestForm(2, {}), PTS) == 0)
    with pytest.raises(S.SolverError):
        OP.apply(dzetabar(0), np.zeros(2))


def test_q2_output_shape():
    out = OP.apply(HOMOTOPY_FORMS[2]["dzb12"], PTS)
    assert out.shape == (3, 3)
    assert OP.apply_cover(HOMOTOPY_FORMS[2]["dzb12"], PTS).shape == (3, 2)


def test_dbar_fd_examples():
    x = np.array([0.3 + 0.2j, -0.1 + 0.4j])
    d = S.dbar_fd(lambda y: np.conj(y[0]), x)
    assert np.allclose(d, [1, 0], atol=1e-9)
    d = S.dbar_fd(lambda y: y[0] * y[1], x)
    assert np.allclose(d, 0, atol=1e-9)
    d = S.dbar_fd(lambda y: abs(y[0]) ** 2, x)
    assert np.allclose(d, [x[0], 0], atol=1e-9)
    with pytest.raises(S.SolverError):
        S.dbar_fd(lambda y: y[0], x, h=0.0)


def test_homotopy_identity_few_points():
    for q in (1, 2):
        forms = list(HOMOTOPY_FORMS[q].values())
        for res in S.homotopy_residuals(forms, PTS[:2], OP):
            assert res.max_residual <= 0.05


def test_batched_and_single_homotopy_agree():
    phi = HOMOTOPY_FORMS[1]["z1 zb3 dzb1"]
    single = S.homotopy_residual(phi, PTS[:1], OP).residual
    batched = S.homotopy_residuals(list(HOMOTOPY_FORMS[1].values()), PTS[:1], OP)[1].residual
    assert np.allclose(single, batched, rtol=1e-10)


def test_zero_form_has_zero_residual():
    res = S.homotopy_residual(TestForm(1, {(0,): {}}), PTS[:1], OP)
    assert res.absolute[0] == 0 and res.residual[0] == 0


def test_calibration_near_minus_one():
    c = S.calibrate(PTS[:2], OP)
    assert abs(c - S.DEFAULT_CALIBRATION) < 0.01


def test_lp_norm_of_constant_is_area():
    one = TestForm(0, {(): {(0,) * 6: 1.0}})
    assert S.lp_norm(one, 2.0) ** 2 == pytest.approx(math.pi ** 2, rel=1e-6)
    phi = dzetabar(0)
    assert S.lp_norm(phi.scale(3.0), 4.0) == pytest.approx(3 * S.lp_norm(phi, 4.0), rel=1e-12)
    assert S.lp_norm(phi, math.inf) <= math.sqrt(2) + 1e-12


def test_lp_rejects_small_p():
    with pytest.raises(S.SolverError):
        S.lp_from_samples(np.ones(3), np.ones(3), 0.5)


def test_structure_form_l2_converges():
    vals = [S.structure_form_l2(QuadratureSpec(rtol=t)).value for t in (1e-3, 1e-5, 1e-7)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
    assert abs(vals[2] - vals[1]) < 1e-6 * vals[2]


def test_cutoff_sequence_examples():
    seq = S.CutoffSequence(1)
    assert seq.mu(0.5) == 1.0 and seq.mu_deriv(0.5) == 0.0
    assert seq.mu(0.9 * math.exp(-math.e ** 2)) == 0.0
    lo, hi = seq.support
    assert lo == pytest.approx(math.exp(-math.e ** 2)) and hi == pytest.approx(math.exp(-math.e))
    s = np.exp(np.linspace(math.log(lo), math.log(hi), 50))
    mu = seq.mu(s)
    assert np.all(np.diff(mu) >= 0) and 0 <= mu.min() and mu.max() <= 1
    with pytest.raises(S.SolverError):
        S.CutoffSequence(0)


def test_cutoff_derivative_by_differences():
    seq = S.CutoffSequence(1)
    s = np.exp(np.linspace(-7.0, -3.0, 40))
    h = s * 1e-6
    fd = (seq.mu(s + h) - seq.mu(s - h)) / (2 * h)
    assert np.allclose(fd, seq.mu_deriv(s), rtol=1e-5, atol=1e-6)


def test_cutoff_eval_vertex_and_form():
    mu, d = S.cutoff_eval(1, np.zeros((3, 1)))
    assert mu[0] == 0.0
    for name in ("dzetabar1", "dzetabar2", "dzetabar3"):
        assert np.all(d.coefficient_of(d.gens.mask([name])) == 0)
    mu, d = S.cutoff_eval(1, np.array([[0.5], [0.0], [0.0]]))
    assert mu[0] == 1.0


def test_cutoff_zero_form():
    res = S.cutoff_convergence(TestForm(1, {}), (1, 2))
    assert np.all(res.l2 == 0)


def test_continuity_zero_form():
    scan = S.continuity_scan(TestForm(1, {}), [0.2, 0.1], op=OP)
    assert np.all(scan.values == 0)


def test_norm_scan_validates_p():
    with pytest.raises(S.SolverError):
        S.operator_norm_scan(1, [1.2])
