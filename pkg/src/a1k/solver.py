"""The Koppelman operator on the A1 cone and the experiments built on it.

All evaluation happens on the double cover: a form on X is represented by
its pullback, the operator integrates over pi^{-1}(X') with the two-sheet
factor 1/2, and outputs are reported as cover coefficients at x (or as
ambient dzbar components for q = 2).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import geometry as geo
from .exterior import AMBIENT, ExteriorElement
from .forms import TestForm, dzetabar
from .kernel import KernelEvaluator, smoothstep, smoothstep_deriv
from .quadrature import CoverBall, CoverShell, QuadratureSpec, Region, cover_rule, integrate_cover

# Least-squares value of the global kernel constant fitted on dzetabar_3 (see ``calibrate``).
DEFAULT_CALIBRATION = -1.0
DEFAULT_LEVEL = 2


class SolverError(ValueError):
    """Raised on inadmissible evaluation points or malformed requests."""


@dataclass(frozen=True)
class KoppelmanOperator:
    """phi -> K phi for polynomial forms, evaluated pointwise on the cover.

    ``level`` fixes the quadrature resolution so that nearby evaluation
    points see the same rule (finite differences stay meaningful).
    """

    kernel: KernelEvaluator = field(default_factory=lambda: KernelEvaluator(calibration=DEFAULT_CALIBRATION))
    level: int = DEFAULT_LEVEL
    spec: QuadratureSpec = field(default_factory=QuadratureSpec)

    def with_calibration(self, c: complex) -> "KoppelmanOperator":
        return replace(self, kernel=replace(self.kernel, calibration=c))

    def with_level(self, level: int) -> "KoppelmanOperator":
        return replace(self, level=level)

    @property
    def support(self) -> tuple[Region, tuple]:
        prof = self.kernel.profile
        return CoverBall(prof.outer), (prof.inner,)

    def integrate_sources(self, sources: Callable, q: int, x, region: Region | None = None,
                          pi_levels: Sequence[float] | None = None) -> np.ndarray:
        """Apply K to several sources at one point x.

        For q = 1, ``sources(w)`` returns ambient coefficients of shape
        (m, 3, N); for q = 2 the dw1bar^dw2bar cover coefficients (m, N).
        Returns (m,) function values (q = 1) or (m, 3) ambient dzbar
        components (q = 2).
        """
        x = np.asarray(x, dtype=complex).reshape(2)
        if geo.norm(x) == 0:
            raise SolverError("evaluation at the vertex is not supported; use a nearby point")
        if region is None:
            region, pi_levels = self.support
        pi_levels = tuple(pi_levels or ())

        def f(w):
            X = np.broadcast_to(x[:, None], w.shape)
            dens = self.kernel.kernel_on_cover(w, X, q).density
            src = sources(w)
            if q == 1:
                return np.einsum("mn,kmn->kn", dens, src)
            return (src[:, None, :] * dens[None]).reshape(-1, w.shape[1])

        res = integrate_cover(f, region, [x, -x], self.spec.with_(fixed_level=self.level),
                              even=True, pi_levels=pi_levels)
        val = 0.5 * np.asarray(res.value)
        return val if q == 1 else val.reshape(-1, 3)

    def apply_many(self, forms: Sequence[TestForm], x_points) -> np.ndarray:
        """K of each form at each point: (P, m) for q = 1, (P, m, 3) for q = 2."""
        qs = {phi.q for phi in forms}
        if len(qs) != 1 or qs.pop() not in (1, 2):
            raise SolverError("forms must share a degree q in {1, 2}")
        q = forms[0].q
        if q == 1:
            def sources(w):
                z = geo.cover_map(w)
                return np.stack([phi.ambient(z) for phi in forms])
        else:
            def sources(w):
                return np.stack([phi.on_cover(w) for phi in forms])
        pts = _points(x_points)
        return np.stack([self.integrate_sources(sources, q, pts[:, i]) for i in range(pts.shape[1])])

    def apply(self, phi: TestForm, x_points) -> np.ndarray:
        """(P,) values for q = 1, (P, 3) ambient dzbar components for q = 2."""
        pts = _points(x_points)
        if phi.is_zero():
            n = pts.shape[1]
            return np.zeros(n, complex) if phi.q == 1 else np.zeros((n, 3), complex)
        return self.apply_many([phi], pts)[:, 0]

    def apply_cover(self, phi: TestForm, x_points) -> np.ndarray:
        """K phi pulled back: (P,) for q = 1, (P, 2) dxbar coefficients for q = 2."""
        pts = _points(x_points)
        val = self.apply(phi, pts)
        if phi.q == 1:
            return val
        return ambient_to_cover(val, pts)


def ambient_to_cover(g: np.ndarray, x_points) -> np.ndarray:
    """(P, 3) ambient dzbar components at x -> (P, 2) dxbar components."""
    Jb = geo.cover_jacobian(_points(x_points)).conj()
    return np.einsum("pi,ijp->pj", g, Jb)


def _points(x_points) -> np.ndarray:
    pts = np.asarray(x_points, dtype=complex)
    if pts.ndim == 1:
        pts = pts.reshape(2, 1)
    elif pts.shape[0] != 2:
        pts = pts.T
    if pts.shape[0] != 2:
        raise SolverError("points must have two complex coordinates")
    return pts


# --------------------------------------------------------------------------
# Finite differences and the homotopy identity


def default_step(x) -> float:
    return 1e-3 * (1.0 + float(geo.norm(np.asarray(x, dtype=complex))))


def dbar_fd(fun: Callable, x, h: float | None = None) -> np.ndarray:
    """Central differences for d/dxbar_j, j = 1, 2; result has shape (2, *fun(x).shape)."""
    x = np.asarray(x, dtype=complex).reshape(2)
    if h is None:
        h = default_step(x)
    if not h > 0:
        raise SolverError("finite-difference step must be positive")
    out = []
    for j in range(2):
        e = np.zeros(2, complex)
        e[j] = h
        d_re = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
        d_im = (np.asarray(fun(x + 1j * e)) - np.asarray(fun(x - 1j * e))) / (2 * h)
        out.append(0.5 * (d_re + 1j * d_im))
    return np.stack(out)


@dataclass(frozen=True)
class HomotopyResult:
    points: np.ndarray  # (P, 2)
    residual: np.ndarray  # (P,) |phi - dbar K phi - K dbar phi| / |phi|
    absolute: np.ndarray  # (P,)
    reference: np.ndarray  # (P,) |phi| at x

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0


def _cover_at(g: np.ndarray, x) -> np.ndarray:
    """(m, 3) ambient dzbar components at one point x -> (m, 2) dxbar components."""
    Jb = geo.cover_jacobian(np.asarray(x, dtype=complex).reshape(2, 1))[..., 0].conj()
    return g @ Jb


def homotopy_terms_many(forms: Sequence[TestForm], x, op: KoppelmanOperator, h: float | None = None):
    """(pi^*phi, dbar K phi, K dbar phi) at x for forms of one degree, stacked along the first axis.

    Cover components: (m, 2) for q = 1 and (m,) for q = 2.  All forms share
    every quadrature pass.
    """
    qs = {phi.q for phi in forms}
    if len(qs) != 1 or next(iter(qs)) not in (1, 2):
        raise SolverError("homotopy check needs forms of one degree q in {1, 2}")
    q = forms[0].q
    x = np.asarray(x, dtype=complex).reshape(2)
    m = len(forms)
    if q == 1:
        lhs = np.stack([phi.on_cover(x.reshape(2, 1))[:, 0] for phi in forms])
        d = dbar_fd(lambda y: op.apply_many(forms, y)[0], x, h).T
        kd = np.zeros((m, 2), complex)
        live = [i for i, phi in enumerate(forms) if not phi.dbar().is_zero()]
        if live:
            g = op.apply_many([forms[i].dbar() for i in live], x)[0]
            kd[live] = _cover_at(g, x)
        return lhs, d, kd
    lhs = np.stack([phi.on_cover(x.reshape(2, 1))[0] for phi in forms])
    D = dbar_fd(lambda y: _cover_at(op.apply_many(forms, y)[0], y), x, h)  # (2, m, 2)
    # dbar(a1 dx1bar + a2 dx2bar) = (da2/dx1bar - da1/dx2bar) dx1bar ^ dx2bar
    return lhs, D[0, :, 1] - D[1, :, 0], np.zeros(m, complex)


def homotopy_terms(phi: TestForm, x, op: KoppelmanOperator, h: float | None = None):
    """(pi^*phi, dbar K phi, K dbar phi) at x in cover components."""
    lhs, d, kd = homotopy_terms_many([phi], x, op, h)
    return lhs[0], d[0], kd[0]


def homotopy_residuals(forms: Sequence[TestForm], x_points, op: KoppelmanOperator,
                       h: float | None = None) -> list["HomotopyResult"]:
    """Relative pointwise residuals |phi - dbar K phi - K dbar phi| / |phi| per form."""
    pts = _points(x_points)
    q = forms[0].q
    rows = [([], [], []) for _ in forms]
    for i in range(pts.shape[1]):
        x = pts[:, i]
        lhs, d, kd = homotopy_terms_many(forms, x, op, h)
        r = lhs - d - kd
        xc = x.reshape(2, 1)
        for n in range(len(forms)):
            if q == 1:
                nr = float(geo.pointwise_form_norm(r[n].reshape(2, 1), 1, xc)[0])
                nl = float(geo.pointwise_form_norm(lhs[n].reshape(2, 1), 1, xc)[0])
            else:
                nr = float(np.ravel(geo.pointwise_form_norm(np.atleast_1d(r[n]), 2, xc))[0])
                nl = float(np.ravel(geo.pointwise_form_norm(np.atleast_1d(lhs[n]), 2, xc))[0])
            res, ab, ref = rows[n]
            ab.append(nr)
            ref.append(nl)
            res.append(nr / nl if nl > 0 else (0.0 if nr == 0 else math.inf))
    return [HomotopyResult(pts.T.copy(), np.array(a), np.array(b), np.array(c)) for a, b, c in rows]


def homotopy_residual(phi: TestForm, x_points, op: KoppelmanOperator, h: float | None = None) -> HomotopyResult:
    return homotopy_residuals([phi], x_points, op, h)[0]


CALIBRATION_FORM = dzetabar(2)  # dbar of zetabar_3


def calibrate(x_points, op: KoppelmanOperator | None = None, h: float | None = None) -> complex:
    """Least-squares c with c * dbar(K_raw phi) = phi for phi = dzetabar_3 (closed)."""
    op = (op or KoppelmanOperator()).with_calibration(1.0)
    pts = _points(x_points)
    num, den = 0.0, 0.0
    for i in range(pts.shape[1]):
        lhs, d, _ = homotopy_terms(CALIBRATION_FORM, pts[:, i], op, h)
        num = num + np.vdot(d, lhs)
        den = den + np.vdot(d, d).real
    return complex(num / den)


def sample_points(n: int, seed: int = 0, r_min: float = 0.3, pi_max: float = 0.7) -> np.ndarray:
    """n seeded cover points with |x| >= r_min and |pi(x)| <= pi_max, shape (n, 2)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        w = np.array([v[0] + 1j * v[1], v[2] + 1j * v[3]])
        t = np.sqrt(pi_max / float(geo.norm(geo.cover_map(w.reshape(2, 1)))[0]))
        r = rng.uniform(r_min, t) if t > r_min else None
        if r is not None:
            out.append(r * w)
    return np.array(out)


# --------------------------------------------------------------------------
# Norms


def area_weights(rule) -> np.ndarray:
    """Weights of  int_X f dV_X = 1/2 int f det H dV(w)  on a cover rule."""
    return 0.5 * rule.weights * geo.metric_det(rule.points)


def lp_from_samples(norms: np.ndarray, weights: np.ndarray, p: float) -> float:
    """L^p norm from pointwise norms on a rule with area weights; p = inf gives the node max."""
    norms = np.abs(np.asarray(norms))
    if math.isinf(p):
        return float(np.max(norms)) if norms.size else 0.0
    if p < 1:
        raise SolverError("p must be >= 1")
    return float(np.sum(weights * norms ** p) ** (1.0 / p))


def norm_rule(radius: float = 1.0, level: int = 2, pi_levels: Sequence[float] = (), grading: int = 0):
    """Even cover rule on {|pi| < radius} for norms of pulled-back forms."""
    return cover_rule(CoverBall(radius), (), level, QuadratureSpec(grading=grading), even=True,
                      pi_levels=pi_levels)


def pointwise_norms(q: int, cover_coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Pointwise metric norms of pulled-back (0,q)-forms, coefficients over the last node axis."""
    return geo.pointwise_form_norm(cover_coeffs, q, points)


def lp_norm(phi: TestForm, p: float, radius: float = 1.0, level: int = 3) -> float:
    """||phi||_{L^p(X cap B_radius)} computed on the cover."""
    rule = norm_rule(radius, level)
    vals = pointwise_norms(phi.q, phi.on_cover(rule.points), rule.points)
    return lp_from_samples(vals, area_weights(rule), p)


def structure_form_l2(spec: QuadratureSpec = QuadratureSpec(), radius: float = 1.0):
    """||omega_X||_{L^2(X cap B_radius)}^2 as a quadrature result.

    The (2,0)-form is normed like its conjugate (0,2)-form.
    """
    def f(w):
        c = geo.structure_form_cover(w)
        return 0.5 * geo.pointwise_form_norm(c, 2, w) ** 2 * geo.metric_det(w)

    return integrate_cover(f, CoverBall(radius), (), spec)


# --------------------------------------------------------------------------
# Operator norm and continuity probes


def monomial_basis(q: int, max_degree: int = 2) -> list[TestForm]:
    exps = [e for e in itertools.product(range(max_degree + 1), repeat=6) if sum(e) <= max_degree]
    exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return [TestForm.monomial(I, e) for I in TestForm.basis(q) for e in exps]


@dataclass(frozen=True)
class NormScan:
    q: int
    p_list: tuple
    ensemble_size: int
    ratios: np.ndarray  # (ensemble, len(p_list))

    def sup(self, n: int | None = None) -> np.ndarray:
        r = self.ratios if n is None else self.ratios[:n]
        return np.max(r, axis=0)


def operator_norm_scan(q: int, p_list: Sequence[float], ensemble_size: int = 20, seed: int = 0,
                       op: KoppelmanOperator | None = None, out_level: int = 0,
                       in_level: int = 2, max_degree: int = 2) -> NormScan:
    """Empirical ||K phi||_p / ||phi||_p over random polynomial forms.

    K is applied once to a monomial basis; random forms are seeded complex
    combinations, so the ensemble costs no further quadrature.
    """
    for p in p_list:
        if not (p > 4.0 / 3.0):
            raise SolverError("p must exceed 4/3")
    op = op or KoppelmanOperator(level=1)
    basis = monomial_basis(q, max_degree)
    out_rule = norm_rule(1.0, out_level)
    prof = op.kernel.profile
    in_rule = norm_rule(prof.outer, in_level, pi_levels=(prof.inner,))
    # outputs at the output nodes: q=1 scalars, q=2 dxbar pairs
    K = op.apply_many(basis, out_rule.points)
    if q == 2:
        Jb = geo.cover_jacobian(out_rule.points).conj()
        K = np.einsum("pmi,ijp->pjm", K, Jb)
    inputs = np.stack([b.on_cover(in_rule.points) for b in basis], axis=-1)  # (N,m) or (2,N,m)
    w_out = area_weights(out_rule)
    # inputs live on X' = X cap B_{1+eps}; the kernel sees them through chi
    w_in = area_weights(in_rule)
    rng = np.random.default_rng(seed)
    coefs = rng.normal(size=(ensemble_size, len(basis))) + 1j * rng.normal(size=(ensemble_size, len(basis)))
    ratios = np.zeros((ensemble_size, len(p_list)))
    for n, c in enumerate(coefs):
        phi_v = inputs @ c
        k_v = K @ c
        if q == 1:
            n_in = pointwise_norms(1, phi_v, in_rule.points)
            n_out = np.abs(k_v)
        else:
            n_in = pointwise_norms(2, phi_v, in_rule.points)
            n_out = pointwise_norms(1, k_v.T, out_rule.points)
        for j, p in enumerate(p_list):
            ratios[n, j] = lp_from_samples(n_out, w_out, p) / lp_from_samples(n_in, w_in, p)
    return NormScan(q, tuple(p_list), ensemble_size, ratios)


@dataclass(frozen=True)
class ContinuityScan:
    radii: tuple
    values: np.ndarray
    differences: np.ndarray

    @property
    def decreasing(self) -> bool:
        d = self.differences
        return bool(np.all(d[1:] < d[:-1]))


def continuity_scan(phi: TestForm, radii: Sequence[float], direction=(0.6 + 0.3j, 0.5 - 0.55j),
                    op: KoppelmanOperator | None = None) -> ContinuityScan:
    """K phi along x = r * direction/|direction|; successive differences of the values."""
    op = op or KoppelmanOperator(level=3)
    d = np.asarray(direction, dtype=complex)
    d = d / np.linalg.norm(d)
    pts = np.stack([r * d for r in radii], axis=1)
    vals = op.apply(phi, pts)
    vals2 = vals.reshape(len(radii), -1)
    diffs = np.linalg.norm(np.diff(vals2, axis=0), axis=1)
    return ContinuityScan(tuple(radii), vals, diffs)


# --------------------------------------------------------------------------
# Cut-off sequence


def _int_smoothstep(u):
    """Antiderivative of the quintic smoothstep on [0, 1]."""
    return u ** 6 - 3 * u ** 5 + 2.5 * u ** 4


@dataclass(frozen=True)
class CutoffSequence:
    """mu_k = rho_k(log(-log r(|zeta|))) with quintic transitions.

    rho_k falls from 1 to 0 on [k, k+1] (|rho_k'| <= 15/8); r is the
    identity up to 1/4, constant 1/2 from 3/4 on, with r' = 1 - S(2(t - 1/4))
    in between (0 <= r' <= 1).
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise SolverError("cut-off index must be >= 1")

    def rho(self, t):
        return 1.0 - smoothstep(np.asarray(t) - self.k)

    def rho_deriv(self, t):
        return -smoothstep_deriv(np.asarray(t) - self.k)

    @staticmethod
    def r(t):
        t = np.asarray(t, dtype=float)
        s = np.clip(t - 0.25, 0.0, 0.5)
        mid = 0.25 + s - 0.5 * _int_smoothstep(2 * s)
        return np.where(t <= 0.25, t, np.where(t >= 0.75, 0.5, mid))

    @staticmethod
    def r_deriv(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0.25, 1.0, np.where(t >= 0.75, 0.0, 1.0 - smoothstep(2 * (t - 0.25))))

    @property
    def support(self) -> tuple[float, float]:
        """|zeta|-interval carrying dbar mu_k."""
        return math.exp(-math.exp(self.k + 1)), math.exp(-math.exp(self.k))

    def mu(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.log(-np.log(self.r(np.where(s > 0, s, 0.1))))
        return np.where(s > 0, self.rho(t), 0.0)

    def mu_deriv(self, s):
        """d mu_k / d|zeta|."""
        s = np.asarray(s, dtype=float)
        pos = s > 0
        ss = np.where(pos, s, 0.1)
        rv = self.r(ss)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.log(-np.log(rv))
            d = self.rho_deriv(t) * self.r_deriv(ss) / (rv * np.log(rv))
        return np.where(pos, d, 0.0)

    def bound(self, s):
        """sqrt(2) chi_k(|zeta|) / (|zeta| |log|zeta||): a pointwise bound for |dbar mu_k|."""
        s = np.asarray(s, dtype=float)
        lo, hi = self.support
        inside = (s >= lo) & (s <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            b = math.sqrt(2.0) / (s * np.abs(np.log(s)))
        return np.where(inside, b, 0.0)

    def dbar_coefficients(self, zeta) -> np.ndarray:
        """Ambient coefficients of dbar mu_k = mu'(|zeta|) sum zeta_j dzetabar_j / (2|zeta|)."""
        zeta = np.asarray(zeta, dtype=complex)
        s = geo.norm(zeta)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(s > 0, self.mu_deriv(s) / (2 * np.where(s > 0, s, 1.0)), 0.0)
        return fac * zeta


def cutoff_eval(k: int, zeta):
    """(mu_k, dbar mu_k) at ambient points; the vertex gets mu = 0 and no derivative."""
    seq = CutoffSequence(k)
    zeta = np.asarray(zeta, dtype=complex)
    mu = seq.mu(geo.norm(zeta))
    coeffs = seq.dbar_coefficients(zeta)
    return mu, ExteriorElement.one_form(AMBIENT, ("dzetabar1", "dzetabar2", "dzetabar3"), list(coeffs))


def ambient_one_form_norm(coeffs) -> np.ndarray:
    """Norm of sum c_j dzetabar_j with |dzetabar_j| = sqrt(2)."""
    return math.sqrt(2.0) * geo.norm(np.asarray(coeffs, dtype=complex))


@dataclass(frozen=True)
class CutoffResult:
    k_list: tuple
    l2: np.ndarray
    nodes_outside: tuple

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.l2) < 0))


def cutoff_source(k: int, phi: TestForm):
    """Cover coefficient of pi^*(dbar mu_k ^ phi) as a function of w."""
    if phi.q != 1:
        raise SolverError("cut-off experiment is defined for (0,1)-forms")
    seq = CutoffSequence(k)

    def src(w):
        z = geo.cover_map(w)
        a = geo.ambient_to_cover_1form(seq.dbar_coefficients(z), w)
        b = phi.on_cover(w)
        return a[0] * b[1] - a[1] * b[0]

    return src


def cutoff_apply(k: int, phi: TestForm, x, op: KoppelmanOperator) -> np.ndarray:
    """K(dbar mu_k ^ phi)(x) as ambient dzbar components."""
    lo, hi = CutoffSequence(k).support
    src = cutoff_source(k, phi)
    return op.integrate_sources(lambda w: src(w)[None], 2, x, CoverShell(lo, hi), ())[0]


def cutoff_convergence(phi: TestForm, k_list: Sequence[int] = (1, 2), op: KoppelmanOperator | None = None,
                       out_level: int = 1, grading: int = 4) -> CutoffResult:
    """||K(dbar mu_k ^ phi)||_{L^2(X)} for each k."""
    op = op or KoppelmanOperator(level=2)
    norms, outside = [], []
    for k in k_list:
        seq = CutoffSequence(k)
        lo, hi = seq.support
        rule = norm_rule(1.0, out_level, pi_levels=(lo, hi), grading=grading)
        if phi.is_zero():
            norms.append(0.0)
            outside.append(0)
            continue
        g = np.stack([cutoff_apply(k, phi, rule.points[:, i], op) for i in range(rule.points.shape[1])])
        a = ambient_to_cover(g, rule.points)
        n = pointwise_norms(1, a.T, rule.points)
        norms.append(lp_from_samples(n, area_weights(rule), 2.0))
        outside.append(_source_nodes_outside(k, phi, op))
    return CutoffResult(tuple(k_list), np.array(norms), tuple(outside))


def _source_nodes_outside(k: int, phi: TestForm, op: KoppelmanOperator) -> int:
    """Inner quadrature nodes falling outside pi^{-1} of the k-shell (expected 0)."""
    lo, hi = CutoffSequence(k).support
    x = np.array([0.3 + 0.1j, 0.2 - 0.2j])
    rule = cover_rule(CoverShell(lo, hi), [x, -x], op.level, even=True)
    r = geo.norm(geo.cover_map(rule.points))
    return int(np.sum((r <= lo) | (r >= hi)))
