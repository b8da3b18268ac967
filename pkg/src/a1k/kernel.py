"""Pointwise assembly of the Koppelman kernel K = omega ^ Ktilde on the A1 cone.

``Ktilde`` is defined by ``Ktilde ^ deta1 ^ deta2 ^ deta3 = h ^ (g ^ B)_2``
with the Hefer form h, the weight g and the Bochner-Martinelli form B.  The
reference route builds that product in the exterior algebra and divides out
the deta block by coefficient extraction; ``ktilde_parts`` is the closed
form used inside quadrature loops and is checked against the reference in
the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .exterior import AMBIENT, COVER, ExteriorElement, merge_sign, substitute, wedge_all

TWO_PI_I = 2j * np.pi

ETA = ("deta1", "deta2", "deta3")
ZETABAR = ("dzetabar1", "dzetabar2", "dzetabar3")
ZBAR = ("dzbar1", "dzbar2", "dzbar3")
ETA_MASK = AMBIENT.mask(ETA)

# Normalisations (s denominator factor, sigma denominator factor).
# "consistent": both contract to 1 under the 2*pi*i interior product.
# "printed": s without the 2*pi*i, sigma with it.
CONVENTIONS = {
    "consistent": (TWO_PI_I, TWO_PI_I),
    "printed": (1.0, TWO_PI_I),
}

SINGULAR_GUARD = 1e-14


class SingularKernelError(ValueError):
    """Raised when the kernel is evaluated on its singular set."""


def smoothstep(t, order: int = 5):
    """Polynomial smoothstep on [0, 1]; order 3, 5 or 7."""
    t = np.clip(t, 0.0, 1.0)
    if order == 3:
        return t * t * (3 - 2 * t)
    if order == 5:
        return t ** 3 * (t * (6 * t - 15) + 10)
    if order == 7:
        return t ** 4 * (35 + t * (-84 + t * (70 - 20 * t)))
    raise ValueError("smoothstep order must be 3, 5 or 7")


def smoothstep_deriv(t, order: int = 5):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    if order == 3:
        d = 6 * t * (1 - t)
    elif order == 5:
        d = 30 * t * t * (t - 1) ** 2
    elif order == 7:
        d = 140 * t ** 3 * (1 - t) ** 3
    else:
        raise ValueError("smoothstep order must be 3, 5 or 7")
    return np.where(inside, d, 0.0)


@dataclass(frozen=True)
class CutoffProfile:
    """chi(|zeta|): 1 up to ``inner``, 0 from ``outer`` on, smoothstep between."""

    inner: float
    outer: float
    order: int = 5

    @classmethod
    def for_epsilon(cls, epsilon: float, order: int = 5) -> "CutoffProfile":
        return cls(1.0 + epsilon / 3.0, 1.0 + 2.0 * epsilon / 3.0, order)

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def value(self, r):
        return 1.0 - smoothstep((np.asarray(r) - self.inner) / (self.outer - self.inner), self.order)

    def deriv(self, r):
        width = self.outer - self.inner
        return -smoothstep_deriv((np.asarray(r) - self.inner) / width, self.order) / width


@dataclass(frozen=True)
class KernelContext:
    """Pair (zeta, z) of ambient points, arrays of shape (3, ...)."""

    zeta: np.ndarray
    z: np.ndarray
    profile: CutoffProfile
    convention: str = "consistent"
    eta: np.ndarray = field(init=False)
    eta_norm2: np.ndarray = field(init=False)
    zeta_norm: np.ndarray = field(init=False)
    denom: np.ndarray = field(init=False)

    def __post_init__(self):
        zeta = np.asarray(self.zeta, dtype=complex)
        z = np.asarray(self.z, dtype=complex)
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "z", z)
        eta = zeta - z
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "eta_norm2", np.sum(np.abs(eta) ** 2, axis=0))
        object.__setattr__(self, "zeta_norm", geo.norm(zeta))
        # |zeta|^2 - zetabar . z
        object.__setattr__(self, "denom", np.sum(np.abs(zeta) ** 2, axis=0) - np.sum(zeta.conj() * z, axis=0))
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")

    @property
    def norm_constants(self):
        return CONVENTIONS[self.convention]

    def require_off_diagonal(self):
        if np.any(self.eta_norm2 <= SINGULAR_GUARD ** 2):
            raise SingularKernelError("kernel evaluated on the diagonal zeta = z")


def _gen(name, coef=1.0):
    return ExteriorElement.generator(AMBIENT, name, coef)


def detabar(k: int, coef=1.0) -> ExteriorElement:
    """detabar_k = dzetabar_k - dzbar_k (0-based k)."""
    return _gen(ZETABAR[k], coef) - _gen(ZBAR[k], coef)


def hefer_coefficients(zeta, z):
    return np.stack([
        0.5 * (zeta[1] + z[1]),
        0.5 * (zeta[0] + z[0]),
        -(zeta[2] + z[2]),
    ])


def hefer(ctx: KernelContext) -> ExteriorElement:
    """h = 1/2((zeta2+z2) deta1 + (zeta1+z1) deta2) - (zeta3+z3) deta3."""
    return ExteriorElement.one_form(AMBIENT, ETA, hefer_coefficients(ctx.zeta, ctx.z))


def contract_eta(a: ExteriorElement, eta) -> ExteriorElement:
    """Interior product with 2 pi i sum eta_j d/d(eta_j)."""
    out = ExteriorElement(AMBIENT)
    for m, c in a.terms.items():
        for j, name in enumerate(ETA):
            bit = 1 << AMBIENT.index(name)
            if not m & bit:
                continue
            # generators below the removed one decide the sign
            below = bin(m & (bit - 1)).count("1")
            sign = -1.0 if below & 1 else 1.0
            out = out + ExteriorElement(AMBIENT, {m ^ bit: sign * TWO_PI_I * eta[j] * c})
    return out


def chi_and_dbar_chi(ctx: KernelContext):
    """(chi(|zeta|), dbar chi) with dbar chi = chi'(|zeta|) sum zeta_j dzetabar_j / (2|zeta|)."""
    r = ctx.zeta_norm
    chi = ctx.profile.value(r)
    dchi = ctx.profile.deriv(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(r > 0, dchi / (2.0 * np.where(r > 0, r, 1.0)), 0.0)
    return chi, ExteriorElement.one_form(AMBIENT, ZETABAR, [fac * ctx.zeta[j] for j in range(3)])


def bm_block(ctx: KernelContext):
    """(s, dbar s, B) with s = etabar . deta / (c_s |eta|^2), B = s + s ^ dbar s."""
    ctx.require_off_diagonal()
    c_s = ctx.norm_constants[0]
    n2 = ctx.eta_norm2
    eta, etab = ctx.eta, ctx.eta.conj()
    s = ExteriorElement.one_form(AMBIENT, ETA, [etab[j] / (c_s * n2) for j in range(3)])
    dbar_s = ExteriorElement(AMBIENT)
    for j in range(3):
        for k in range(3):
            # d/d(etabar_k) of etabar_j / |eta|^2
            grad = ((1.0 if j == k else 0.0) / n2 - etab[j] * eta[k] / n2 ** 2) / c_s
            dbar_s = dbar_s + detabar(k, grad).wedge(_gen(ETA[j]))
    return s, dbar_s, s + s.wedge(dbar_s)


def weight_block(ctx: KernelContext, terms: int = 3):
    """(sigma, dbar sigma, g) with g = chi - dbar chi ^ sum_{j<terms} sigma (dbar sigma)^j.

    sigma = zetabar . deta / (c_sigma (|zeta|^2 - zetabar . z)); the barred
    numerator is what makes the interior product of sigma equal to one.
    """
    c_sig = ctx.norm_constants[1]
    chi, dchi = chi_and_dbar_chi(ctx)
    zb = ctx.zeta.conj()
    D = ctx.denom
    support = np.zeros(np.shape(D), dtype=bool)
    for c in dchi.terms.values():
        support |= np.abs(c) > 0
    if np.any(support & (np.abs(D) < 1e-12)):
        raise SingularKernelError("|zeta|^2 - zetabar.z vanishes inside supp dbar chi")
    Dsafe = np.where(np.abs(D) > 0, D, 1.0)
    sigma = ExteriorElement.one_form(AMBIENT, ETA, [zb[j] / (c_sig * Dsafe) for j in range(3)])
    dbar_sigma = ExteriorElement(AMBIENT)
    diff = ctx.zeta - ctx.z
    for j in range(3):
        for k in range(3):
            grad = ((1.0 if j == k else 0.0) / Dsafe - zb[j] * diff[k] / Dsafe ** 2) / c_sig
            dbar_sigma = dbar_sigma + _gen(ZETABAR[k], grad).wedge(_gen(ETA[j]))
    series = sigma
    power = sigma
    for _ in range(1, terms):
        power = power.wedge(dbar_sigma)
        series = series + power
    g = ExteriorElement.scalar(AMBIENT, chi) - dchi.wedge(series)
    return sigma, dbar_sigma, g


def top_eta_product(ctx: KernelContext) -> ExteriorElement:
    """h ^ (g ^ B)_2, where (.)_2 keeps deta-degree 2."""
    h = hefer(ctx)
    _, _, B = bm_block(ctx)
    _, _, g = weight_block(ctx)
    gB = g.wedge(B).degree_filter(deta=2)
    return h.wedge(gB)


def assemble_ktilde(ctx: KernelContext, calibration: complex = 1.0) -> ExteriorElement:
    """The antiholomorphic 1-form Ktilde with Ktilde ^ deta123 = h ^ (g ^ B)_2."""
    prod = top_eta_product(ctx).degree_filter(deta=3)
    out = ExteriorElement(AMBIENT)
    for name in ZETABAR + ZBAR:
        m = 1 << AMBIENT.index(name)
        # prod coefficient of (m | eta) equals sign(m, eta) * Ktilde_m
        sign = float(merge_sign(m, ETA_MASK))
        coef = prod.coefficient_of(m | ETA_MASK)
        out = out + ExteriorElement(AMBIENT, {m: sign * coef * calibration})
    return out


def ktilde_parts(ctx: KernelContext):
    """Closed-form coefficients of Ktilde = K1 + K2.

    Returns ``(a1, a2, b)``: ``a1[k]`` and ``b[k]`` are the dzetabar_k and
    dzbar_k coefficients of the chi part, ``a2[k]`` the dzetabar_k
    coefficient of the dbar-chi part (which has no dzbar component).
    """
    ctx.require_off_diagonal()
    c_s, c_sig = ctx.norm_constants
    h = hefer_coefficients(ctx.zeta, ctx.z)
    etab = ctx.eta.conj()
    n2 = ctx.eta_norm2
    chi = ctx.profile.value(ctx.zeta_norm)
    cross = np.cross(h, etab, axis=0)
    a1 = chi * cross / (c_s ** 2 * n2 ** 2)
    r = ctx.zeta_norm
    dchi = ctx.profile.deriv(r)
    live = dchi != 0
    if np.any(live):
        D = np.where(live, ctx.denom, 1.0)
        det = np.sum(h * np.cross(ctx.zeta.conj(), etab, axis=0), axis=0)
        fac = np.where(live, dchi / (2.0 * np.where(r > 0, r, 1.0)) * det / (c_sig * c_s * D * n2), 0.0)
        a2 = fac * ctx.zeta
    else:
        a2 = np.zeros_like(a1)
    return a1, a2, -a1


def s3_expansion(ctx: KernelContext):
    """The explicit S3 sums for the two parts, signed by the permutation parity.

    Returns ``(chi_part, dchi_part)`` as (dzetabar, dzbar) coefficient arrays
    of shape (2, 3, ...): the chi part is
    sum_sigma sgn * chi/|eta|^4 h^{s1} etabar_{s2} detabar_{s3} and the dbar-chi
    part is minus sum_sigma sgn * h^{s1} etabar_{s2} zetabar_{s3} dbar chi/(|eta|^2 D),
    each times the normalisation of the active convention, so the two parts
    add up to Ktilde.
    """
    from itertools import permutations

    c_s, c_sig = ctx.norm_constants
    h = hefer_coefficients(ctx.zeta, ctx.z)
    etab = ctx.eta.conj()
    zb = ctx.zeta.conj()
    n2 = ctx.eta_norm2
    chi, dchi = chi_and_dbar_chi(ctx)
    shape = (2, 3) + np.shape(n2)
    chi_part = np.zeros(shape, dtype=complex)
    dchi_part = np.zeros(shape, dtype=complex)
    for perm in permutations(range(3)):
        sgn = np.linalg.det(np.eye(3)[list(perm)])
        i, j, k = perm
        term = sgn * chi * h[i] * etab[j] / (c_s ** 2 * n2 ** 2)
        chi_part[0, k] += term
        chi_part[1, k] -= term
        scal = sgn * h[i] * etab[j] * zb[k] / (c_sig * c_s * n2 * np.where(ctx.denom == 0, 1.0, ctx.denom))
        for m in range(3):
            dchi_part[0, m] -= scal * dchi.coefficient_of(1 << AMBIENT.index(ZETABAR[m]))
    return chi_part, dchi_part


# --------------------------------------------------------------------------
# Pulled-back kernel on the covering


@dataclass(frozen=True)
class KernelValue:
    """Densities of the pulled-back kernel against dV(w).

    q = 1: ``density[m]`` multiplies the ambient coefficient phi_m of
    phi = sum phi_m dzetabar_m and integrates to a function of x.
    q = 2: ``density[i]`` multiplies the cover coefficient Phi of
    pi^*phi = Phi dw1bar ^ dw2bar and yields the dzbar_i component.
    """

    q: int
    density: np.ndarray


@dataclass(frozen=True)
class KernelEvaluator:
    epsilon: float = 0.25
    convention: str = "consistent"
    calibration: complex = 1.0
    profile_order: int = 5

    @property
    def profile(self) -> CutoffProfile:
        return CutoffProfile.for_epsilon(self.epsilon, self.profile_order)

    @property
    def support_radius(self) -> float:
        """Kernel vanishes for |pi(w)| beyond this (chi = 0)."""
        return self.profile.outer

    def context(self, w, x) -> KernelContext:
        w = geo.as_points(w, 2)
        x = geo.as_points(x, 2)
        _check_admissible(w, x)
        return KernelContext(geo.cover_map(w), geo.cover_map(x), self.profile, self.convention)

    def _scale(self):
        return geo.TOP_FORM_TO_MEASURE * geo.STRUCTURE_FORM_COVER * self.calibration

    def kernel_split(self, w, x, q: int, method: str = "closed"):
        """(K1, K2) KernelValues, the chi and dbar-chi parts."""
        if q not in (1, 2):
            raise ValueError("q must be 1 or 2")
        if method == "exterior":
            return self._split_exterior(w, x, q)
        ctx = self.context(w, x)
        a1, a2, b = ktilde_parts(ctx)
        scale = self._scale()
        if q == 1:
            P = geo.pair_minors(w)
            d1 = scale * np.einsum("k...,km...->m...", a1, P)
            d2 = scale * np.einsum("k...,km...->m...", a2, P)
            return KernelValue(1, d1), KernelValue(1, d2)
        return KernelValue(2, scale * b), KernelValue(2, np.zeros_like(b))

    def kernel_on_cover(self, w, x, q: int, method: str = "closed") -> KernelValue:
        k1, k2 = self.kernel_split(w, x, q, method)
        return KernelValue(q, k1.density + k2.density)

    def _split_exterior(self, w, x, q):
        ctx = self.context(w, x)
        h = hefer(ctx)
        chi, dchi = chi_and_dbar_chi(ctx)
        _, _, B = bm_block(ctx)
        sigma, dbar_sigma, _ = weight_block(ctx)
        series = sigma + sigma.wedge(dbar_sigma) + wedge_all(sigma, dbar_sigma, dbar_sigma)
        parts = [chi * B, -dchi.wedge(series).wedge(B)]
        out = []
        for gB in parts:
            prod = h.wedge(gB.degree_filter(deta=2)).degree_filter(deta=3)
            kt = ExteriorElement(AMBIENT)
            for name in ZETABAR + ZBAR:
                m = 1 << AMBIENT.index(name)
                kt = kt + ExteriorElement(AMBIENT, {m: merge_sign(m, ETA_MASK) * prod.coefficient_of(m | ETA_MASK)})
            out.append(KernelValue(q, self._pull_back(kt, w, q)))
        return tuple(out)

    def _pull_back(self, ktilde: ExteriorElement, w, q: int) -> np.ndarray:
        """Top-degree densities of pi^*(omega ^ Ktilde ^ phi) per basis input/output."""
        w = geo.as_points(w, 2)
        Jb = geo.cover_jacobian(w).conj()
        rules = {}
        for k, name in enumerate(ZETABAR):
            rules[name] = ExteriorElement.one_form(COVER, ("dwbar1", "dwbar2"), [Jb[k, 0], Jb[k, 1]])
        for name in ZBAR:
            rules[name] = ExteriorElement.generator(COVER, name)
        omega = ExteriorElement.generator(COVER, "dw1", geo.structure_form_cover(w) * self.calibration).wedge(
            ExteriorElement.generator(COVER, "dw2"))
        K = omega.wedge(substitute(ktilde, rules, COVER))
        top = COVER.mask(("dw1", "dw2", "dwbar1", "dwbar2"))
        shape = np.shape(w[0])
        dens = np.zeros((3,) + shape, dtype=complex)
        if q == 1:
            for m in range(3):
                phi = rules[ZETABAR[m]]
                dens[m] = geo.TOP_FORM_TO_MEASURE * np.broadcast_to(K.wedge(phi).coefficient_of(top), shape)
        else:
            phi = ExteriorElement.generator(COVER, "dwbar1").wedge(ExteriorElement.generator(COVER, "dwbar2"))
            Kphi = K.wedge(phi)
            for i, name in enumerate(ZBAR):
                dens[i] = geo.TOP_FORM_TO_MEASURE * np.broadcast_to(
                    Kphi.coefficient_of(top | (1 << COVER.index(name))), shape)
        return dens


def _check_admissible(w, x):
    wn = geo.norm(w)
    if np.any(wn <= SINGULAR_GUARD):
        raise SingularKernelError("kernel evaluated at the branch point w = 0")
    if np.any(geo.norm(w - x) <= SINGULAR_GUARD) or np.any(geo.norm(w + x) <= SINGULAR_GUARD):
        raise SingularKernelError("kernel evaluated on w = +-x")
