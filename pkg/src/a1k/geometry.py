"""The A1 cone X = {z1*z2 = z3**2}, its branched double cover, and pullbacks.

Points are complex numpy arrays whose *leading* axis holds the coordinates,
so ``w`` has shape ``(2, ...)`` and ``zeta`` has shape ``(3, ...)``.  Every
function here broadcasts over the trailing axes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Relative guard for the variety equation, |z1 z2 - z3^2| <= tol (1 + |z|^2).
ON_VARIETY_TOL = 1e-12

# pi^*(dz1 ^ dz2 / (-2 z3)) = STRUCTURE_FORM_COVER * dw1 ^ dw2
STRUCTURE_FORM_COVER = -2.0
# Constant printed for the same pullback ("(-1/2) ds ^ dt"); kept for reports.
STRUCTURE_FORM_PRINTED = -0.5

# volume_density(w) = VOLUME_DET_RATIO * det(metric_matrix(w))
VOLUME_DET_RATIO = 0.5

# dw1 ^ dw2 ^ dw1bar ^ dw2bar = TOP_FORM_TO_MEASURE * dV(w)
TOP_FORM_TO_MEASURE = 4.0

# sqrt(2)^q normalisation of the minimal representation, in |phi|^2.
NORM_SCALE = np.sqrt(2.0)


class SingularPointError(ValueError):
    """Raised when an operation is evaluated at the branch point w = 0."""


class ChartError(ValueError):
    """Raised when a point is tested against a domain of the wrong kind."""


def as_points(p, dim: int) -> np.ndarray:
    arr = np.asarray(p, dtype=complex)
    if arr.shape[0] != dim:
        raise ValueError(f"expected leading axis of length {dim}, got shape {arr.shape}")
    return arr


def norm(p: np.ndarray) -> np.ndarray:
    """Euclidean norm over the leading axis."""
    return np.sqrt(np.sum(np.abs(p) ** 2, axis=0))


def defining_function(zeta) -> np.ndarray:
    zeta = as_points(zeta, 3)
    return zeta[0] * zeta[1] - zeta[2] ** 2


def on_variety(zeta) -> np.ndarray:
    zeta = as_points(zeta, 3)
    return np.abs(defining_function(zeta)) <= ON_VARIETY_TOL * (1.0 + norm(zeta) ** 2)


def cover_map(w) -> np.ndarray:
    """pi(w1, w2) = (w1^2, w2^2, w1 w2)."""
    w = as_points(w, 2)
    return np.stack([w[0] ** 2, w[1] ** 2, w[0] * w[1]])


def cover_jacobian(w) -> np.ndarray:
    """Holomorphic differential of pi, shape ``(3, 2, ...)``."""
    w = as_points(w, 2)
    zero = np.zeros_like(w[0])
    return np.stack([
        np.stack([2 * w[0], zero]),
        np.stack([zero, 2 * w[1]]),
        np.stack([w[1], w[0]]),
    ])


def metric_matrix(w) -> np.ndarray:
    """Pullback metric H = J^dagger J, shape ``(2, 2, ...)``."""
    J = cover_jacobian(w)
    return np.einsum("ia...,ib...->ab...", J.conj(), J)


def metric_det(w) -> np.ndarray:
    a = np.abs(as_points(w, 2)[0]) ** 2
    b = np.abs(as_points(w, 2)[1]) ** 2
    return 4.0 * (a * a + b * b + 4.0 * a * b)


def volume_density(w) -> np.ndarray:
    """Density of pi^* dV_X against Lebesgue measure dV(w): 2(|w1|^4 + |w2|^4 + 4|w1 w2|^2).

    Note this is half the Riemannian area element det H of the image
    (see ``VOLUME_DET_RATIO``); areas of images are computed with ``metric_det``.
    """
    w = as_points(w, 2)
    a = np.abs(w[0]) ** 2
    b = np.abs(w[1]) ** 2
    return 2.0 * (a * a + b * b + 4.0 * a * b)


def pullback_antiholo_pair(i: int, j: int, w) -> np.ndarray:
    """f with pi^*(dzbar_i ^ dzbar_j) = f dw1bar ^ dw2bar; indices are 1-based."""
    if i == j:
        raise ValueError("dzbar_i ^ dzbar_i vanishes; need i != j")
    if not (1 <= i <= 3 and 1 <= j <= 3):
        raise ValueError("indices must lie in 1..3")
    Jb = cover_jacobian(w).conj()
    a, b = Jb[i - 1], Jb[j - 1]
    return a[0] * b[1] - a[1] * b[0]


def pair_minors(w) -> np.ndarray:
    """All minors P[k, m] with pi^*(dzbar_k ^ dzbar_m) = P[k, m] dw1bar ^ dw2bar (0-based)."""
    Jb = cover_jacobian(w).conj()
    return Jb[:, None, 0] * Jb[None, :, 1] - Jb[:, None, 1] * Jb[None, :, 0]


def structure_form_cover(w) -> np.ndarray:
    """c(w) with pi^* omega = c dw1 ^ dw2, omega = dz1 ^ dz2 / (-2 z3)."""
    w = as_points(w, 2)
    z3 = w[0] * w[1]
    if np.any(norm(w) == 0):
        raise SingularPointError("structure form pullback is undefined at w = 0")
    J = cover_jacobian(w)
    num = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        c = num / (-2.0 * z3)
    # On the axes z3 = 0 the ratio is removable; its value is the constant.
    return np.where(z3 == 0, STRUCTURE_FORM_COVER, c)


def pair_geometry(w, x):
    """(alpha, beta_minus, beta_plus) with alpha^2 = |pi(w) - pi(x)|^2."""
    w = as_points(w, 2)
    x = as_points(x, 2)
    alpha = norm(cover_map(w) - cover_map(x))
    return alpha, norm(w - x), norm(w + x)


def ambient_to_cover_1form(coeffs, w) -> np.ndarray:
    """Cover coefficients (dw1bar, dw2bar) of pi^* sum_k c_k dzbar_k."""
    Jb = cover_jacobian(w).conj()
    return np.einsum("k...,kl...->l...", np.asarray(coeffs), Jb)


def pointwise_form_norm(coeffs, q: int, w) -> np.ndarray:
    """Pointwise norm of a (0,q)-form on X given by its cover coefficients.

    ``coeffs`` is a scalar field for q = 0, the (dw1bar, dw2bar) pair for
    q = 1 and the dw1bar ^ dw2bar coefficient for q = 2.  The metric is the
    induced one, scaled by ``NORM_SCALE**q`` in |phi|^2 to match the
    minimal-representation convention.
    """
    w = as_points(w, 2)
    if np.any(norm(w) == 0) and q > 0:
        raise SingularPointError("the induced metric degenerates at w = 0")
    c = np.asarray(coeffs, dtype=complex)
    if q == 0:
        return np.abs(c)
    H = metric_matrix(w)
    det = metric_det(w)
    if q == 1:
        # dual metric on (0,1)-covectors: conj(H)^{-1}
        inv = np.stack([np.stack([H[1, 1], -H[0, 1]]), np.stack([-H[1, 0], H[0, 0]])]) / det
        val = np.einsum("a...,ab...,b...->...", c, inv.conj(), c.conj()).real
        return np.sqrt(np.maximum(val, 0.0) * NORM_SCALE)
    if q == 2:
        return np.abs(c) * np.sqrt(NORM_SCALE ** 2 / det)
    raise ValueError("q must be 0, 1 or 2")


class DomainKind(enum.Enum):
    VARIETY = "X"
    VARIETY_PRIME = "X'"
    COVER = "D~"
    COVER_PRIME = "D~'"
    COVER_ANNULUS = "D~_k"


def eps_k(k: float) -> float:
    """epsilon_k = exp(-e^k / 2)."""
    return float(np.exp(-np.exp(k) / 2.0))


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind = DomainKind.COVER
    radius: float = 1.0
    epsilon: float = 0.25
    k: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind is DomainKind.COVER_ANNULUS and (self.k is None or self.k < 1):
            raise ValueError("annulus D~_k needs an index k >= 1")

    @property
    def outer_radius(self) -> float:
        if self.kind in (DomainKind.VARIETY_PRIME, DomainKind.COVER_PRIME):
            return self.radius + self.epsilon
        return self.radius

    def annulus_bounds(self) -> tuple[float, float]:
        """Cover-norm bounds of D~_k: exp(-e^{k+1}/2) < |x| < sqrt(2) exp(-e^k/2)."""
        return eps_k(self.k + 1), np.sqrt(2.0) * eps_k(self.k)

    @property
    def is_cover(self) -> bool:
        return self.kind in (DomainKind.COVER, DomainKind.COVER_PRIME, DomainKind.COVER_ANNULUS)


def in_domain(point, spec: DomainSpec) -> np.ndarray:
    """Membership test; cover specs take CoverPoints, variety specs AmbientPoints."""
    p = np.asarray(point, dtype=complex)
    if spec.is_cover != (p.shape[0] == 2):
        raise ChartError(f"point with {p.shape[0]} coordinates does not match domain {spec.kind.value}")
    if spec.kind is DomainKind.COVER_ANNULUS:
        lo, hi = spec.annulus_bounds()
        r = norm(p)
        return (lo < r) & (r < hi)
    if spec.is_cover:
        return norm(cover_map(p)) < spec.outer_radius
    return (norm(p) < spec.outer_radius) & on_variety(p)
