"""Singular quadrature on regions of C^2 = R^4 and radial integrals on C^n.

The 4-dimensional engine splits the integrand with a smooth partition of
unity centred at the listed singular points.  Each piece is integrated in
polar coordinates about its own centre: Hopf angles on S^3 (Gauss-Legendre
in the latitude, trapezoid in the two phases) times Gauss-Legendre radial
panels.  Panel breakpoints are the exact radii where a ray crosses a region
boundary, a partition shell or a requested level set of |pi(w)|, so every
panel sees a smooth integrand.  Node positions move smoothly with the
singular points, which keeps finite differences of the result meaningful.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from . import geometry as geo


class QuadratureError(RuntimeError):
    """Raised on malformed quadrature requests."""


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-6
    atol: float = 1e-14
    max_evals: int = 10_000_000
    min_level: int = 1
    max_level: int = 6
    # Use exactly this level (no error loop); needed when results are differenced.
    fixed_level: int | None = None
    # Panels [a, b] away from the centre with b / a above this are split geometrically.
    panel_ratio: float = 4.0
    # Extra geometric splits of the innermost panel toward the centre.
    grading: int = 0
    threads: int = 1
    chunk: int = 1 << 16
    seed: int = 0

    def __post_init__(self):
        if not self.rtol > 0:
            raise QuadratureError("rtol must be positive")
        if self.atol < 0:
            raise QuadratureError("atol must be nonnegative")
        if self.panel_ratio <= 1:
            raise QuadratureError("panel_ratio must exceed 1")

    def with_(self, **kw) -> "QuadratureSpec":
        return QuadratureSpec(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class QuadratureResult:
    value: complex | np.ndarray
    error: float
    evaluations: int
    converged: bool
    level: int = -1

    def __array__(self, dtype=None):
        return np.asarray(self.value, dtype=dtype)


def resolution(level: int) -> tuple[int, int, int, float]:
    """(latitude nodes, phase nodes, radial nodes per panel, max panel length factor)."""
    g = 1.5 ** level
    return int(round(4 * g)), 2 * int(round(4 * g)), 3 + level, 0.5 / g


# --------------------------------------------------------------------------
# Regions


def _sphere_crossings(p, u, c, rad):
    """Positive r with |p + r u - c| = rad, shape (D, 2), NaN where absent."""
    d = (p - c)[:, None]
    b = np.real(np.sum(u.conj() * d, axis=0))
    cc = np.sum(np.abs(d) ** 2, axis=0) - rad * rad
    disc = b * b - cc
    sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
    roots = np.stack([-b - sq, -b + sq], axis=-1)
    return np.where(roots > 0, roots, np.nan)


def _quartic_coeffs(p, u, shift=None):
    """Coefficients (r^4 .. r^0) of |pi(p + r u) - shift|^2 along each ray u."""
    A = geo.cover_map(p[:, None] * np.ones(u.shape[1]))
    if shift is not None:
        A = A - np.asarray(shift, dtype=complex)[:, None]
    B = np.stack([2 * p[0] * u[0], 2 * p[1] * u[1], p[0] * u[1] + p[1] * u[0]])
    C = geo.cover_map(u)
    c4 = np.sum(np.abs(C) ** 2, axis=0)
    c3 = 2 * np.real(np.sum(B * C.conj(), axis=0))
    c2 = np.sum(np.abs(B) ** 2, axis=0) + 2 * np.real(np.sum(A * C.conj(), axis=0))
    c1 = 2 * np.real(np.sum(A * B.conj(), axis=0))
    c0 = np.sum(np.abs(A) ** 2, axis=0)
    return np.stack([c4, c3, c2, c1, c0], axis=-1)


def _level_crossings(coeffs, level):
    """Positive real r with |pi(p + r u)| = level, shape (D, 4), NaN where absent."""
    c = coeffs.copy()
    c[:, 4] -= level * level
    c = c / c[:, :1]
    n = c.shape[0]
    comp = np.zeros((n, 4, 4))
    comp[:, 0, :] = -c[:, 1:]
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) <= 1e-6 * (1 + np.abs(roots.real))
    r = np.where(real, roots.real, np.nan)
    for _ in range(2):
        val = (((c[:, :1] * r + c[:, 1:2]) * r + c[:, 2:3]) * r + c[:, 3:4]) * r + c[:, 4:5]
        der = ((4 * c[:, :1] * r + 3 * c[:, 1:2]) * r + 2 * c[:, 2:3]) * r + c[:, 3:4]
        step = np.where(np.abs(der) > 1e-300, val / np.where(der == 0, 1, der), 0.0)
        r = r - step
    return np.where(r > 0, r, np.nan)


class Region:
    """A bounded region of C^2 described by its ray crossings."""

    def contains(self, w) -> np.ndarray:
        raise NotImplementedError

    def extent(self, p) -> float:
        """Radius about p beyond which the region is empty."""
        raise NotImplementedError

    def crossings(self, p, u, coeffs) -> list[np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball4(Region):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def contains(self, w):
        c = np.asarray(self.center, dtype=complex).reshape(2, *([1] * (np.ndim(w) - 1)))
        return geo.norm(w - c) < self.radius

    def extent(self, p):
        return float(geo.norm(p - np.asarray(self.center, dtype=complex))) + self.radius

    def crossings(self, p, u, coeffs):
        return [_sphere_crossings(p, u, np.asarray(self.center, dtype=complex), self.radius)]


@dataclass(frozen=True)
class Annulus4(Region):
    center: tuple = (0.0, 0.0)
    inner: float = 0.5
    outer: float = 1.0

    def __post_init__(self):
        if not 0 <= self.inner <= self.outer:
            raise QuadratureError("annulus radii must satisfy 0 <= inner <= outer")

    def contains(self, w):
        c = np.asarray(self.center, dtype=complex).reshape(2, *([1] * (np.ndim(w) - 1)))
        r = geo.norm(w - c)
        return (r > self.inner) & (r < self.outer)

    def extent(self, p):
        return float(geo.norm(p - np.asarray(self.center, dtype=complex))) + self.outer

    def crossings(self, p, u, coeffs):
        c = np.asarray(self.center, dtype=complex)
        return [_sphere_crossings(p, u, c, self.inner), _sphere_crossings(p, u, c, self.outer)]


@dataclass(frozen=True)
class CoverBall(Region):
    """{w : |pi(w)| < radius}, the preimage of a ball about the vertex."""

    radius: float = 1.0

    def contains(self, w):
        return geo.norm(geo.cover_map(w)) < self.radius

    def extent(self, p):
        # |pi(w)| >= |w|^2 / 2
        return float(geo.norm(p)) + math.sqrt(2 * self.radius)

    def crossings(self, p, u, coeffs):
        return [_level_crossings(coeffs, self.radius)]


@dataclass(frozen=True)
class CoverShell(Region):
    """{w : inner < |pi(w)| < outer}."""

    inner: float
    outer: float

    def __post_init__(self):
        if not 0 <= self.inner <= self.outer:
            raise QuadratureError("shell radii must satisfy 0 <= inner <= outer")

    def contains(self, w):
        r = geo.norm(geo.cover_map(w))
        return (r > self.inner) & (r < self.outer)

    def extent(self, p):
        return float(geo.norm(p)) + math.sqrt(2 * self.outer)

    def crossings(self, p, u, coeffs):
        return [_level_crossings(coeffs, self.inner), _level_crossings(coeffs, self.outer)]


@dataclass(frozen=True)
class PreimageBall(Region):
    """{w : |pi(w) - center| < radius} for an ambient centre."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def contains(self, w):
        c = np.asarray(self.center, dtype=complex).reshape(3, *([1] * (np.ndim(w) - 1)))
        return geo.norm(geo.cover_map(w) - c) < self.radius

    def extent(self, p):
        reach = float(geo.norm(np.asarray(self.center, dtype=complex))) + self.radius
        return float(geo.norm(p)) + math.sqrt(2 * reach)

    def crossings(self, p, u, coeffs):
        return [_level_crossings(_quartic_coeffs(p, u, self.center), self.radius)]


# --------------------------------------------------------------------------
# Partition of unity


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Partition:
    """Bumps psi_i around the singular points and a background 1 - sum psi_i.

    psi_i is 1 within delta/2 of its centre and 0 beyond delta; with delta
    at most 0.4 times the smallest separation the bumps are disjoint.  The
    background is integrated in polar coordinates about ``origin``.
    """

    origin: np.ndarray  # (2,)
    centers: np.ndarray  # (2, m) bump centres
    delta: float

    @classmethod
    def build(cls, points: Sequence, origin=None, scale: float = 0.4) -> "Partition":
        pts = [np.asarray(p, dtype=complex).reshape(2) for p in points]
        if origin is None:
            origin = pts[0] if len(pts) == 1 else np.zeros(2, complex)
        origin = np.asarray(origin, dtype=complex).reshape(2)
        if len(pts) > 1:
            P = np.stack(pts, axis=1)
            d = geo.norm(P[:, :, None] - P[:, None, :])
            dmin = float(np.min(d[~np.eye(len(pts), dtype=bool)]))
            if dmin <= 0:
                raise QuadratureError("singular points must be distinct")
        bumps = [p for p in pts if geo.norm(p - origin) > 0]
        if not bumps:
            return cls(origin, np.zeros((2, 0), complex), 0.0)
        if len(pts) == 1:
            dmin = float(geo.norm(pts[0] - origin))
        return cls(origin, np.stack(bumps, axis=1), scale * dmin)

    @property
    def size(self) -> int:
        return self.centers.shape[1]

    def bump(self, w, i) -> np.ndarray:
        d = geo.norm(w - self.centers[:, i, None])
        return 1.0 - _smoothstep((d - self.delta / 2) / (self.delta / 2))

    def background(self, w) -> np.ndarray:
        out = np.ones(w.shape[1:])
        for i in range(self.size):
            out = out - self.bump(w, i)
        return out


# --------------------------------------------------------------------------
# Node construction


@dataclass
class _Nodes:
    points: np.ndarray  # (2, N)
    weights: np.ndarray  # (N,)


CoverRule = _Nodes


def _hopf_directions(n_a: int, n_phi: int):
    xa, wa = np.polynomial.legendre.leggauss(n_a)
    a = (xa + 1) * np.pi / 4
    wa = wa * np.pi / 4 * np.sin(a) * np.cos(a)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    wphi = 2 * np.pi / n_phi
    A, P1, P2 = np.meshgrid(a, phi, phi, indexing="ij")
    W = (wa[:, None, None] * wphi * wphi) * np.ones_like(A)
    u = np.stack([np.cos(A) * np.exp(1j * P1), np.sin(A) * np.exp(1j * P2)]).reshape(2, -1)
    return u, W.reshape(-1)


def _panel_edges(lo, hi, ratio, hmax, grading):
    """Subdivide panels: geometric splits where hi/lo > ratio, grading toward 0, then length caps."""
    # geometric
    with np.errstate(divide="ignore", invalid="ignore"):
        nge = np.where(lo > 0, np.ceil(np.log(hi / np.where(lo > 0, lo, 1)) / math.log(ratio)), 1)
    nge = np.maximum(nge, 1).astype(int)
    first = lo == 0
    nge = np.where(first, 1 + grading, nge)
    idx = np.repeat(np.arange(lo.size), nge)
    k = np.arange(idx.size) - np.repeat(np.cumsum(nge) - nge, nge)
    n = nge[idx]
    l0, h0 = lo[idx], hi[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(l0 > 0, h0 / np.where(l0 > 0, l0, 1), 1.0)
        a_geo = l0 * q ** (k / n)
        b_geo = l0 * q ** ((k + 1) / n)
        # graded innermost panel: [0, h g^(n-1)], then [h g^(j+1), h g^j]
        g = 0.2
        a_gr = np.where(k == 0, 0.0, h0 * g ** (n - k))
        b_gr = h0 * g ** (n - 1 - k)
    a = np.where(l0 > 0, a_geo, a_gr)
    b = np.where(l0 > 0, b_geo, b_gr)
    # length caps
    nl = np.maximum(np.ceil((b - a) / hmax), 1).astype(int)
    idx2 = np.repeat(np.arange(a.size), nl)
    k2 = np.arange(idx2.size) - np.repeat(np.cumsum(nl) - nl, nl)
    width = (b - a)[idx2] / nl[idx2]
    start = a[idx2] + k2 * width
    return idx[idx2], start, start + width


def _ray_nodes(center, rmax, region: Region, level: int, spec: QuadratureSpec,
               pi_levels, spheres, length_scale, half_phase: bool = False) -> _Nodes:
    """Polar nodes about ``center`` out to ``rmax`` with exact panel breakpoints."""
    n_a, n_phi, n_r, hfac = resolution(level)
    u, wang = _hopf_directions(n_a, n_phi)
    if half_phase:
        # w -> -w shifts both phases by pi; keep phi1 < pi and double
        phi1 = np.angle(u[0]) % (2 * np.pi)
        keep = phi1 < np.pi - 1e-12
        u, wang = u[:, keep], 2 * wang[keep]
    D = u.shape[1]
    coeffs = _quartic_coeffs(center, u)
    cands = list(region.crossings(center, u, coeffs))
    for lev in pi_levels:
        cands.append(_level_crossings(coeffs, lev))
    for c, rad in spheres:
        cands.append(_sphere_crossings(center, u, np.asarray(c, dtype=complex), rad))
    bp = np.concatenate(cands, axis=1) if cands else np.zeros((D, 0))
    bp = np.where((bp > 0) & (bp < rmax), bp, rmax)
    bp = np.sort(bp, axis=1)
    edges = np.concatenate([np.zeros((D, 1)), bp, np.full((D, 1), rmax)], axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    keep = hi - lo > 1e-13 * rmax
    mid = 0.5 * (lo + hi)
    dirs = np.broadcast_to(np.arange(D)[:, None], lo.shape)
    probe = center[:, None, None] + mid[None] * u[:, :, None]
    keep &= region.contains(probe)
    lo, hi, dirs = lo[keep], hi[keep], dirs[keep]
    pidx, a, b = _panel_edges(lo, hi, spec.panel_ratio, hfac * length_scale, spec.grading)
    dirs = dirs[pidx]
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    half = 0.5 * (b - a)
    r = ((0.5 * (a + b))[:, None] + half[:, None] * xg[None, :]).reshape(-1)
    wr = (half[:, None] * wg[None, :]).reshape(-1)
    dd = np.repeat(dirs, n_r)
    pts = center[:, None] + r[None, :] * u[:, dd]
    return _Nodes(pts, wr * r ** 3 * wang[dd])


def _pieces(region, partition: Partition, level, spec, pi_levels, spheres, length_scale, even):
    """(nodes, multiplicity) for the background and each bump."""
    shells = [(partition.centers[:, i], rad) for i in range(partition.size)
              for rad in (partition.delta / 2, partition.delta)]
    bg_even = even and geo.norm(partition.origin) == 0
    nodes = _ray_nodes(partition.origin, region.extent(partition.origin), region, level, spec,
                       pi_levels, tuple(spheres) + tuple(shells), length_scale, half_phase=bg_even)
    if partition.size:
        wb = partition.background(nodes.points)
        nodes = _Nodes(nodes.points[:, wb != 0], (nodes.weights * wb)[wb != 0])
    out = [(nodes, 1.0)]
    skip = set()
    for i in range(partition.size):
        if i in skip:
            continue
        mult = 1.0
        if even:
            for j in range(i + 1, partition.size):
                if j not in skip and geo.norm(partition.centers[:, j] + partition.centers[:, i]) < 1e-15:
                    skip.add(j)
                    mult = 2.0
                    break
        c = partition.centers[:, i]
        bn = _ray_nodes(c, min(partition.delta, region.extent(c)), region, level, spec,
                        pi_levels, spheres, length_scale)
        wb = partition.bump(bn.points, i)
        out.append((_Nodes(bn.points[:, wb != 0], (bn.weights * wb)[wb != 0]), mult))
    return out


def parallel_map_reduce(items: Sequence, evaluator: Callable, threads: int = 1):
    """Evaluate ``evaluator`` on each item and add the results by a pairwise tree.

    The reduction order depends only on the item order, so the result is
    bit-identical for any worker count.
    """
    items = list(items)
    if not items:
        return 0.0
    if threads is None or threads <= 0:
        threads = os.cpu_count() or 1
    if threads == 1 or len(items) == 1:
        vals = [evaluator(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(evaluator, items))
    while len(vals) > 1:
        nxt = [vals[k] + vals[k + 1] for k in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def _weighted_sum(f, nodes: _Nodes, spec: QuadratureSpec):
    n = nodes.weights.size
    if n == 0:
        return 0.0
    bounds = [(s, min(s + spec.chunk, n)) for s in range(0, n, spec.chunk)]

    def chunk(se):
        s, e = se
        vals = np.asarray(f(nodes.points[:, s:e]))
        return vals @ nodes.weights[s:e]

    return parallel_map_reduce(bounds, chunk, spec.threads)


def cover_rule(region: Region, singular_points: Sequence = (), level: int = 2,
               spec: QuadratureSpec = QuadratureSpec(), *, even: bool = False,
               pi_levels: Sequence[float] = (), spheres: Sequence = (),
               length_scale: float | None = None, origin=None) -> CoverRule:
    """Nodes and weights of the level-``level`` rule used by ``integrate_cover``.

    With ``even=True`` the rule is only valid for integrands symmetric under
    w -> -w.
    """
    partition = Partition.build(list(singular_points), origin)
    if length_scale is None:
        length_scale = max(region.extent(partition.origin), 1e-300)
    parts = _pieces(region, partition, level, spec, pi_levels, spheres, length_scale, even)
    return _Nodes(np.concatenate([n.points for n, _ in parts], axis=1),
                  np.concatenate([m * n.weights for n, m in parts]))


def integrate_cover(f: Callable, region: Region, singular_points: Sequence = (),
                    spec: QuadratureSpec = QuadratureSpec(), *, even: bool = False,
                    pi_levels: Sequence[float] = (), spheres: Sequence = (),
                    length_scale: float | None = None, origin=None) -> QuadratureResult:
    """Integrate ``f`` over ``region`` against Lebesgue measure on C^2.

    ``f`` maps points of shape (2, N) to values of shape (N,) or (m, N).
    ``singular_points`` are centres of polar refinement; they are never
    sampled.  The remainder is integrated in polar coordinates about
    ``origin`` (default: the only singular point, else 0), so the region
    should be star-shaped about it.  With ``even=True`` the integrand and
    the point set must be symmetric under w -> -w; mirrored pieces are
    then integrated once.
    ``pi_levels`` and ``spheres`` add panel breakpoints where the
    integrand is only piecewise smooth.
    """
    partition = Partition.build(list(singular_points), origin)
    if length_scale is None:
        length_scale = max(region.extent(partition.origin), 1e-300)

    def at_level(level):
        total, evals = 0.0, 0
        for nodes, mult in _pieces(region, partition, level, spec, pi_levels, spheres,
                                   length_scale, even):
            total = total + mult * _weighted_sum(f, nodes, spec)
            evals += nodes.weights.size
        return total, evals

    if spec.fixed_level is not None:
        val, ev = at_level(spec.fixed_level)
        return QuadratureResult(val, float("nan"), ev, True, spec.fixed_level)

    used = 0
    prev, ev = at_level(spec.min_level)
    used += ev
    level = spec.min_level
    err = float("inf")
    while level < spec.max_level:
        level += 1
        # cost grows about 1.5^4 per level
        if used + ev * 6 > spec.max_evals:
            break
        cur, ev = at_level(level)
        used += ev
        err = float(np.max(np.abs(np.asarray(cur) - np.asarray(prev))))
        prev = cur
        scale = float(np.max(np.abs(np.asarray(cur))))
        if err <= max(spec.rtol * scale, spec.atol):
            return QuadratureResult(cur, err, used, True, level)
    return QuadratureResult(prev, err, used, False, level)


def integrate_annulus_cn(f: Callable, n: int, r1: float, r2: float,
                         spec: QuadratureSpec = QuadratureSpec(), *, radial: bool = True,
                         center=None, singular_points: Sequence = ()) -> QuadratureResult:
    """Integrate over the annulus r1 < |zeta - center| < r2 in C^n.

    For radial integrands ``f`` is a function of the distance to the centre
    and the angular integral is done exactly; the remaining 1-D integral
    runs in t = log r so hyper-exponentially thin shells stay resolved.
    Non-radial integrands are supported for n = 2 only.
    """
    if not 0 < r1 <= r2 and not (r1 == 0 and r2 >= 0):
        raise QuadratureError("need 0 <= r1 <= r2")
    if r1 == r2:
        return QuadratureResult(0.0, 0.0, 0, True)
    if radial:
        area = 2 * math.pi ** n / math.factorial(n - 1)
        count = [0]

        def g(t):
            count[0] += 1
            r = math.exp(t)
            return f(r) * r ** (2 * n) * area

        lo = math.log(r1) if r1 > 0 else math.log(r2) - 60.0
        val, err, info = _quad(g, lo, math.log(r2), spec)
        ok = info == 0 and err <= max(spec.rtol * abs(val), spec.atol)
        return QuadratureResult(val, err, count[0], ok)
    if n != 2:
        raise QuadratureError("non-radial annulus integrals are available for n = 2 only")
    c = (0.0, 0.0) if center is None else tuple(np.asarray(center, dtype=complex))
    return integrate_cover(f, Annulus4(c, r1, r2), tuple(singular_points) or (c,), spec)


def _quad(g, a, b, spec):
    out = sp_integrate.quad(g, a, b, epsabs=spec.atol, epsrel=min(spec.rtol, 1e-3) * 1e-2,
                            limit=400, full_output=1)
    val, err = out[0], out[1]
    info = 0 if len(out) < 4 else 1
    return val, err, info
