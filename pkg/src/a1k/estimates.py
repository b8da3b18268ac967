"""Quadrature oracles for the integral estimates behind the boundedness of the operator.

Each check evaluates an integral by quadrature, evaluates the shape of the
claimed bound and reports the ratio.  Constants are empirical caps: the
claims are boundedness statements, so a check passes when the ratio is
finite, below its cap, and stable when the quadrature tolerance is halved.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geometry as geo
from .quadrature import (
    Annulus4,
    Ball4,
    CoverBall,
    PreimageBall,
    QuadratureResult,
    QuadratureSpec,
    integrate_annulus_cn,
    integrate_cover,
)

# Empirical caps on LHS / bound, one per check family.
CAPS = {
    "radial": 2 * math.pi ** 2,
    "two_pole": 100.0,
    "symmetric_pole": 50.0,
    "log_annulus": 100.0,
    "cover_kernel": 50.0,
    "factor_continuity": 1.0,
    "ball_area": 20.0,
}
STABILITY = 0.10
ORACLE_SPEC = QuadratureSpec(rtol=5e-3, max_level=6, max_evals=1e8)


@dataclass(frozen=True)
class EstimateReport:
    name: str
    params: dict
    lhs: float
    bound: float
    ratio: float
    cap: float
    converged: bool = True
    ratio_refined: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        if self.ratio_refined is None:
            return True
        return abs(self.ratio - self.ratio_refined) <= STABILITY * abs(self.ratio_refined)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.ratio) and self.ratio <= self.cap and self.converged and self.stable)

    def as_dict(self) -> dict:
        return {
            "id": self.name,
            "params": self.params,
            "lhs": self.lhs,
            "bound": self.bound,
            "ratio": self.ratio,
            "ratio_refined": self.ratio_refined,
            "cap": self.cap,
            "converged": self.converged,
            "stable": self.stable,
            "pass": self.passed,
            **({"extra": self.extra} if self.extra else {}),
        }


def _report(name, params, compute, bound, spec, refine, cap_key, extra=None):
    res = compute(spec)
    lhs = float(np.real(res.value))
    ratio = lhs / bound if bound > 0 else math.inf
    refined = None
    converged = res.converged
    if refine:
        res2 = compute(spec.with_(rtol=spec.rtol / 2))
        refined = float(np.real(res2.value)) / bound if bound > 0 else math.inf
        converged = converged and res2.converged
    return EstimateReport(name, params, lhs, bound, ratio, CAPS[cap_key], converged, refined, extra or {})


def three_case(a: float, b: float, t: float) -> float:
    """1 if a < b, 1 + |log t| if a == b, t^(b - a) if a > b."""
    if math.isclose(a, b, rel_tol=0, abs_tol=1e-12):
        return 1.0 + abs(math.log(t))
    if a < b:
        return 1.0
    return t ** (b - a)


def _pt(x, n=2):
    x = np.asarray(x, dtype=complex).reshape(n)
    return x


# --------------------------------------------------------------------------
# Geometry sandwiches


def check_pair_sandwich(n: int = 1_000_000, seed: int = 0, slack: float = 1e-12, chunk: int = 250_000):
    """alpha^2 <= beta_+^2 beta_-^2 <= 4 alpha^2 on random pairs in the unit bidisc.

    Returns (number of violations, worst lower margin, worst upper margin),
    margins relative to the middle term.
    """
    rng = np.random.default_rng(seed)
    bad, lo_m, hi_m = 0, math.inf, math.inf
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        r = np.sqrt(rng.uniform(size=(4, m)))
        th = rng.uniform(0, 2 * np.pi, size=(4, m))
        pts = r * np.exp(1j * th)
        w, x = pts[:2], pts[2:]
        a, bm, bp = geo.pair_geometry(w, x)
        a2, mid = a * a, (bm * bp) ** 2
        scale = np.maximum(mid, 1e-300)
        low = (mid - a2) / scale
        high = (4 * a2 - mid) / scale
        bad += int(np.sum(low < -slack) + np.sum(high < -slack))
        lo_m, hi_m = min(lo_m, float(low.min())), min(hi_m, float(high.min()))
    return bad, lo_m, hi_m


def check_cover_norm_bounds(n: int = 1_000_000, seed: int = 1, slack: float = 1e-12, chunk: int = 250_000):
    """|w|^2 / 2 <= |pi(w)| <= |w|^2 on random w; returns (violations, worst margins)."""
    rng = np.random.default_rng(seed)
    bad, lo_m, hi_m = 0, math.inf, math.inf
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        w = rng.normal(size=(2, m)) + 1j * rng.normal(size=(2, m))
        w *= rng.uniform(0.01, 3.0, size=m) / geo.norm(w)
        r2 = geo.norm(w) ** 2
        p = geo.norm(geo.cover_map(w))
        low = (p - 0.5 * r2) / r2
        high = (r2 - p) / r2
        bad += int(np.sum(low < -slack) + np.sum(high < -slack))
        lo_m, hi_m = min(lo_m, float(low.min())), min(hi_m, float(high.min()))
    return bad, lo_m, hi_m


def _kuhn_simplices(d: int = 4):
    """The d! simplices of the Kuhn triangulation of the unit d-cube, as vertex offsets."""
    out = []
    for perm in itertools.permutations(range(d)):
        v = np.zeros(d, dtype=int)
        verts = [v.copy()]
        for axis in perm:
            v[axis] = 1
            verts.append(v.copy())
        out.append(np.array(verts))
    return np.array(out)  # (d!, d+1, d)


def _real_coords(w):
    return np.stack([w[0].real, w[0].imag, w[1].real, w[1].imag])


def _from_real(v):
    return np.stack([v[0] + 1j * v[1], v[2] + 1j * v[3]])


def triangulated_image_area(center, half_width: float, n: int = 8) -> float:
    """Area of pi(cube) in C^3 = R^6 from a Kuhn triangulation of the w-cube mapped by pi."""
    c = _real_coords(_pt(center).reshape(2, 1))[:, 0]
    simp = _kuhn_simplices()
    grid = np.stack(np.meshgrid(*[np.arange(n)] * 4, indexing="ij"), axis=-1).reshape(-1, 4)
    h = 2 * half_width / n
    # (cells, simplices, 5 vertices, 4 coords)
    verts = (grid[:, None, None, :] + simp[None]) * h + (c - half_width)
    v = verts.reshape(-1, 4).T
    img = geo.cover_map(_from_real(v))
    img = np.concatenate([img.real, img.imag]).T.reshape(verts.shape[:3] + (6,))
    E = img[:, :, 1:, :] - img[:, :, :1, :]  # edge vectors (cells, simp, 4, 6)
    G = np.einsum("csie,csje->csij", E, E)
    vol = np.sqrt(np.maximum(np.linalg.det(G), 0.0)) / math.factorial(4)
    return float(vol.sum())


def patch_area(center, half_width: float, nodes: int = 12) -> float:
    """int det H dV over the w-cube (tensor Gauss-Legendre)."""
    c = _real_coords(_pt(center).reshape(2, 1))[:, 0]
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    X = np.stack(np.meshgrid(*[xg] * 4, indexing="ij")).reshape(4, -1)
    W = np.prod(np.stack(np.meshgrid(*[wg] * 4, indexing="ij")).reshape(4, -1), axis=0)
    pts = c[:, None] + half_width * X
    return float(np.sum(W * geo.metric_det(_from_real(pts))) * half_width ** 4)


# --------------------------------------------------------------------------
# Appendix estimates in C^n


def check_radial_integral(n: int, alpha: float, r1: float, r2: float, x=None,
                          spec: QuadratureSpec = ORACLE_SPEC, refine: bool = True) -> EstimateReport:
    """int over B_r2(x) minus B_r1(x) of |zeta - x|^(-alpha); x only shifts the domain."""
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    if alpha < 2 * n:
        bound = r2 ** (2 * n - alpha)
    elif alpha == 2 * n:
        bound = 1.0 + abs(math.log(r2 / r1))
    else:
        bound = r1 ** (2 * n - alpha)

    def compute(sp):
        return integrate_annulus_cn(lambda r: r ** (-alpha), n, r1, r2, sp)

    params = {"n": n, "alpha": alpha, "r1": r1, "r2": r2}
    return _report("radial", params, compute, bound, spec, refine, "radial")


def check_two_pole(x1, x2, alpha: float, beta: float, spec: QuadratureSpec = ORACLE_SPEC,
                   refine: bool = True) -> EstimateReport:
    """int over the unit ball of C^2 of |zeta - x1|^(-alpha) |zeta - x2|^(-beta)."""
    n = 2
    x1, x2 = _pt(x1), _pt(x2)
    d = float(np.linalg.norm(x1 - x2))
    if d == 0:
        raise ValueError("poles must differ")
    if not (0 <= alpha < 2 * n and 0 <= beta < 2 * n):
        raise ValueError("need 0 <= alpha, beta < 2n")
    bound = three_case(alpha + beta, 2 * n, d)

    def f(w):
        return geo.norm(w - x1[:, None]) ** (-alpha) * geo.norm(w - x2[:, None]) ** (-beta)

    def compute(sp):
        return integrate_cover(f, Ball4(), [x1, x2], sp)

    params = {"x1": _c(x1), "x2": _c(x2), "alpha": alpha, "beta": beta, "dist": d}
    return _report("two_pole", params, compute, bound, spec, refine, "two_pole")


def check_symmetric_pole(x, alpha: float, beta: float, gamma: float, spec: QuadratureSpec = ORACLE_SPEC,
                         refine: bool = True) -> EstimateReport:
    """int over the unit ball of |zeta|^gamma / (|zeta - x|^alpha |zeta + x|^beta)."""
    n = 2
    x = _pt(x)
    nx = float(np.linalg.norm(x))
    if nx == 0:
        raise ValueError("x must be nonzero")
    if gamma <= -2 * n:
        raise ValueError("need gamma > -2n")
    bound = three_case(alpha + beta, 2 * n + gamma, nx)

    def f(w):
        return (geo.norm(w) ** gamma * geo.norm(w - x[:, None]) ** (-alpha)
                * geo.norm(w + x[:, None]) ** (-beta))

    def compute(sp):
        return integrate_cover(f, Ball4(), [x, -x], sp, even=alpha == beta)

    params = {"x": _c(x), "alpha": alpha, "beta": beta, "gamma": gamma, "norm_x": nx}
    return _report("symmetric_pole", params, compute, bound, spec, refine, "symmetric_pole")


def log_annulus_tail(k: int, n: int = 2, spec: QuadratureSpec = QuadratureSpec(rtol=1e-10)) -> float:
    """int over eps_{k+1} < |zeta| < eps_{k-1} of dV / (|zeta|^{2n} |log|zeta||), per unit sphere area."""
    area = 2 * math.pi ** n / math.factorial(n - 1)
    lo, hi = geo.eps_k(k + 1), geo.eps_k(k - 1)
    res = integrate_annulus_cn(lambda r: 1.0 / (r ** (2 * n) * abs(math.log(r))), n, lo, hi, spec)
    return float(res.value) / area


def check_log_annulus(x, k: int, alpha: float, beta: float, gamma: float,
                      spec: QuadratureSpec = ORACLE_SPEC, refine: bool = True) -> EstimateReport:
    """|x|^(6 - gamma) times the log-weighted annulus integral; bound is the constant 1."""
    n = 2
    x = _pt(x)
    nx = float(np.linalg.norm(x))
    if k < 1:
        raise ValueError("k must be >= 1")
    if not math.isclose(alpha + beta, 2 * n + 2):
        raise ValueError("need alpha + beta = 2n + 2")
    if not 0 <= gamma <= 6:
        raise ValueError("need 0 <= gamma <= 6")
    lo, hi = geo.eps_k(k + 1), geo.eps_k(k - 1)

    def f(w):
        r = geo.norm(w)
        return (nx ** (6 - gamma) * r ** (gamma - 4) / np.abs(np.log(r))
                * geo.norm(w - x[:, None]) ** (-alpha) * geo.norm(w + x[:, None]) ** (-beta))

    def compute(sp):
        return integrate_cover(f, Annulus4((0.0, 0.0), lo, hi), [x, -x], sp, even=alpha == beta)

    params = {"x": _c(x), "k": k, "alpha": alpha, "beta": beta, "gamma": gamma, "norm_x": nx}
    return _report("log_annulus", params, compute, 1.0, spec, refine, "log_annulus")


# --------------------------------------------------------------------------
# Estimates on the cover


F_CASES = {
    "w1^2": lambda w, x: w[0] ** 2,
    "w2^2": lambda w, x: w[1] ** 2,
    "w1w2": lambda w, x: w[0] * w[1],
    "x1^2": lambda w, x: x[0] ** 2,
    "x2^2": lambda w, x: x[1] ** 2,
    "x1x2": lambda w, x: x[0] * x[1],
}


def check_cover_kernel_integral(x, gamma: float, f_case: str, epsilon: float = 0.25,
                                spec: QuadratureSpec = ORACLE_SPEC, refine: bool = True) -> EstimateReport:
    """int over pi^{-1}(B_{1+eps}) of |w|^gamma |f| / alpha^3 against the three-case bound in |x|."""
    if f_case not in F_CASES:
        raise ValueError(f"unknown f case {f_case!r}")
    x = _pt(x)
    nx = float(np.linalg.norm(x))
    if nx == 0:
        raise ValueError("x must be nonzero")
    w_type = f_case.startswith("w")
    if gamma <= (-6 if w_type else -4):
        raise ValueError("gamma below the admissible range")
    if gamma > 0:
        bound = 1.0
    elif gamma == 0:
        bound = 1.0 + abs(math.log(nx))
    else:
        bound = nx ** gamma
    fx = F_CASES[f_case]
    zx = geo.cover_map(x.reshape(2, 1))

    def f(w):
        alpha = geo.norm(geo.cover_map(w) - zx)
        return geo.norm(w) ** gamma * np.abs(fx(w, x)) / alpha ** 3

    def compute(sp):
        return integrate_cover(f, CoverBall(1.0 + epsilon), [x, -x], sp, even=True)

    params = {"x": _c(x), "gamma": gamma, "f": f_case, "norm_x": nx, "epsilon": epsilon}
    return _report("cover_kernel", params, compute, bound, spec, refine, "cover_kernel")


def check_kernel_factor_continuity(i: int, r: float, t_sequence: Sequence[float], epsilon: float = 0.25,
                                   level: int = 3, samples: int = 20_000, seed: int = 0) -> EstimateReport:
    """L^r(X') distance between a(., z) and a(., 0), a = (zeta_i - z_i)/|zeta - z|, along z = (t, 0, 0).

    The report's ``lhs`` is the last distance; ``extra`` holds the whole
    sequence, and the check passes when it strictly decreases and the
    sampled sup of |a| stays at most 1.
    """
    if not 1 <= i <= 3:
        raise ValueError("i must be 1, 2 or 3")
    if not 1 <= r < math.inf:
        raise ValueError("r must be finite and >= 1")
    idx = i - 1
    region = CoverBall(1.0 + epsilon)
    dists = []
    for t in t_sequence:
        z = np.array([t, 0.0, 0.0], dtype=complex)
        if t == 0:
            dists.append(0.0)
            continue
        pre = np.array([math.sqrt(t), 0.0], dtype=complex)

        def f(w, z=z):
            zeta = geo.cover_map(w)
            a_z = (zeta[idx] - z[idx]) / geo.norm(zeta - z[:, None])
            a_0 = zeta[idx] / geo.norm(zeta)
            return 0.5 * np.abs(a_z - a_0) ** r * geo.metric_det(w)

        res = integrate_cover(f, region, [pre, -pre], QuadratureSpec(fixed_level=level), even=True,
                              origin=(0.0, 0.0))
        dists.append(float(res.value) ** (1.0 / r))
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(2, samples)) + 1j * rng.normal(size=(2, samples))
    zeta = geo.cover_map(w)
    sup = 0.0
    for t in t_sequence:
        z = np.array([t, 0.0, 0.0], dtype=complex)[:, None]
        d = geo.norm(zeta - z)
        sup = max(sup, float(np.max(np.abs(zeta[idx] - z[idx]) / d)))
    dec = all(b < a for a, b in zip(dists, dists[1:]))
    ratio = sup  # bounded by 1
    rep = EstimateReport("factor_continuity", {"i": i, "r": r, "t": list(t_sequence)}, dists[-1], 1.0,
                         ratio, CAPS["factor_continuity"], dec, None,
                         {"distances": dists, "sup_abs": sup, "decreasing": dec})
    return rep


def variety_ball_area(z, eps: float, level: int = 4) -> float:
    """Area of X cap B_eps(z) from the cover (two sheets, hence the 1/2)."""
    z = np.asarray(z, dtype=complex).reshape(3)
    if not bool(geo.on_variety(z.reshape(3, 1))[0]):
        raise ValueError("z must lie on the variety")
    pre = _preimage(z)
    pts = [] if pre is None else [pre, -pre]

    def f(w):
        return 0.5 * geo.metric_det(w)

    res = integrate_cover(f, PreimageBall(tuple(z), eps), pts, QuadratureSpec(fixed_level=level),
                          even=True, origin=(0.0, 0.0) if pre is None else None)
    return float(res.value)


def _preimage(z):
    """One w with pi(w) = z, or None at the vertex."""
    if np.allclose(z, 0):
        return None
    w1 = np.sqrt(z[0])
    w2 = z[2] / w1 if abs(w1) > 0 else np.sqrt(z[1])
    return np.array([w1, w2], dtype=complex)


def check_variety_ball_area(z, eps_list: Sequence[float], level: int = 4) -> EstimateReport:
    """max over eps of area(X cap B_eps(z)) / eps^4."""
    areas = [variety_ball_area(z, e, level) for e in eps_list]
    ratios = [a / e ** 4 for a, e in zip(areas, eps_list)]
    worst = max(ratios)
    return EstimateReport("ball_area", {"z": _c(np.asarray(z)), "eps": list(eps_list)}, areas[-1],
                          eps_list[-1] ** 4, worst, CAPS["ball_area"], True, None,
                          {"areas": areas, "ratios": ratios})


def dyadic_band(reports: Sequence[EstimateReport]) -> float:
    """max/min of the ratios along a sequence of reports."""
    r = [rep.ratio for rep in reports]
    return max(r) / min(r)


def _c(v) -> list:
    """JSON-friendly complex vector."""
    return [[float(np.real(c)), float(np.imag(c))] for c in np.ravel(v)]


def structure_result(res: QuadratureResult) -> dict:
    return {"value": float(np.real(res.value)), "error": res.error, "evaluations": res.evaluations,
            "converged": res.converged}
