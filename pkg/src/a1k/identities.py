"""Exact identities and pointwise invariants, each reported as an error against a tolerance.

Every function returns an ``EstimateReport`` whose ratio is error / tolerance,
so a check passes when the ratio is at most 1.
"""
from __future__ import annotations

import math

import numpy as np

from . import geometry as geo
from . import kernel as K
from .estimates import (
    EstimateReport,
    check_cover_norm_bounds,
    check_pair_sandwich,
    patch_area,
    triangulated_image_area,
)
from .exterior import AMBIENT, ExteriorElement
from .forms import TestForm
from .solver import CutoffSequence, ambient_one_form_norm


def _report(name, params, err, tol):
    err = float(err)
    return EstimateReport(name, params, err, tol, err / tol if tol > 0 else math.inf, 1.0)


def _random_pairs(n, seed, w_scale=0.6, x_scale=0.4):
    rng = np.random.default_rng(seed)
    w = (rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))) * w_scale
    x = (rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))) * x_scale
    return w, x


def _shell_pairs(n, seed, evaluator):
    """w with |pi(w)| inside the transition shell of chi, so both kernel parts are live."""
    rng = np.random.default_rng(seed)
    prof = evaluator.profile
    w = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    target = rng.uniform(prof.inner, prof.outer, n)
    w = w / np.sqrt(geo.norm(geo.cover_map(w))) * np.sqrt(target)
    x = (rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))) * 0.4
    return w, x


# --------------------------------------------------------------------------
# Geometry


def pair_sandwich(n=1_000_000, seed=0, slack=1e-12) -> EstimateReport:
    bad, lo, hi = check_pair_sandwich(n, seed, slack)
    worst = max(0.0, -lo, -hi)
    rep = _report("pair_sandwich", {"n": n, "seed": seed}, worst, slack)
    return EstimateReport(rep.name, rep.params, rep.lhs, rep.bound, rep.ratio, 1.0, bad == 0,
                          extra={"violations": bad, "lower_margin": lo, "upper_margin": hi})


def cover_norm_bounds(n=1_000_000, seed=1, slack=1e-12) -> EstimateReport:
    bad, lo, hi = check_cover_norm_bounds(n, seed, slack)
    worst = max(0.0, -lo, -hi)
    rep = _report("cover_norm_bounds", {"n": n, "seed": seed}, worst, slack)
    return EstimateReport(rep.name, rep.params, rep.lhs, rep.bound, rep.ratio, 1.0, bad == 0,
                          extra={"violations": bad, "lower_margin": lo, "upper_margin": hi})


def volume_density_identity(n=100_000, seed=2, tol=1e-12) -> EstimateReport:
    """volume_density = 1/2 det H, relative error."""
    rng = np.random.default_rng(seed)
    w = (rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))) * rng.uniform(0.01, 3.0, n)
    vd = geo.volume_density(w)
    det = geo.metric_det(w)
    err = np.max(np.abs(vd - geo.VOLUME_DET_RATIO * det) / np.maximum(np.abs(det), 1e-300))
    return _report("volume_density", {"n": n, "ratio": geo.VOLUME_DET_RATIO}, err, tol)


PATCH_CENTERS = ((0.5, 0.3), (0.2 + 0.1j, -0.4j), (1.2, 0.7), (0.3 - 0.6j, 0.5 + 0.2j))


def patch_area_agreement(centers=PATCH_CENTERS, half_width=0.05, cells=6, tol=0.01) -> EstimateReport:
    """Cover-patch area (Gauss rule for det H) against the triangulated image in R^6."""
    errs = []
    for c in centers:
        a = patch_area(c, half_width)
        t = triangulated_image_area(c, half_width, cells)
        errs.append(abs(t - a) / a)
    rep = _report("patch_area", {"half_width": half_width, "cells": cells, "patches": len(centers)},
                  max(errs), tol)
    return EstimateReport(rep.name, rep.params, rep.lhs, rep.bound, rep.ratio, 1.0,
                          extra={"relative_errors": errs})


# --------------------------------------------------------------------------
# Kernel


def kernel_routes_agree(n=100, seed=3, tol=1e-10) -> EstimateReport:
    """Closed-form kernel densities against the exterior-algebra assembly, both parts, q = 1, 2."""
    ev = K.KernelEvaluator()
    worst = 0.0
    for w, x in (_random_pairs(n, seed), _shell_pairs(n, seed + 1, ev)):
        for q in (1, 2):
            closed = ev.kernel_split(w, x, q, "closed")
            ext = ev.kernel_split(w, x, q, "exterior")
            for a, b in zip(closed, ext):
                scale = max(float(np.max(np.abs(b.density))), 1e-300)
                worst = max(worst, float(np.max(np.abs(a.density - b.density))) / scale)
    return _report("kernel_routes", {"n": n}, worst, tol)


def s3_termwise(n=100, seed=4, tol=1e-10) -> EstimateReport:
    """The signed S3 sums reproduce the chi and dbar-chi parts coefficient by coefficient."""
    ev = K.KernelEvaluator()
    worst = 0.0
    for w, x in (_random_pairs(n, seed), _shell_pairs(n, seed + 1, ev)):
        ctx = ev.context(w, x)
        a1, a2, b = K.ktilde_parts(ctx)
        chi_part, dchi_part = K.s3_expansion(ctx)
        pairs = [(chi_part[0], a1), (chi_part[1], b), (dchi_part[0], a2), (dchi_part[1], 0 * a2)]
        scale = max(float(np.max(np.abs(a1))), float(np.max(np.abs(a2))), 1e-300)
        for s3, closed in pairs:
            worst = max(worst, float(np.max(np.abs(s3 - closed))) / scale)
    return _report("s3_termwise", {"n": n}, worst, tol)


def _fd_dbar(f, p, k, h):
    """d/d(conj p_k) of f at p by central differences; p has shape (3, n)."""
    e = np.zeros_like(p)
    e[k] = h
    d_re = (f(p + e) - f(p - e)) / (2 * h)
    d_im = (f(p + 1j * e) - f(p - 1j * e)) / (2 * h)
    return 0.5 * (d_re + 1j * d_im)


def _max_diff(a: ExteriorElement, b: ExteriorElement) -> float:
    masks = set(a.terms) | set(b.terms)
    out = 0.0
    for m in masks:
        out = max(out, float(np.max(np.abs(np.asarray(a.coefficient_of(m)) - np.asarray(b.coefficient_of(m))))))
    return out


def _max_coef(a: ExteriorElement) -> float:
    return max([float(np.max(np.abs(np.asarray(c)))) for c in a.terms.values()] or [0.0])


def dbar_blocks_fd(n=20, seed=5, h=1e-5, tol=1e-6) -> EstimateReport:
    """Closed-form dbar chi, dbar s, dbar sigma against central differences (relative)."""
    ev = K.KernelEvaluator()
    w, x = _shell_pairs(n, seed, ev)
    ctx = ev.context(w, x)
    prof = ctx.profile
    c_s, c_sig = ctx.norm_constants
    errs = {}

    # chi(|zeta|) as a function of zeta
    _, dchi = K.chi_and_dbar_chi(ctx)
    fd = ExteriorElement(AMBIENT)
    for k in range(3):
        fd = fd + K._gen(K.ZETABAR[k], _fd_dbar(lambda p: prof.value(geo.norm(p)), ctx.zeta, k, h))
    errs["chi"] = _max_diff(dchi, fd) / _max_coef(dchi)

    # s_j = etabar_j / (c_s |eta|^2) as a function of eta
    _, dbar_s, _ = K.bm_block(ctx)
    fd = ExteriorElement(AMBIENT)
    for j in range(3):
        for k in range(3):
            g = _fd_dbar(lambda e, j=j: e[j].conj() / (c_s * np.sum(np.abs(e) ** 2, axis=0)), ctx.eta, k, h)
            fd = fd + K.detabar(k, g).wedge(K._gen(K.ETA[j]))
    errs["s"] = _max_diff(dbar_s, fd) / _max_coef(dbar_s)

    # sigma_j = zetabar_j / (c_sigma (|zeta|^2 - zetabar . z)) as a function of zeta, z fixed
    _, dbar_sigma, _ = K.weight_block(ctx)
    z = ctx.z
    fd = ExteriorElement(AMBIENT)
    for j in range(3):
        for k in range(3):
            def sig(p, j=j):
                return p[j].conj() / (c_sig * (np.sum(np.abs(p) ** 2, axis=0) - np.sum(p.conj() * z, axis=0)))
            fd = fd + K._gen(K.ZETABAR[k], _fd_dbar(sig, ctx.zeta, k, h)).wedge(K._gen(K.ETA[j]))
    errs["sigma"] = _max_diff(dbar_sigma, fd) / _max_coef(dbar_sigma)

    rep = _report("dbar_blocks_fd", {"n": n, "h": h}, max(errs.values()), tol)
    return EstimateReport(rep.name, rep.params, rep.lhs, rep.bound, rep.ratio, 1.0, extra=errs)


def k2_annihilates_q2(n=100, seed=6) -> EstimateReport:
    """The dbar-chi part of the kernel vanishes on (0,2)-forms (exterior route, exact zero)."""
    ev = K.KernelEvaluator()
    w, x = _shell_pairs(n, seed, ev)
    _, k2 = ev.kernel_split(w, x, 2, "exterior")
    _, k2_1 = ev.kernel_split(w, x, 1, "exterior")
    live = float(np.max(np.abs(k2_1.density)))  # the same part is nonzero on (0,1)-forms
    rep = _report("k2_q2_zero", {"n": n}, float(np.max(np.abs(k2.density))), 1e-300)
    return EstimateReport(rep.name, rep.params, rep.lhs, 0.0, 0.0 if rep.lhs == 0 else math.inf, 1.0,
                          live > 0, extra={"q1_part_max": live})


# --------------------------------------------------------------------------
# Algebra


def _random_form(rng, q):
    coeffs = {}
    for I in TestForm.basis(q):
        poly = {}
        for _ in range(3):
            e = tuple(int(v) for v in rng.integers(0, 3, 6))
            poly[e] = complex(rng.normal(), rng.normal())
        coeffs[I] = poly
    return TestForm(q, coeffs)


def dbar_squared(trials=50, seed=7) -> EstimateReport:
    """dbar dbar = 0 exactly on polynomial coefficients."""
    rng = np.random.default_rng(seed)
    nonzero = 0
    for _ in range(trials):
        for q in (0, 1):
            if not _random_form(rng, q).dbar().dbar().is_zero():
                nonzero += 1
    return _report("dbar_squared", {"trials": trials}, nonzero, 1.0) if nonzero else \
        EstimateReport("dbar_squared", {"trials": trials}, 0.0, 0.0, 0.0, 1.0)


def wedge_laws(trials=20, seed=8, tol=1e-12) -> EstimateReport:
    """Graded commutativity and associativity of the wedge product on random elements."""
    rng = np.random.default_rng(seed)
    names = AMBIENT.names

    def rand_elem(deg):
        out = ExteriorElement(AMBIENT)
        for _ in range(4):
            pick = rng.choice(len(names), deg, replace=False)
            term = ExteriorElement.scalar(AMBIENT, complex(rng.normal(), rng.normal()))
            for i in pick:
                term = term.wedge(ExteriorElement.generator(AMBIENT, names[i]))
            out = out + term
        return out

    worst = 0.0
    for _ in range(trials):
        p, q, r = (int(v) for v in rng.integers(1, 4, 3))
        a, b, c = rand_elem(p), rand_elem(q), rand_elem(r)
        worst = max(worst, _max_diff(a.wedge(b), b.wedge(a) * ((-1) ** (p * q))))
        worst = max(worst, _max_diff(a.wedge(b).wedge(c), a.wedge(b.wedge(c))))
    return _report("wedge_laws", {"trials": trials}, worst, tol)


# --------------------------------------------------------------------------
# Cut-off sequence


def cutoff_pointwise(k: int, n=100_000, seed=9, slack=1e-12) -> EstimateReport:
    """Support, range and the pointwise dbar bound of mu_k on log-uniform radii around the shell."""
    seq = CutoffSequence(k)
    lo, hi = seq.support
    rng = np.random.default_rng(seed + k)
    s = np.exp(rng.uniform(math.log(lo) - 1.0, math.log(0.99), n))
    dirs = rng.normal(size=(3, n)) + 1j * rng.normal(size=(3, n))
    zeta = dirs / geo.norm(dirs) * s
    s = geo.norm(zeta)
    mu = seq.mu(s)
    dn = ambient_one_form_norm(seq.dbar_coefficients(zeta))
    bound = seq.bound(s)
    inside = (s >= lo) & (s <= hi)
    errs = {
        "range": float(max(0.0, -mu.min(), mu.max() - 1.0)),
        "one_outside": float(np.max(np.abs(mu[s > hi] - 1.0), initial=0.0)),
        "zero_inside": float(np.max(np.abs(mu[s < lo]), initial=0.0)),
        "dbar_outside": float(np.max(dn[~inside], initial=0.0)),
        "bound_excess": float(np.max((dn - bound)[inside] / bound[inside], initial=0.0)),
    }
    worst = max(0.0, *errs.values())
    rep = _report("cutoff_pointwise", {"k": k, "n": n, "in_shell": int(inside.sum())}, worst, slack)
    return EstimateReport(rep.name, rep.params, rep.lhs, rep.bound, rep.ratio, 1.0,
                          extra={**errs, "max_dbar_over_bound": float(np.max(dn[inside] / bound[inside]))})


def all_identities(samples: int = 1_000_000, seed: int = 0) -> list[EstimateReport]:
    return [
        pair_sandwich(samples, seed),
        cover_norm_bounds(samples, seed + 1),
        volume_density_identity(seed=seed + 2),
        patch_area_agreement(),
        kernel_routes_agree(seed=seed + 3),
        s3_termwise(seed=seed + 4),
        dbar_blocks_fd(seed=seed + 5),
        k2_annihilates_q2(seed=seed + 6),
        dbar_squared(seed=seed + 7),
        wedge_laws(seed=seed + 8),
    ]
