"""Acceptance criteria 1-10, one printed PASS/FAIL line each.

Run on its own with ``pytest -s tests/test_acceptance.py``; under plain ``pytest -v``
the lines are still printed because capture is switched off around them.
"""
import json
import math
import time

import numpy as np
import pytest

from a1k import app
from a1k import identities as ids
from a1k import solver as S
from a1k.quadrature import QuadratureSpec

pytestmark = pytest.mark.slow

DEFAULT = app.RunConfig()


@pytest.fixture
def report_line(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def failed_ids(checks):
    return [(c["id"], c["params"]) for c in checks if not c["pass"]]


def test_criterion_01_pair_sandwich(report_line):
    rep, secs = timed(ids.pair_sandwich, 10**6, 0, 1e-12)
    ok = rep.passed and rep.extra["violations"] == 0 and secs < 10
    report_line(1, ok, f"1e6 pairs, violations={rep.extra['violations']}, "
                       f"margins=({rep.extra['lower_margin']:.3g}, {rep.extra['upper_margin']:.3g}), {secs:.1f}s")
    assert ok


def test_criterion_02_geometry(report_line):
    def run():
        return (ids.volume_density_identity(tol=1e-12),
                ids.patch_area_agreement(tol=0.01),
                ids.cover_norm_bounds(10**6, 1, 1e-12))
    (vol, patch, bounds), secs = timed(run)
    ok = vol.passed and patch.passed and bounds.passed and secs < 60
    report_line(2, ok, f"volume density err={vol.lhs:.2g}, patch area err={patch.lhs:.2g}, "
                       f"norm-bound violations={bounds.extra['violations']}, {secs:.1f}s")
    assert ok


def test_criterion_03_kernel_assembly(report_line):
    def run():
        return (ids.s3_termwise(n=100), ids.kernel_routes_agree(n=100),
                ids.dbar_blocks_fd(tol=1e-6), ids.k2_annihilates_q2())
    (s3, routes, fd, k2), secs = timed(run)
    ok = s3.passed and routes.passed and fd.passed and k2.passed and k2.lhs == 0.0 and secs < 60
    report_line(3, ok, f"S3 err={s3.lhs:.2g}, routes err={routes.lhs:.2g}, dbar FD err={fd.lhs:.2g}, "
                       f"K2 on (0,2)={k2.lhs:.2g}, {secs:.1f}s")
    assert ok


def test_criterion_04_estimate_oracles(report_line):
    rep, secs = timed(app.run_suite, "estimates", DEFAULT)
    checks = rep.checks
    finite = all(isinstance(c["ratio"], float) and math.isfinite(c["ratio"]) for c in checks)
    stable = all(c.get("stable", True) for c in checks)
    tails = [c for c in checks if c["id"] == "log_annulus_tail"]
    tail_ok = bool(tails) and all(c["error"] <= 1e-6 for c in tails)
    ok = rep.passed and finite and stable and tail_ok and secs < 1800
    report_line(4, ok, f"{len(checks)} checks, failed={failed_ids(checks)}, "
                       f"tail={[c['lhs'] for c in tails]}, {secs:.0f}s")
    assert ok


def test_criterion_05_homotopy(report_line):
    rep, secs = timed(app.run_suite, "homotopy", DEFAULT)
    hom = [c for c in rep.checks if c["id"] == "homotopy"]
    per_q = {q: [c for c in hom if c["params"]["q"] == q] for q in (1, 2)}
    enough = all(len(v) >= 3 and all(c["params"]["points"] >= 20 for c in v) for v in per_q.values())
    within = all(c["lhs"] <= 0.05 for c in hom)
    fd = [c for c in rep.checks if c["id"] == "fd_halving"]
    fd_ok = bool(fd) and all(c["lhs"] >= 3.0 for c in fd)
    ok = rep.passed and enough and within and fd_ok and secs < 7200
    worst = max(c["lhs"] for c in hom)
    report_line(5, ok, f"{len(hom)} forms, worst residual={worst:.3%}, "
                       f"min FD halving ratio={min(c['lhs'] for c in fd):.2f}, {secs:.0f}s")
    assert ok


def test_criterion_06_lp_scan(report_line):
    rep, secs = timed(app.run_suite, "lp-scan", DEFAULT)
    scans = [c for c in rep.checks if c["id"] == "lp_scan"]
    covered = {(c["params"]["q"], c["params"]["p"]) for c in scans}
    want = {(q, p) for q in (1, 2) for p in (1.5, 2.0, 4.0, "inf")}
    drift = max(c["drift"] for c in scans)
    ok = rep.passed and want <= covered and drift <= 0.20 and secs < 3600
    report_line(6, ok, f"ensemble {DEFAULT.ensemble}->{2 * DEFAULT.ensemble}, max drift={drift:.1%}, "
                       f"failed={failed_ids(scans)}, {secs:.0f}s")
    assert ok


def test_criterion_07_continuity(report_line):
    rep, secs = timed(app.run_suite, "continuity", DEFAULT)
    cont = [c for c in rep.checks if c["id"] == "continuity"]
    radii_ok = all(tuple(c["params"]["radii"]) == (0.2, 0.1, 0.05, 0.025) for c in cont)
    strict = all(all(a > b for a, b in zip(c["differences"], c["differences"][1:])) for c in cont)
    ok = rep.passed and bool(cont) and radii_ok and strict and secs < 1800
    diffs = [[f"{d:.2g}" for d in c["differences"]] for c in cont]
    report_line(7, ok, f"successive differences {diffs}, {secs:.0f}s")
    assert ok


def test_criterion_08_cutoff(report_line):
    rep, secs = timed(app.run_suite, "cutoff", DEFAULT)
    l2 = [c for c in rep.checks if c["id"] == "cutoff_l2"]
    point = [c for c in rep.checks if c["id"] == "cutoff_pointwise"]
    decreasing = sum(1 for c in l2 if c["l2"][1] < c["l2"][0])
    samples_ok = all(c["params"]["n"] >= 10**5 for c in point)
    ok = rep.passed and decreasing >= 2 and len(point) == 2 and samples_ok and secs < 3600
    report_line(8, ok, f"L2 by k={[[f'{v:.2g}' for v in c['l2']] for c in l2]}, "
                       f"pointwise checks={len(point)}, {secs:.0f}s")
    assert ok


def test_criterion_09_structure_form_l2(report_line):
    def run():
        return [S.structure_form_l2(QuadratureSpec(rtol=t)) for t in (1e-3, 1e-5, 1e-7)]
    res, secs = timed(run)
    vals = np.array([r.value for r in res])
    steps = np.abs(np.diff(vals))
    ok = (all(r.converged for r in res) and np.all(np.isfinite(vals))
          and steps[1] < steps[0] and steps[-1] <= 1e-5 * vals[-1] and secs < 300)
    report_line(9, ok, f"||omega||^2 = {vals[-1]:.6f}, successive changes {steps.tolist()}, {secs:.0f}s")
    assert ok


def _payload(suite, threads):
    cfg = app.RunConfig(threads=threads)
    return json.dumps(app._jsonable(app.run_suite(suite, cfg).payload()), sort_keys=True).encode()


def test_criterion_10_determinism(report_line):
    same = {}
    for suite in ("identities", "continuity"):
        a, b, c = _payload(suite, 1), _payload(suite, 4), _payload(suite, 1)
        same[suite] = a == b == c
    ok = all(same.values())
    report_line(10, ok, f"byte-identical payloads across 1 and 4 threads: {same}")
    assert ok
