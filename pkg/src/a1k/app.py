"""Command line driver: run a suite of checks and write report.json plus CSV tables.

    a1k <suite> [--epsilon F] [--tol F] [--budget N] [--seed N] [--threads N]
                [--k-list 1,2] [--p-list 1.5,2,4,inf] [--out DIR] [--config FILE]

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 a quadrature did not converge.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import estimates as est
from . import geometry as geo
from . import identities as ids
from . import solver as sol
from .forms import HOMOTOPY_FORMS, dzetabar
from .kernel import CONVENTIONS, KernelEvaluator
from .quadrature import QuadratureSpec

log = logging.getLogger("a1k")

SUITES = ("identities", "estimates", "homotopy", "lp-scan", "continuity", "cutoff")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 0.25
    tol: float = 5e-3
    budget: int = 100_000_000
    seed: int = 0
    threads: int = 1
    k_list: tuple = (1, 2)
    p_list: tuple = (1.5, 2.0, 4.0, math.inf)
    out: str = "a1k-out"
    samples: int = 1_000_000
    homotopy_points: int = 20
    homotopy_level: int = 4
    fd_step: float = 0.0  # 0 selects the default step 1e-3 (1 + |x|)
    fd_halving_steps: tuple = (0.16, 0.08, 0.04)
    fd_halving_level: int = 4
    calibration: str = "fit"  # "fit" or a number (real or complex literal)
    ensemble: int = 20
    scan_level: int = 1
    continuity_radii: tuple = (0.2, 0.1, 0.05, 0.025)
    continuity_level: int = 3
    cutoff_level: int = 1
    cutoff_out_level: int = 0
    cutoff_grading: int = 0  # extra log-graded output panels near the shell
    cutoff_samples: int = 100_000

    def validate(self) -> "RunConfig":
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if self.budget < 1000:
            raise ConfigError("budget must be at least 1000 evaluations")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0 (0 = all cores)")
        if not self.k_list or any(k not in (1, 2) for k in self.k_list):
            raise ConfigError("k-list entries must be 1 or 2")
        if not self.p_list or any(not p > 4.0 / 3.0 for p in self.p_list):
            raise ConfigError("p-list entries must exceed 4/3")
        if self.samples < 1 or self.homotopy_points < 1 or self.ensemble < 1 or self.cutoff_samples < 1:
            raise ConfigError("sample counts must be positive")
        if self.fd_step < 0 or any(h <= 0 for h in self.fd_halving_steps):
            raise ConfigError("finite-difference steps must be positive")
        if any(r <= 0 for r in self.continuity_radii):
            raise ConfigError("continuity radii must be positive")
        for name in ("homotopy_level", "fd_halving_level", "scan_level", "continuity_level",
                     "cutoff_level", "cutoff_out_level", "cutoff_grading"):
            if not 0 <= getattr(self, name) <= 6:
                raise ConfigError(f"{name} must lie in 0..6")
        self.calibration_value()
        return self

    def calibration_value(self) -> complex | None:
        if self.calibration == "fit":
            return None
        try:
            return complex(str(self.calibration).replace(" ", ""))
        except ValueError:
            raise ConfigError(f"calibration must be 'fit' or a number, got {self.calibration!r}") from None

    def echo(self) -> dict:
        """Config as reported; the thread count is left out so reports match across worker counts."""
        d = asdict(self)
        d.pop("threads")
        d.pop("out")
        return _jsonable(d)


def _parse_list(text: str, conv: Callable) -> tuple:
    try:
        return tuple(conv(v.strip()) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _parse_float(v: str) -> float:
    v = v.strip().lower()
    return math.inf if v in ("inf", "infinity") else float(v)


_CONVERTERS = {
    "k_list": lambda v: _parse_list(v, int),
    "p_list": lambda v: _parse_list(v, _parse_float),
    "fd_halving_steps": lambda v: _parse_list(v, float),
    "continuity_radii": lambda v: _parse_list(v, float),
}


def _convert(name: str, value):
    if name in _CONVERTERS:
        return _CONVERTERS[name](value)
    default = getattr(RunConfig, name)
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(float(value))
        if isinstance(default, float):
            return _parse_float(str(value))
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return str(value)


def load_config_file(path: str | os.PathLike) -> dict:
    """Flat key=value file; section headers are optional and only group keys."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            out[name] = _convert(name, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(load_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for name in ("epsilon", "tol", "budget", "seed", "threads", "k_list", "p_list", "out"):
        v = getattr(args, name)
        if v is not None:
            values[name] = _convert(name, v)
    return RunConfig(**values).validate()


# --------------------------------------------------------------------------
# Reports


@dataclass
class RunReport:
    suite: str
    config: RunConfig
    checks: list
    residuals: list
    tables: dict  # name -> (header, rows)
    timings: dict

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    @property
    def converged(self) -> bool:
        return all(c.get("converged", True) for c in self.checks)

    def exit_code(self) -> int:
        if self.passed:
            return EXIT_PASS
        return EXIT_FAIL if self.converged else EXIT_NONCONVERGED

    def payload(self) -> dict:
        return {
            "version": __version__,
            "suite": self.suite,
            "config": self.config.echo(),
            "conventions": convention_ledger(self.config),
            "checks": self.checks,
            "residuals": self.residuals,
            "summary": {
                "checks": len(self.checks),
                "passed": sum(1 for c in self.checks if c["pass"]),
                "failed": [c["id"] for c in self.checks if not c["pass"]],
                "pass": self.passed,
            },
        }


def convention_ledger(cfg: RunConfig) -> dict:
    c = cfg.calibration_value()
    return {
        "kernel_constant": "fitted per run" if c is None else _jsonable(c),
        "kernel_constant_default": sol.DEFAULT_CALIBRATION,
        "normalisation": "consistent",
        "normalisation_constants": _jsonable(CONVENTIONS["consistent"]),
        "structure_form_cover": geo.STRUCTURE_FORM_COVER,
        "top_form_to_measure": geo.TOP_FORM_TO_MEASURE,
        "volume_density_over_det": geo.VOLUME_DET_RATIO,
        "form_norm_scale": geo.NORM_SCALE,
    }


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return [_jsonable(float(v.real)), _jsonable(float(v.imag))]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return v


def emit_report(report: RunReport, out_dir: str | os.PathLike) -> list[Path]:
    """Write report.json, timings.json and one CSV per table; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "timings.json"]
    paths[0].write_text(json.dumps(_jsonable(report.payload()), indent=2, sort_keys=True) + "\n")
    paths[1].write_text(json.dumps(_jsonable(report.timings), indent=2, sort_keys=True) + "\n")
    for name, (header, rows) in sorted(report.tables.items()):
        p = out / f"{name}.csv"
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        paths.append(p)
    return paths


def _check(rep: est.EstimateReport) -> dict:
    return _jsonable(rep.as_dict())


def _simple(cid, params, lhs, bound, ok, ratio=None, **extra) -> dict:
    if ratio is None:
        ratio = lhs / bound if bound else (0.0 if lhs == 0 else math.inf)
    d = {"id": cid, "params": params, "lhs": lhs, "bound": bound, "ratio": ratio, "pass": bool(ok)}
    d.update(extra)
    return _jsonable(d)


# --------------------------------------------------------------------------
# Suites


def _operator(cfg: RunConfig, level: int, calibration=None) -> sol.KoppelmanOperator:
    c = sol.DEFAULT_CALIBRATION if calibration is None else calibration
    kern = KernelEvaluator(epsilon=cfg.epsilon, calibration=c)
    spec = QuadratureSpec(rtol=cfg.tol, max_evals=cfg.budget, threads=cfg.threads)
    return sol.KoppelmanOperator(kern, level, spec)


def suite_identities(cfg: RunConfig):
    checks = [_check(r) for r in ids.all_identities(cfg.samples, cfg.seed)]
    for k in cfg.k_list:
        checks.append(_check(ids.cutoff_pointwise(k, cfg.cutoff_samples, cfg.seed)))
    return checks, [], {}


ESTIMATE_GRID_NOTE = "x dyadic from 0.5 to 0.02 where a norm sequence is needed"


def estimate_grid(cfg: RunConfig):
    """(label, thunk) pairs for every estimate check on its parameter grid."""
    spec = est.ORACLE_SPEC.with_(rtol=cfg.tol, max_evals=cfg.budget, threads=cfg.threads)
    dyadic = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.02]
    u = np.array([0.6, 0.8j])  # unit direction in C^2
    v = np.array([0.8, 0.6j])
    grid = []
    grid.append(("radial alpha=0", [lambda: est.check_radial_integral(2, 0, 1e-6, 1.0, spec=spec)]))
    grid.append(("radial alpha=4", [lambda: est.check_radial_integral(2, 4, 0.1, 1.0, spec=spec)]))
    grid.append(("radial alpha=6", [lambda r1=r1: est.check_radial_integral(2, 6, r1, 1.0, spec=spec)
                                    for r1 in (0.1, 0.05, 0.025)]))
    x1 = np.array([0.1, 0.0])
    grid.append(("two-pole 2,2", [lambda d=d: est.check_two_pole(x1, x1 + d * np.array([1.0, 0.0]), 2, 2, spec)
                                  for d in (0.5, 0.25, 0.125)]))
    grid.append(("two-pole 3,2", [lambda d=d: est.check_two_pole(x1, x1 + d * np.array([0.0, 1j]), 3, 2, spec)
                                  for d in (0.5, 0.25, 0.125)]))
    grid.append(("two-pole 0,0", [lambda: est.check_two_pole(x1, -x1, 0, 0, spec)]))
    for g in (2, 4, 0):
        grid.append((f"symmetric-pole 3,3,{g}",
                     [lambda n=n, g=g: est.check_symmetric_pole(n * u, 3, 3, g, spec) for n in dyadic]))
    for k in cfg.k_list:
        centre = math.sqrt(geo.eps_k(k + 1) * geo.eps_k(k - 1))
        grid.append((f"log-annulus k={k}", [
            lambda k=k: est.check_log_annulus(0.9 * u, k, 3, 3, 4, spec),
            lambda k=k: est.check_log_annulus(0.9 * u, k, 4, 2, 4, spec),
            lambda k=k, c=centre: est.check_log_annulus(c * u, k, 3, 3, 6, spec),
            lambda k=k, c=centre: est.check_log_annulus(c * u, k, 3, 3, 4, spec),
        ]))
    for f, g in (("w1^2", 0), ("x1^2", 2), ("w1^2", -2)):
        grid.append((f"cover-kernel {f} gamma={g}",
                     [lambda n=n, f=f, g=g: est.check_cover_kernel_integral(n * v, g, f, cfg.epsilon, spec)
                      for n in (0.5, 0.1, 0.02)]))
    grid.append(("factor-continuity", [lambda: est.check_kernel_factor_continuity(1, 4, [0.2, 0.1, 0.05],
                                                                                 cfg.epsilon)]))
    z_reg = geo.cover_map(np.array([[0.5], [0.3]]))[:, 0]
    grid.append(("ball-area vertex", [lambda: est.check_variety_ball_area((0, 0, 0), [0.4, 0.2, 0.1])]))
    grid.append(("ball-area regular", [lambda: est.check_variety_ball_area(z_reg, [0.1, 0.05])]))
    return grid


# families whose bound carries a negative power of the scale: LHS * scale^(-exponent) must stay in a band
BANDED = ("radial alpha=6", "two-pole 3,2", "symmetric-pole 3,3,0", "cover-kernel w1^2 gamma=-2")
BAND_LIMIT = 4.0


def suite_estimates(cfg: RunConfig):
    checks = []
    for label, thunks in estimate_grid(cfg):
        reps = []
        for th in thunks:
            rep = th()
            reps.append(rep)
            d = _check(rep)
            d["family"] = label
            checks.append(d)
        if label in BANDED:
            band = est.dyadic_band(reps)
            checks.append(_simple("dyadic_band", {"family": label, "terms": len(reps)}, band, BAND_LIMIT,
                                  band <= BAND_LIMIT))
    for k in cfg.k_list:
        tail = est.log_annulus_tail(k)
        checks.append(_simple("log_annulus_tail", {"k": k}, tail, 2.0, abs(tail - 2.0) <= 1e-6,
                              ratio=tail / 2.0, error=abs(tail - 2.0)))
    return checks, [], {}


HOMOTOPY_LIMIT = 0.05
FD_HALVING_MIN = 3.0


def _fitted_operator(cfg: RunConfig, level: int, pts):
    c = cfg.calibration_value()
    if c is None:
        raw = _operator(cfg, level, 1.0)
        c = sol.calibrate(pts, raw, cfg.fd_step or None)
    return _operator(cfg, level, c), c


def suite_homotopy(cfg: RunConfig):
    pts = sol.sample_points(cfg.homotopy_points, cfg.seed)
    op, c = _fitted_operator(cfg, cfg.homotopy_level, pts)
    h = cfg.fd_step or None
    checks, residuals, rows = [], [], []
    checks.append(_simple("kernel_constant", {"form": "dzb3", "points": len(pts)}, abs(c), 1.0, True,
                          ratio=abs(c), value=c))
    for q in (1, 2):
        names = list(HOMOTOPY_FORMS[q])
        results = sol.homotopy_residuals([HOMOTOPY_FORMS[q][n] for n in names], pts, op, h)
        for name, res in zip(names, results):
            worst = res.max_residual
            checks.append(_simple("homotopy", {"q": q, "form": name, "points": len(pts)}, worst,
                                  HOMOTOPY_LIMIT, worst <= HOMOTOPY_LIMIT))
            for x, r, a in zip(res.points, res.residual, res.absolute):
                residuals.append({"q": q, "form": name, "x": _jsonable(x), "residual": r, "absolute": a})
                rows.append([q, name, x[0].real, x[0].imag, x[1].real, x[1].imag, r])
    # finite-difference order: coarse steps so the truncation error dominates quadrature noise
    fine = op.with_level(cfg.fd_halving_level)
    x = pts[0]
    for q in (1, 2):
        forms = list(HOMOTOPY_FORMS[q].items())[:2]
        series = np.array([[r.residual[0] for r in sol.homotopy_residuals([f for _, f in forms], x, fine, hh)]
                           for hh in cfg.fd_halving_steps])
        for j, (name, _) in enumerate(forms):
            vals = series[:, j]
            ratios = vals[:-1] / vals[1:]
            checks.append(_simple("fd_halving", {"q": q, "form": name, "steps": cfg.fd_halving_steps},
                                  float(np.min(ratios)), FD_HALVING_MIN, bool(np.all(ratios >= FD_HALVING_MIN)),
                                  ratio=float(np.min(ratios)) / FD_HALVING_MIN, residuals=vals))
    header = ["q", "form", "x1re", "x1im", "x2re", "x2im", "residual"]
    return checks, residuals, {"homotopy": (header, rows)}


SCAN_STABILITY = 0.20


def suite_lp_scan(cfg: RunConfig):
    op = _operator(cfg, cfg.scan_level, cfg.calibration_value())
    checks, rows = [], []
    for q in (1, 2):
        scan = sol.operator_norm_scan(q, cfg.p_list, 2 * cfg.ensemble, cfg.seed, op)
        small, full = scan.sup(cfg.ensemble), scan.sup()
        for p, a, b in zip(cfg.p_list, small, full):
            drift = abs(b - a) / a
            ok = bool(np.isfinite(b) and drift <= SCAN_STABILITY)
            checks.append(_simple("lp_scan", {"q": q, "p": p, "ensemble": [cfg.ensemble, 2 * cfg.ensemble]},
                                  float(b), float(a), ok, ratio=float(b / a), drift=drift))
            rows.append([q, _jsonable(p), cfg.ensemble, a])
            rows.append([q, _jsonable(p), 2 * cfg.ensemble, b])
    return checks, [], {"lp_scan": (["q", "p", "ensemble", "sup_ratio"], rows)}


def suite_continuity(cfg: RunConfig):
    op = _operator(cfg, cfg.continuity_level, cfg.calibration_value())
    checks, tables = [], {}
    for name, phi in (("dzb1", dzetabar(0)), ("zb1 dzb2", HOMOTOPY_FORMS[1]["zb1 dzb2"])):
        scan = sol.continuity_scan(phi, cfg.continuity_radii, op=op)
        d = scan.differences
        checks.append(_simple("continuity", {"form": name, "radii": cfg.continuity_radii}, float(d[-1]),
                              float(d[0]), scan.decreasing, differences=d,
                              values=scan.values.reshape(len(cfg.continuity_radii), -1)))
        tables[f"continuity_{name.replace(' ', '_')}"] = (
            ["radius", "re", "im"], [[r, complex(v).real, complex(v).imag]
                                     for r, v in zip(cfg.continuity_radii, scan.values.reshape(-1))])
    return checks, [], tables


CUTOFF_FORMS = {"dzb1": dzetabar(0), "zb1 dzb2": HOMOTOPY_FORMS[1]["zb1 dzb2"]}


def suite_cutoff(cfg: RunConfig):
    op = _operator(cfg, cfg.cutoff_level, cfg.calibration_value())
    checks, rows = [], []
    for k in cfg.k_list:
        checks.append(_check(ids.cutoff_pointwise(k, cfg.cutoff_samples, cfg.seed)))
    for name, phi in CUTOFF_FORMS.items():
        res = sol.cutoff_convergence(phi, cfg.k_list, op, out_level=cfg.cutoff_out_level,
                                     grading=cfg.cutoff_grading)
        ok = res.decreasing and all(n == 0 for n in res.nodes_outside)
        checks.append(_simple("cutoff_l2", {"form": name, "k": cfg.k_list}, float(res.l2[-1]),
                              float(res.l2[0]), ok, l2=res.l2, nodes_outside=res.nodes_outside))
        for k, v in zip(res.k_list, res.l2):
            rows.append([name, k, v])
    return checks, [], {"cutoff": (["form", "k", "L2norm"], rows)}


SUITE_RUNNERS = {
    "identities": suite_identities,
    "estimates": suite_estimates,
    "homotopy": suite_homotopy,
    "lp-scan": suite_lp_scan,
    "continuity": suite_continuity,
    "cutoff": suite_cutoff,
}


def run_suite(name: str, cfg: RunConfig) -> RunReport:
    if name not in SUITE_RUNNERS:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    try:
        checks, residuals, tables = SUITE_RUNNERS[name](cfg)
    except (ValueError, ArithmeticError) as exc:
        if isinstance(exc, ConfigError):
            raise
        log.error("suite %s failed: %s", name, exc)
        checks, residuals, tables = [_simple("error", {"suite": name}, math.inf, 0.0, False,
                                             message=str(exc))], [], {}
    elapsed = time.perf_counter() - t0
    return RunReport(name, cfg, checks, residuals, tables,
                     {"suite": name, "seconds": elapsed, "threads": cfg.threads})


# --------------------------------------------------------------------------
# Entry point


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="a1k", description="Koppelman operator checks on the A1 cone")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--epsilon", type=str, help="kernel cut-off margin (default 0.25)")
    p.add_argument("--tol", type=str, help="relative quadrature tolerance for adaptive checks")
    p.add_argument("--budget", type=str, help="maximum integrand evaluations per adaptive integral")
    p.add_argument("--seed", type=str, help="seed for every random sample")
    p.add_argument("--threads", type=str, help="worker threads (0 = all cores)")
    p.add_argument("--k-list", dest="k_list", type=str, help="cut-off indices, e.g. 1,2")
    p.add_argument("--p-list", dest="p_list", type=str, help="exponents, e.g. 1.5,2,4,inf")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--config", type=str, help="key=value config file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = build_config(args)
        if cfg.threads == 0:
            cfg = replace(cfg, threads=os.cpu_count() or 1)
        report = run_suite(args.suite, cfg)
    except ConfigError as exc:
        print(f"a1k: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_report(report, cfg.out)
    except OSError as exc:
        print(f"a1k: cannot write report: {exc}", file=sys.stderr)
        return EXIT_FAIL
    s = report.payload()["summary"]
    print(f"{args.suite}: {s['passed']}/{s['checks']} checks passed -> {cfg.out}")
    for c in report.checks:
        if not c["pass"]:
            print(f"  FAIL {c['id']} {json.dumps(c['params'], sort_keys=True)}")
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
