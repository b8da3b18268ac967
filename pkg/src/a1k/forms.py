"""Polynomial (0,q)-forms on C^3 with exact dbar, and their pullbacks to the cover."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

import numpy as np

from . import geometry as geo

Exponent = tuple  # (a1, a2, a3, b1, b2, b3): zeta^a zetabar^b


def _normalize_poly(poly: Mapping) -> dict:
    out = {}
    for e, c in poly.items():
        e = tuple(int(v) for v in e)
        if len(e) != 6 or min(e) < 0:
            raise ValueError(f"bad exponent {e}")
        c = complex(c)
        if c != 0:
            out[e] = out.get(e, 0) + c
    return {e: c for e, c in out.items() if c != 0}


def eval_poly(poly: Mapping, zeta: np.ndarray) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    zb = zeta.conj()
    out = np.zeros(zeta.shape[1:], dtype=complex)
    for e, c in poly.items():
        term = np.full(zeta.shape[1:], c, dtype=complex)
        for k in range(3):
            if e[k]:
                term = term * zeta[k] ** e[k]
            if e[3 + k]:
                term = term * zb[k] ** e[3 + k]
        out = out + term
    return out


def dbar_poly(poly: Mapping, k: int) -> dict:
    """d/d(zetabar_k) of a polynomial, 0-based k."""
    out = {}
    for e, c in poly.items():
        b = e[3 + k]
        if b:
            e2 = list(e)
            e2[3 + k] -= 1
            out[tuple(e2)] = out.get(tuple(e2), 0) + c * b
    return _normalize_poly(out)


@dataclass(frozen=True)
class TestForm:
    """sum_I phi_I dzetabar_I with I an increasing 0-based index tuple of length q."""

    __test__ = False  # not a pytest class

    q: int
    coeffs: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.q not in (0, 1, 2, 3):
            raise ValueError("q must be 0..3")
        norm = {}
        for I, poly in self.coeffs.items():
            I = tuple(I)
            if len(I) != self.q or list(I) != sorted(set(I)) or any(not 0 <= i < 3 for i in I):
                raise ValueError(f"bad monomial {I} for degree {self.q}")
            p = _normalize_poly(poly)
            if p:
                norm[I] = p
        object.__setattr__(self, "coeffs", norm)

    @classmethod
    def monomial(cls, I, exponent, coef=1.0) -> "TestForm":
        I = tuple(I)
        return cls(len(I), {I: {tuple(exponent): coef}})

    @staticmethod
    def basis(q: int):
        return list(combinations(range(3), q))

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "TestForm") -> "TestForm":
        if self.q != other.q:
            raise ValueError("degree mismatch")
        out = {I: dict(p) for I, p in self.coeffs.items()}
        for I, p in other.coeffs.items():
            tgt = out.setdefault(I, {})
            for e, c in p.items():
                tgt[e] = tgt.get(e, 0) + c
        return TestForm(self.q, out)

    def scale(self, s: complex) -> "TestForm":
        return TestForm(self.q, {I: {e: c * s for e, c in p.items()} for I, p in self.coeffs.items()})

    def dbar(self) -> "TestForm":
        out: dict = {}
        for I, poly in self.coeffs.items():
            for k in range(3):
                if k in I:
                    continue
                d = dbar_poly(poly, k)
                if not d:
                    continue
                J = tuple(sorted(I + (k,)))
                sign = (-1) ** sum(1 for i in I if i < k)
                tgt = out.setdefault(J, {})
                for e, c in d.items():
                    tgt[e] = tgt.get(e, 0) + sign * c
        return TestForm(self.q + 1, out)

    def ambient(self, zeta) -> np.ndarray:
        """Coefficient array over the basis ``TestForm.basis(q)``."""
        zeta = np.asarray(zeta, dtype=complex)
        shape = zeta.shape[1:]
        vals = []
        for I in self.basis(self.q):
            vals.append(eval_poly(self.coeffs[I], zeta) if I in self.coeffs else np.zeros(shape, complex))
        return np.stack(vals)

    def on_cover(self, w) -> np.ndarray:
        """Coefficients of pi^*phi: scalar (q=0), (dw1bar, dw2bar) (q=1), dw1bar^dw2bar (q=2)."""
        w = geo.as_points(w, 2)
        a = self.ambient(geo.cover_map(w))
        if self.q == 0:
            return a[0]
        if self.q == 1:
            return geo.ambient_to_cover_1form(a, w)
        if self.q == 2:
            P = geo.pair_minors(w)
            return sum(a[n] * P[i, j] for n, (i, j) in enumerate(self.basis(2)))
        return np.zeros(w.shape[1:], complex)

    def __repr__(self):
        return f"TestForm(q={self.q}, terms={sum(len(p) for p in self.coeffs.values())})"


def dzetabar(k: int, poly=None) -> TestForm:
    """poly * dzetabar_k (0-based); poly defaults to 1."""
    return TestForm(1, {(k,): poly or {(0,) * 6: 1.0}})


def _e(a1=0, a2=0, a3=0, b1=0, b2=0, b3=0):
    return (a1, a2, a3, b1, b2, b3)


# Smooth test forms with hand-checkable structure, keyed by a short label.
HOMOTOPY_FORMS = {
    1: {
        "zb1 dzb2": dzetabar(1, {_e(b1=1): 1.0}),
        "z1 zb3 dzb1": dzetabar(0, {_e(a1=1, b3=1): 1.0}),
        "|z|^2 dzb3": dzetabar(2, {_e(a1=1, b1=1): 1.0, _e(a2=1, b2=1): 1.0, _e(a3=1, b3=1): 1.0}),
        "dzb1": dzetabar(0),
    },
    2: {
        "dzb12": TestForm(2, {(0, 1): {_e(): 1.0}}),
        "zb2 dzb13": TestForm(2, {(0, 2): {_e(b2=1): 1.0}}),
        "z1 dzb23 + i/2 |z3|^2 dzb12": TestForm(2, {(1, 2): {_e(a1=1): 1.0}, (0, 1): {_e(a3=1, b3=1): 0.5j}}),
    },
}
