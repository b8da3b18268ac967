"""Sparse exterior algebra over a fixed, ordered set of 1-form generators.

Terms are stored as ``{bitmask: coefficient}``.  Coefficients may be python
complex numbers or numpy arrays, so one element can carry a form evaluated
at many points at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

MAX_GENERATORS = 16


@dataclass(frozen=True)
class GeneratorSet:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) > MAX_GENERATORS:
            raise ValueError(f"at most {MAX_GENERATORS} generators supported")
        if len(set(self.names)) != len(self.names):
            raise ValueError("generator names must be distinct")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def mask(self, names) -> int:
        m = 0
        for n in names:
            m |= 1 << self.index(n)
        return m

    def group_mask(self, prefix: str) -> int:
        return sum(1 << i for i, n in enumerate(self.names) if n.startswith(prefix))


# deta_k is holomorphic; detabar_k is represented as dzetabar_k - dzbar_k.
AMBIENT = GeneratorSet((
    "deta1", "deta2", "deta3",
    "dzetabar1", "dzetabar2", "dzetabar3",
    "dzbar1", "dzbar2", "dzbar3",
))
COVER = GeneratorSet((
    "dw1", "dw2",
    "dwbar1", "dwbar2",
    "dzbar1", "dzbar2", "dzbar3",
))


def _popcount(m: int) -> int:
    return bin(m).count("1")


def merge_sign(a: int, b: int) -> int:
    """Sign of reordering (generators of a) followed by (generators of b)."""
    if a & b:
        return 0
    swaps = 0
    bb = b
    while bb:
        low = bb & -bb
        # generators of a sitting above this generator of b must hop over it
        swaps += _popcount(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if swaps & 1 else 1


def _is_zero(c) -> bool:
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0


class ExteriorElement:
    """Element of the exterior algebra; immutable by convention."""

    __slots__ = ("gens", "terms")
    # let ndarray * element fall through to __rmul__
    __array_ufunc__ = None

    def __init__(self, gens: GeneratorSet, terms: Mapping[int, object] | None = None):
        self.gens = gens
        self.terms = {m: c for m, c in (terms or {}).items() if not _is_zero(c)}

    @classmethod
    def scalar(cls, gens: GeneratorSet, value=1.0) -> "ExteriorElement":
        return cls(gens, {0: value})

    @classmethod
    def generator(cls, gens: GeneratorSet, name: str, coef=1.0) -> "ExteriorElement":
        return cls(gens, {1 << gens.index(name): coef})

    @classmethod
    def one_form(cls, gens: GeneratorSet, names, coefs) -> "ExteriorElement":
        out = cls(gens)
        for n, c in zip(names, coefs):
            out = out + cls.generator(gens, n, c)
        return out

    def _check(self, other: "ExteriorElement"):
        if self.gens != other.gens:
            raise ValueError("exterior elements live over different generator sets")

    def __add__(self, other):
        if not isinstance(other, ExteriorElement):
            other = ExteriorElement.scalar(self.gens, other)
        self._check(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms[m] + c if m in terms else c
        return ExteriorElement(self.gens, terms)

    __radd__ = __add__

    def __neg__(self):
        return ExteriorElement(self.gens, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        """Multiplication by a scalar (or array-valued scalar field)."""
        if isinstance(s, ExteriorElement):
            return self.wedge(s)
        return ExteriorElement(self.gens, {m: c * s for m, c in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, s):
        return ExteriorElement(self.gens, {m: c / s for m, c in self.terms.items()})

    def wedge(self, other: "ExteriorElement") -> "ExteriorElement":
        self._check(other)
        terms: dict[int, object] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                sign = merge_sign(ma, mb)
                if sign == 0:
                    continue
                val = ca * cb if sign > 0 else -(ca * cb)
                m = ma | mb
                terms[m] = terms[m] + val if m in terms else val
        return ExteriorElement(self.gens, terms)

    __xor__ = wedge

    def coefficient_of(self, mask) -> object:
        if not isinstance(mask, int):
            mask = self.gens.mask(mask)
        return self.terms.get(mask, 0.0)

    def degree_filter(self, **group_degrees: int) -> "ExteriorElement":
        """Keep terms whose degree within each named generator group matches.

        Keys are generator-name prefixes, e.g. ``degree_filter(deta=3, dzbar=0)``.
        """
        groups = [(self.gens.group_mask(p), d) for p, d in group_degrees.items()]
        return ExteriorElement(self.gens, {
            m: c for m, c in self.terms.items()
            if all(_popcount(m & g) == d for g, d in groups)
        })

    def degrees(self) -> set[int]:
        return {_popcount(m) for m in self.terms}

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        parts = []
        for m, c in sorted(self.terms.items()):
            names = "^".join(n for i, n in enumerate(self.gens.names) if m >> i & 1) or "1"
            cs = f"array{np.shape(c)}" if isinstance(c, np.ndarray) and np.ndim(c) else f"{complex(c):.6g}"
            parts.append(f"{cs}*{names}")
        return " + ".join(parts) or "0"


def wedge_all(*elements: ExteriorElement) -> ExteriorElement:
    out = elements[0]
    for e in elements[1:]:
        out = out.wedge(e)
    return out


def substitute(a: ExteriorElement, rules: Mapping[str, ExteriorElement],
               target: GeneratorSet | None = None) -> ExteriorElement:
    """Apply the algebra homomorphism determined by generator images.

    Every generator appearing in ``a`` must have a rule.  The unit maps to
    the unit of the target algebra.
    """
    if target is None:
        target = next(iter(rules.values())).gens
    images: dict[int, ExteriorElement] = {}
    for i, name in enumerate(a.gens.names):
        if name in rules:
            images[i] = rules[name]
    out = ExteriorElement(target)
    for m, c in a.terms.items():
        term = ExteriorElement.scalar(target, c)
        i = 0
        mm = m
        while mm:
            if mm & 1:
                if i not in images:
                    raise KeyError(f"no substitution rule for generator {a.gens.names[i]}")
                term = term.wedge(images[i])
            mm >>= 1
            i += 1
        out = out + term
    return out

