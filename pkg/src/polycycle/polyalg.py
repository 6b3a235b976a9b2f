"""Sparse bivariate polynomials and planar polynomial vector fields.

Coefficients are plain binary64 floats.  Terms are stored sorted by the
degree pair ``(i, j)`` of the monomial ``x1**i * x2**j``.  Products are
expanded eagerly, which is cheap for the low degrees used here.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Poly2",
    "AffineForm",
    "LineForm",
    "VectorField2",
    "eval_field",
    "divergence",
    "wedge",
]


def _horner_source(terms, x="x1", y="x2"):
    """Python source for a nested Horner evaluation of ``terms``."""
    if not terms:
        return "0.0"
    by_i = {}
    for i, j, c in terms:
        by_i.setdefault(i, {})[j] = c
    rows = {}
    for i, row in by_i.items():
        top = max(row)
        src = repr(row.get(top, 0.0))
        for j in range(top - 1, -1, -1):
            c = row.get(j, 0.0)
            src = f"({src})*{y}" + (f" + {c!r}" if c != 0.0 else "")
        rows[i] = src
    top = max(rows)
    src = rows[top]
    for i in range(top - 1, -1, -1):
        src = f"({src})*{x}" + (f" + ({rows[i]})" if i in rows else "")
    return src


class Poly2:
    """Immutable sparse polynomial in ``(x1, x2)``.

    Parameters
    ----------
    terms : iterable of (i, j, coeff) or mapping {(i, j): coeff}
        Repeated degree pairs are summed; zero coefficients are dropped.
    """

    __slots__ = ("_terms", "_dict", "_fn")

    def __init__(self, terms=()):
        acc: dict[tuple[int, int], float] = {}
        items = terms.items() if isinstance(terms, dict) else (((t[0], t[1]), t[2]) for t in terms)
        for (i, j), c in items:
            i, j, c = int(i), int(j), float(c)
            if i < 0 or j < 0:
                raise ValueError("negative exponent")
            if not math.isfinite(c):
                raise ValueError("non-finite coefficient")
            acc[(i, j)] = acc.get((i, j), 0.0) + c
        self._dict = {k: v for k, v in sorted(acc.items()) if v != 0.0}
        self._terms = tuple((i, j, c) for (i, j), c in self._dict.items())
        self._fn = None

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "Poly2":
        return cls([(0, 0, c)])

    @classmethod
    def x1(cls) -> "Poly2":
        return cls([(1, 0, 1.0)])

    @classmethod
    def x2(cls) -> "Poly2":
        return cls([(0, 1, 1.0)])

    @classmethod
    def affine(cls, a: float, b: float, c: float) -> "Poly2":
        return cls([(1, 0, a), (0, 1, b), (0, 0, c)])

    # basic protocol -------------------------------------------------------

    @property
    def terms(self) -> tuple:
        return self._terms

    def coeff(self, i: int, j: int) -> float:
        return self._dict.get((i, j), 0.0)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((i + j for i, j, _ in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Poly2.constant(other)
        return isinstance(other, Poly2) and self._dict == other._dict

    def __hash__(self):
        return hash(self._terms)

    def __repr__(self):
        return f"Poly2({list(self._terms)!r})"

    # arithmetic -----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Poly2):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly2.constant(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Poly2(list(self._terms) + list(other._terms))

    __radd__ = __add__

    def __neg__(self):
        return Poly2((i, j, -c) for i, j, c in self._terms)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly2((i, j, c * float(other)) for i, j, c in self._terms)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[tuple[int, int], float] = {}
        for i1, j1, c1 in self._terms:
            for i2, j2, c2 in other._terms:
                k = (i1 + i2, j1 + j2)
                out[k] = out.get(k, 0.0) + c1 * c2
        return Poly2(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Poly2.constant(1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def diff(self, var: int) -> "Poly2":
        """Exact partial derivative; ``var`` is 1 or 2."""
        if var == 1:
            return Poly2((i - 1, j, c * i) for i, j, c in self._terms if i > 0)
        if var == 2:
            return Poly2((i, j - 1, c * j) for i, j, c in self._terms if j > 0)
        raise ValueError("var must be 1 or 2")

    def compose_affine(self, m, shift) -> "Poly2":
        """Return ``x -> self(m @ x + shift)`` for a 2x2 matrix ``m``."""
        u = Poly2.affine(m[0][0], m[0][1], shift[0])
        v = Poly2.affine(m[1][0], m[1][1], shift[1])
        upow = [Poly2.constant(1.0)]
        vpow = [Poly2.constant(1.0)]
        deg = max(self.degree, 0)
        for _ in range(deg):
            upow.append(upow[-1] * u)
            vpow.append(vpow[-1] * v)
        out = Poly2()
        for i, j, c in self._terms:
            out = out + upow[i] * vpow[j] * c
        return out

    # evaluation -----------------------------------------------------------

    @property
    def fn(self) -> Callable:
        """Compiled Horner evaluator ``f(x1, x2)``; works on floats and arrays."""
        if self._fn is None:
            src = _horner_source(self._terms)
            self._fn = eval(f"lambda x1, x2: {src}", {"__builtins__": {}})
        return self._fn

    def __call__(self, x1, x2=None):
        if x2 is None:
            x1, x2 = x1
        return self.fn(x1, x2)

    # serialization --------------------------------------------------------

    def to_json(self) -> list:
        return [[i, j, c] for i, j, c in self._terms]

    @classmethod
    def from_json(cls, data: Sequence) -> "Poly2":
        return cls((int(i), int(j), float(c)) for i, j, c in data)


@dataclass(frozen=True)
class AffineForm:
    """``a*x1 + b*x2 + c``."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError("non-finite affine coefficients")

    def __call__(self, x):
        return self.a * x[0] + self.b * x[1] + self.c

    def to_poly(self) -> Poly2:
        return Poly2.affine(self.a, self.b, self.c)

    def to_json(self):
        return [self.a, self.b, self.c]


@dataclass(frozen=True)
class LineForm:
    """Line ``alpha*x1 + beta*x2 - offset`` with unit normal ``(alpha, beta)``."""

    alpha: float
    beta: float
    offset: float

    def __post_init__(self):
        if abs(self.alpha ** 2 + self.beta ** 2 - 1.0) > 1e-12:
            raise ValueError("LineForm normal must have unit length")

    @classmethod
    def through(cls, p, q, inside=None) -> "LineForm":
        """Line through ``p`` and ``q``; the normal points toward ``inside``."""
        ex, ey = q[0] - p[0], q[1] - p[1]
        norm = math.hypot(ex, ey)
        alpha, beta = -ey / norm, ex / norm
        offset = alpha * p[0] + beta * p[1]
        if inside is not None and alpha * inside[0] + beta * inside[1] - offset < 0:
            alpha, beta, offset = -alpha, -beta, -offset
        return cls(alpha, beta, offset)

    @property
    def normal(self):
        return (self.alpha, self.beta)

    def __call__(self, x):
        return self.alpha * x[0] + self.beta * x[1] - self.offset

    def to_poly(self) -> Poly2:
        return Poly2.affine(self.alpha, self.beta, -self.offset)

    def to_json(self):
        return [self.alpha, self.beta, self.offset]


@dataclass(frozen=True, eq=False)
class VectorField2:
    """Planar polynomial vector field ``X = (P, Q)``."""

    p: Poly2
    q: Poly2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def degree(self) -> int:
        return max(self.p.degree, self.q.degree)

    def __call__(self, x):
        return (self.p.fn(x[0], x[1]), self.q.fn(x[0], x[1]))

    @property
    def rhs(self) -> Callable:
        """Compiled ``f(x1, x2) -> (P, Q)``."""
        fn = self._cache.get("rhs")
        if fn is None:
            src = f"lambda x1, x2: ({_horner_source(self.p.terms)}, {_horner_source(self.q.terms)})"
            fn = self._cache["rhs"] = eval(src, {"__builtins__": {}})
        return fn

    def partials(self):
        """``(dP/dx1, dP/dx2, dQ/dx1, dQ/dx2)`` as polynomials."""
        out = self._cache.get("partials")
        if out is None:
            out = self._cache["partials"] = (
                self.p.diff(1), self.p.diff(2), self.q.diff(1), self.q.diff(2))
        return out

    def jacobian(self, x) -> np.ndarray:
        a, b, c, d = self.partials()
        return np.array([[a.fn(x[0], x[1]), b.fn(x[0], x[1])],
                         [c.fn(x[0], x[1]), d.fn(x[0], x[1])]])

    @property
    def div(self) -> Poly2:
        out = self._cache.get("div")
        if out is None:
            a, _, _, d = self.partials()
            out = self._cache["div"] = a + d
        return out

    def divergence(self, x) -> float:
        return self.div.fn(x[0], x[1])

    def perp(self) -> "VectorField2":
        """``X^perp = (-Q, P)``."""
        return VectorField2(-self.q, self.p)

    def __add__(self, other: "VectorField2") -> "VectorField2":
        return VectorField2(self.p + other.p, self.q + other.q)

    def scale(self, s) -> "VectorField2":
        """Multiply both components by a scalar or a Poly2."""
        return VectorField2(self.p * s, self.q * s)

    def wedge_poly(self, other: "VectorField2") -> Poly2:
        """Polynomial ``X ^ Y = P*Y2 - Q*Y1``."""
        return self.p * other.q - self.q * other.p

    def to_json(self) -> dict:
        return {"p": self.p.to_json(), "q": self.q.to_json()}

    @classmethod
    def from_json(cls, data) -> "VectorField2":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(Poly2.from_json(data["p"]), Poly2.from_json(data["q"]))


def eval_field(f: VectorField2, x) -> tuple:
    """Evaluate ``(P(x), Q(x))``."""
    return f(x)


def divergence(f: VectorField2, x) -> float:
    """``dP/dx1 + dQ/dx2`` at ``x`` from the exact symbolic partials."""
    return f.divergence(x)


def wedge(u, v) -> float:
    """``u1*v2 - u2*v1``."""
    return u[0] * v[1] - u[1] * v[0]


def product(polys: Iterable[Poly2]) -> Poly2:
    out = Poly2.constant(1.0)
    for p in polys:
        out = out * p
    return out
