"""Smooth bump functions and their Bernstein polynomial approximations.

The shifted approximant ``q = B + eps/2`` built here is strictly positive and
sits inside the band ``phi + eps/4 < q < phi + 3 eps/4`` on the box, which is
what lets a bump envelope be swapped for a polynomial one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binom

from .polyalg import Poly2

__all__ = [
    "BumpSpec",
    "BernsteinPoly",
    "ShiftedBump",
    "ApproximationError",
    "smooth_step",
    "eval_bump",
    "bernstein_of",
    "shifted_bump_polynomial",
]

DEFAULT_DEGREE_CAP = 8192
START_DEGREE = 16
MONOMIAL_DEGREE_LIMIT = 24


class ApproximationError(RuntimeError):
    """Degree escalation hit its cap before the grid certificate held."""


def _glue(t):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    return np.where(pos, np.exp(-1.0 / np.where(pos, t, 1.0)), 0.0)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, monotone in between."""
    a = _glue(u)
    return a / (a + _glue(1.0 - np.asarray(u, dtype=float)))


@dataclass(frozen=True)
class BumpSpec:
    delta1: float
    delta2: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not 0 < self.delta1 < self.delta2:
            raise ValueError("need 0 < delta1 < delta2")

    def __call__(self, x1, x2=None):
        if x2 is None:
            x1, x2 = x1
        return eval_bump(self, (x1, x2))

    def to_json(self) -> dict:
        return {"delta1": self.delta1, "delta2": self.delta2, "center": list(self.center)}

    @classmethod
    def from_json(cls, data) -> "BumpSpec":
        return cls(data["delta1"], data["delta2"], tuple(data["center"]))


def eval_bump(spec: BumpSpec, x):
    """Radial bump: 1 inside ``delta1``, 0 outside ``delta2``. Vectorized over arrays."""
    rho = np.hypot(np.asarray(x[0], dtype=float) - spec.center[0],
                   np.asarray(x[1], dtype=float) - spec.center[1])
    u = (spec.delta2 - rho) / (spec.delta2 - spec.delta1)
    out = smooth_step(np.clip(u, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def _basis(m: int, t) -> np.ndarray:
    """Bernstein basis values ``b_{m,r}(t)``, shape ``(len(t), m+1)``.

    The binomial pmf is evaluated in log space by scipy, so large degrees do
    not overflow the way ``C(m, r) t^r (1-t)^(m-r)`` would.
    """
    t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, 1.0)
    return binom.pmf(np.arange(m + 1)[None, :], m, t[:, None])


@dataclass(frozen=True, eq=False)
class BernsteinPoly:
    """Bernstein polynomial on the unit square from a sample grid.

    Only the block ``samples`` starting at grid index ``offset`` is stored;
    the remaining samples are zero.  For a compactly supported ``F`` this
    keeps high degrees affordable.
    """

    degrees: tuple
    samples: np.ndarray
    offset: tuple = (0, 0)

    def __post_init__(self):
        m, n = self.degrees
        if m < 1 or n < 1:
            raise ValueError("Bernstein degrees must be >= 1")
        r0, s0 = self.offset
        R, S = self.samples.shape
        if r0 < 0 or s0 < 0 or r0 + R > m + 1 or s0 + S > n + 1:
            raise ValueError("sample block must fit in the (m+1) x (n+1) grid")

    def _bases(self, u, v):
        m, n = self.degrees
        (r0, s0), (R, S) = self.offset, self.samples.shape
        return _basis(m, u)[:, r0:r0 + R], _basis(n, v)[:, s0:s0 + S]

    def grid(self, u, v) -> np.ndarray:
        """Values on the tensor grid ``u x v``; shape ``(len(u), len(v))``."""
        bu, bv = self._bases(u, v)
        return bu @ self.samples @ bv.T

    def __call__(self, u, v=None):
        if v is None:
            u, v = u
        u_arr, v_arr = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        bu, bv = self._bases(u_arr.ravel(), v_arr.ravel())
        out = np.einsum("kr,rs,ks->k", bu, self.samples, bv).reshape(u_arr.shape)
        return float(out) if out.ndim == 0 else out

    def full_samples(self) -> np.ndarray:
        m, n = self.degrees
        out = np.zeros((m + 1, n + 1))
        r0, s0 = self.offset
        R, S = self.samples.shape
        out[r0:r0 + R, s0:s0 + S] = self.samples
        return out

    def to_poly2(self) -> Poly2:
        """Monomial expansion; only sensible for low degree."""
        m, n = self.degrees
        if max(m, n) > MONOMIAL_DEGREE_LIMIT:
            raise ValueError(f"monomial form is ill-conditioned beyond degree {MONOMIAL_DEGREE_LIMIT}")
        u, v = Poly2.x1(), Poly2.x2()
        bu = [math.comb(m, r) * u ** r * (1 - u) ** (m - r) for r in range(m + 1)]
        bv = [math.comb(n, s) * v ** s * (1 - v) ** (n - s) for s in range(n + 1)]
        samples = self.full_samples()
        out = Poly2()
        for r in range(m + 1):
            for s in range(n + 1):
                if samples[r, s] != 0.0:
                    out = out + bu[r] * bv[s] * float(samples[r, s])
        return out


def bernstein_of(F: Callable, m: int, n: int, support=None) -> BernsteinPoly:
    """Sample ``F`` on the ``(m+1) x (n+1)`` grid of the unit square.

    ``F`` must accept broadcast arrays ``F(u, v)``.  ``support`` is an
    optional ``(u_lo, u_hi, v_lo, v_hi)`` outside of which ``F`` vanishes;
    only samples inside it are evaluated and stored.
    """
    r0, r1, s0, s1 = 0, m, 0, n
    if support is not None:
        u_lo, u_hi, v_lo, v_hi = support
        r0, r1 = max(0, math.floor(u_lo * m)), min(m, math.ceil(u_hi * m))
        s0, s1 = max(0, math.floor(v_lo * n)), min(n, math.ceil(v_hi * n))
        if r1 < r0 or s1 < s0:
            return BernsteinPoly((m, n), np.zeros((1, 1)))
    u = np.arange(r0, r1 + 1) / m
    v = np.arange(s0, s1 + 1) / n
    samples = np.asarray(F(u[:, None], v[None, :]), dtype=float)
    samples = np.broadcast_to(samples, (len(u), len(v))).copy()
    return BernsteinPoly((m, n), samples, (r0, s0))


@dataclass(frozen=True, eq=False)
class ShiftedBump:
    """``q(x) = B(to_unit(x)) + shift`` on ``box = (x1_lo, x2_lo, x1_hi, x2_hi)``."""

    bump: BumpSpec
    box: tuple
    eps: float
    order: int
    bernstein: BernsteinPoly
    shift: float
    certified_error: tuple

    def to_unit(self, x1, x2):
        a, b, c, d = self.box
        return (np.asarray(x1, float) - a) / (c - a), (np.asarray(x2, float) - b) / (d - b)

    def __call__(self, x1, x2=None):
        if x2 is None:
            x1, x2 = x1
        return self.bernstein(*self.to_unit(x1, x2)) + self.shift

    def grid(self, n: int = 100):
        """``(xs, ys, q, phi)`` on an ``n x n`` tensor grid over the box."""
        a, b, c, d = self.box
        t = np.linspace(0.0, 1.0, n)
        xs, ys = a + t * (c - a), b + t * (d - b)
        q = self.bernstein.grid(t, t) + self.shift
        phi = eval_bump(self.bump, (xs[:, None], ys[None, :]))
        return xs, ys, q, phi

    @property
    def degree(self) -> tuple:
        return self.bernstein.degrees

    def to_poly2(self) -> Poly2:
        """Monomial form in the original coordinates (low degree only)."""
        a, b, c, d = self.box
        p = self.bernstein.to_poly2()
        p = p.compose_affine([[1.0 / (c - a), 0.0], [0.0, 1.0 / (d - b)]],
                             [-a / (c - a), -b / (d - b)])
        return p + self.shift

    def to_json(self) -> dict:
        # The samples are a deterministic function of (bump, box, degree), so
        # the compact recipe is stored instead of millions of grid values.
        return {"kind": "shifted_bernstein", "bump": self.bump.to_json(),
                "box": list(self.box), "eps": self.eps, "order": self.order,
                "degrees": list(self.degree), "shift": self.shift,
                "certified_error": list(self.certified_error)}

    @classmethod
    def from_json(cls, data) -> "ShiftedBump":
        bump = BumpSpec.from_json(data["bump"])
        box = tuple(float(v) for v in data["box"])
        m, n = data["degrees"]
        bern = bernstein_of(_pulled_back(bump, box), int(m), int(n), _unit_support(bump, box))
        return cls(bump, box, float(data["eps"]), int(data["order"]), bern,
                   float(data["shift"]), tuple(data["certified_error"]))


def _pulled_back(bump: BumpSpec, box) -> Callable:
    a, b, c, d = box

    def F(u, v):
        return eval_bump(bump, (a + u * (c - a), b + v * (d - b)))

    return F


def _unit_support(bump: BumpSpec, box) -> tuple:
    """Unit-square box containing the bump's support."""
    a, b, c, d = box
    cx, cy = bump.center
    r = bump.delta2
    return ((cx - r - a) / (c - a), (cx + r - a) / (c - a),
            (cy - r - b) / (d - b), (cy + r - b) / (d - b))


def _fd_errors(err: np.ndarray, h: tuple, order: int) -> list:
    """Sup norms of finite-difference partials of ``err`` up to ``order``."""
    out = []
    layer = [err]
    for _ in range(order):
        nxt = []
        for g in layer:
            nxt.append(np.diff(g, axis=0) / h[0])
            nxt.append(np.diff(g, axis=1) / h[1])
        layer = nxt
        out.append(max(float(np.abs(g).max()) for g in layer))
    return out


def shifted_bump_polynomial(spec: BumpSpec, box, eps: float, r: int = 0, *,
                            grid: int = 100, degree_cap: int = DEFAULT_DEGREE_CAP,
                            start_degree: int = START_DEGREE) -> ShiftedBump:
    """Strictly positive polynomial within ``(eps/4, 3 eps/4)`` above the bump.

    Degrees double from ``start_degree`` until the value error on the
    validation grid, and the finite-difference derivative errors up to order
    ``r``, are all below ``eps/4``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if r < 0:
        raise ValueError("smoothness order must be nonnegative")
    a, b, c, d = (float(v) for v in box)
    if not (c > a and d > b):
        raise ValueError("box must be (x1_lo, x2_lo, x1_hi, x2_hi) with positive extent")
    box = (a, b, c, d)
    F = _pulled_back(spec, box)
    support = _unit_support(spec, box)
    t = np.linspace(0.0, 1.0, grid)
    phi = F(t[:, None], t[None, :])
    h = ((c - a) / (grid - 1), (d - b) / (grid - 1))
    m = start_degree
    history = []
    while m <= degree_cap:
        bern = bernstein_of(F, m, m, support)
        err = bern.grid(t, t) - phi
        errors = [float(np.abs(err).max())] + _fd_errors(err, h, r)
        history.append((m, errors[0]))
        if all(e < 0.25 * eps for e in errors):
            return ShiftedBump(spec, box, float(eps), int(r), bern, 0.5 * eps, tuple(errors))
        m *= 2
    raise ApproximationError(
        f"no certificate up to degree {degree_cap}; sup errors by degree: {history}")
