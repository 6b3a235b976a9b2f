"""Polynomial fields whose regular n-gon is a hyperbolic polycycle.

The vertices ``p_i`` are the n-th roots of unity, the edges lie on
invariant lines ``l_i`` (through ``p_i`` and ``p_{i+1}``) and the field is

    P = -sum_i beta_i A_i H_i,    Q = sum_i alpha_i A_i H_i,
    H_i = prod_{j != i} l_j,

with affine factors ``A_i`` fixing the hyperbolicity ratio at each vertex.
Indices are 1-based and cyclic in the public API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .polyalg import AffineForm, LineForm, Poly2, VectorField2, product

__all__ = [
    "PolycycleSpec",
    "BuiltPolycycle",
    "build_polycycle",
    "saddle_data",
    "build_main3_family",
    "verify_invariants",
    "EdgeChart",
]

CLOCKWISE = "clockwise"
COUNTERCLOCKWISE = "counterclockwise"
_ORIENTATION_ALIASES = {"cw": CLOCKWISE, "clockwise": CLOCKWISE,
                        "ccw": COUNTERCLOCKWISE, "counterclockwise": COUNTERCLOCKWISE}


@dataclass(frozen=True)
class PolycycleSpec:
    n: int
    ratios: tuple
    orientation: str = CLOCKWISE

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        try:
            object.__setattr__(self, "orientation", _ORIENTATION_ALIASES[self.orientation])
        except KeyError:
            raise ValueError(f"unknown orientation {self.orientation!r}") from None
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if len(self.ratios) != self.n:
            raise ValueError("need exactly n ratios")
        if not all(math.isfinite(r) and r > 0 for r in self.ratios):
            raise ValueError("ratios must be positive and finite")


@dataclass(frozen=True, eq=False)
class BuiltPolycycle:
    """Output of :func:`build_polycycle`.

    Sequences are 0-based internally: ``vertices[k]`` is ``p_{k+1}``.
    """

    spec: PolycycleSpec
    field: VectorField2
    vertices: tuple
    lines: tuple
    affine_factors: tuple
    section_bases: tuple
    section_dirs: tuple
    sin_theta: float
    m_const: float
    _charts: dict = dc_field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def ratios(self) -> tuple:
        return self.spec.ratios

    def vertex(self, s: int):
        """``p_s`` with cyclic 1-based index."""
        return self.vertices[(s - 1) % self.n]

    def line(self, s: int) -> LineForm:
        return self.lines[(s - 1) % self.n]

    def factor(self, s: int) -> AffineForm:
        return self.affine_factors[(s - 1) % self.n]

    def cofactor(self, s: int) -> Poly2:
        """``H_s = prod_{j != s} l_j``."""
        k = (s - 1) % self.n
        return product(l.to_poly() for j, l in enumerate(self.lines) if j != k)

    def polygon(self) -> np.ndarray:
        return np.array(self.vertices)

    @property
    def clockwise(self) -> bool:
        return self.spec.orientation == CLOCKWISE

    def next_edge(self, i: int) -> int:
        """Edge the flow enters after leaving edge ``i`` (1-based, cyclic)."""
        return (i - 2) % self.n + 1 if self.clockwise else i % self.n + 1

    def prev_edge(self, i: int) -> int:
        return i % self.n + 1 if self.clockwise else (i - 2) % self.n + 1

    def downstream_vertex(self, i: int) -> int:
        """Index of the saddle the flow on edge ``i`` runs into."""
        return (i - 1) % self.n + 1 if self.clockwise else i % self.n + 1

    def upstream_vertex(self, i: int) -> int:
        return i % self.n + 1 if self.clockwise else (i - 1) % self.n + 1

    def section(self, i: int, half_width: float = 0.25):
        """Normal section of edge ``i`` in the original coordinates."""
        from .flow import Section

        k = (i - 1) % self.n
        return Section(self.section_bases[k], self.section_dirs[k], half_width)

    def chart(self, a: int, b: int) -> "EdgeChart":
        """Coordinates ``y = (l_a(x), l_b(x))`` with the field expanded exactly.

        Each summand of the field is rebuilt from its factors, so the lines
        ``y1 = 0`` and ``y2 = 0`` stay invariant to the last bit and orbits can
        be followed at distances far below the coordinate roundoff of ``x``.
        """
        key = ((a - 1) % self.n + 1, (b - 1) % self.n + 1)
        if key not in self._charts:
            self._charts[key] = EdgeChart.from_built(self, *key)
        return self._charts[key]

    def leg_chart(self, i: int) -> "EdgeChart":
        """Chart covering edge ``i``, its downstream saddle and the next edge."""
        return self.chart(i, self.next_edge(i))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "ratios": list(self.ratios),
            "orientation": self.spec.orientation,
            "field": self.field.to_json(),
            "vertices": [list(v) for v in self.vertices],
            "lines": [l.to_json() for l in self.lines],
            "factors": [a.to_json() for a in self.affine_factors],
            "sections": [{"base": list(b), "direction": list(d)}
                         for b, d in zip(self.section_bases, self.section_dirs)],
            "sin_theta": self.sin_theta,
            "m_const": self.m_const,
        }

    @classmethod
    def from_json(cls, data) -> "BuiltPolycycle":
        """Rebuild from the stored spec, then check the stored field matches."""
        built = build_polycycle(PolycycleSpec(int(data["n"]), data["ratios"], data["orientation"]))
        stored = VectorField2.from_json(data["field"])
        for mine, theirs in ((built.field.p, stored.p), (built.field.q, stored.q)):
            keys = {(i, j) for i, j, _ in mine.terms} | {(i, j) for i, j, _ in theirs.terms}
            if any(abs(mine.coeff(*k) - theirs.coeff(*k)) > 1e-12 for k in keys):
                raise ValueError("stored field does not match its spec")
        return built


@dataclass(frozen=True, eq=False)
class EdgeChart:
    """Affine chart ``y = L x - shift`` whose axes are two invariant lines."""

    built: "BuiltPolycycle"
    a: int
    b: int
    lin: np.ndarray
    inv: np.ndarray
    shift: np.ndarray
    field: VectorField2

    @classmethod
    def from_built(cls, built: "BuiltPolycycle", a: int, b: int) -> "EdgeChart":
        la, lb = built.line(a), built.line(b)
        lin = np.array([[la.alpha, la.beta], [lb.alpha, lb.beta]])
        if abs(np.linalg.det(lin)) < 1e-12:
            raise ValueError("chart lines are parallel")
        inv = np.linalg.inv(lin)
        shift = np.array([la.offset, lb.offset])
        base = inv @ shift

        def pull(g1, g2, c):
            # affine form g.x + c written in y
            ga = g1 * inv[0, 0] + g2 * inv[1, 0]
            gb = g1 * inv[0, 1] + g2 * inv[1, 1]
            return Poly2.affine(ga, gb, g1 * base[0] + g2 * base[1] + c)

        n = built.n
        lpolys = []
        for j in range(1, n + 1):
            if j == a:
                lpolys.append(Poly2.x1())
            elif j == b:
                lpolys.append(Poly2.x2())
            else:
                l = built.line(j)
                lpolys.append(pull(l.alpha, l.beta, -l.offset))
        ya, yb = Poly2(), Poly2()
        for i in range(1, n + 1):
            li = built.line(i)
            ca = la.alpha * -li.beta + la.beta * li.alpha
            cb = lb.alpha * -li.beta + lb.beta * li.alpha
            if i == a:
                ca = 0.0
            if i == b:
                cb = 0.0
            fa = built.factor(i)
            term = pull(fa.a, fa.b, fa.c) * product(p for j, p in enumerate(lpolys, 1) if j != i)
            ya = ya + term * ca
            yb = yb + term * cb
        return cls(built, a, b, lin, inv, shift, VectorField2(ya, yb))

    def to_chart(self, x) -> tuple:
        return (self.built.line(self.a)(x), self.built.line(self.b)(x))

    def to_x(self, y) -> tuple:
        x = self.inv @ (np.asarray(y, dtype=float) + self.shift)
        return (float(x[0]), float(x[1]))

    def vector_to_chart(self, v) -> tuple:
        w = self.lin @ np.asarray(v, dtype=float)
        return (float(w[0]), float(w[1]))

    def vector_to_x(self, w) -> tuple:
        v = self.inv @ np.asarray(w, dtype=float)
        return (float(v[0]), float(v[1]))

    def vertex(self) -> int:
        """Saddle at the chart origin."""
        n = self.built.n
        for s in range(1, n + 1):
            lines = {(s - 1) % n + 1, (s - 2) % n + 1}
            if lines == {self.a, self.b}:
                return s
        raise ValueError("chart lines are not adjacent")

    def section(self, i: int, half_width: float = 0.25):
        """Normal section of edge ``i`` (one of the chart lines) in chart coordinates.

        Its coordinate is exactly ``+-y_k`` where ``y_k`` is the value of ``l_i``.
        """
        from .flow import Section

        b = self.built
        k = (i - 1) % b.n
        i = k + 1
        if i not in (self.a, self.b):
            raise ValueError("section edge must be a chart line")
        v = b.section_dirs[k]
        line = b.line(i)
        eps = 1.0 if v[0] * line.alpha + v[1] * line.beta > 0 else -1.0
        y0 = list(self.to_chart(b.section_bases[k]))
        idx = 0 if i == self.a else 1
        y0[idx] = 0.0
        direction = (eps, 0.0) if idx == 0 else (0.0, eps)
        t = (v[1], -v[0])
        normal = (self.inv[0, 0] * t[0] + self.inv[1, 0] * t[1],
                  self.inv[0, 1] * t[0] + self.inv[1, 1] * t[1])
        # points move along v (the physical section) with l_i advancing by exactly s
        w = self.lin @ np.asarray(v, dtype=float)
        tangent = tuple(eps * w / w[idx])
        tangent = (eps, tangent[1]) if idx == 0 else (tangent[0], eps)
        return Section(tuple(y0), direction, half_width, normal, tangent)

    def transport(self, vf: VectorField2) -> VectorField2:
        """Push a field given in x coordinates into the chart."""
        base = self.inv @ self.shift
        p = vf.p.compose_affine(self.inv, base)
        q = vf.q.compose_affine(self.inv, base)
        L = self.lin
        return VectorField2(p * L[0, 0] + q * L[0, 1], p * L[1, 0] + q * L[1, 1])


def _affine_through(p, q, vp, vq) -> AffineForm:
    """Affine form equal to ``vp`` at ``p`` and ``vq`` at ``q``, gradient along ``q - p``."""
    ex, ey = q[0] - p[0], q[1] - p[1]
    length = math.hypot(ex, ey)
    tx, ty = ex / length, ey / length
    k = (vq - vp) / length
    return AffineForm(k * tx, k * ty, vp - k * (tx * p[0] + ty * p[1]))


def build_polycycle(spec: PolycycleSpec) -> BuiltPolycycle:
    """Construct the degree-n field with prescribed hyperbolicity ratios."""
    n = spec.n
    verts = tuple((math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n))
                  for i in range(1, n + 1))
    center = (0.0, 0.0)
    lines = tuple(LineForm.through(verts[k], verts[(k + 1) % n], inside=center)
                  for k in range(n))

    r = spec.ratios
    factors = []
    for k in range(n):
        p_s, p_next = verts[k], verts[(k + 1) % n]
        if spec.orientation == CLOCKWISE:
            # A_s(p_s) = r_s and A_s(p_{s+1}) = 1
            factors.append(_affine_through(p_s, p_next, r[k], 1.0))
        else:
            # A_s(p_s) = -1 and A_s(p_{s+1}) = -r_{s+1}
            factors.append(_affine_through(p_s, p_next, -1.0, -r[(k + 1) % n]))
    factors = tuple(factors)

    lpolys = [l.to_poly() for l in lines]
    P = Poly2()
    Q = Poly2()
    for k in range(n):
        h = product(lp for j, lp in enumerate(lpolys) if j != k)
        ah = factors[k].to_poly() * h
        P = P - ah * lines[k].beta
        Q = Q + ah * lines[k].alpha
    field = VectorField2(P, Q)

    bases, dirs = [], []
    for k in range(n):
        p_s, p_next = verts[k], verts[(k + 1) % n]
        base = (0.5 * (p_s[0] + p_next[0]), 0.5 * (p_s[1] + p_next[1]))
        px, py = field(base)
        norm = math.hypot(px, py)
        bases.append(base)
        dirs.append((-py / norm, px / norm))

    l_prev, l_cur = lines[-1], lines[0]
    sin_theta = l_prev.alpha * l_cur.beta - l_cur.alpha * l_prev.beta
    p1 = verts[0]
    m_const = float(np.prod([lines[j](p1) for j in range(n) if j not in (0, n - 1)]))
    return BuiltPolycycle(spec, field, verts, lines, factors, tuple(bases), tuple(dirs),
                          sin_theta, m_const)


def saddle_data(b: BuiltPolycycle, s: int) -> tuple:
    """Closed-form eigenvalues ``(negative, positive, ratio)`` at ``p_s``."""
    if not 1 <= s <= b.n:
        raise IndexError("saddle index out of range")
    p = b.vertex(s)
    a_s = b.factor(s)(p)
    a_prev = b.factor(s - 1)(p)
    mu = -b.sin_theta * b.m_const * a_s
    nu = b.sin_theta * b.m_const * a_prev
    neg, pos = min(mu, nu), max(mu, nu)
    return neg, pos, abs(neg) / pos


def build_main3_family(b: BuiltPolycycle):
    """``X_mu = X + sum_s mu_s H_s Y_s`` with constant ``Y_s = (-alpha_s, -beta_s)``."""
    from .melnikov import PerturbationFamily

    deformations = []
    for s in range(1, b.n + 1):
        line = b.line(s)
        deformations.append((b.cofactor(s), (-line.alpha, -line.beta)))
    return PerturbationFamily(b.field, deformations, name="main3")


def verify_invariants(b: BuiltPolycycle, samples: int = 100, seed: int = 0) -> dict:
    """Residuals of the construction, all expected to be at roundoff level.

    ``line`` is the worst ``|<X, n_i>|`` on sampled points of each line,
    relative to the largest ``|X|`` on the sample; ``vertex`` the worst
    ``|l(p)|`` over the two lines through each vertex; ``interpolation`` the
    worst deviation of ``A_s`` from its vertex values; ``saddle`` is true when
    every vertex Jacobian has negative determinant; ``edge_speed`` the
    smallest ``|X|`` at interior edge samples.
    """
    rng = np.random.default_rng(seed)
    n = b.n
    line_res, edge_speed = 0.0, math.inf
    for s in range(1, n + 1):
        p, q = np.array(b.vertex(s)), np.array(b.vertex(s + 1))
        line = b.line(s)
        t = rng.uniform(-1.0, 2.0, samples)
        pts = p[None, :] + t[:, None] * (q - p)[None, :]
        X = np.array([b.field(w) for w in pts])
        scale = max(np.abs(X).max(), 1e-300)
        line_res = max(line_res, float(np.abs(X @ np.array(line.normal)).max() / scale))
        inner = p[None, :] + np.linspace(0.02, 0.98, 50)[:, None] * (q - p)[None, :]
        edge_speed = min(edge_speed, min(math.hypot(*b.field(w)) for w in inner))
    vertex_res = max(max(abs(b.line(s)(b.vertex(s))), abs(b.line(s - 1)(b.vertex(s))))
                     for s in range(1, n + 1))
    interp = 0.0
    for s in range(1, n + 1):
        a_s, a_prev = b.factor(s)(b.vertex(s)), b.factor(s - 1)(b.vertex(s))
        if b.clockwise:
            want = (b.ratios[s - 1], 1.0)
        else:
            want = (-1.0, -b.ratios[s - 1])
        interp = max(interp, abs(a_s - want[0]), abs(a_prev - want[1]))
    saddles = all(np.linalg.det(b.field.jacobian(b.vertex(s))) < 0 for s in range(1, n + 1))
    return {"line": line_res, "vertex": float(vertex_res), "interpolation": float(interp),
            "saddle": bool(saddles), "edge_speed": float(edge_speed),
            "ok": bool(line_res < 1e-10 and vertex_res < 1e-12 and interp < 1e-12
                       and saddles and edge_speed > 1e-8)}
