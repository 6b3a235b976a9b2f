"""Bifurcation engine for built polycycles.

Displacements, the bypass displacement past an expelled saddle, the
connection-breaking solve, limit-cycle detection, trapping curves, Hausdorff
distances and the scalar model return map.

All orbit work on a built polycycle goes through :class:`PolycycleFlow`,
which integrates each leg (edge ``i`` -> downstream saddle -> next edge) in
that leg's line chart, so section coordinates are read off as exact chart
coordinates instead of differences of O(1) numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from .flow import (Escaped, FlowError, NoCrossing, Saddle, Section, branch_toward,
                   find_saddle, integrate, integrate_rhs, shoot_separatrix)
from .graphic import ExpulsionPlan
from .melnikov import MelnikovReport, PerturbationFamily, melnikov_matrix
from .polyalg import VectorField2

__all__ = [
    "INNER",
    "OUTER",
    "PolycycleFlow",
    "DisplacementVector",
    "BypassDisplacement",
    "BreakResult",
    "ModelMapSpec",
    "ModelMapDomainError",
    "CycleRecord",
    "FieldReturn",
    "PolycycleReturn",
    "TrappingCurve",
    "BreakError",
    "detect_sigma0",
    "return_side",
    "displacement_vector",
    "bypass_displacement",
    "solve_connection_break",
    "detect_cycles",
    "hausdorff_distance",
    "check_without_contact",
    "offset_polygon",
    "barrier_curve",
    "trapping_curve",
    "model_map_eval",
    "model_map_roots",
    "model_map_search",
]

INNER = -1
OUTER = 1
HALF_WIDTH = 0.25
BOUND = 4.0
LEG_TIME = 400.0


class BreakError(FlowError):
    pass


# --- orbit bookkeeping on a built polycycle ---------------------------------------

class PolycycleFlow:
    """Leg-by-leg dynamics of ``X_mu`` near a built polycycle."""

    def __init__(self, built, fam: PerturbationFamily | None = None, mu=None, *,
                 half_width: float = HALF_WIDTH, bound: float = BOUND, **opts):
        self.built = built
        self.fam = fam
        n_par = len(fam) if fam is not None else 0
        self.mu = tuple(float(m) for m in mu) if mu is not None else (0.0,) * n_par
        self.half_width = half_width
        self.bound = bound
        self.opts = opts
        self._fields: dict = {}
        self._saddles: dict = {}
        self._shots: dict = {}

    @property
    def n(self) -> int:
        return self.built.n

    def _edge(self, i: int) -> int:
        return (i - 1) % self.n + 1

    def chart(self, i: int):
        return self.built.leg_chart(self._edge(i))

    def field(self, i: int) -> VectorField2:
        i = self._edge(i)
        if i not in self._fields:
            ch = self.chart(i)
            if self.fam is None or not any(self.mu):
                self._fields[i] = ch.field
            else:
                self._fields[i] = self.fam.in_chart(ch, self.mu)
        return self._fields[i]

    def section(self, i: int, leg: int | None = None) -> Section:
        """Section of edge ``i`` expressed in the chart of ``leg`` (default: leg ``i``)."""
        leg = self._edge(i if leg is None else leg)
        return self.chart(leg).section(self._edge(i), self.half_width)

    def saddle(self, i: int, which: str) -> Saddle:
        """Downstream (``"dst"``) or upstream (``"src"``) saddle of edge ``i`` in its leg chart."""
        i = self._edge(i)
        key = (i, which)
        if key not in self._saddles:
            ch = self.chart(i)
            if which == "dst":
                seed = (0.0, 0.0)
            else:
                seed = (0.0, ch.to_chart(self.built.vertex(self.built.upstream_vertex(i)))[1])
            self._saddles[key] = find_saddle(self.field(i), seed)
        return self._saddles[key]

    def _shoot(self, key, f, sad, kind, toward, until):
        if key not in self._shots:
            branch = branch_toward(sad, kind, toward)
            self._shots[key] = shoot_separatrix(f, sad, branch, until, bound=self.bound,
                                                t_max=LEG_TIME, **self.opts)
        return self._shots[key]

    def b_u(self, i: int) -> float:
        """Unstable separatrix of the upstream saddle of edge ``i`` on section ``i``."""
        i = self._edge(i)
        sec = self.section(i)
        return self._shoot(("u", i), self.field(i), self.saddle(i, "src"), "unstable",
                           sec.base, sec).s

    def b_s(self, i: int) -> float:
        """Stable separatrix of the downstream saddle of edge ``i`` on section ``i``."""
        i = self._edge(i)
        sec = self.section(i)
        return self._shoot(("s", i), self.field(i), self.saddle(i, "dst"), "stable",
                           sec.base, sec).s

    def d(self, i: int) -> float:
        return self.b_u(i) - self.b_s(i)

    def b_bypass_unstable(self, e: int) -> float:
        """Unstable separatrix entering along edge ``e``, carried past saddle ``p_e``
        onto the section of the next edge."""
        e = self._edge(e)
        nxt = self.built.next_edge(e)
        own = self.section(e)
        target = self.section(nxt, leg=e)
        return self._shoot(("u1", e), self.field(e), self.saddle(e, "src"), "unstable",
                           own.base, target).s

    def b_bypass_stable(self, e: int) -> float:
        """Stable separatrix leaving along the next edge, traced backward past the
        downstream saddle of edge ``e`` onto section ``e``."""
        e = self._edge(e)
        nxt = self.built.next_edge(e)
        ch = self.chart(e)
        f = self.field(e)
        far = self.built.downstream_vertex(nxt)
        seed = ch.to_chart(self.built.vertex(far))
        sad = find_saddle(f, seed)
        toward = self.section(nxt, leg=e).base
        return self._shoot(("s1", e), f, sad, "stable", toward, self.section(e)).s

    def confident(self) -> bool:
        return all(s.confident for s in self._shots.values())

    # passage maps ----------------------------------------------------------------

    def leg(self, i: int, s: float, *, backward: bool = False, record: bool = False):
        """Carry coordinate ``s`` on section ``i`` to the next edge's section.

        With ``backward=True``, ``s`` lives on the next edge's section and the
        orbit is followed in reverse time back to section ``i``.
        """
        i = self._edge(i)
        nxt = self.built.next_edge(i)
        own, other = self.section(i), self.section(nxt, leg=i)
        start, stop = (other, own) if backward else (own, other)
        if abs(s) > start.half_width:
            raise ValueError("coordinate outside the section")
        tr = integrate(self.field(i), start.point(s), (0.0, -LEG_TIME if backward else LEG_TIME),
                       [stop], record=record, bound=self.bound, **self.opts)
        if not tr.hits:
            raise NoCrossing(f"leg {i} did not reach the next section", tr.final)
        return (tr.hits[0].s, tr) if record else tr.hits[0].s

    def dulac(self, e: int, xi: float, side: int) -> float:
        """``D_e(xi)``: distance from the stable separatrix of ``p_e`` on section
        ``e`` (towards ``side``) mapped to distance from its unstable separatrix."""
        e = self._edge(e)
        nxt = self.built.next_edge(e)
        c = self.leg(e, self.b_s(e) + side * xi)
        return side * (c - self.b_u(nxt))

    def passage_exponent(self, vertex: int, s_values, *, side: int = -1,
                         backward: bool = False):
        """Log-log fit of the passage through saddle ``p_vertex``.

        Coordinates are distances ``s`` from the stable separatrix on the
        incoming section, placed on ``side`` of it (``-1``: negative section
        coordinates); with ``backward`` the outgoing section is the source.
        """
        from .flow import estimate_dulac_exponent

        e = next(i for i in range(1, self.n + 1) if self.built.downstream_vertex(i) == vertex)
        nxt = self.built.next_edge(e)
        if backward:
            start, stop, ref = self.section(nxt, leg=e), self.section(e), self.b_u(nxt)
        else:
            start, stop, ref = self.section(e), self.section(nxt, leg=e), self.b_s(e)
        vals = [ref + side * abs(v) for v in s_values]
        est = estimate_dulac_exponent(self.field(e), None, start, stop, vals,
                                      backward=backward, **self.opts)
        return est

    def return_map(self, i: int, s: float) -> float:
        cur = self._edge(i)
        for _ in range(self.n):
            s = self.leg(cur, s)
            cur = self.built.next_edge(cur)
        return s

    def circuit(self, i: int, s: float) -> tuple:
        """Orbit of one circuit from section ``i``: ``(xy, period, s_return)``."""
        cur = self._edge(i)
        pts, period = [], 0.0
        for _ in range(self.n):
            s, tr = self.leg(cur, s, record=True)
            ch = self.chart(cur)
            hit = tr.hits[0]
            ys = np.vstack([tr.states[tr.times < hit.t], hit.state])
            xy = (ch.inv @ (ys.T + ch.shift[:, None])).T
            pts.append(xy if not pts else xy[1:])
            period += float(hit.t)
            cur = self.built.next_edge(cur)
        return np.concatenate(pts), period, s


# --- sigma_0 -------------------------------------------------------------------------

def _inside_polygon(built, x) -> bool:
    return all(l(x) > 0 for l in built.lines)


def detect_sigma0(built, delta: float = 1e-3) -> int:
    """``INNER`` (-1) or ``OUTER`` (+1): the side on which orbits complete a circuit."""
    flow = PolycycleFlow(built)
    returning = []
    for sign in (1.0, -1.0):
        try:
            flow.return_map(1, sign * delta)
        except (NoCrossing, FlowError):
            continue
        returning.append(sign)
    if len(returning) != 1:
        raise FlowError(f"return side ambiguous: returning seeds {returning}")
    x = built.section(1).point(returning[0] * delta)
    return INNER if _inside_polygon(built, x) else OUTER


# --- displacements ----------------------------------------------------------------

@dataclass
class DisplacementVector:
    mu: tuple
    b_u: np.ndarray
    b_s: np.ndarray
    sigma0: int
    side: int
    confident: bool = True

    @property
    def d(self) -> np.ndarray:
        return self.b_u - self.b_s

    def to_json(self) -> dict:
        return {"mu": list(self.mu), "b_u": self.b_u.tolist(), "b_s": self.b_s.tolist(),
                "d": self.d.tolist(), "sigma0": self.sigma0, "confident": self.confident}


def displacement_vector(fam: PerturbationFamily, built, mu, *, sigma0: int | None = None,
                        flow: PolycycleFlow | None = None) -> DisplacementVector:
    flow = flow or PolycycleFlow(built, fam, mu)
    sigma0 = detect_sigma0(built) if sigma0 is None else sigma0
    side = return_side(built, sigma0)
    bu = np.array([flow.b_u(i) for i in range(1, built.n + 1)])
    bs = np.array([flow.b_s(i) for i in range(1, built.n + 1)])
    return DisplacementVector(flow.mu, bu, bs, sigma0, side, flow.confident())


def return_side(built, sigma0: int) -> int:
    """Sign of the section coordinate on the return side for a given ``sigma_0``."""
    v = built.section_dirs[0]
    outward = built.line(1).alpha * v[0] + built.line(1).beta * v[1] < 0
    return sigma0 if outward else -sigma0


@dataclass
class BypassDisplacement:
    value: float
    regime: str
    which: str
    d_test: float
    parts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"value": self.value, "regime": self.regime, "which": self.which,
                "d_test": self.d_test, "parts": self.parts}


def bypass_displacement(fam: PerturbationFamily | None, built, mu, target: int, *,
                        sigma0: int | None = None, flow: PolycycleFlow | None = None,
                        ratio_guard: float = 1e-6) -> BypassDisplacement:
    """Displacement past the expelled saddle ``p_target``.

    ``target`` is the edge flowing into the expelled saddle.  For ``r > 1``
    the unstable separatrix of that edge is carried past the saddle when it
    lies on the return side; for ``r < 1`` the stable separatrix of the next
    edge is carried backward instead.
    """
    flow = flow or PolycycleFlow(built, fam, mu)
    sigma0 = detect_sigma0(built) if sigma0 is None else sigma0
    side = return_side(built, sigma0)
    e = (target - 1) % built.n + 1
    nxt = built.next_edge(e)
    r = built.ratios[built.downstream_vertex(e) - 1]
    if abs(r - 1.0) <= ratio_guard:
        raise ValueError(f"ratio {r} at the bypassed saddle is too close to 1")
    if r > 1:
        d_e = flow.d(e)
        if side * d_e <= 0:
            return BypassDisplacement(flow.d(nxt), "unbroken", "r_n_gt_1", d_e)
        b1 = flow.b_bypass_unstable(e)
        return BypassDisplacement(b1 - flow.b_s(nxt), "bypass", "r_n_gt_1", d_e,
                                  {"b1": b1, "b_s": flow.b_s(nxt)})
    d_next = flow.d(nxt)
    if side * d_next >= 0:
        return BypassDisplacement(flow.d(e), "unbroken", "r_n_lt_1", d_next)
    b1 = flow.b_bypass_stable(e)
    return BypassDisplacement(flow.b_u(e) - b1, "bypass", "r_n_lt_1", d_next,
                              {"b1": b1, "b_u": flow.b_u(e)})


# --- connection breaking ----------------------------------------------------------

@dataclass
class BreakResult:
    mu: np.ndarray
    residual: float
    iterations: int
    regime: str
    expelled: int
    free_index: int
    components: list
    history: list
    prediction: np.ndarray
    displacement: DisplacementVector | None = None
    bypass: BypassDisplacement | None = None

    def to_json(self) -> dict:
        return {"mu": self.mu.tolist(), "residual": self.residual,
                "iterations": self.iterations, "regime": self.regime,
                "expelled_saddle": self.expelled, "free_index": self.free_index,
                "components": self.components, "history": self.history,
                "prediction": self.prediction.tolist(),
                "displacement": self.displacement.to_json() if self.displacement else None,
                "bypass": self.bypass.to_json() if self.bypass else None}


def solve_connection_break(fam: PerturbationFamily, built, plan: ExpulsionPlan,
                           free_param_value: float, *, regime: str | None = "bypass",
                           tol: float = 1e-9, max_iter: int = 30,
                           melnikov: MelnikovReport | None = None,
                           sigma0: int | None = None, bias: float = 0.0) -> BreakResult:
    """Keep all connections but the expelled one, bypassing the expelled saddle.

    The expelled saddle is ``plan.expelled``.  Its entering edge ``e`` and the
    next edge ``e'`` merge into one bypass connection; the parameter of the
    edge left out of the residual is fixed to ``free_param_value`` and the
    remaining ones are found by Broyden iteration started from the Melnikov
    Jacobian.

    With ``regime="bypass"`` the sign of the free value is chosen so the
    broken connection opens towards the return side (the configuration in
    which the bypass connection exists); ``regime=None`` uses it as given.
    ``bias`` shifts the targets of all residual components by
    ``bias * side`` (zero by default).
    """
    n = built.n
    if len(fam) != n:
        raise ValueError("the family needs one parameter per connection")
    sigma0 = detect_sigma0(built) if sigma0 is None else sigma0
    side = return_side(built, sigma0)
    expelled = plan.expelled
    e = next(i for i in range(1, n + 1) if built.downstream_vertex(i) == expelled)
    nxt = built.next_edge(e)
    r = built.ratios[expelled - 1]
    if abs(r - 1.0) <= 1e-6:
        raise ValueError("cannot expel a saddle with ratio 1")
    if melnikov is None:
        melnikov = melnikov_matrix(fam, built)
    M = melnikov.matrix
    # edge left out of the residual and the Melnikov row standing in for the bypass map
    free_edge, bypass_row = (e, nxt) if r > 1 else (nxt, e)
    free = free_edge - 1
    if regime == "bypass":
        m = M[free, free]
        want = side if r > 1 else -side
        free_param_value = abs(free_param_value) * (1.0 if want * m > 0 else -1.0)
    elif regime is not None:
        raise ValueError("regime must be 'bypass' or None")
    plain = [i for i in range(1, n + 1) if i not in (e, nxt)]
    components = [f"d{i}" for i in plain] + [f"d{bypass_row}^(1)"]
    unknown = [j for j in range(n) if j != free]
    rows = [i - 1 for i in plain] + [bypass_row - 1]
    J = M[np.ix_(rows, unknown)].copy()
    Jfree = M[rows, free]
    pred = -np.linalg.solve(J, Jfree * free_param_value)

    def full(x):
        mu = np.zeros(n)
        mu[unknown] = x
        mu[free] = free_param_value
        return mu

    target = np.full(len(rows), bias * side)
    last = {}

    def F(x):
        mu = full(x)
        flow = PolycycleFlow(built, fam, mu)
        vals = [flow.d(i) for i in plain]
        by = bypass_displacement(fam, built, mu, e, sigma0=sigma0, flow=flow)
        vals.append(by.value)
        last.update(flow=flow, bypass=by, mu=mu)
        return np.array(vals) - target

    history = []
    if free_param_value == 0.0:
        x = np.zeros(len(unknown))
    else:
        x = pred.copy()
    Fx = F(x)
    regimes = [last["bypass"].regime]
    history.append({"mu": full(x).tolist(), "residual": float(np.abs(Fx).max()),
                    "regime": regimes[-1]})
    it = 0
    while np.abs(Fx).max() >= tol:
        if it >= max_iter:
            raise BreakError(f"no convergence in {max_iter} iterations; "
                             f"residual {np.abs(Fx).max():.3e}")
        dx = -np.linalg.solve(J, Fx)
        x_new = x + dx
        F_new = F(x_new)
        # Broyden's good update
        J = J + np.outer(F_new - Fx - J @ dx, dx) / (dx @ dx)
        x, Fx = x_new, F_new
        regimes.append(last["bypass"].regime)
        history.append({"mu": full(x).tolist(), "residual": float(np.abs(Fx).max()),
                        "regime": regimes[-1]})
        flips = sum(a != b for a, b in zip(regimes, regimes[1:]))
        if flips > 3:
            raise BreakError("bypass regime oscillates between iterations")
        it += 1
    mu = full(x)
    flow = last["flow"]
    disp = displacement_vector(fam, built, mu, sigma0=sigma0, flow=flow)
    return BreakResult(mu, float(np.abs(Fx + target).max()), it, regimes[-1], expelled,
                       free_edge, components, history, full(pred), disp, last["bypass"])


# --- cycles --------------------------------------------------------------------------

@dataclass
class CycleRecord:
    fixed_point: float
    period: float
    multiplier: float
    hausdorff_to_polycycle: float
    residual: float
    closure_gap: float
    orbit: np.ndarray = field(repr=False, default=None)

    def to_json(self, with_orbit: bool = False) -> dict:
        out = {"fixed_point": self.fixed_point, "period": self.period,
               "multiplier": self.multiplier,
               "hausdorff_to_polycycle": self.hausdorff_to_polycycle,
               "residual": self.residual, "closure_gap": self.closure_gap}
        if with_orbit and self.orbit is not None:
            out["orbit"] = self.orbit.tolist()
        return out


class FieldReturn:
    """Return map of a plain field on a section (original coordinates)."""

    def __init__(self, f, sec: Section, others: Sequence[Section] = (), t_max: float = 2000.0,
                 bound: float | None = None):
        self.f, self.sec, self.others, self.t_max, self.bound = f, sec, list(others), t_max, bound

    def _run(self, s, record):
        tr = integrate(self.f, self.sec.point(s), (0.0, self.t_max), [self.sec, *self.others],
                       terminal={0}, record=record, bound=self.bound)
        hit = tr.hit(0)
        if hit is None:
            raise NoCrossing("orbit did not return", tr.final)
        return hit, tr

    def pi(self, s: float) -> float:
        return self._run(s, False)[0].s

    def circuit(self, s: float):
        hit, tr = self._run(s, True)
        states = np.vstack([tr.states[tr.times < hit.t], hit.state])
        return states, float(hit.t), hit.s


class PolycycleReturn:
    def __init__(self, flow: PolycycleFlow, edge: int = 1):
        self.flow, self.edge = flow, edge

    def pi(self, s: float) -> float:
        return self.flow.return_map(self.edge, s)

    def circuit(self, s: float):
        return self.flow.circuit(self.edge, s)


def _search_grid(lo, hi, grid, anchor):
    pts = set(np.linspace(lo, hi, grid).tolist())
    for a, b in ((anchor, hi), (anchor, lo)):
        span = b - a
        if span == 0 or not (lo <= a <= hi or a in (lo, hi)):
            continue
        for k in range(grid):
            t = a + span * 2.0 ** -k
            if lo <= t <= hi:
                pts.add(t)
    return sorted(p for p in pts if lo <= p <= hi)


def detect_cycles(f, sec: Section | None, search, grid: int = 64, *, system=None,
                  polygon=None, anchor: float | None = None, tol: float = 1e-11,
                  residual_tol: float = 1e-10) -> list:
    """Fixed points of the return map on ``search = (t_lo, t_hi)``.

    ``system`` overrides the plain-field return map (e.g. a
    :class:`PolycycleReturn`).  The grid is uniform plus geometric sequences
    ``anchor +- c 2^-k`` refined towards ``anchor`` (the polycycle coordinate,
    default the window end closest to 0).  Points where the return map is
    undefined are skipped and reported in ``detect_cycles.skipped``.
    """
    system = system or FieldReturn(f, sec)
    lo, hi = float(search[0]), float(search[1])
    if not lo < hi:
        raise ValueError("empty search window")
    if anchor is None:
        anchor = min((lo, hi), key=abs) if not lo < 0 < hi else 0.0
    ts = _search_grid(lo, hi, grid, anchor)
    vals, skipped = [], []
    for t in ts:
        try:
            vals.append((t, system.pi(t) - t))
        except (FlowError, ValueError):
            skipped.append(t)
    detect_cycles.skipped = skipped
    out = []
    for (t0, g0), (t1, g1) in zip(vals, vals[1:]):
        if g0 == 0.0:
            root = t0
        elif g0 * g1 < 0:
            root = _bisect(system, t0, g0, t1, tol)
            if root is None:
                continue
        else:
            continue
        rec = _cycle_record(system, root, anchor, polygon, residual_tol)
        if rec is not None and not any(abs(rec.fixed_point - c.fixed_point) < 10 * tol for c in out):
            out.append(rec)
    return out


def _bisect(system, a, ga, b, tol):
    """Bisection on ``pi(t) - t``; returns None if the bracket hits undefined points."""
    width_floor = 4 * np.spacing(max(abs(a), abs(b), 1e-300))
    while abs(b - a) > max(tol, width_floor):
        m = 0.5 * (a + b)
        try:
            gm = system.pi(m) - m
        except (FlowError, ValueError):
            return None
        if gm == 0.0:
            return m
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


def _cycle_record(system, t, anchor, polygon, residual_tol):
    try:
        pt = system.pi(t)
    except FlowError:
        return None
    residual = abs(pt - t)
    if residual >= residual_tol:
        return None
    h = max(1e-3 * abs(t - anchor), 1e-14)
    try:
        mult = (system.pi(t + h) - system.pi(t - h)) / (2 * h)
    except FlowError:
        mult = float("nan")
    xy, period, s_back = system.circuit(t)
    gap = float(math.dist(xy[0], xy[-1]))
    hd = hausdorff_distance(xy, polygon) if polygon is not None else float("nan")
    return CycleRecord(float(t), period, float(mult), hd, residual, gap, xy)


# --- geometry --------------------------------------------------------------------

def _point_segment_dist(P, A, B):
    """Distances from points ``P`` (k,2) to segments ``A->B`` (m,2); shape (k, m)."""
    AB = B - A
    L2 = np.einsum("ij,ij->i", AB, AB)
    L2 = np.where(L2 == 0, 1.0, L2)
    AP = P[:, None, :] - A[None, :, :]
    t = np.clip(np.einsum("kmj,mj->km", AP, AB) / L2, 0.0, 1.0)
    proj = A[None, :, :] + t[..., None] * AB[None, :, :]
    return np.linalg.norm(P[:, None, :] - proj, axis=2)


def _directed(a, b, refine, chunk=2048):
    if refine and len(b) > 1:
        A, B = b[:-1], b[1:]
        # vertex distances too, so shared samples give exactly zero
        dist = lambda P: np.minimum(_point_segment_dist(P, A, B).min(axis=1, keepdims=True),
                                    np.linalg.norm(P[:, None, :] - b[None, :, :], axis=2))
    else:
        dist = lambda P: np.linalg.norm(P[:, None, :] - b[None, :, :], axis=2)
    best = 0.0
    for k in range(0, len(a), chunk):
        best = max(best, float(dist(a[k:k + chunk]).min(axis=1).max()))
    return best


def hausdorff_distance(a, b, refine: bool = True) -> float:
    """Symmetric Hausdorff distance between two sampled curves.

    With ``refine`` each sample is measured against the polyline through the
    other curve's samples rather than against its vertices only.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    return max(_directed(a, b, refine), _directed(b, a, refine))


def _resample_closed(curve, samples):
    c = np.asarray(curve, dtype=float)
    if np.allclose(c[0], c[-1]):
        c = c[:-1]
    closed = np.vstack([c, c[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    u = np.linspace(0.0, s[-1], samples, endpoint=False)
    return np.column_stack([np.interp(u, s, closed[:, 0]), np.interp(u, s, closed[:, 1])])


def _signed_area(c):
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def check_without_contact(f, curve, samples: int = 400) -> tuple:
    """``(verdict, direction, min_margin)`` for a closed curve.

    ``direction`` is "outward" or "inward" according to the sign of
    ``<X, n_out>`` (taken from the first sample when the verdict fails);
    the margin is the minimum of ``|<X, n_out>| / |X|``.
    """
    pts = _resample_closed(curve, samples)
    if _signed_area(pts) < 0:
        pts = pts[::-1]
    tang = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    normal = np.column_stack([tang[:, 1], -tang[:, 0]])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    X = np.array([f(p) for p in pts], dtype=float)
    speed = np.linalg.norm(X, axis=1)
    if np.any(speed == 0):
        raise ValueError("field vanishes on the curve")
    dots = np.einsum("ij,ij->i", X, normal) / speed
    verdict = bool(np.all(dots > 0) or np.all(dots < 0))
    direction = "outward" if (np.all(dots > 0) if verdict else dots[0] > 0) else "inward"
    return verdict, direction, float(np.abs(dots).min())


def offset_polygon(built, h: float, samples: int = 400) -> np.ndarray:
    """Polygon of the lines ``l_i = h`` (inward offset by ``h``), resampled."""
    n = built.n
    verts = []
    for s in range(1, n + 1):
        l1, l2 = built.line(s - 1), built.line(s)
        A = np.array([[l1.alpha, l1.beta], [l2.alpha, l2.beta]])
        verts.append(np.linalg.solve(A, [l1.offset + h, l2.offset + h]))
    return _resample_closed(np.array(verts), samples)


_CORRECTION = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _mono_grad(p, k):
    a, c = k
    x, y = p
    return (a * x ** (a - 1) * y ** c if a else 0.0, c * x ** a * y ** (c - 1) if c else 0.0)


def _barrier_weights(built, f, pts, stable, coef_bound=5.0):
    """Weights ``w`` and quadratic correction ``c`` making
    ``V = sum w_i log l_i + sum c_k x^k`` monotone along ``f`` near the polygon.

    Along an invariant line ``<grad l_i, X> / l_i`` is the line's cofactor,
    which changes sign between the two saddles of that edge, so constant
    weights alone are often infeasible; the quadratic terms absorb that.
    """
    n, k = built.n, len(_CORRECTION)
    G = np.empty((len(pts), n + k))
    for row, p in enumerate(pts):
        X = f(p)
        for i in range(n):
            l = built.line(i + 1)
            G[row, i] = (l.alpha * X[0] + l.beta * X[1]) / l(p)
        for j, m in enumerate(_CORRECTION):
            g = _mono_grad(p, m)
            G[row, n + j] = g[0] * X[0] + g[1] * X[1]
    sgn = 1.0 if stable else -1.0
    # maximize the margin m subject to sgn * dV/dt + m <= 0, sum w = n
    c = np.zeros(n + k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([sgn * G, np.ones((len(pts), 1))])
    A_eq = np.concatenate([np.ones(n), np.zeros(k + 1)])[None, :]
    bounds = [(0.05, None)] * n + [(-coef_bound, coef_bound)] * k + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(pts)), A_eq=A_eq, b_eq=[float(n)],
                  bounds=bounds, method="highs")
    if not res.success or res.x[-1] <= 0:
        return None
    return res.x[:n], res.x[n:n + k]


def barrier_curve(built, f=None, h: float = 0.05, samples: int = 400, stable: bool | None = None):
    """Level curve of ``V = sum w_i log l_i + (quadratic)`` near the offset ``l = h``.

    The coefficients come from a linear program that makes ``V`` monotone
    along the flow on the sampled offset polygon.  Each ray from the origin
    is cut at its outermost crossing of the level.  Returns ``None`` when the
    program is infeasible or a ray misses the level.
    """
    from .graphic import graphic_number

    f = f or built.field
    if stable is None:
        stable = graphic_number(built.ratios) > 1
    lines = built.lines
    ring = offset_polygon(built, h, samples)
    # constraints on a band around the offset, then on each trial level curve
    pts = np.vstack([offset_polygon(built, h * t, 64 * built.n) for t in (0.5, 0.75, 1.0, 1.5, 2.0)])
    for _ in range(6):
        sol = _barrier_weights(built, f, pts, stable)
        if sol is None:
            return None
        curve = _level_curve(lines, *sol, ring, samples)
        if curve is None:
            return None
        X = np.array([f(p) for p in curve])
        grad = np.array([_barrier_grad(lines, *sol, p) for p in curve])
        dv = np.einsum("ij,ij->i", X, grad)
        if np.all(dv < 0) if stable else np.all(dv > 0):
            return curve
        pts = np.vstack([pts, curve])
    return None


def _barrier_value(lines, w, cc, x):
    x1, x2 = np.asarray(x[0], float), np.asarray(x[1], float)
    out = sum(wi * np.log(l.alpha * x1 + l.beta * x2 - l.offset) for wi, l in zip(w, lines))
    return out + sum(ck * x1 ** a * x2 ** b for ck, (a, b) in zip(cc, _CORRECTION))


def _barrier_grad(lines, w, cc, x):
    g = np.zeros(2)
    for wi, l in zip(w, lines):
        g += wi * np.array([l.alpha, l.beta]) / l(x)
    for ck, m in zip(cc, _CORRECTION):
        g += ck * np.array(_mono_grad(x, m))
    return g


def _level_curve(lines, w, cc, ring, samples):
    """Outermost crossing of the level ``median V(ring)`` along rays through the ring."""
    V = lambda x: _barrier_value(lines, w, cc, x)
    level = float(np.median(V(ring.T)))
    U = ring / np.linalg.norm(ring, axis=1)[:, None]
    A = np.array([[l.alpha, l.beta] for l in lines])
    off = np.array([l.offset for l in lines])
    dots = U @ A.T
    with np.errstate(divide="ignore"):
        rho_max = np.where(dots < 0, off[None, :] / np.where(dots < 0, dots, 1.0), np.inf).min(axis=1)
    frac = 1 - np.geomspace(1e-9, 1.0, 200)
    R = rho_max[:, None] * frac[None, :]
    vals = V((R * U[:, :1], R * U[:, 1:])) - level
    out = []
    for k, u in enumerate(U):
        idx = np.flatnonzero((vals[k, :-1] < 0) & (vals[k, 1:] >= 0))
        if not idx.size:
            return None
        m = idx[0]
        g = lambda r: float(V((r * u[0], r * u[1]))) - level
        rho = brentq(g, R[k, m + 1], R[k, m], xtol=1e-14)
        out.append(rho * u)
    return np.array(out)


@dataclass
class TrappingCurve:
    curve: np.ndarray
    method: str
    h: float
    verdict: bool
    direction: str
    margin: float


def trapping_curve(built, f=None, h: float = 0.05, h_min: float = 0.005,
                   samples: int = 400) -> TrappingCurve:
    """Without-contact closed curve on the return side of the polycycle.

    Tries the inward polygon offset at ``h``, halving down to ``h_min``; if
    no offset is without contact, falls back to a log-barrier level curve
    (see :func:`barrier_curve`) over the same ``h`` ladder.
    """
    f = f or built.field
    ladder = []
    hh = h
    while hh >= h_min * (1 - 1e-12):
        ladder.append(hh)
        hh *= 0.5
    for hh in ladder:
        c = offset_polygon(built, hh, samples)
        ok, direc, margin = check_without_contact(f, c, samples)
        if ok:
            return TrappingCurve(c, "offset", hh, ok, direc, margin)
    for hh in ladder:
        c = barrier_curve(built, f, hh, samples)
        if c is None:
            continue
        ok, direc, margin = check_without_contact(f, c, samples)
        if ok:
            return TrappingCurve(c, "barrier", hh, ok, direc, margin)
    raise FlowError("no without-contact curve found")


# --- model map ---------------------------------------------------------------------

class ModelMapDomainError(ValueError):
    def __init__(self, level: int, base: float):
        super().__init__(f"negative base {base!r} at nesting level {level}")
        self.level = level
        self.base = base


@dataclass(frozen=True)
class ModelMapSpec:
    ratios: tuple
    offsets: tuple
    alpha: float = 1.0
    domain: tuple = (0.0, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "offsets", tuple(float(b) for b in self.offsets))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        if len(self.ratios) != len(self.offsets) or not self.ratios:
            raise ValueError("need one offset per ratio")
        if not all(r > 0 and math.isfinite(r) for r in self.ratios):
            raise ValueError("ratios must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.domain[0] < self.domain[1]:
            raise ValueError("need rho < eps_upper")

    def to_json(self) -> dict:
        return {"ratios": list(self.ratios), "offsets": list(self.offsets),
                "alpha": self.alpha, "domain": list(self.domain)}


def model_map_eval(spec: ModelMapSpec, t: float) -> float:
    """``Psi(t) - alpha t`` with ``Psi = (...((t^r1 + b1)^r2 + b2)...)^rn + bn``."""
    v = float(t)
    for level, (r, b) in enumerate(zip(spec.ratios, spec.offsets)):
        if v < 0:
            raise ModelMapDomainError(level, v)
        v = v ** r + b
    return v - spec.alpha * t


def _mm_grid(lo, hi, grid):
    uni = np.linspace(lo, hi, grid + 2)[1:-1]
    geo = lo + (hi - lo) * np.geomspace(1e-9, 1.0, grid + 1)[:-1]
    return np.unique(np.concatenate([uni, geo]))


def model_map_roots(spec: ModelMapSpec, grid: int = 2000, *, tol: float = 1e-12,
                    return_tangencies: bool = False):
    """Sorted simple roots of the model map in ``(max(rho, 0), eps_upper)``."""
    lo, hi = max(spec.domain[0], 0.0), spec.domain[1]
    ts = _mm_grid(lo, hi, grid)
    vals = []
    for t in ts:
        try:
            vals.append((t, model_map_eval(spec, t)))
        except ModelMapDomainError:
            vals.append((t, None))
    roots, tangencies = [], []
    for (t0, g0), (t1, g1) in zip(vals, vals[1:]):
        if g0 is None or g1 is None:
            continue
        if g0 == 0.0:
            roots.append(t0)
        elif g0 * g1 < 0:
            a, b, ga = t0, t1, g0
            while b - a > tol:
                m = 0.5 * (a + b)
                gm = model_map_eval(spec, m)
                if gm == 0.0:
                    a = b = m
                    break
                if (gm > 0) == (ga > 0):
                    a, ga = m, gm
                else:
                    b = m
            roots.append(0.5 * (a + b))
    for k in range(1, len(vals) - 1):
        t, g = vals[k]
        if g is None or vals[k - 1][1] is None or vals[k + 1][1] is None:
            continue
        if abs(g) < 1e-12 and vals[k - 1][1] * vals[k + 1][1] > 0:
            tangencies.append(t)
    roots = sorted({float(r) for r in roots})
    tangencies = [float(t) for t in tangencies]
    return (roots, tangencies) if return_tangencies else roots


def model_map_search(ratios, alpha: float = 1.0, window=(0.0, 0.3), box: float = 0.05,
                     samples: int = 4000, grid: int = 400, seed: int = 0) -> dict:
    """Random search over offsets in ``[-box, box]^n`` for the most roots."""
    rng = np.random.default_rng(seed)
    n = len(ratios)
    best = {"count": -1}
    for _ in range(samples):
        b = rng.uniform(-box, box, size=n)
        spec = ModelMapSpec(tuple(ratios), tuple(b), alpha, tuple(window))
        roots = model_map_roots(spec, grid)
        if len(roots) > best["count"]:
            best = {"count": len(roots), "offsets": b.tolist(), "roots": roots}
    best.update(ratios=list(ratios), alpha=alpha, window=list(window), samples=samples,
                seed=seed)
    return best
