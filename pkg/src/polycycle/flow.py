"""Phase-space machinery: integration, saddles, separatrices, passage maps.

The integrator is a Dormand-Prince 5(4) pair with PI step control written on
plain Python floats; for 2-4 dimensional states this is several times faster
than going through numpy per stage, and it lets events be localized by
bisection on re-taken sub-steps instead of dense output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polyalg import VectorField2

__all__ = [
    "FlowError",
    "StepSizeUnderflow",
    "MaxStepsExceeded",
    "NearSingularPassage",
    "NoCrossing",
    "Escaped",
    "NewtonFailure",
    "NotASaddle",
    "Section",
    "EventHit",
    "Trajectory",
    "Saddle",
    "DulacEstimate",
    "integrate",
    "integrate_rhs",
    "find_saddle",
    "shoot_separatrix",
    "transition_map",
    "return_map",
    "estimate_dulac_exponent",
]

RTOL = 1e-10
ATOL = 1e-12
MAX_STEPS = 10_000_000
EVENT_TOL = 1e-12
STALL_SPEED = 1e-13
STALL_TIME = 50.0
SEED_DELTA = 1e-7
RICHARDSON_TOL = 1e-7


class FlowError(RuntimeError):
    """Integration or shooting failure; ``state`` is the last good state."""

    def __init__(self, msg, state=None, t=None):
        super().__init__(msg)
        self.state = state
        self.t = t


class StepSizeUnderflow(FlowError):
    pass


class MaxStepsExceeded(FlowError):
    pass


class NearSingularPassage(FlowError):
    pass


class NoCrossing(FlowError):
    pass


class Escaped(NoCrossing):
    """Orbit left the working region before reaching its section."""


class NewtonFailure(FlowError):
    pass


class NotASaddle(FlowError):
    pass


# --- sections ----------------------------------------------------------------

@dataclass(frozen=True)
class Section:
    """Transversal segment ``base + s*direction``, ``|s| <= half_width``.

    ``normal`` is the gradient of the crossing function; it defaults to the
    flow direction ``(d2, -d1)`` that matches ``direction = X^perp/|X^perp|``.
    ``tangent`` (default ``direction``) is the direction used by
    :meth:`point`; it differs when the coordinate is read off obliquely.
    Crossings count when the crossing function changes sign in the direction
    of integration (from negative to positive going forward in time).
    """

    base: tuple
    direction: tuple
    half_width: float = 0.5
    normal: tuple | None = None
    tangent: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))
        object.__setattr__(self, "direction", (float(self.direction[0]), float(self.direction[1])))
        if self.normal is None:
            object.__setattr__(self, "normal", (self.direction[1], -self.direction[0]))
        else:
            object.__setattr__(self, "normal", (float(self.normal[0]), float(self.normal[1])))
        t = self.direction if self.tangent is None else self.tangent
        object.__setattr__(self, "tangent", (float(t[0]), float(t[1])))
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def coord(self, x) -> float:
        """Signed section coordinate ``<x - base, direction>``."""
        return (x[0] - self.base[0]) * self.direction[0] + (x[1] - self.base[1]) * self.direction[1]

    def crossing(self, x) -> float:
        return (x[0] - self.base[0]) * self.normal[0] + (x[1] - self.base[1]) * self.normal[1]

    def point(self, s: float) -> tuple:
        return (self.base[0] + s * self.tangent[0], self.base[1] + s * self.tangent[1])

    def to_json(self) -> dict:
        return {"base": list(self.base), "direction": list(self.direction),
                "half_width": self.half_width, "normal": list(self.normal),
                "tangent": list(self.tangent)}


@dataclass
class EventHit:
    index: int
    t: float
    state: tuple
    s: float


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    step_stats: tuple
    hits: list = field(default_factory=list)
    aux: np.ndarray | None = None

    @property
    def final(self) -> tuple:
        return tuple(self.states[-1])

    def hit(self, index: int) -> EventHit | None:
        for h in self.hits:
            if h.index == index:
                return h
        return None


# --- Dormand-Prince 5(4) -----------------------------------------------------

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)


def _stages(rhs, y, k1, h):
    """One DP5 step from ``y``; returns ``(y5, k7, err_vector)``."""
    d = range(len(y))
    k2 = rhs([y[i] + h * _A21 * k1[i] for i in d])
    k3 = rhs([y[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in d])
    k4 = rhs([y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i]) for i in d])
    k5 = rhs([y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i]) for i in d])
    k6 = rhs([y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i]
                          + _A65 * k5[i]) for i in d])
    y5 = [y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
          for i in d]
    k7 = rhs(y5)
    err = [h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i]
                + _E7 * k7[i]) for i in d]
    return y5, k7, err


def _err_norm(err, y0, y1, rtol, atol):
    acc = 0.0
    for e, a, b in zip(err, y0, y1):
        sc = atol + rtol * max(abs(a), abs(b))
        acc += (e / sc) ** 2
    return math.sqrt(acc / len(err))


def _initial_step(rhs, y0, f0, direction, rtol, atol, span):
    scale = [atol + rtol * abs(v) for v in y0]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y0, scale)) / len(y0))
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, scale)) / len(y0))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = [a + direction * h0 * b for a, b in zip(y0, f0)]
    f1 = rhs(y1)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, scale)) / len(y0)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_rhs(rhs: Callable, y0: Sequence[float], t_span, events: Sequence[Section] = (),
                  *, terminal=None, rtol: float = RTOL, atol: float = ATOL,
                  max_steps: int = MAX_STEPS, max_step: float = 0.25, record: bool = True,
                  stall_speed: float = STALL_SPEED, stall_time: float = STALL_TIME,
                  event_tol: float = EVENT_TOL, bound: float | None = None) -> Trajectory:
    """Integrate ``y' = rhs(y)`` for a state list whose first two entries are the point.

    ``terminal`` is a collection of event indices that stop integration at
    their first valid crossing (default: all events).  ``bound`` aborts with
    :class:`Escaped` once the point leaves the box ``|y_k| <= bound``.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 == t1:
        raise ValueError("empty time span")
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    y = [float(v) for v in y0]
    if not all(math.isfinite(v) for v in y):
        raise ValueError("non-finite initial state")
    terminal = set(range(len(events))) if terminal is None else set(terminal)

    f = rhs(y)
    h = _initial_step(rhs, y, f, direction, rtol, atol, min(span, max_step))
    t = t0
    times = [t] if record else None
    states = [tuple(y)] if record else None
    hits: list[EventHit] = []
    g_prev = [sec.crossing(y) for sec in events]
    accepted = rejected = 0
    err_prev = 1e-4
    stalled = 0.0

    while True:
        remaining = (t1 - t) * direction
        if remaining <= 0:
            break
        if accepted + rejected >= max_steps:
            raise MaxStepsExceeded(f"max steps {max_steps} exceeded at t={t}", tuple(y), t)
        h = min(h, remaining, max_step)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t}", tuple(y), t)
        y_new, f_new, err = _stages(rhs, y, f, direction * h)
        en = _err_norm(err, y, y_new, rtol, atol)
        if not math.isfinite(en):
            rejected += 1
            h *= 0.2
            continue
        if en > 1.0:
            rejected += 1
            h *= max(0.2, 0.9 * en ** -0.2)
            continue

        accepted += 1
        t_new = t0 + direction * span if h >= remaining else t + direction * h
        stop = False
        for k, sec in enumerate(events):
            g_new = sec.crossing(y_new)
            crossed = (g_prev[k] < 0 <= g_new) if direction > 0 else (g_prev[k] > 0 >= g_new)
            if crossed:
                th, yh = _locate(rhs, y, f, direction * h, sec, event_tol)
                s = sec.coord(yh)
                if abs(s) <= sec.half_width:
                    hits.append(EventHit(k, t + direction * th, tuple(yh), s))
                    if k in terminal:
                        stop = True
            g_prev[k] = g_new
        if stop:
            last = hits[-1]
            if record:
                times.append(last.t)
                states.append(last.state)
            t, y = last.t, list(last.state)
            break

        speed = math.hypot(f_new[0], f_new[1])
        stalled = stalled + h if speed < stall_speed else 0.0
        if stalled > stall_time:
            raise NearSingularPassage(f"orbit stagnated near a singularity at t={t_new}",
                                      tuple(y_new), t_new)
        if bound is not None and max(abs(y_new[0]), abs(y_new[1])) > bound:
            raise Escaped(f"orbit left the box |y| <= {bound} at t={t_new}", tuple(y_new), t_new)
        t, y, f = t_new, y_new, f_new
        if record:
            times.append(t)
            states.append(tuple(y))
        # PI controller (Hairer's beta = 0.04)
        fac = 0.9 * max(en, 1e-10) ** -0.17 * err_prev ** 0.04
        h *= min(5.0, max(0.2, fac))
        err_prev = max(en, 1e-4)

    if record:
        arr = np.array(states)
        traj = Trajectory(np.array(times), arr[:, :2], (accepted, rejected), hits,
                          arr[:, 2:] if arr.shape[1] > 2 else None)
    else:
        arr = np.array([y])
        traj = Trajectory(np.array([t]), arr[:, :2], (accepted, rejected), hits,
                          arr[:, 2:] if arr.shape[1] > 2 else None)
    return traj


def _locate(rhs, y, f, h, sec: Section, tol: float):
    """Bisect the fraction of step ``h`` where the crossing function vanishes."""
    g0 = sec.crossing(y)
    lo, hi = 0.0, 1.0
    y_hi = None
    while (hi - lo) * abs(h) > tol:
        mid = 0.5 * (lo + hi)
        ym, _, _ = _stages(rhs, y, f, mid * h)
        if (sec.crossing(ym) > 0) == (g0 > 0) and sec.crossing(ym) != 0:
            lo = mid
        else:
            hi, y_hi = mid, ym
    if y_hi is None:
        y_hi, _, _ = _stages(rhs, y, f, hi * h)
    return hi * abs(h), y_hi


def _field_rhs(f: VectorField2) -> Callable:
    g = f.rhs
    return lambda y: g(y[0], y[1])


def integrate(f: VectorField2, x0, t_span, events: Sequence[Section] = (), **opts) -> Trajectory:
    """Integrate the planar field ``f`` from ``x0`` over ``t_span`` (backward if t1 < t0)."""
    return integrate_rhs(_field_rhs(f), list(x0), t_span, events, **opts)


# --- saddles -----------------------------------------------------------------

@dataclass(frozen=True)
class Saddle:
    location: tuple
    lambda_s: float
    lambda_u: float
    dir_s: tuple
    dir_u: tuple

    @property
    def ratio(self) -> float:
        return -self.lambda_s / self.lambda_u

    def to_json(self) -> dict:
        return {"location": list(self.location), "lambda_s": self.lambda_s,
                "lambda_u": self.lambda_u, "dir_s": list(self.dir_s),
                "dir_u": list(self.dir_u), "ratio": self.ratio}


def find_saddle(f: VectorField2, seed, *, tol: float = 1e-12, max_iter: int = 50) -> Saddle:
    """Newton on ``X(x) = 0`` with the exact Jacobian, then classify."""
    x = np.array(seed, dtype=float)
    for _ in range(max_iter):
        r = np.array(f(x))
        if math.hypot(*r) < tol:
            break
        x = x - np.linalg.solve(f.jacobian(x), r)
        if not np.all(np.isfinite(x)):
            raise NewtonFailure("Newton iterate diverged", tuple(x))
    else:
        if math.hypot(*f(x)) >= tol:
            raise NewtonFailure(f"no convergence in {max_iter} iterations", tuple(x))
    J = f.jacobian(x)
    if np.linalg.det(J) >= 0:
        raise NotASaddle(f"equilibrium at {tuple(x)} is not a saddle (det J >= 0)", tuple(x))
    w, v = np.linalg.eig(J)
    w = w.real
    order = np.argsort(w)
    ls, lu = float(w[order[0]]), float(w[order[1]])
    ds = v[:, order[0]].real
    du = v[:, order[1]].real
    ds /= np.linalg.norm(ds)
    du /= np.linalg.norm(du)
    return Saddle(tuple(float(c) for c in x), ls, lu, tuple(ds), tuple(du))


# --- separatrices and passage maps --------------------------------------------

_BRANCHES = {"unstable_plus": (1, +1.0), "unstable_minus": (1, -1.0),
             "stable_plus": (0, +1.0), "stable_minus": (0, -1.0)}


def branch_toward(saddle: Saddle, kind: str, target) -> str:
    """Branch name of the ``kind`` ('stable'/'unstable') separatrix heading toward ``target``."""
    d = saddle.dir_u if kind == "unstable" else saddle.dir_s
    dot = (target[0] - saddle.location[0]) * d[0] + (target[1] - saddle.location[1]) * d[1]
    return f"{kind}_{'plus' if dot >= 0 else 'minus'}"


@dataclass
class ShotResult:
    s: float
    s_coarse: float
    disagreement: float
    confident: bool
    time: float

    def __float__(self):
        return self.s


def shoot_separatrix(f: VectorField2, s: Saddle, branch: str, until: Section, *,
                     delta: float | None = None, t_max: float = 500.0,
                     richardson_tol: float = RICHARDSON_TOL, strict: bool = False,
                     **opts) -> ShotResult:
    """Crossing coordinate of a separatrix branch on ``until``.

    Unstable branches integrate forward, stable ones backward.  The seed is
    placed ``delta`` along the eigendirection; the shot is repeated from
    ``delta/2`` and the two must agree within ``richardson_tol``.
    """
    which, sign = _BRANCHES[branch]
    d = s.dir_u if which == 1 else s.dir_s
    t_end = t_max if which == 1 else -t_max
    if delta is None:
        scale = math.hypot(until.base[0] - s.location[0], until.base[1] - s.location[1])
        delta = SEED_DELTA * max(scale, 1e-3)

    def one(dl):
        x0 = (s.location[0] + sign * dl * d[0], s.location[1] + sign * dl * d[1])
        tr = integrate(f, x0, (0.0, t_end), [until], record=False, **opts)
        if not tr.hits:
            raise NoCrossing(f"{branch} separatrix did not reach the section", tr.final)
        return tr.hits[0].s, tr.hits[0].t

    coarse, _ = one(delta)
    fine, t_hit = one(0.5 * delta)
    gap = abs(fine - coarse)
    ok = gap <= richardson_tol
    if strict and not ok:
        raise FlowError(f"Richardson check failed: |{fine} - {coarse}| = {gap}")
    return ShotResult(fine, coarse, gap, ok, t_hit)


def transition_map(f: VectorField2, from_: Section, to: Section, s: float, *,
                   backward: bool = False, t_max: float = 500.0, **opts) -> float:
    """Coordinate of the first crossing of ``to`` starting at ``from_.point(s)``."""
    if abs(s) > from_.half_width:
        raise ValueError("s outside the source section")
    tr = integrate(f, from_.point(s), (0.0, -t_max if backward else t_max), [to],
                   record=False, **opts)
    if not tr.hits:
        raise NoCrossing("orbit did not reach the target section", tr.final, tr.times[-1])
    return tr.hits[0].s


def return_map(f: VectorField2, sec: Section, s: float, *, others: Sequence[Section] = (),
               t_max: float = 2000.0, **opts) -> float:
    """First return coordinate on ``sec``; ``others`` are sections that must be
    crossed once each on the way (a full circuit)."""
    events = [sec, *others]
    tr = integrate(f, sec.point(s), (0.0, t_max), events, terminal={0}, record=False, **opts)
    hit = tr.hit(0)
    if hit is None:
        raise NoCrossing("orbit did not return to the section", tr.final, tr.times[-1])
    seen = {h.index for h in tr.hits}
    if others and not seen.issuperset(range(1, len(events))):
        raise NoCrossing("returned without completing a full circuit", tr.final, hit.t)
    return hit.s


@dataclass(frozen=True)
class DulacEstimate:
    exponent: float
    coefficient: float
    fit_residual: float
    s_window: tuple

    def to_json(self) -> dict:
        return {"exponent": self.exponent, "coefficient": self.coefficient,
                "fit_residual": self.fit_residual, "s_window": list(self.s_window)}


def fit_power_law(s_values, d_values, window=None) -> DulacEstimate:
    s = np.abs(np.asarray(s_values, dtype=float))
    d = np.asarray(d_values, dtype=float)
    if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("passage values must be nonzero and of one sign")
    d = np.abs(d)
    A = np.column_stack([np.log(s), np.ones_like(s)])
    coef, *_ = np.linalg.lstsq(A, np.log(d), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(d)) ** 2)))
    window = window or (float(s.min()), float(s.max()))
    return DulacEstimate(float(coef[0]), float(math.exp(coef[1])), resid, window)


def estimate_dulac_exponent(f: VectorField2, s: Saddle | None, from_: Section, to: Section,
                            s_values: Sequence[float], *, backward: bool = False,
                            **opts) -> DulacEstimate:
    """Log-log fit of the passage ``D(s)`` between two sections flanking a saddle.

    ``s`` (the saddle) is only used as a sanity check that the sections sit
    on either side of it; pass ``None`` to skip.
    """
    s_values = [float(v) for v in s_values]
    if s is not None:
        b1, b2 = from_.base, to.base
        loc = s.location
        if math.dist(b1, loc) < 1e-12 or math.dist(b2, loc) < 1e-12:
            raise ValueError("section base coincides with the saddle")
    D = [transition_map(f, from_, to, v, backward=backward, **opts) for v in s_values]
    return fit_power_law(s_values, D, (min(map(abs, s_values)), max(map(abs, s_values))))
