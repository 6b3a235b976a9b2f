"""First-order displacement derivatives along the connections of a polycycle.

For a connection ``gamma`` with ``gamma(0) = x_i`` the derivative of the
split ``d_i`` with respect to ``mu_j`` is

    1/|X(x_i)| * integral  w(t) * X(gamma(t)) ^ dK/dmu_j(gamma(t)) dt,
    w(t) = exp(-integral_0^t div X(gamma)).

Weight and integral are carried as extra state components of the same
Runge-Kutta run that traces the orbit, so nothing is interpolated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .flow import FlowError, Trajectory, integrate_rhs
from .polyalg import Poly2, VectorField2, wedge

__all__ = [
    "PerturbationFamily",
    "CallableField",
    "Connection",
    "ConnectionOrbit",
    "MelnikovReport",
    "trace_connection",
    "melnikov_integrand",
    "melnikov_derivative",
    "melnikov_matrix",
    "bump_family",
]

TAIL_INTEGRAND = 1e-13
SADDLE_RADIUS = 1e-4
TIME_BUDGET = 400.0
CHUNK = 4.0


class CallableField:
    """Non-polynomial field with the parts of the VectorField2 protocol the flow code uses."""

    def __init__(self, fn: Callable, h: float = 1e-6):
        self.fn = fn
        self.h = h

    def __call__(self, x):
        return self.fn(x[0], x[1])

    @property
    def rhs(self):
        return self.fn

    def jacobian(self, x):
        h = self.h
        a = np.subtract(self.fn(x[0] + h, x[1]), self.fn(x[0] - h, x[1])) / (2 * h)
        b = np.subtract(self.fn(x[0], x[1] + h), self.fn(x[0], x[1] - h)) / (2 * h)
        return np.column_stack([a, b])

    def divergence(self, x):
        J = self.jacobian(x)
        return J[0, 0] + J[1, 1]


class PerturbationFamily:
    """``X_mu(x) = X(x) + sum_j mu_j * envelope_j(x) * direction_j(x)``.

    Envelopes are :class:`Poly2` or callables ``e(x1, x2)``; directions are
    constant vectors, :class:`VectorField2` instances or the string
    ``"perp"`` for ``X^perp`` of the base field.
    """

    def __init__(self, base: VectorField2, deformations: Sequence, name: str = "custom"):
        if not deformations:
            raise ValueError("a family needs at least one deformation")
        self.base = base
        self.name = name
        self.deformations = []
        for env, d in deformations:
            if isinstance(d, str):
                if d != "perp":
                    raise ValueError(f"unknown direction {d!r}")
                d = base.perp()
            elif not isinstance(d, VectorField2):
                d = (float(d[0]), float(d[1]))
            self.deformations.append((env, d))

    def __len__(self):
        return len(self.deformations)

    @property
    def polynomial(self) -> bool:
        return all(isinstance(e, Poly2) for e, _ in self.deformations)

    def deformation(self, j: int, x) -> tuple:
        """``dK/dmu_j`` at ``x`` (0-based ``j``)."""
        env, d = self.deformations[j]
        e = env(x[0], x[1])
        if isinstance(d, VectorField2):
            dx = d(x)
            return (e * dx[0], e * dx[1])
        return (e * d[0], e * d[1])

    def deformation_field(self, j: int) -> VectorField2:
        env, d = self.deformations[j]
        if not isinstance(env, Poly2):
            raise TypeError("deformation is not polynomial")
        if isinstance(d, VectorField2):
            return d.scale(env)
        return VectorField2(env * d[0], env * d[1])

    def _check_mu(self, mu):
        mu = [float(m) for m in mu]
        if len(mu) != len(self):
            raise ValueError(f"expected {len(self)} parameters, got {len(mu)}")
        return mu

    def field_at(self, mu):
        """``X_mu`` as a VectorField2, or a :class:`CallableField` for bump envelopes."""
        mu = self._check_mu(mu)
        if self.polynomial:
            out = self.base
            for j, m in enumerate(mu):
                if m != 0.0:
                    out = out + self.deformation_field(j).scale(m)
            return VectorField2(out.p, out.q)

        def fn(x1, x2):
            p, q = self.base.rhs(x1, x2)
            for j, m in enumerate(mu):
                if m != 0.0:
                    k = self.deformation(j, (x1, x2))
                    p += m * k[0]
                    q += m * k[1]
            return (p, q)

        return CallableField(fn)

    def __call__(self, mu, x):
        return self.field_at(mu)(x)

    def in_chart(self, chart, mu) -> VectorField2:
        """``X_mu`` in the coordinates of an :class:`~polycycle.builder.EdgeChart`.

        The base part uses the chart's exactly factored field; only the
        perturbation is transported numerically.
        """
        mu = self._check_mu(mu)
        if not self.polynomial:
            raise TypeError("chart transport needs polynomial envelopes")
        out = chart.field
        extra = None
        for j, m in enumerate(mu):
            if m != 0.0:
                k = self.deformation_field(j).scale(m)
                extra = k if extra is None else extra + k
        if extra is not None:
            out = out + chart.transport(extra)
        return out

    def to_json(self) -> dict:
        if not self.polynomial:
            raise TypeError("only polynomial families serialize")
        defs = []
        for env, d in self.deformations:
            dj = d.to_json() if isinstance(d, VectorField2) else list(d)
            defs.append({"envelope": env.to_json(), "direction": dj})
        return {"name": self.name, "base": self.base.to_json(), "deformations": defs}

    @classmethod
    def from_json(cls, data) -> "PerturbationFamily":
        defs = []
        for item in data["deformations"]:
            d = item["direction"]
            d = VectorField2.from_json(d) if isinstance(d, dict) else tuple(d)
            defs.append((Poly2.from_json(item["envelope"]), d))
        return cls(VectorField2.from_json(data["base"]), defs, data.get("name", "custom"))


# --- connections -------------------------------------------------------------

@dataclass
class Connection:
    """A heteroclinic orbit to be traced from its section base.

    ``field`` may be given in any affine chart; ``to_x`` and ``vec_to_x``
    map chart points and vectors back to the original plane.
    """

    field: VectorField2
    start: tuple
    sink: tuple
    source: tuple
    rate_fwd: float
    rate_bwd: float
    speed0: float
    to_x: Callable = lambda y: (y[0], y[1])
    vec_to_x: Callable = lambda v: (v[0], v[1])
    label: str = ""

    @classmethod
    def of(cls, built, i: int) -> "Connection":
        """Edge ``i`` of a built polycycle, traced in its exact leg chart."""
        from .builder import saddle_data

        ch = built.leg_chart(i)
        k = (i - 1) % built.n
        start = list(ch.to_chart(built.section_bases[k]))
        start[0] = 0.0
        up = built.upstream_vertex(i)
        down = built.downstream_vertex(i)
        lam_down = saddle_data(built, down)[1]
        lam_up = abs(saddle_data(built, up)[0])
        sink = (0.0, 0.0)
        source = (0.0, ch.to_chart(built.vertex(up))[1])
        speed = math.hypot(*built.field(built.section_bases[k]))
        return cls(ch.field, tuple(start), sink, source, lam_down, lam_up, speed,
                   ch.to_x, ch.vector_to_x, f"edge {i}")

    @classmethod
    def from_saddles(cls, f: VectorField2, source, sink, section) -> "Connection":
        """Generic connection in the original coordinates (``source``/``sink`` are Saddles)."""
        speed = math.hypot(*f(section.base))
        return cls(f, section.base, sink.location, source.location,
                   sink.lambda_u, abs(source.lambda_s), speed, label="custom")


@dataclass
class ConnectionOrbit:
    """Both halves of a traced connection plus the accumulated integrals."""

    connection: Connection
    forward: Trajectory
    backward: Trajectory
    integrals: np.ndarray
    tails: np.ndarray
    truncation: tuple
    family: PerturbationFamily = field(repr=False, default=None)

    def state_at(self, t: float) -> tuple:
        """Orbit point (chart coordinates) and weight at time ``t``."""
        tr = self.forward if t >= 0 else self.backward
        lo, hi = (tr.times[0], tr.times[-1]) if t >= 0 else (tr.times[-1], tr.times[0])
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise ValueError(f"t={t} outside the traced range [{self.truncation[0]}, {self.truncation[1]}]")
        times = tr.times if t >= 0 else -tr.times
        k = int(np.searchsorted(times, abs(t), side="right")) - 1
        k = max(0, min(k, len(times) - 1))
        y0 = list(tr.states[k]) + [tr.aux[k, 0]]
        t0 = float(tr.times[k])
        if abs(t - t0) <= 1e-12 * max(1.0, abs(t)):
            return tuple(y0[:2]), y0[2]
        rhs = _weighted_rhs(self.connection, self.family, ())
        out = integrate_rhs(rhs, y0, (t0, t), record=False)
        return tuple(out.states[-1]), float(out.aux[-1, 0])


def _weighted_rhs(conn: Connection, fam: PerturbationFamily | None, params: Sequence[int]):
    g = conn.field.rhs
    div = conn.field.div.fn
    to_x, vec_to_x = conn.to_x, conn.vec_to_x
    defs = [fam.deformations[j] for j in params] if params else []

    def rhs(y):
        y1, y2, w = y[0], y[1], y[2]
        v = g(y1, y2)
        out = [v[0], v[1], -div(y1, y2) * w]
        if defs:
            x = to_x((y1, y2))
            X = vec_to_x(v)
            for env, d in defs:
                e = env(x[0], x[1])
                if isinstance(d, VectorField2):
                    dx = d(x)
                    k = (e * dx[0], e * dx[1])
                else:
                    k = (e * d[0], e * d[1])
                out.append(w * (X[0] * k[1] - X[1] * k[0]))
        return out

    return rhs


def _trace_half(conn, rhs, y0, direction, target, rate, n_int, time_budget, tol):
    """Integrate in chunks until near ``target`` with a negligible integrand."""
    t = 0.0
    y = list(y0)
    times, states, aux, stats = [], [], [], [0, 0]
    while True:
        if abs(t) >= time_budget:
            raise FlowError(f"tail bound not reached within time budget {time_budget}",
                            tuple(y[:2]), t)
        tr = integrate_rhs(rhs, y, (t, t + direction * CHUNK))
        times.append(tr.times if not times else tr.times[1:])
        states.append(tr.states if not states else tr.states[1:])
        aux.append(tr.aux if not aux else tr.aux[1:])
        stats[0] += tr.step_stats[0]
        stats[1] += tr.step_stats[1]
        t = float(tr.times[-1])
        y = list(tr.states[-1]) + list(tr.aux[-1])
        dist = math.dist(y[:2], target)
        integrand = np.abs(np.array(rhs(y)[3:])) if n_int else np.zeros(0)
        if dist < SADDLE_RADIUS and (n_int == 0 or integrand.max() < tol):
            break
    traj = Trajectory(np.concatenate(times), np.concatenate(states), tuple(stats), [],
                      np.concatenate(aux))
    # integrand decays like exp(-rate*|t|) once the orbit hugs the saddle
    tails = integrand / rate if n_int else np.zeros(0)
    return traj, t, tails


def trace_connection(fam: PerturbationFamily | None, conn: Connection, params=None, *,
                     time_budget: float = TIME_BUDGET, tol: float = TAIL_INTEGRAND) -> ConnectionOrbit:
    """Trace a connection both ways, accumulating Melnikov integrals for ``params``."""
    if params is None:
        params = range(len(fam)) if fam is not None else ()
    params = list(params)
    rhs = _weighted_rhs(conn, fam, params)
    y0 = [conn.start[0], conn.start[1], 1.0] + [0.0] * len(params)
    fwd, t_plus, tail_f = _trace_half(conn, rhs, y0, +1.0, conn.sink, conn.rate_fwd,
                                      len(params), time_budget, tol)
    bwd, t_minus, tail_b = _trace_half(conn, rhs, y0, -1.0, conn.source, conn.rate_bwd,
                                       len(params), time_budget, tol)
    if params:
        total = fwd.aux[-1, 1:] - bwd.aux[-1, 1:]
    else:
        total = np.zeros(0)
    return ConnectionOrbit(conn, fwd, bwd, total / conn.speed0,
                           (tail_f + tail_b) / conn.speed0, (t_minus, t_plus), fam)


# --- public operations ---------------------------------------------------------

def melnikov_integrand(fam: PerturbationFamily, conn: ConnectionOrbit, j: int, t: float) -> float:
    """Weighted wedge ``w(t) X(gamma(t)) ^ dK/dmu_j(gamma(t))`` (0-based ``j``)."""
    y, w = conn.state_at(t)
    c = conn.connection
    x = c.to_x(y)
    X = c.vec_to_x(c.field(y))
    return w * wedge(X, fam.deformation(j, x))


def melnikov_derivative(fam: PerturbationFamily, connection, j: int, **opts) -> tuple:
    """``(value, tail_bound)`` of ``d d_i / d mu_j`` at 0 for one connection.

    ``connection`` is a :class:`Connection` or a traced :class:`ConnectionOrbit`.
    """
    if isinstance(connection, ConnectionOrbit):
        orbit = connection
        if orbit.family is not fam or j >= len(orbit.integrals):
            orbit = trace_connection(fam, orbit.connection, [j], **opts)
            return float(orbit.integrals[0]), float(orbit.tails[0])
        return float(orbit.integrals[j]), float(orbit.tails[j])
    orbit = trace_connection(fam, connection, [j], **opts)
    return float(orbit.integrals[0]), float(orbit.tails[0])


@dataclass
class MelnikovReport:
    matrix: np.ndarray
    truncation: list
    tail_bound: np.ndarray
    labels: list = field(default_factory=list)

    @property
    def diagonal(self) -> np.ndarray:
        k = min(self.matrix.shape)
        return np.array([self.matrix[i, i] for i in range(k)])

    @property
    def diagonal_scale(self) -> float:
        return float(np.abs(self.diagonal).max())

    @property
    def offdiag_ratio(self) -> float:
        """Largest off-diagonal magnitude relative to the diagonal scale."""
        m = self.matrix.copy()
        k = min(m.shape)
        m[np.arange(k), np.arange(k)] = 0.0
        return float(np.abs(m).max() / self.diagonal_scale)

    def to_json(self) -> dict:
        return {"matrix": self.matrix.tolist(), "truncation": [list(t) for t in self.truncation],
                "tail_bound": self.tail_bound.tolist(), "labels": self.labels,
                "diagonal_positive": bool(np.all(self.diagonal > 0)),
                "offdiag_ratio": self.offdiag_ratio}


def melnikov_matrix(fam: PerturbationFamily, cycle, workers: int = 1, **opts) -> MelnikovReport:
    """All ``d d_i / d mu_j`` at 0 for the ``n`` connections of a built polycycle.

    Rows are independent; ``workers > 1`` traces them on a thread pool.
    """
    trace = lambda i: trace_connection(fam, Connection.of(cycle, i), **opts)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            orbits = list(pool.map(trace, range(1, cycle.n + 1)))
    else:
        orbits = [trace(i) for i in range(1, cycle.n + 1)]
    rows, tails, trunc, labels = [], [], [], []
    for orbit in orbits:
        rows.append(orbit.integrals)
        tails.append(orbit.tails)
        trunc.append(orbit.truncation)
        labels.append(orbit.connection.label)
    return MelnikovReport(np.array(rows), trunc, np.array(tails), labels)


def bump_family(built, delta1: float = 0.05, delta2: float = 0.15) -> PerturbationFamily:
    """Bumps centred at the section bases with ``X^perp`` directions."""
    from .approx import BumpSpec

    defs = [(BumpSpec(delta1, delta2, c), "perp") for c in built.section_bases]
    return PerturbationFamily(built.field, defs, name="bump")
