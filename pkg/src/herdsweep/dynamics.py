"""Time integration of agent-driven flows, boundary-field flows and sweeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import LinearRing

from .errors import AdmissibilityError, DomainError, SingularityError
from .fields import BoundaryField, boundary_velocity, kernel
from .geometry.sets import SetState, distance_to_boundary, resample_closed, spacing_ratio
from .geometry.tube import BallSlice, MovingTube, project_ball, project_onto
from .scare import ScareFunction, phi_eval

R_MIN = 1e-6
VARIATION = 0.1
CONTACT_TOL = 1e-9
RESAMPLE_RATIO = 3.0
EXCURSION_TOL = 1e-6
STAGNATION_SPEED = 1e-9


# controls ----------------------------------------------------------------------


@dataclass(frozen=True)
class StaticControl:
    """The agent parked at one point for all time."""

    scare: ScareFunction
    agent: np.ndarray

    def segments(self, t0: float, t1: float):
        return [(t0, t1, np.asarray(self.agent, float))]

    def position(self, t: float) -> np.ndarray:
        return np.asarray(self.agent, float)


@dataclass(frozen=True)
class PiecewiseControl:
    """Agent at ``positions[k]`` on ``(breaks[k], breaks[k+1]]``."""

    scare: ScareFunction
    breaks: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, float)
        if np.any(np.diff(b) <= 0):
            raise DomainError("control breakpoints must be strictly increasing")
        if len(self.positions) != len(b) - 1:
            raise DomainError("need one position per control interval")

    def segments(self, t0: float, t1: float):
        b = self.breaks
        out = []
        k0 = max(int(np.searchsorted(b, t0, side="right")) - 1, 0)
        for k in range(k0, len(b) - 1):
            a, c = max(b[k], t0), min(b[k + 1], t1)
            if c > a:
                out.append((a, c, self.positions[k]))
            if b[k + 1] >= t1:
                break
        return out

    def position(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.breaks, t, side="left")) - 1
        return self.positions[min(max(k, 0), len(self.positions) - 1)]


# trajectories ---------------------------------------------------------------------


@dataclass
class Trajectory:
    """Positions on an increasing time grid; ``points`` is (K, 2) or (K, m, 2)."""

    times: np.ndarray
    points: np.ndarray
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.points = np.asarray(self.points, float)
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        if len(self.points) != len(self.times):
            raise DomainError("one position per time is required")

    def at(self, t) -> np.ndarray:
        """Linear interpolation in time."""
        t = np.atleast_1d(np.asarray(t, float))
        flat = self.points.reshape(len(self.times), -1)
        out = np.stack([np.interp(t, self.times, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
        out = out.reshape((len(t),) + self.points.shape[1:])
        return out

    def to_csv(self, path) -> None:
        _write_track_csv(path, self.times, self.points)


@dataclass
class SweepingSolution:
    """Catching-up iterates; the path is constant on each step (x_k on [t_k, t_{k+1}))."""

    times: np.ndarray
    points: np.ndarray
    contact: np.ndarray

    def at(self, t, kind: str = "step") -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, float))
        if kind == "linear":
            return Trajectory(self.times, self.points).at(t)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1)
        return self.points[k]

    def to_csv(self, path) -> None:
        _write_track_csv(path, self.times, self.points, self.contact)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_track_csv(path, times, points, contact=None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        ensemble = points.ndim == 3
        head = ["t"] + (["sample"] if ensemble else []) + ["x", "y"] + (["contact"] if contact is not None else [])
        w.writerow(head)
        for k, t in enumerate(times):
            rows = points[k] if ensemble else points[k][None, :]
            for i, p in enumerate(rows):
                row = [_fmt(t)] + ([i] if ensemble else []) + [_fmt(p[0]), _fmt(p[1])]
                if contact is not None:
                    c = contact[k] if np.ndim(contact[k]) == 0 else contact[k][i]
                    row.append(int(bool(c)))
                w.writerow(row)


# the one-step integrator ---------------------------------------------------------


def _static_field(scare: ScareFunction, agent: np.ndarray, r_min: float):
    xi = np.asarray(agent, float)

    def vel(x):
        d = x - xi
        r = np.sqrt(np.sum(d * d, axis=1))
        if np.any(r < r_min):
            raise SingularityError("trajectory entered the guard disk around the agent")
        return (phi_eval(scare, r) / r)[:, None] * d

    return vel


def advance_autonomous(X: np.ndarray, vel, duration: float, h_max: float, record: bool = False,
                       dt0=None):
    """Integrate x' = vel(x) for ``duration`` with per-point step control.

    Classical fourth-order steps; a step is halved until the relative change
    of velocity across it is below 10%, and doubled again after acceptance.
    ``dt0`` optionally seeds the first step per point.  Returns
    (X_end, rejections, steps) where ``steps`` lists (time, point) pairs
    when ``record`` is set (single-point use).
    """
    X = np.array(X, dtype=float)
    m = len(X)
    t = np.zeros(m)
    dt = np.full(m, min(h_max, duration))
    if dt0 is not None:
        dt = np.minimum(dt, np.maximum(dt0, 1e-300))
    k1 = vel(X)
    active = np.arange(m)
    rejections = 0
    steps = []
    tiny = 1e-14 * max(duration, 1e-300)
    floor = 1e-22 * max(duration, 1.0)
    while active.size:
        x, h, a = X[active], dt[active][:, None], k1[active]
        b = vel(x + 0.5 * h * a)
        c = vel(x + 0.5 * h * b)
        d = vel(x + h * c)
        xn = x + h / 6.0 * (a + 2 * b + 2 * c + d)
        vn = vel(xn)
        dv = vn - a
        var2 = np.einsum("ij,ij->i", dv, dv)
        va2 = np.einsum("ij,ij->i", a, a)
        ok = (var2 < VARIATION**2 * va2) | (h[:, 0] <= floor)
        good, bad = active[ok], active[~ok]
        X[good], k1[good] = xn[ok], vn[ok]
        t[good] += dt[good]
        rem = duration - t[good]
        done = rem <= tiny
        t[good[done]] = duration
        dt[good] = np.minimum(np.minimum(2 * dt[good], h_max), np.maximum(rem, 0.0))
        dt[bad] *= 0.5
        rejections += bad.size
        if record and ok.any():
            steps.append((float(t[0]), X[0].copy()))
        active = active[t[active] < duration]
    return X, rejections, steps


def radial_flow_map(scare: ScareFunction, X: np.ndarray, xi: np.ndarray, tau: float) -> np.ndarray:
    """Exact flow of a parked power-law agent over time ``tau``.

    Points move radially with r^(p+1) growing at rate (p+1) c.  The
    displacement is computed as d ((1 + k)^(1/(p+1)) - 1) via log1p/expm1 so
    tiny displacements (far agents) keep full precision.
    """
    if scare.kind != "power-law":
        raise DomainError("the closed-form flow exists only for power-law scare functions")
    d = X - xi
    r0 = np.sqrt(np.einsum("ij,ij->i", d, d))
    q = scare.p + 1.0
    k = q * scare.c * tau / r0**q
    return X + d * np.expm1(np.log1p(k) / q)[:, None]


def _advance_static(X, scare: ScareFunction, xi: np.ndarray, duration: float, h_max: float, r_min: float,
                    exact: bool = False):
    """Advance under a parked agent; points whose displacement is below roundoff stay put."""
    d = X - xi
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    if np.any(r < r_min):
        raise SingularityError("point inside the guard disk around the agent")
    if exact:
        return radial_flow_map(scare, X, xi, duration), 0
    speed = phi_eval(scare, r)
    move = speed * duration > 1e-16 * (1.0 + np.abs(X).max(axis=1))
    if not move.any():
        return X, 0
    # a step of 2% of the distance to the agent changes the velocity by a few percent
    dt0 = 0.02 * r[move] / speed[move]
    Y, rej, _ = advance_autonomous(X[move], _static_field(scare, xi, r_min), duration, h_max, dt0=dt0)
    X = X.copy()
    X[move] = Y
    return X, rej


def integrate_agent(control, x0, T: float, h_max: float = 1e-2, r_min: float = R_MIN,
                    output_times=()) -> Trajectory:
    """Trajectory of x' = v(x, xi(t)) with control switches as breakpoints.

    Every accepted step is recorded; ``output_times`` are added as extra
    breakpoints so the trajectory hits them exactly.
    """
    x = np.asarray(x0, dtype=float).reshape(1, 2)
    times, pts = [0.0], [x[0].copy()]
    rejections = 0
    for a, b, xi, _ in _split_segments(control.segments(0.0, T), np.asarray(output_times, float)):
        vel = _static_field(control.scare, xi, r_min)
        try:
            x, rej, steps = advance_autonomous(x, vel, b - a, h_max, record=True)
        except SingularityError as exc:
            raise SingularityError(str(exc), time=a) from exc
        rejections += rej
        for s, p in steps:
            if a + s > times[-1]:
                times.append(a + s)
                pts.append(p)
        times[-1] = b
    flags = {"rejections": rejections}
    return Trajectory(np.array(times), np.array(pts), flags)


# set evolution ---------------------------------------------------------------------


@dataclass
class SetEvolution:
    """States of a flowed set at output times, plus any tracked extra points."""

    times: np.ndarray
    states: list
    extra: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    def volumes(self) -> np.ndarray:
        from .geometry.sets import set_volume

        return np.array([set_volume(s) for s in self.states])

    @property
    def final(self) -> SetState:
        return self.states[-1]

    def sample_tracks(self) -> np.ndarray:
        """Interior samples stacked over output times, shape (K, m, 2)."""
        return np.stack([s.samples for s in self.states])


def _agent_clearance(xi: np.ndarray, boundary: np.ndarray) -> float:
    from matplotlib.path import Path as MplPath

    d = float(distance_to_boundary(xi[None, :], boundary)[0])
    if MplPath(boundary).contains_point(xi):
        return -d
    return d


def evolve_set(omega0: SetState, control, T: float, h_max: float = 0.05, output_times=None,
               extra_points=None, r_min: float = R_MIN, resample: bool = True,
               on_violation: str = "raise", method: str = "auto") -> SetEvolution:
    """Flow every boundary vertex and interior sample of ``omega0`` under the control.

    The agent must stay at distance above ``r_min`` from the evolving set;
    a violation raises AdmissibilityError, or with ``on_violation="stop"``
    ends the run early and records the time in ``flags``.  ``method`` is
    "rk4", "exact" (closed-form radial flow, power laws only) or "auto",
    which picks "exact" when available.
    """
    if method not in ("auto", "rk4", "exact"):
        raise DomainError(f"unknown integration method {method!r}")
    exact = method == "exact" or (method == "auto" and control.scare.kind == "power-law")
    if exact and control.scare.kind != "power-law":
        raise DomainError("the closed-form flow exists only for power-law scare functions")
    if output_times is None:
        output_times = [0.0, T]
    out_t = np.unique(np.clip(np.asarray(output_times, float), 0.0, T))
    nb, ns = len(omega0.boundary), len(omega0.samples)
    extra = np.zeros((0, 2)) if extra_points is None else np.asarray(extra_points, float)
    X = np.vstack([omega0.boundary, omega0.samples, extra])

    flags = {"resamples": 0, "rejections": 0, "min_clearance": np.inf, "invalid_polygon_times": [],
             "violation_time": None}
    rec_t, rec_states, rec_extra = [], [], []

    def record(t):
        b = X[:nb]
        if not LinearRing(b).is_simple:
            flags["invalid_polygon_times"].append(float(t))
        rec_t.append(float(t))
        rec_states.append(SetState(b.copy(), X[nb : nb + ns].copy()))
        rec_extra.append(X[nb + ns :].copy())

    segs = _split_segments(control.segments(0.0, T), out_t)
    if out_t[0] == 0.0:
        record(0.0)
    for a, b, xi, emit in segs:
        xi = np.asarray(xi, float)
        clearance = _agent_clearance(xi, X[:nb])
        flags["min_clearance"] = min(flags["min_clearance"], clearance)
        if clearance <= r_min:
            if on_violation == "stop":
                flags["violation_time"] = float(a)
                break
            raise AdmissibilityError(f"agent within {r_min} of the set at t={a:.6g}", time=a)
        try:
            X, rej = _advance_static(X, control.scare, xi, b - a, h_max, r_min, exact)
        except SingularityError as exc:
            if on_violation == "stop":
                flags["violation_time"] = float(a)
                break
            raise AdmissibilityError(f"point entered the agent guard disk during ({a:.6g}, {b:.6g}]", time=a) from exc
        flags["rejections"] += rej
        if resample and spacing_ratio(X[:nb]) > RESAMPLE_RATIO:
            X[:nb] = resample_closed(X[:nb], nb)
            flags["resamples"] += 1
        if emit:
            record(b)
    extra_arr = np.stack(rec_extra) if len(extra) else None
    return SetEvolution(np.array(rec_t), rec_states, extra_arr, flags)


def _split_segments(segs, out_t):
    """Insert output times as breakpoints; mark segments ending at an output time.

    Breakpoints within 1e-12 (relative) of an output time count as that
    output time, so each output time is emitted exactly once.
    """
    res = []
    outs = list(out_t)
    pending = 0

    def near(x, t):
        return abs(x - t) <= 1e-12 * max(1.0, abs(t))

    for a, b, xi in segs:
        cuts = [t for t in outs if a < t < b and not near(a, t) and not near(b, t)]
        edges = [a] + cuts + [b]
        for lo, hi in zip(edges[:-1], edges[1:]):
            while pending < len(outs) and outs[pending] < hi and not near(hi, outs[pending]):
                pending += 1
            emit = pending < len(outs) and near(hi, outs[pending])
            if emit:
                pending += 1
            res.append((lo, hi, xi, emit))
    return res


# boundary-field flow ---------------------------------------------------------------


def _distance_estimate(tube: MovingTube, t: float, X: np.ndarray) -> np.ndarray:
    sl = tube.at(t)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.linalg.norm(sl.grad(X), axis=-1)
    # the gradient is undefined at medial points (a ball centre); psi is then a distance already
    g = np.where(np.isfinite(g), g, 1.0)
    return np.abs(sl.psi(X)) / np.maximum(g, 1e-300)


def flow_boundary_field(f: BoundaryField, X0, T: float, h_max: float = 0.05, output_times=None,
                        t0: float = 0.0) -> Trajectory:
    """Ensemble flow of x' = w(t, x) with a common adaptive step.

    Steps obey the 10% velocity-variation rule and are additionally capped
    at a quarter of the distance to Sigma(t) divided by the speed.
    Excursions outside V(t) beyond 1e-6 are counted in ``flags``.
    """
    X = np.array(np.atleast_2d(X0), dtype=float)
    if output_times is None:
        output_times = [t0, T]
    out_t = np.unique(np.asarray(output_times, float))
    rec = [X.copy()] if out_t[0] <= t0 else []
    t = t0
    k1 = boundary_velocity(f, t, X)
    dt = h_max
    flags = {"rejections": 0, "steps": 0, "max_excursion": -np.inf}
    for target in out_t[out_t > t0]:
        while t < target - 1e-14 * max(1.0, target):
            speed = np.linalg.norm(k1, axis=1)
            dist = _distance_estimate(f.tube, t, X)
            cap = np.min(0.25 * dist / np.maximum(speed, 1e-300))
            h = min(dt, h_max, target - t, max(cap, 1e-12))
            b = boundary_velocity(f, t + h / 2, X + h / 2 * k1)
            c = boundary_velocity(f, t + h / 2, X + h / 2 * b)
            d = boundary_velocity(f, t + h, X + h * c)
            xn = X + h / 6 * (k1 + 2 * b + 2 * c + d)
            vn = boundary_velocity(f, t + h, xn)
            # relative change, with a floor so stagnation points (zero speed) do not stall the step
            sp = np.linalg.norm(k1, axis=1)
            ref = np.maximum(sp, max(1e-6 * float(sp.max()), STAGNATION_SPEED))
            var = np.max(np.linalg.norm(vn - k1, axis=1) / ref)
            if var >= VARIATION and h > 1e-12:
                dt = h / 2
                flags["rejections"] += 1
                continue
            X, k1, t = xn, vn, t + h
            flags["steps"] += 1
            dt = min(2 * h, h_max)
            exc = float(np.max(f.tube.psi(t, X)))
            flags["max_excursion"] = max(flags["max_excursion"], exc)
        t = float(target)
        rec.append(X.copy())
    flags["excursion_flagged"] = flags["max_excursion"] > EXCURSION_TOL
    return Trajectory(out_t[out_t >= t0], np.stack(rec), flags)


def integrate_boundary_field(f: BoundaryField, x0, T: float, h_max: float = 0.05, output_times=None) -> Trajectory:
    tr = flow_boundary_field(f, np.asarray(x0, float)[None, :], T, h_max, output_times)
    return Trajectory(tr.times, tr.points[:, 0, :], tr.flags)


# sweeping -------------------------------------------------------------------------


def catching_up(tube: MovingTube, x0, T: float, n_steps: int) -> SweepingSolution:
    """Moreau catching-up iterates x_{k+1} = proj_{V(t_{k+1})}(x_k) on a uniform grid.

    ``x0`` may be one point or an (m, d) array of independent points.
    """
    x = np.array(x0, dtype=float)
    if np.any(np.asarray(tube.psi(0.0, x)) > CONTACT_TOL):
        raise DomainError("initial point outside V(0)")
    times = np.linspace(0.0, T, n_steps + 1)
    pts = [x.copy()]
    contact = [np.zeros(x.shape[:-1], dtype=bool)]
    for t in times[1:]:
        sl = tube.at(t)
        if isinstance(sl, BallSlice):
            y = project_ball(sl.center, sl.radius, x)
        else:
            y = project_onto(tube, t, x)
        moved = np.linalg.norm(y - x, axis=-1) > 0
        x = y
        pts.append(x.copy())
        contact.append(moved | (np.abs(np.asarray(sl.psi(x))) <= CONTACT_TOL))
    return SweepingSolution(times, np.stack(pts), np.stack(contact))
