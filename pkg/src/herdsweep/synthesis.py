"""Control synthesis: tubes, field scaling, Dirac-mass discretization and schedules.

The confinement control keeps the agent touring the boundary of a shrinking
tube.  Over each node interval the boundary measure (scaled by delta0) is
replaced by N equal point masses; the agent dwells at each mass for a time
proportional to its weight and parks at a far point for the remaining share
of the slot, so that the time-averaged field is the scaled boundary field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PiecewiseControl, R_MIN, SetEvolution, catching_up, evolve_set, flow_boundary_field
from .errors import (
    AdmissibilityError,
    DomainError,
    PreconditionError,
    SynthesisError,
    TheoryGateError,
)
from .fields import BoundaryField, field_speed_cap_check, kernel, max_speed
from .geometry.curves import SurfaceQuadrature
from .geometry.sets import (
    SetState,
    distance_to_boundary,
    distance_to_set,
    hausdorff_distance,
    hausdorff_points,
)
from .geometry.tube import (
    BallFamily,
    LevelSetFamily,
    LevelSetGrid,
    MovingTube,
    quadrature_of_boundary,
    signed_distance_grid,
)
from .scare import ScareFunction, classify

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FAR_FACTOR = 1e6
# V(T) sits between B(omega1, eps/2) and B(omega1, 3 eps/4); this picks the offset
FINAL_FRACTION = 0.6
# V(0) offset beyond eps, absorbing smoothing error of level-set tubes
INITIAL_FRACTION = 1.1
DEFAULT_LADDER = ((20, 32), (40, 64), (80, 128))


# schedules ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DiracMeasure:
    points: np.ndarray
    weights: np.ndarray
    far_point: np.ndarray | None
    far_weight: float

    def velocity(self, scare: ScareFunction, x) -> np.ndarray:
        x = np.asarray(x, float)
        single = x.ndim == 1
        v = kernel(scare, np.atleast_2d(x), self.points, self.weights)
        if self.far_point is not None and self.far_weight > 0:
            v = v + self.far_weight * kernel(scare, np.atleast_2d(x), self.far_point[None, :])
        return v[0] if single else v


def discretize_measure(q: SurfaceQuadrature, delta0: float, N: int, far_point=None,
                       offset: float = 0.0) -> DiracMeasure:
    """N equal masses at midpoints of an equal-arclength partition of the curve.

    The partition starts at arclength ``offset * L / N``.  Each mass weighs
    ``delta0 * total_measure / N``; the far point takes the rest of unit mass.
    """
    if N < 1:
        raise DomainError("need at least one mass")
    if q.curve is None:
        raise DomainError("quadrature carries no curve")
    L = q.curve.length
    s = (np.arange(N) + 0.5 + offset) * L / N
    pts = q.curve.point(s)
    w = np.full(N, delta0 * q.total_measure / N)
    far = None if far_point is None else np.asarray(far_point, float)
    far_w = max(1.0 - delta0 * q.total_measure, 0.0) if far is not None else 0.0
    return DiracMeasure(pts, w, far, far_w)


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant agent positions on n nodes of N dwell slots each.

    Slot j of node i is ``(t_i + j h, t_i + (j+1) h]`` with ``h = T/(nN)``.
    Within the slot the agent sits at ``agents[i, j]`` for ``active[i]``
    and at the far point for the rest.
    """

    T: float
    n: int
    N: int
    far_point: np.ndarray
    agents: np.ndarray
    active: np.ndarray
    delta0: np.ndarray

    @property
    def h(self) -> float:
        return self.T / (self.n * self.N)

    @property
    def node_times(self) -> np.ndarray:
        return np.arange(self.n) * self.T / self.n

    def control(self, scare: ScareFunction) -> PiecewiseControl:
        h = self.h
        breaks, pos = [0.0], []
        far = np.asarray(self.far_point, float)
        for i in range(self.n):
            a = float(min(self.active[i], h))
            for j in range(self.N):
                k = i * self.N + j
                start, end = k * h, (k + 1) * h
                if k == self.n * self.N - 1:
                    end = self.T
                if a > 0:
                    mid = start + a if a < h else end
                    breaks.append(mid)
                    pos.append(self.agents[i, j])
                    if a < h:
                        breaks.append(end)
                        pos.append(far)
                else:
                    breaks.append(end)
                    pos.append(far)
        breaks = np.array(breaks)
        pos = np.array(pos)
        # merge consecutive far-point intervals
        keep = np.ones(len(pos), dtype=bool)
        same = np.all(pos[1:] == pos[:-1], axis=1)
        keep[:-1] &= ~same
        return PiecewiseControl(scare, np.concatenate([[0.0], breaks[1:][keep]]), pos[keep])

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "n": self.n,
            "N": self.N,
            "h": self.h,
            "far_point": list(map(float, self.far_point)),
            "nodes": [
                {"t": float(t), "agents": self.agents[i].tolist(), "active": float(self.active[i]),
                 "delta0": float(self.delta0[i])}
                for i, t in enumerate(self.node_times)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "ControlSchedule":
        try:
            T, n, N = float(obj["T"]), int(obj["n"]), int(obj["N"])
            nodes = obj["nodes"]
            agents = np.array([nd["agents"] for nd in nodes], dtype=float)
            h = T / (n * N)
            # without an explicit dwell the whole slot goes to the mass
            active = np.array([nd.get("active", h) for nd in nodes], dtype=float)
            delta0 = np.array([nd.get("delta0", math.nan) for nd in nodes], dtype=float)
            far = np.asarray(obj["far_point"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed schedule: {exc}") from exc
        if agents.shape != (n, N, 2):
            raise DomainError(f"schedule agents have shape {agents.shape}, expected {(n, N, 2)}")
        return cls(T, n, N, far, agents, active, delta0)


@dataclass
class SynthesisParams:
    n: int
    N: int
    delta0: float | np.ndarray
    eps: float
    tube: MovingTube
    far_point: np.ndarray | None = None
    stagger: bool = True
    n_panels: int = 256

    def node_deltas(self) -> np.ndarray:
        d = np.asarray(self.delta0, dtype=float)
        return np.full(self.n, float(d)) if d.ndim == 0 else d


def far_point_for(*sets: SetState) -> np.ndarray:
    """A point 1e6 scene diameters from the origin along the x axis."""
    pts = np.vstack([s.points() for s in sets])
    diam = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) * 2
    return np.array([FAR_FACTOR * max(diam, 1.0), 0.0])


def assemble_schedule(params: SynthesisParams) -> ControlSchedule:
    """Place N masses on Sigma(t_i) per node and convert weights into dwell times."""
    tube, n, N = params.tube, params.n, params.N
    T = tube.T
    h = T / (n * N)
    far = params.far_point if params.far_point is not None else np.array([FAR_FACTOR, 0.0])
    deltas = params.node_deltas()
    agents = np.zeros((n, N, 2))
    active = np.zeros(n)
    for i in range(n):
        t = i * T / n
        q = quadrature_of_boundary(tube, t, params.n_panels)
        if deltas[i] * q.total_measure > 1 + 1e-12:
            raise SynthesisError(f"delta0 * perimeter = {deltas[i] * q.total_measure:.4g} > 1 at node {i}")
        offset = (i * GOLDEN) % 1.0 if params.stagger else 0.0
        mu = discretize_measure(q, deltas[i], N, far, offset)
        agents[i] = mu.points
        # a mass of weight w holds the agent for w * N * h of the node's N * h
        active[i] = min(deltas[i] * q.total_measure * h, h)
    return ControlSchedule(T, n, N, far, agents, active, deltas)


# tubes ------------------------------------------------------------------------------


def region_samples(omega: SetState, r: float) -> np.ndarray:
    """Points of B(omega, r): the set's own points plus the boundary pushed out by r."""
    b = omega.boundary
    tang = np.roll(b, -1, axis=0) - np.roll(b, 1, axis=0)
    nrm = np.column_stack([tang[:, 1], -tang[:, 0]])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    ring = b + r * (1 - 1e-9) * nrm
    return np.vstack([omega.points(), ring])


def check_margin(omega0: SetState, omega1: SetState, eps: float) -> float:
    """Clearance of omega1 inside omega0; raises unless it exceeds eps."""
    inside = omega0.contains(omega1.points())
    if not inside.all():
        raise PreconditionError("target set is not inside the initial set")
    margin = float(distance_to_boundary(omega1.boundary, omega0.boundary).min())
    if margin <= eps:
        raise PreconditionError(f"target set clearance {margin:.4g} does not exceed eps={eps}")
    return margin


def _disk_params(omega: SetState):
    p = omega.primitive
    if p and p.get("kind") == "disk":
        return np.asarray(p["center"], float), float(p["radius"])
    return None


def build_tube(omega0: SetState, omega1: SetState, T: float, eps: float,
               final_fraction: float = FINAL_FRACTION, grid_step: float | None = None) -> MovingTube:
    """A decreasing tube with B(omega0, eps) in V(0) and B(omega1, eps/2) in V(T) in B(omega1, 3eps/4)."""
    if T <= 0 or eps <= 0:
        raise PreconditionError("horizon and tolerance must be positive")
    if not 0.5 < final_fraction < 0.75:
        raise PreconditionError("final_fraction must lie strictly between 1/2 and 3/4")
    check_margin(omega0, omega1, eps)
    d0, d1 = _disk_params(omega0), _disk_params(omega1)
    if d0 is not None and d1 is not None:
        (c0, r0), (c1, r1) = d0, d1
        R0, R1 = r0 + eps, r1 + final_fraction * eps
        if np.linalg.norm(c1 - c0) <= R0 - R1:
            tube = MovingTube(BallFamily(c0, R0, c1, R1), T)
            verify_tube(tube, omega0, omega1, eps)
            return tube
    tube = _levelset_tube(omega0, omega1, T, eps, final_fraction, grid_step)
    verify_tube(tube, omega0, omega1, eps)
    return tube


def _levelset_tube(omega0, omega1, T, eps, final_fraction, grid_step):
    step = grid_step or eps / 4
    pad = 3 * eps + 4 * step
    lo = omega0.boundary.min(axis=0) - pad
    hi = omega0.boundary.max(axis=0) + pad
    shape = (int(np.ceil((hi[1] - lo[1]) / step)) + 1, int(np.ceil((hi[0] - lo[0]) / step)) + 1)
    g0 = signed_distance_grid(omega0, lo, (step, step), shape)
    g1 = signed_distance_grid(omega1, lo, (step, step), shape)
    psi0 = LevelSetGrid(g0.values - INITIAL_FRACTION * eps, g0.origin, g0.spacing)
    psi1 = LevelSetGrid(g1.values - final_fraction * eps, g1.origin, g1.spacing)
    return MovingTube(LevelSetFamily(psi0, psi1), T)


def verify_tube(tube: MovingTube, omega0: SetState, omega1: SetState, eps: float,
                n_times: int = 20, nu: float = 1e-3) -> dict:
    """Sampled checks of both end inclusions, monotonicity and nondegeneracy."""
    s0 = tube.at(0.0)
    band0 = region_samples(omega0, eps)
    if np.any(s0.psi(band0) > 0):
        raise SynthesisError("V(0) does not contain B(omega0, eps)")
    sT = tube.at(tube.T)
    band1 = region_samples(omega1, eps / 2)
    if np.any(sT.psi(band1) > 0):
        raise SynthesisError("V(T) does not contain B(omega1, eps/2)")
    edge = sT.curve().sample(1024)
    if np.any(distance_to_set(edge, omega1) >= 0.75 * eps):
        raise SynthesisError("V(T) is not inside B(omega1, 3 eps/4)")
    # monotone decrease and nondegenerate gradient at sampled times
    lo = band0.min(axis=0)
    hi = band0.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], 41), np.linspace(lo[1], hi[1], 41))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    prev = None
    min_grad = np.inf
    for t in np.linspace(0.0, tube.T, n_times):
        sl = tube.at(t)
        vals = sl.psi(grid)
        if prev is not None and np.any(vals < prev - 1e-12):
            raise SynthesisError(f"tube is not decreasing near t={t:.4g}")
        prev = vals
        pts = sl.curve().sample(256)
        min_grad = min(min_grad, float(np.min(np.linalg.norm(sl.grad(pts), axis=1))))
    if min_grad < nu:
        raise SynthesisError(f"degenerate tube gradient {min_grad:.3g}")
    return {"min_grad": min_grad}


# delta0 ---------------------------------------------------------------------------------


def choose_delta0(tube: MovingTube, omega1: SetState, eps: float, T: float, scare: ScareFunction,
                  n_times: int = 21, n_panels: int = 256, iterations: int = 30) -> float:
    """Largest delta0 (to bisection accuracy) meeting the perimeter bound and the speed cap.

    Starts at 1/max perimeter and halves until the cap holds at every sampled
    time, then bisects between the last failure and the first success.  The
    field is linear in delta0, so the unit-field maxima are computed once per
    time; the returned value is re-checked with the full field.
    """
    times = np.linspace(0.0, T, n_times)
    region = region_samples(omega1, eps / 2)
    cap = eps / (8 * T)
    for t in times:
        if np.any(tube.psi(t, region) >= 0):
            raise SynthesisError(f"Sigma(t) meets B(omega1, eps/2) at t={t:.4g}; the tube touches the target")
    unit = BoundaryField(tube, scare, n_panels, 1.0)
    perims = np.array([unit.quadrature(t).total_measure for t in times])
    vmax = np.array([max_speed(unit, region, t) for t in times])

    def passes(delta):
        return bool(np.all(delta * vmax < cap))

    hi = 1.0 / perims.max()
    if passes(hi):
        lo = hi
    else:
        lo = hi
        while not passes(lo):
            lo *= 0.5
            if lo < 1e-12:
                raise SynthesisError("no delta0 above 1e-12 meets the speed cap; the tube touches the target")
        hi = 2 * lo
        for _ in range(iterations):
            mid = math.sqrt(lo * hi)
            if passes(mid):
                lo = mid
            else:
                hi = mid
    check = BoundaryField(tube, scare, n_panels, lo)
    for t in times:
        if not field_speed_cap_check(check, region, t, cap):
            raise SynthesisError(f"delta0={lo:.3g} fails the speed cap at t={t:.4g} on re-check")
    return lo


def node_delta0(tube: MovingTube, t: float, scare: ScareFunction, region: np.ndarray, cap: float,
                n_panels: int = 256) -> tuple[float, float]:
    """Largest delta0 meeting both constraints at time ``t`` alone; returns (delta0, perimeter)."""
    f = BoundaryField(tube, scare, n_panels, 1.0)
    perim = f.quadrature(t).total_measure
    vmax = max_speed(f, region, t)
    if not np.isfinite(vmax):
        raise SynthesisError("speed cap region touches the tube boundary")
    delta = min(1.0 / perim, cap / vmax * (1 - 1e-9))
    if delta < 1e-12:
        raise SynthesisError("no delta0 above 1e-12 meets the speed cap")
    return delta, perim


def ring_clearance(family, lam: float, pts: np.ndarray) -> float:
    """Estimated distance from the points to Sigma at ``lam``, negative when a point lies outside V."""
    sl = family.at(lam)
    g = np.linalg.norm(sl.grad(pts), axis=-1)
    return float(np.min(-sl.psi(pts) / np.maximum(g, 1e-300)))


@dataclass
class ConfinementPlan:
    schedule: ControlSchedule
    tube: MovingTube
    lams: np.ndarray
    deltas: np.ndarray
    violation_time: float | None


def plan_confinement(tube: MovingTube, omega0: SetState, omega1: SetState, eps: float, scare: ScareFunction,
                     n: int, N: int, far_point: np.ndarray, h_max: float = 0.05, pace: float = 0.5,
                     gap_fraction: float = 0.5, clearance_fraction: float = 0.5, n_panels: int = 256,
                     stagger: bool = True) -> ConfinementPlan:
    """Build the schedule node by node while simulating the set it acts on.

    At each node the agent dwells ``delta0 * P * h`` at every mass, which
    clears a disk of radius ``rho`` around it; neighbouring disks overlap to
    a depth ``sqrt(rho**2 - g**2)`` where ``g`` is ``gap_fraction`` of the
    mass spacing.  The tube parameter advances by ``pace`` times that depth
    over the normal speed, but never so far that the ring of masses comes
    closer to the current set than ``clearance_fraction * rho``.  The
    per-node delta0 is the largest value meeting the perimeter bound and the
    speed cap on B(omega1, eps/2).
    """
    T = tube.T
    h = T / (n * N)
    cap = eps / (8 * T)
    region = region_samples(omega1, eps / 2)
    fam = tube.family
    probe = MovingTube(fam, T)
    boundary, samples = omega0.boundary.copy(), omega0.samples.copy()
    lam, target = 0.0, 0.0
    lams, deltas = [], []
    agents = np.zeros((n, N, 2))
    active = np.zeros(n)
    violation = None

    def node_setup(lam):
        delta, perim = node_delta0(probe, lam * T, scare, region, cap, n_panels)
        return delta, perim, scare.sweep_radius(delta * perim * h)

    for i in range(n):
        delta, perim, rho = node_setup(target)
        margin = clearance_fraction * rho
        if target > lam and ring_clearance(fam, target, boundary) < margin:
            lo, hi = lam, target
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                if ring_clearance(fam, mid, boundary) >= margin:
                    lo = mid
                else:
                    hi = mid
            target = lo
            delta, perim, rho = node_setup(target)
        lam = target
        lams.append(lam)
        deltas.append(delta)

        q = quadrature_of_boundary(probe, lam * T, n_panels)
        offset = (i * GOLDEN) % 1.0 if stagger else 0.0
        agents[i] = discretize_measure(q, delta, N, far_point, offset).points
        active[i] = min(delta * q.total_measure * h, h)

        gap = gap_fraction * perim / (2 * N)
        depth = math.sqrt(max(rho * rho - gap * gap, 0.0))
        speed = fam.normal_speed(lam)
        target = 1.0 if speed == 0 else min(1.0, lam + pace * depth / speed)

        if violation is None:
            node = ControlSchedule(N * h, 1, N, far_point, agents[i : i + 1], active[i : i + 1], np.array([delta]))
            evo = evolve_set(SetState(boundary, samples), node.control(scare), N * h, h_max,
                             on_violation="stop")
            if evo.flags["violation_time"] is not None:
                violation = i * T / n + evo.flags["violation_time"]
            boundary, samples = evo.final.boundary, evo.final.samples

    if target > lam and ring_clearance(fam, target, boundary) < 0:
        target = lam
    t_nodes = list(np.arange(n) * T / n) + [T]
    schedule = ControlSchedule(T, n, N, far_point, agents, active, np.array(deltas))
    return ConfinementPlan(schedule, tube.retimed(t_nodes, lams + [target]), np.array(lams + [target]),
                           np.array(deltas), violation)


def sweep_delta(tube: MovingTube, scare: ScareFunction, n: int, N: int, pace: float = 0.5,
                gap_fraction: float = 1.0, n_panels: int = 256) -> float:
    """Smallest constant delta whose node tours keep pace with the given tube."""
    T = tube.T
    h = T / (n * N)
    need = 0.0
    max_perim = 0.0
    for i in range(n):
        t0, t1 = i * T / n, (i + 1) * T / n
        perim = quadrature_of_boundary(tube, t0, n_panels).total_measure
        max_perim = max(max_perim, perim)
        shift = tube.family.normal_speed(tube.lam(t0)) * (tube.lam(t1) - tube.lam(t0))
        if shift <= 0:
            continue
        gap = gap_fraction * perim / (2 * N)
        rho = math.hypot(shift / pace, gap)
        need = max(need, scare.escape_time(rho) / (perim * h))
    return float(min(need, 1.0 / max_perim))


def verify_schedule(schedule: ControlSchedule, tube: MovingTube, omega1: SetState, eps: float,
                    scare: ScareFunction, n_panels: int = 256) -> dict:
    """Re-check the perimeter bound and the speed cap at every node of a schedule."""
    region = region_samples(omega1, eps / 2)
    cap = eps / (8 * schedule.T)
    worst_perim, worst_speed = 0.0, 0.0
    for i, t in enumerate(schedule.node_times):
        f = BoundaryField(tube, scare, n_panels, float(schedule.delta0[i]))
        worst_perim = max(worst_perim, schedule.delta0[i] * f.quadrature(t).total_measure)
        worst_speed = max(worst_speed, max_speed(f, region, t))
    ok = worst_perim <= 1 + 1e-12 and worst_speed < cap
    return {"max_delta_perimeter": float(worst_perim), "max_speed_on_region": float(worst_speed),
            "cap": cap, "ok": bool(ok)}


# confinement -----------------------------------------------------------------------------


@dataclass
class RungReport:
    n: int
    N: int
    success: bool
    reason: str
    achieved_dH: float
    max_excess: float
    witness_displacement: float
    coverage: float
    min_clearance: float
    delta0_min: float
    delta0_max: float

    def to_json(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


@dataclass
class ConfineResult:
    success: bool
    rung: tuple | None
    schedule: ControlSchedule | None
    achieved_dH: float
    inclusion: dict
    delta0: float
    tube: MovingTube | None
    evolution: SetEvolution | None
    history: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "success": self.success,
            "rung": list(self.rung) if self.rung else None,
            "achieved_dH": self.achieved_dH,
            "delta0_uniform": self.delta0,
            "inclusion": self.inclusion,
            "history": [h.to_json() for h in self.history],
        }


def witness_grid(omega1: SetState, r: float, spacing: float) -> np.ndarray:
    lo = omega1.boundary.min(axis=0) - r
    hi = omega1.boundary.max(axis=0) + r
    xs = np.arange(lo[0], hi[0] + spacing / 2, spacing)
    ys = np.arange(lo[1], hi[1] + spacing / 2, spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[distance_to_set(pts, omega1) < r]


def inclusion_report(final: SetState, witness0: np.ndarray, witness_T: np.ndarray,
                     omega1: SetState, eps: float) -> dict:
    excess = float(distance_to_set(final.points(), omega1).max())
    disp = float(np.max(np.linalg.norm(witness_T - witness0, axis=1))) if len(witness0) else 0.0
    flowed = np.vstack([final.samples, witness_T]) if len(witness_T) else final.samples
    from scipy.spatial import cKDTree

    coverage = float(cKDTree(flowed).query(omega1.samples)[0].max()) if len(omega1.samples) else 0.0
    return {
        "max_excess": excess,
        "contained": excess < eps,
        "witness_displacement": disp,
        "coverage": coverage,
        "covered": coverage <= eps / 4 and disp <= eps / 4,
    }


def gate_confinement(scare: ScareFunction, d: int = 2) -> None:
    rep = classify(scare, d)
    if rep.a2 is not True:
        raise TheoryGateError("necessary condition violated: the scare function does not satisfy A2"
                              if rep.necessary_integral_diverges is False else
                              "the scare function is not known to satisfy A2")


def confine(omega0: SetState, omega1: SetState, T: float, eps: float, scare: ScareFunction,
            ladder=DEFAULT_LADDER, h_max: float = 0.05, witness_spacing: float | None = None,
            n_panels: int = 256, progress=None, enforce_gate: bool = True) -> ConfineResult:
    """Synthesize a control steering omega0 into B(omega1, eps) while covering omega1.

    ``enforce_gate=False`` skips the scare-function check, which is only
    useful to watch a doomed attempt (for example against the volume bound).
    """
    if enforce_gate:
        gate_confinement(scare, 2)
    if T <= 0 or eps <= 0:
        raise PreconditionError("horizon and tolerance must be positive")
    omega0.validate()
    omega1.validate()
    far = far_point_for(omega0, omega1)
    if np.all(omega0.contains(omega1.points())) and float(distance_to_set(omega0.points(), omega1).max()) < eps:
        return _trivial_confinement(omega0, omega1, T, eps, scare, far)

    tube = build_tube(omega0, omega1, T, eps)
    delta0 = choose_delta0(tube, omega1, eps, T, scare, n_panels=n_panels)
    spacing = witness_spacing or eps / 2.5
    witness = witness_grid(omega1, eps / 4, spacing)
    history = []
    best = None
    for n, N in ladder:
        plan = plan_confinement(tube, omega0, omega1, eps, scare, n, N, far, h_max, n_panels=n_panels)
        paced, deltas, schedule = plan.tube, plan.deltas, plan.schedule
        check = verify_schedule(schedule, paced, omega1, eps, scare, n_panels)
        if not check["ok"]:
            raise SynthesisError(f"schedule violates the delta0 constraints: {check}")
        out_t = np.concatenate([schedule.node_times, [T]])
        evo = evolve_set(omega0, schedule.control(scare), T, h_max, output_times=out_t,
                         extra_points=witness, on_violation="stop")
        if evo.flags["violation_time"] is not None:
            rep = RungReport(n, N, False, f"admissibility lost at t={evo.flags['violation_time']:.4g}",
                             math.inf, math.inf, math.inf, math.inf, float(evo.flags["min_clearance"]),
                             float(deltas.min()), float(deltas.max()))
            history.append(rep)
            if progress:
                progress(rep)
            continue
        final = evo.final
        inc = inclusion_report(final, witness, evo.extra[-1], omega1, eps)
        inc["min_clearance"] = float(evo.flags["min_clearance"])
        inc["guard_tripped"] = bool(evo.flags["min_clearance"] <= R_MIN)
        inc["schedule_check"] = check
        dH = hausdorff_distance(final, omega1)
        ok = inc["contained"] and inc["covered"] and not inc["guard_tripped"]
        reason = "ok" if ok else ("escape" if not inc["contained"] else "coverage")
        rep = RungReport(n, N, ok, reason, dH, inc["max_excess"], inc["witness_displacement"],
                         inc["coverage"], inc["min_clearance"], float(deltas.min()), float(deltas.max()))
        history.append(rep)
        if progress:
            progress(rep)
        if best is None or dH < best[0]:
            best = (dH, (n, N), schedule, inc, paced, evo)
        if ok:
            return ConfineResult(True, (n, N), schedule, dH, inc, delta0, paced, evo, history)
    if best is None:
        return ConfineResult(False, None, None, math.inf, {}, delta0, tube, None, history)
    dH, rung, schedule, inc, paced, evo = best
    return ConfineResult(False, rung, schedule, dH, inc, delta0, paced, evo, history)


def _trivial_confinement(omega0, omega1, T, eps, scare, far) -> ConfineResult:
    schedule = ControlSchedule(T, 1, 1, far, far[None, None, :], np.zeros(1), np.zeros(1))
    evo = evolve_set(omega0, schedule.control(scare), T, T)
    inc = inclusion_report(evo.final, np.zeros((0, 2)), np.zeros((0, 2)), omega1, eps)
    inc["min_clearance"] = float(evo.flags["min_clearance"])
    inc["guard_tripped"] = False
    dH = hausdorff_distance(evo.final, omega1)
    rep = RungReport(1, 1, True, "trivial", dH, inc["max_excess"], 0.0, inc["coverage"],
                     inc["min_clearance"], 0.0, 0.0)
    return ConfineResult(True, (1, 1), schedule, dH, inc, 0.0, None, evo, [rep])


# sweeping approximation --------------------------------------------------------------------


@dataclass
class SweepRung:
    n: int
    N: int
    delta: float
    sup_error: float
    max_dH: float
    continuum_error: float | None
    times: np.ndarray
    per_time_dH: np.ndarray
    per_time_error: np.ndarray

    def to_json(self) -> dict:
        return {"n": self.n, "N": self.N, "delta": self.delta, "sup_error": self.sup_error,
                "max_dH": self.max_dH, "continuum_error": self.continuum_error}


@dataclass
class SweepResult:
    success: bool
    schedule: ControlSchedule
    sup_error: float
    max_dH: float
    rungs: list
    reference: object
    candidate: object

    def report(self, eps: float) -> dict:
        return {"success": self.success, "eps": eps, "sup_error": self.sup_error, "max_dH": self.max_dH,
                "rungs": [r.to_json() for r in self.rungs]}


def gate_sweeping(scare: ScareFunction, d: int = 2) -> None:
    rep = classify(scare, d)
    if rep.a2prime is not True:
        raise TheoryGateError("the scare function is not known to satisfy A2'")


def approximate_sweeping(tube: MovingTube, omega0: SetState, T: float, eps: float, scare: ScareFunction,
                         delta: float | None = None, ladder=DEFAULT_LADDER, h_max: float = 0.05,
                         ref_refine: int = 10, continuum_points: int = 16, n_panels: int = 256,
                         progress=None) -> SweepResult:
    """Agent control whose flow tracks the sweeping process of ``tube`` on omega0.

    Per rung: reference = catching-up iterates of every initial point;
    candidate = the agent-driven flow of the same points; optionally the
    boundary-field flow of a subset of points (``continuum_points``).
    """
    from .analysis import error_summary

    gate_sweeping(scare, 2)
    if abs(T - tube.T) > 1e-12:
        raise PreconditionError("sweeping horizon must equal the tube horizon")
    omega0.validate()
    if np.any(tube.psi(0.0, omega0.points()) > 0):
        raise PreconditionError("initial set is not inside V(0)")
    far = far_point_for(omega0)
    tracked0 = np.vstack([omega0.samples, omega0.boundary])
    rungs = []
    last = None
    for n, N in ladder:
        d = delta if delta is not None else sweep_delta(tube, scare, n, N, n_panels=n_panels)
        params = SynthesisParams(n, N, d, eps, tube, far, True, n_panels)
        schedule = assemble_schedule(params)
        out_t = np.concatenate([schedule.node_times, [T]])
        evo = evolve_set(omega0, schedule.control(scare), T, h_max, output_times=out_t,
                         extra_points=tracked0[len(omega0.samples):])
        cand = np.concatenate([evo.sample_tracks(), evo.extra], axis=1)
        ref = catching_up(tube, tracked0, T, n * ref_refine)
        ref_pts = ref.at(out_t)
        summary = error_summary((out_t, ref_pts), (out_t, cand))
        cont_err = None
        if continuum_points:
            idx = np.linspace(0, len(tracked0) - 1, continuum_points).astype(int)
            bf = BoundaryField(tube, scare, n_panels, d)
            flow = flow_boundary_field(bf, tracked0[idx], T, h_max, out_t)
            cont_err = float(np.max(np.linalg.norm(flow.points - ref_pts[:, idx], axis=2)))
        rung = SweepRung(n, N, float(d), summary.sup_error, float(summary.per_time_dH.max()), cont_err,
                         out_t, summary.per_time_dH, summary.per_time_error)
        rungs.append(rung)
        if progress:
            progress(rung)
        last = (schedule, ref, cand, out_t)
    schedule, ref, cand, out_t = last
    fin = rungs[-1]
    ok = fin.sup_error <= eps and fin.max_dH <= eps
    from .dynamics import Trajectory

    return SweepResult(ok, schedule, fin.sup_error, fin.max_dH, rungs, ref, Trajectory(out_t, cand))
