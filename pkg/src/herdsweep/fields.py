"""The agent field v(x, xi) and the boundary-integral field v(t, x)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError, SingularityError
from .geometry.curves import SurfaceQuadrature, refine_near
from .geometry.sets import SetState
from .geometry.tube import MovingTube, quadrature_of_boundary
from .scare import ScareFunction, phi_eval

# refinement triggers when the evaluation point is this many panels from the curve
NEAR_PANELS = 5.0
N_FEET = 64


def kernel(scare: ScareFunction, x: np.ndarray, sources: np.ndarray, weights=None) -> np.ndarray:
    """Sum over sources of weight * phi(|x - s|) (x - s)/|x - s|, for each row of ``x``."""
    x = np.atleast_2d(x)
    out = np.zeros_like(x)
    chunk = max(1, 400_000 // max(len(sources), 1))
    for lo in range(0, len(x), chunk):
        diff = x[lo : lo + chunk, None, :] - sources[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=2))
        if np.any(r == 0):
            raise SingularityError("evaluation point coincides with a source")
        coef = phi_eval(scare, r) / r
        if weights is not None:
            coef = coef * weights
        out[lo : lo + chunk] = np.einsum("ps,psk->pk", coef, diff)
    return out


@dataclass(frozen=True)
class AgentField:
    scare: ScareFunction
    agent: np.ndarray

    def __call__(self, x):
        return agent_velocity(self, x)


def agent_velocity(f: AgentField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xi = np.asarray(f.agent, dtype=float)
    d = x - xi
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise SingularityError("field evaluated at the agent position")
    return phi_eval(f.scare, r) * d / r


@dataclass
class BoundaryField:
    """delta0 * integral over Sigma(t) of the scare kernel, plus an optional far mass.

    ``scale`` may be a constant or a function of time (piecewise constant
    per synthesis node).  The far point carries weight
    ``1 - scale * total_measure`` so that the source measure has unit mass.
    """

    tube: MovingTube
    scare: ScareFunction
    n_panels: int = 256
    scale: float | Callable[[float], float] = 1.0
    far_point: np.ndarray | None = None
    _quads: dict = field(default_factory=dict, repr=False)

    def scale_at(self, t: float) -> float:
        return float(self.scale(t)) if callable(self.scale) else float(self.scale)

    def quadrature(self, t: float) -> SurfaceQuadrature:
        lam = self.tube.lam(t)
        q = self._quads.get(lam)
        if q is None:
            if len(self._quads) > 512:
                self._quads.clear()
            q = quadrature_of_boundary(self.tube, t, self.n_panels)
            self._quads[lam] = q
        return q

    def far_weight(self, t: float) -> float:
        if self.far_point is None:
            return 0.0
        w = 1.0 - self.scale_at(t) * self.quadrature(t).total_measure
        if w < -1e-12:
            raise DomainError("scale times perimeter exceeds 1: far-point weight negative")
        return max(w, 0.0)


def boundary_velocity(f: BoundaryField, t: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    q = f.quadrature(t)
    out = kernel(f.scare, pts, q.points, q.weights)

    # distance to the curve for the refinement decision
    diff = pts[:, None, :] - q.points[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    k = np.argmin(d2, axis=1)
    dmin = np.sqrt(d2[np.arange(len(pts)), k])
    near = np.flatnonzero(dmin < NEAR_PANELS * q.panel_length)
    if len(near):
        mids = 0.5 * (q.edges[k[near]] + q.edges[k[near] + 1])
        s = q.curve.closest(pts[near], mids)
        feet = q.curve.point(s)
        dist = np.linalg.norm(pts[near] - feet, axis=1)
        if np.any(dist < 1e-12):
            raise SingularityError("boundary field evaluated on the boundary")
        for j, i in enumerate(near):
            rp, rw = refine_near(q, feet[j], dist[j])
            out[i] = kernel(f.scare, pts[i], rp, rw)[0]

    out *= f.scale_at(t)
    if f.far_point is not None:
        wf = f.far_weight(t)
        if wf > 0:
            out += wf * kernel(f.scare, pts, np.asarray(f.far_point, float)[None, :])
    return out[0] if single else out


def _feet(tube: MovingTube, t: float, n_feet: int = N_FEET):
    curve = tube.at(t).curve()
    s = np.arange(n_feet) * curve.length / n_feet
    return curve.point(s), curve.normal(s)


def normal_inflow(f: BoundaryField, tube: MovingTube, t: float, eps: float, n_feet: int = N_FEET) -> float:
    """min over boundary feet of <n, v> at distance ``eps`` inside, n pointing inward."""
    feet, nout = _feet(tube, t, n_feet)
    x = feet - eps * nout
    v = boundary_velocity(f, t, x)
    vals = np.sum(-nout * v, axis=1)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite field near the boundary", {"eps": eps})
    return float(vals.min())


def alignment_defect(f: BoundaryField, tube: MovingTube, t: float, eps: float, n_feet: int = N_FEET) -> float:
    """max over boundary feet of |v/|v| - n| at distance ``eps`` inside."""
    feet, nout = _feet(tube, t, n_feet)
    x = feet - eps * nout
    v = boundary_velocity(f, t, x)
    speed = np.linalg.norm(v, axis=1)
    if np.any(speed < 1e-12):
        raise DomainError("degenerate field: speed below 1e-12")
    return float(np.max(np.linalg.norm(v / speed[:, None] + nout, axis=1)))


def field_speed_cap_check(f: BoundaryField, region, t: float, cap: float) -> bool:
    """True iff the field speed stays below ``cap`` on every region sample."""
    pts = region.points() if isinstance(region, SetState) else np.asarray(region, float)
    return bool(max_speed(f, pts, t) < cap)


def max_speed(f: BoundaryField, pts: np.ndarray, t: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v = boundary_velocity(f, t, pts)
    return float(np.max(np.linalg.norm(v, axis=1)))


def divergence(scare: ScareFunction, r, d: int = 2):
    """div v for the radial field: phi'(r) + (d - 1) phi(r) / r."""
    r = np.asarray(r, dtype=float)
    return scare.derivative(r) + (d - 1) * phi_eval(scare, r) / r
