"""Closed planar curves parametrized by arclength, and panel quadratures on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import DomainError

_TABLE_SIZE = 8192


class ClosedCurve:
    """A C2 closed curve, counterclockwise, evaluated by arclength ``s``.

    Subclasses provide ``_eval(u)`` on a periodic parameter ``u`` in
    ``[0, period)`` returning points, first and second derivatives.  The
    arclength reparametrization is tabulated once.
    """

    period: float = 2 * math.pi

    def _build_arclength(self):
        u = np.linspace(0.0, self.period, _TABLE_SIZE + 1)
        _, d1, _ = self._eval(u)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        # cumulative trapezoid; the end value is the periodic trapezoid rule
        s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(u))])
        self.length = float(s[-1])
        self._u_of_s = CubicSpline(s, u)

    def _u(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        return self._u_of_s(s)

    def point(self, s) -> np.ndarray:
        return self._eval(self._u(s))[0]

    def tangent(self, s) -> np.ndarray:
        d1 = self._eval(self._u(s))[1]
        return d1 / np.linalg.norm(d1, axis=-1, keepdims=True)

    def normal(self, s) -> np.ndarray:
        """Outward unit normal (the tangent rotated clockwise)."""
        t = self.tangent(s)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def curvature(self, s) -> np.ndarray:
        _, d1, d2 = self._eval(self._u(s))
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def sample(self, n: int) -> np.ndarray:
        return self.point(np.arange(n) * self.length / n)

    def closest(self, x, s0, iters: int = 12):
        """Arclength of the boundary point nearest ``x``, by Newton from ``s0``."""
        x = np.asarray(x, dtype=float)
        s = np.asarray(s0, dtype=float).copy()
        cap = self.length / 64
        for _ in range(iters):
            p, t, n, k = self.point(s), self.tangent(s), self.normal(s), self.curvature(s)
            diff = p - x
            f = np.sum(diff * t, axis=-1)
            fp = 1.0 - k * np.sum(diff * n, axis=-1)
            step = np.where(fp > 0.1, f / np.where(fp > 0.1, fp, 1.0), f)
            s = s - np.clip(step, -cap, cap)
        return np.mod(s, self.length)


class Circle(ClosedCurve):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise DomainError("circle radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.length = 2 * math.pi * self.radius

    def _u(self, s):
        return np.asarray(s, dtype=float) / self.radius

    def _eval(self, u):
        c, s = np.cos(u), np.sin(u)
        r = self.radius
        pts = self.center + r * np.stack([c, s], axis=-1)
        d1 = r * np.stack([-s, c], axis=-1)
        d2 = -r * np.stack([c, s], axis=-1)
        return pts, d1, d2


class Ellipse(ClosedCurve):
    def __init__(self, center, a: float, b: float, angle: float = 0.0):
        if a <= 0 or b <= 0:
            raise DomainError("ellipse semi-axes must be positive")
        self.center = np.asarray(center, dtype=float)
        self.a, self.b, self.angle = float(a), float(b), float(angle)
        ca, sa = math.cos(angle), math.sin(angle)
        self._rot = np.array([[ca, -sa], [sa, ca]])
        self._build_arclength()

    def _eval(self, u):
        c, s = np.cos(u), np.sin(u)
        a, b = self.a, self.b
        pts = np.stack([a * c, b * s], axis=-1) @ self._rot.T + self.center
        d1 = np.stack([-a * s, b * c], axis=-1) @ self._rot.T
        d2 = np.stack([-a * c, -b * s], axis=-1) @ self._rot.T
        return pts, d1, d2


class SplineCurve(ClosedCurve):
    """Periodic cubic spline through an ordered closed polygon."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if len(pts) < 4:
            raise DomainError("spline curve needs at least four points")
        if _signed_area(pts) < 0:
            pts = pts[::-1]
        seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
        if np.any(seg <= 0):
            raise DomainError("repeated consecutive points in spline curve")
        u = np.concatenate([[0.0], np.cumsum(seg)])
        self.period = float(u[-1])
        self._spline = CubicSpline(u, np.vstack([pts, pts[:1]]), bc_type="periodic")
        self._build_arclength()

    def _eval(self, u):
        u = np.mod(u, self.period)
        return self._spline(u), self._spline(u, 1), self._spline(u, 2)


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class SurfaceQuadrature:
    """Panels on a closed curve: midpoint, outward normal, weight.

    ``edges`` holds the arclength breakpoints of the panels on ``curve`` so
    that panels can be subdivided near a singular evaluation point.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    total_measure: float
    curve: ClosedCurve | None = None
    edges: np.ndarray | None = None

    @property
    def n_panels(self) -> int:
        return len(self.weights)

    @property
    def panel_length(self) -> float:
        return self.total_measure / self.n_panels


def _panels(curve: ClosedCurve, edges: np.ndarray):
    nodes = curve.point(edges)
    weights = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    return curve.point(mids), curve.normal(mids), weights


def curve_quadrature(curve: ClosedCurve, n_panels: int) -> SurfaceQuadrature:
    """Equal-arclength panels with chord-length weights (second-order accurate)."""
    if n_panels < 16:
        raise DomainError("at least 16 panels are required")
    edges = np.linspace(0.0, curve.length, n_panels + 1)
    pts, nrm, w = _panels(curve, edges)
    return SurfaceQuadrature(pts, nrm, w, float(w.sum()), curve, edges)


def refine_near(q: SurfaceQuadrature, foot: np.ndarray, dist: float,
                reach: float = 20.0, fineness: float = 0.25):
    """Panels of ``q`` near ``foot`` recursively bisected; returns (points, weights).

    A panel is bisected while it is longer than ``fineness * dist`` and lies
    within ``reach * dist`` of the foot, giving a graded mesh that resolves
    the kernel peak of width ``dist`` above the foot.
    """
    if q.curve is None:
        raise DomainError("quadrature carries no curve to refine")
    radius, target = reach * dist, fineness * dist
    lengths = q.edges[1:] - q.edges[:-1]
    near = np.linalg.norm(q.points - foot, axis=1) < radius + lengths
    if not near.any():
        return q.points, q.weights
    done_lo, done_hi = [], []
    lo, hi = q.edges[:-1][near], q.edges[1:][near]
    while len(lo):
        ln = hi - lo
        mids = q.curve.point(0.5 * (lo + hi))
        split = (ln > target) & (np.linalg.norm(mids - foot, axis=1) < radius + ln)
        done_lo.append(lo[~split])
        done_hi.append(hi[~split])
        mid = 0.5 * (lo[split] + hi[split])
        lo, hi = np.concatenate([lo[split], mid]), np.concatenate([mid, hi[split]])
    lo, hi = np.concatenate(done_lo), np.concatenate(done_hi)
    w = np.linalg.norm(q.curve.point(hi) - q.curve.point(lo), axis=1)
    pts = q.curve.point(0.5 * (lo + hi))
    return np.vstack([q.points[~near], pts]), np.concatenate([q.weights[~near], w])
