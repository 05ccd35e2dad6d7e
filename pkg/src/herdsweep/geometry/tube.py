"""Moving tubes V(t) = {psi(t, .) <= 0}, projections and signed distances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path as FilePath

import numpy as np
from scipy.interpolate import PchipInterpolator, RectBivariateSpline
from scipy.ndimage import gaussian_filter
from skimage.measure import find_contours

from ..errors import DomainError, NumericError
from .curves import Circle, ClosedCurve, Ellipse, SplineCurve, SurfaceQuadrature, curve_quadrature
from .sets import SetState, distance_to_boundary, signed_area

_NEWTON_MAX = 50
_INIT_SAMPLES = 512


# static slices -------------------------------------------------------------


class TubeSlice:
    """A fixed smooth set {psi <= 0}.  Subclasses define psi and derivatives."""

    dimension = 2

    def psi(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def curve(self) -> ClosedCurve:
        raise NotImplementedError

    @property
    def perimeter(self) -> float:
        return self.curve().length

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return np.asarray(self.psi(x)) <= tol


class BallSlice(TubeSlice):
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dimension = len(self.center)
        self._curve = None

    def psi(self, x):
        return np.linalg.norm(np.asarray(x, float) - self.center, axis=-1) - self.radius

    def grad(self, x):
        d = np.asarray(x, float) - self.center
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def hess(self, x):
        d = np.asarray(x, float) - self.center
        r = np.linalg.norm(d, axis=-1)[..., None, None]
        u = d[..., :, None] * d[..., None, :] / r**2
        return (np.eye(self.dimension) - u) / r

    def curve(self):
        if self.dimension != 2:
            raise DomainError("boundary curves exist only in the plane")
        if self._curve is None:
            self._curve = Circle(self.center, self.radius)
        return self._curve

    @property
    def perimeter(self):
        d = self.dimension
        return 2 * math.pi ** (d / 2) / math.gamma(d / 2) * self.radius ** (d - 1)


class EllipseSlice(TubeSlice):
    def __init__(self, center, a: float, b: float):
        self.center = np.asarray(center, dtype=float)
        self.a, self.b = float(a), float(b)
        self._scale = np.array([1 / self.a**2, 1 / self.b**2])
        self._curve = None

    def psi(self, x):
        d = np.asarray(x, float) - self.center
        return np.sum(d**2 * self._scale, axis=-1) - 1.0

    def grad(self, x):
        d = np.asarray(x, float) - self.center
        return 2 * d * self._scale

    def hess(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.diag(2 * self._scale), x.shape[:-1] + (2, 2)).copy()

    def curve(self):
        if self._curve is None:
            self._curve = Ellipse(self.center, self.a, self.b)
        return self._curve


@dataclass(frozen=True)
class LevelSetGrid:
    """Scalar field on a uniform grid; ``values[iy, ix]`` sits at origin + (ix*dx, iy*dy)."""

    values: np.ndarray
    origin: tuple
    spacing: tuple

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        ny, nx = self.values.shape
        xs = self.origin[0] + self.spacing[0] * np.arange(nx)
        ys = self.origin[1] + self.spacing[1] * np.arange(ny)
        return xs, ys

    def points(self) -> np.ndarray:
        xs, ys = self.axes()
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def save(self, stem) -> None:
        """Write ``stem.json`` (header) and ``stem.bin`` (little-endian float64, row-major)."""
        stem = FilePath(stem)
        header = {
            "dims": list(self.values.shape),
            "spacing": list(map(float, self.spacing)),
            "origin": list(map(float, self.origin)),
            "dtype": "<f8",
            "order": "row-major, rows are y",
        }
        stem.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        stem.with_suffix(".bin").write_bytes(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, stem) -> "LevelSetGrid":
        stem = FilePath(stem)
        header = json.loads(stem.with_suffix(".json").read_text())
        raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
        dims = tuple(header["dims"])
        if raw.size != dims[0] * dims[1]:
            raise DomainError("level-set binary size does not match header dims")
        return cls(raw.reshape(dims).astype(float), tuple(header["origin"]), tuple(header["spacing"]))


class _GridInterp:
    def __init__(self, grid: LevelSetGrid):
        xs, ys = grid.axes()
        self.spline = RectBivariateSpline(ys, xs, grid.values, kx=3, ky=3)

    def __call__(self, x, dx=0, dy=0):
        x = np.asarray(x, float)
        flat = x.reshape(-1, 2)
        out = self.spline.ev(flat[:, 1], flat[:, 0], dx=dy, dy=dx)
        return out.reshape(x.shape[:-1])


class LevelSetSlice(TubeSlice):
    def __init__(self, f0: _GridInterp, f1: _GridInterp, lam: float, grid0: LevelSetGrid, grid1: LevelSetGrid):
        self.f0, self.f1, self.lam = f0, f1, float(lam)
        self.grid0, self.grid1 = grid0, grid1
        self._curve = None

    def _blend(self, x, dx=0, dy=0):
        return (1 - self.lam) * self.f0(x, dx, dy) + self.lam * self.f1(x, dx, dy)

    def psi(self, x):
        return self._blend(x)

    def grad(self, x):
        return np.stack([self._blend(x, 1, 0), self._blend(x, 0, 1)], axis=-1)

    def hess(self, x):
        hxx, hxy, hyy = self._blend(x, 2, 0), self._blend(x, 1, 1), self._blend(x, 0, 2)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def curve(self):
        if self._curve is None:
            self._curve = SplineCurve(self._contour())
        return self._curve

    def _contour(self) -> np.ndarray:
        values = (1 - self.lam) * self.grid0.values + self.lam * self.grid1.values
        contours = find_contours(values, 0.0)
        closed = [c for c in contours if len(c) > 8 and np.allclose(c[0], c[-1])]
        if not closed:
            raise NumericError("no closed zero contour in level-set tube", {"lam": self.lam})
        c = max(closed, key=len)[:-1]
        pts = np.column_stack([
            self.grid0.origin[0] + c[:, 1] * self.grid0.spacing[0],
            self.grid0.origin[1] + c[:, 0] * self.grid0.spacing[1],
        ])
        # polish onto the zero set of the bicubic field
        for _ in range(4):
            g = self.grad(pts)
            pts = pts - (self.psi(pts) / np.sum(g * g, axis=1))[:, None] * g
        # drop near-duplicates produced by contouring through grid nodes
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-3 * min(self.grid0.spacing)])
        pts = pts[keep]
        if signed_area(pts) < 0:
            pts = pts[::-1]
        return pts


# tube families ---------------------------------------------------------------


class BallFamily:
    kind = "analytic-ball"

    def __init__(self, center0, radius0, center1=None, radius1=None):
        self.c0 = np.asarray(center0, dtype=float)
        self.c1 = self.c0 if center1 is None else np.asarray(center1, dtype=float)
        self.r0 = float(radius0)
        self.r1 = self.r0 if radius1 is None else float(radius1)
        if self.r0 <= 0 or self.r1 <= 0:
            raise DomainError("ball radii must be positive")

    def at(self, lam: float) -> BallSlice:
        return BallSlice(self.c0 + lam * (self.c1 - self.c0), self.r0 + lam * (self.r1 - self.r0))

    def normal_speed(self, lam: float) -> float:
        """Largest boundary displacement per unit lambda."""
        return float(np.linalg.norm(self.c1 - self.c0) + abs(self.r1 - self.r0))

    def to_json(self):
        return {"kind": self.kind, "center0": self.c0.tolist(), "center1": self.c1.tolist(),
                "radius0": self.r0, "radius1": self.r1}


class EllipseFamily:
    kind = "analytic-ellipse"

    def __init__(self, center0, a0, b0, center1=None, a1=None, b1=None):
        self.c0 = np.asarray(center0, dtype=float)
        self.c1 = self.c0 if center1 is None else np.asarray(center1, dtype=float)
        self.a0, self.b0 = float(a0), float(b0)
        self.a1 = self.a0 if a1 is None else float(a1)
        self.b1 = self.b0 if b1 is None else float(b1)

    def at(self, lam: float) -> EllipseSlice:
        return EllipseSlice(self.c0 + lam * (self.c1 - self.c0),
                            self.a0 + lam * (self.a1 - self.a0), self.b0 + lam * (self.b1 - self.b0))

    def normal_speed(self, lam: float) -> float:
        return float(np.linalg.norm(self.c1 - self.c0) + max(abs(self.a1 - self.a0), abs(self.b1 - self.b0)))

    def to_json(self):
        return {"kind": self.kind, "center0": self.c0.tolist(), "center1": self.c1.tolist(),
                "a0": self.a0, "b0": self.b0, "a1": self.a1, "b1": self.b1}


class LevelSetFamily:
    kind = "levelset-interpolated"

    def __init__(self, grid0: LevelSetGrid, grid1: LevelSetGrid):
        if grid0.shape != grid1.shape or tuple(grid0.origin) != tuple(grid1.origin):
            raise DomainError("level-set grids must share shape and origin")
        self.grid0, self.grid1 = grid0, grid1
        self.f0, self.f1 = _GridInterp(grid0), _GridInterp(grid1)

    def at(self, lam: float) -> LevelSetSlice:
        return LevelSetSlice(self.f0, self.f1, lam, self.grid0, self.grid1)

    def normal_speed(self, lam: float) -> float:
        sl = self.at(lam)
        pts = sl.curve().sample(256)
        g = np.linalg.norm(sl.grad(pts), axis=1)
        return float(np.max(np.abs(self.f1(pts) - self.f0(pts)) / g))

    def to_json(self):
        return {"kind": self.kind, "shape": list(self.grid0.shape), "origin": list(self.grid0.origin),
                "spacing": list(self.grid0.spacing)}


@dataclass(frozen=True)
class MovingTube:
    """V(t) for t in [0, T]: a shape family evaluated at lambda(t).

    ``lam_nodes`` (values at ``t_nodes``) retime the family; the default is
    the linear blend lambda = t / T.  Retiming is monotone (PCHIP).
    """

    family: object
    T: float
    t_nodes: tuple = field(default=None)
    lam_nodes: tuple = field(default=None)

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError("tube horizon must be positive")
        if self.t_nodes is not None:
            t = np.asarray(self.t_nodes, float)
            lam = np.asarray(self.lam_nodes, float)
            if np.any(np.diff(t) <= 0) or np.any(np.diff(lam) < 0):
                raise DomainError("tube retiming must be increasing in t and non-decreasing in lambda")
            object.__setattr__(self, "t_nodes", tuple(t.tolist()))
            object.__setattr__(self, "lam_nodes", tuple(lam.tolist()))
            object.__setattr__(self, "_interp", PchipInterpolator(t, lam))
        object.__setattr__(self, "_cache", lru_cache(maxsize=256)(self._make_slice))

    @property
    def kind(self) -> str:
        return self.family.kind

    @property
    def dimension(self) -> int:
        return self.at(0.0).dimension

    def lam(self, t: float) -> float:
        t = min(max(float(t), 0.0), self.T)
        if self.t_nodes is None:
            return t / self.T
        return float(np.clip(self._interp(t), 0.0, 1.0))

    def _make_slice(self, lam: float) -> TubeSlice:
        return self.family.at(lam)

    def at(self, t: float) -> TubeSlice:
        return self._cache(self.lam(t))

    def psi(self, t, x):
        return self.at(t).psi(x)

    def retimed(self, t_nodes, lam_nodes) -> "MovingTube":
        return MovingTube(self.family, self.T, tuple(t_nodes), tuple(lam_nodes))

    def to_json(self) -> dict:
        out = {"family": self.family.to_json(), "T": self.T}
        if self.t_nodes is not None:
            out["t_nodes"] = list(self.t_nodes)
            out["lam_nodes"] = list(self.lam_nodes)
        return out


def ball_tube(T, center0, radius0, center1=None, radius1=None) -> MovingTube:
    return MovingTube(BallFamily(center0, radius0, center1, radius1), T)


def ellipse_tube(T, center0, a0, b0, center1=None, a1=None, b1=None) -> MovingTube:
    return MovingTube(EllipseFamily(center0, a0, b0, center1, a1, b1), T)


def signed_distance_grid(omega: SetState, origin, spacing, shape, smooth: float = 1.0) -> LevelSetGrid:
    """Signed distance to the polygon of ``omega`` on a grid, lightly Gaussian-smoothed."""
    from matplotlib.path import Path

    ny, nx = shape
    grid = LevelSetGrid(np.zeros(shape), tuple(origin), tuple(spacing))
    pts = grid.points()
    d = distance_to_boundary(pts, omega.boundary)
    inside = Path(omega.boundary).contains_points(pts)
    d[inside] *= -1
    values = d.reshape(ny, nx)
    if smooth > 0:
        values = gaussian_filter(values, smooth, mode="nearest")
    return LevelSetGrid(values, tuple(origin), tuple(spacing))


def levelset_tube(T, grid0: LevelSetGrid, grid1: LevelSetGrid) -> MovingTube:
    return MovingTube(LevelSetFamily(grid0, grid1), T)


# quadrature, projection, signed distance --------------------------------------


def quadrature_of_boundary(tube: MovingTube, t: float, n_panels: int) -> SurfaceQuadrature:
    return curve_quadrature(tube.at(t).curve(), n_panels)


def _nearest_on_curve(sl: TubeSlice, x: np.ndarray):
    curve = sl.curve()
    s = np.arange(_INIT_SAMPLES) * curve.length / _INIT_SAMPLES
    pts = curve.point(s)
    dist = np.linalg.norm(pts - x, axis=1)
    return s, pts, dist


def _newton_kkt(sl: TubeSlice, x: np.ndarray, y0: np.ndarray):
    """Solve y - x + mu grad psi(y) = 0, psi(y) = 0 by damped Newton."""
    g0 = sl.grad(y0)
    y = y0.copy()
    mu = float(np.dot(x - y, g0) / np.dot(g0, g0))
    history = []

    def residual(y, mu):
        return np.concatenate([y - x + mu * sl.grad(y), [sl.psi(y)]])

    res = residual(y, mu)
    for it in range(_NEWTON_MAX):
        nrm = float(np.linalg.norm(res))
        history.append(nrm)
        if nrm < 1e-13 * (1 + np.linalg.norm(x)):
            return y, it
        g = sl.grad(y)
        J = np.zeros((3, 3))
        J[:2, :2] = np.eye(2) + mu * sl.hess(y)
        J[:2, 2] = g
        J[2, :2] = g
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            step = -res * 0.1
        lam = 1.0
        while lam > 1e-6:
            y_new, mu_new = y + lam * step[:2], mu + lam * step[2]
            res_new = residual(y_new, mu_new)
            if np.linalg.norm(res_new) < (1 - 1e-4 * lam) * nrm:
                break
            lam *= 0.5
        y, mu, res = y_new, mu_new, res_new
    raise NumericError("projection Newton iteration did not converge",
                       {"x": x.tolist(), "residuals": history[-5:], "iterations": _NEWTON_MAX})


def _check_ball(sl: BallSlice, x: np.ndarray):
    if np.linalg.norm(x - sl.center) == 0:
        raise DomainError("projection onto a sphere is ambiguous at its center")


def project_onto(tube: MovingTube, t: float, x) -> np.ndarray:
    """Metric projection of ``x`` onto V(t); ``x`` itself when inside."""
    sl = tube.at(t)
    x = np.asarray(x, dtype=float)
    if isinstance(sl, BallSlice):
        return project_ball(sl.center, sl.radius, x)
    if x.ndim == 2:
        return np.array([project_onto(tube, t, xi) for xi in x])
    if sl.psi(x) <= 0:
        return x.copy()
    return _foot_point(sl, x)[0]


def project_ball(center, radius, x):
    """Closed-form projection onto a ball, vectorized over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    d = x - center
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    scale = np.where(r > radius, radius / np.maximum(r, 1e-300), 1.0)
    return center + d * scale


def _foot_point(sl: TubeSlice, x: np.ndarray):
    s, pts, dist = _nearest_on_curve(sl, x)
    k = int(np.argmin(dist))
    y, _ = _newton_kkt(sl, x, pts[k])
    return y, s, dist, k


def signed_distance_profile(tube: MovingTube, t: float, x):
    """(signed distance, foot on the boundary, outward unit normal at the foot)."""
    sl = tube.at(t)
    x = np.asarray(x, dtype=float)
    if isinstance(sl, BallSlice):
        _check_ball(sl, x)
        d = x - sl.center
        r = np.linalg.norm(d)
        n = d / r
        return float(r - sl.radius), sl.center + sl.radius * n, n
    y, s, dist, k = _foot_point(sl, x)
    _check_unique_foot(sl, x, s, dist, k)
    g = sl.grad(y)
    n = g / np.linalg.norm(g)
    sign = -1.0 if sl.psi(x) < 0 else 1.0
    return sign * float(np.linalg.norm(x - y)), y, n


def _check_unique_foot(sl: TubeSlice, x, s, dist, k):
    curve = sl.curve()
    n = len(dist)
    local = (dist <= np.roll(dist, 1)) & (dist <= np.roll(dist, -1))
    tol = 1e-9 + 1e-6 * dist[k]
    rivals = np.flatnonzero(local & (dist <= dist[k] + tol))
    sep = np.minimum(np.abs(rivals - k), n - np.abs(rivals - k))
    if np.any(sep > 2):
        raise DomainError("ambiguous projection: several nearest boundary points")
    if sl.psi(x) < 0:
        kappa = float(curve.curvature(s[k]))
        if kappa > 0 and dist[k] * kappa >= 1 - 1e-9:
            raise DomainError("point beyond the reach of the boundary")
