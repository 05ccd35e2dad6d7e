"""Planar sets as a boundary polygon plus interior samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing

from ..errors import DomainError

# points this close to the polygon edge count as inside
_EDGE_TOL = 1e-9


def _as_points(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"expected an (n, 2) array of points, got shape {arr.shape}")
    return arr


def signed_area(boundary: np.ndarray) -> float:
    x, y = boundary[:, 0], boundary[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_simple(boundary: np.ndarray) -> bool:
    if len(boundary) < 3:
        return False
    return bool(LinearRing(boundary).is_simple)


@dataclass(frozen=True)
class SetState:
    """A compact planar set.

    ``boundary`` is a closed counterclockwise polygon (first vertex not
    repeated); ``samples`` are interior points.  ``primitive`` optionally
    records the analytic shape the set was built from, e.g.
    ``{"kind": "disk", "center": [0, 0], "radius": 1}``.
    """

    boundary: np.ndarray
    samples: np.ndarray
    primitive: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        b = _as_points(self.boundary)
        if len(b) >= 2 and np.allclose(b[0], b[-1]):
            b = b[:-1]
        if len(b) < 3:
            raise DomainError("boundary needs at least three vertices")
        if signed_area(b) < 0:
            b = b[::-1].copy()
        object.__setattr__(self, "boundary", b)
        object.__setattr__(self, "samples", _as_points(self.samples))

    @property
    def dimension(self) -> int:
        return 2

    def points(self) -> np.ndarray:
        """Boundary vertices and interior samples as one cloud."""
        return np.vstack([self.boundary, self.samples])

    def validate(self) -> None:
        if not is_simple(self.boundary):
            raise DomainError("boundary polygon self-intersects")
        if len(self.samples) and not np.all(self.contains(self.samples)):
            raise DomainError("interior samples lie outside the boundary")

    def contains(self, pts) -> np.ndarray:
        pts = _as_points(pts)
        inside = Path(self.boundary).contains_points(pts)
        if not inside.all():
            near = distance_to_boundary(pts[~inside], self.boundary) <= _EDGE_TOL
            inside[np.flatnonzero(~inside)[near]] = True
        return inside

    def with_points(self, boundary, samples) -> "SetState":
        return SetState(boundary, samples)

    def to_json(self) -> dict:
        return {"boundary": self.boundary.tolist(), "samples": self.samples.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SetState":
        return cls(np.asarray(obj["boundary"], float), np.asarray(obj.get("samples", []), float))


def distance_to_boundary(pts, boundary: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Euclidean distance from each point to the closed polyline."""
    pts = _as_points(pts)
    a = boundary
    b = np.roll(boundary, -1, axis=0)
    ab = b - a
    ab2 = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        p = pts[lo : lo + chunk, None, :]
        t = np.clip(np.einsum("pij,ij->pi", p - a, ab) / ab2, 0.0, 1.0)
        proj = a + t[..., None] * ab
        out[lo : lo + chunk] = np.sqrt(np.min(np.sum((p - proj) ** 2, axis=2), axis=1))
    return out


def distance_to_set(pts, omega: SetState) -> np.ndarray:
    """Distance to the filled polygon (zero inside)."""
    pts = _as_points(pts)
    d = distance_to_boundary(pts, omega.boundary)
    d[Path(omega.boundary).contains_points(pts)] = 0.0
    return d


def hausdorff_points(a, b) -> float:
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise DomainError("Hausdorff distance of an empty set")
    dab = cKDTree(b).query(a)[0].max()
    dba = cKDTree(a).query(b)[0].max()
    return float(max(dab, dba))


def hausdorff_distance(A: SetState, B: SetState) -> float:
    """Hausdorff distance between the clouds of boundary vertices and samples."""
    return hausdorff_points(A.points(), B.points())


def set_volume(A: SetState) -> float:
    if not is_simple(A.boundary):
        raise DomainError("boundary polygon self-intersects")
    return abs(signed_area(A.boundary))


def perimeter(boundary: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(boundary, -1, axis=0) - boundary, axis=1).sum())


def resample_closed(boundary: np.ndarray, n: int) -> np.ndarray:
    """``n`` vertices equally spaced in arclength along the closed polygon."""
    closed = np.vstack([boundary, boundary[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.arange(n) * s[-1] / n
    return np.column_stack([np.interp(target, s, closed[:, 0]), np.interp(target, s, closed[:, 1])])


def spacing_ratio(boundary: np.ndarray) -> float:
    seg = np.linalg.norm(np.roll(boundary, -1, axis=0) - boundary, axis=1)
    return float(seg.max() / max(seg.min(), 1e-300))


# primitives ----------------------------------------------------------------


def grid_samples(boundary: np.ndarray, spacing: float, jitter: float = 0.0, seed: int = 0) -> np.ndarray:
    lo, hi = boundary.min(axis=0), boundary.max(axis=0)
    xs = np.arange(lo[0] + spacing / 2, hi[0], spacing)
    ys = np.arange(lo[1] + spacing / 2, hi[1], spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if jitter > 0:
        rng = np.random.default_rng(seed)
        pts = pts + rng.uniform(-jitter, jitter, pts.shape) * spacing
    inside = Path(boundary).contains_points(pts)
    # keep samples strictly inside so they witness interior behavior
    keep = inside & (distance_to_boundary(pts, boundary) > 1e-3 * spacing)
    return pts[keep]


def disk(center=(0.0, 0.0), radius: float = 1.0, n_boundary: int = 256, spacing: float = 0.05,
         jitter: float = 0.0, seed: int = 0) -> SetState:
    if radius <= 0:
        raise DomainError("disk radius must be positive")
    c = np.asarray(center, dtype=float)
    th = 2 * np.pi * np.arange(n_boundary) / n_boundary
    b = c + radius * np.column_stack([np.cos(th), np.sin(th)])
    prim = {"kind": "disk", "center": c.tolist(), "radius": float(radius)}
    return SetState(b, grid_samples(b, spacing, jitter, seed), prim)


def ellipse(center=(0.0, 0.0), a: float = 2.0, b: float = 1.0, n_boundary: int = 256,
            spacing: float = 0.05, jitter: float = 0.0, seed: int = 0) -> SetState:
    from .curves import Ellipse

    bnd = Ellipse(center, a, b).sample(n_boundary)
    prim = {"kind": "ellipse", "center": list(map(float, center)), "a": float(a), "b": float(b)}
    return SetState(bnd, grid_samples(bnd, spacing, jitter, seed), prim)


def polygon(vertices, n_boundary: int = 256, spacing: float = 0.05, jitter: float = 0.0,
            seed: int = 0) -> SetState:
    v = _as_points(vertices)
    if signed_area(v) < 0:
        v = v[::-1]
    if not is_simple(v):
        raise DomainError("polygon vertices self-intersect")
    bnd = resample_closed(v, n_boundary)
    prim = {"kind": "polygon", "vertices": v.tolist()}
    return SetState(bnd, grid_samples(bnd, spacing, jitter, seed), prim)


def square(center=(0.0, 0.0), half: float = 1.0, **kw) -> SetState:
    c = np.asarray(center, dtype=float)
    v = c + half * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    return polygon(v, **kw)
