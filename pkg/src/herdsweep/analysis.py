"""Quantitative checks on simulated runs: volume bounds, divergence balance,
near-boundary profiles and trajectory error summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import DomainError, PreconditionError
from .fields import BoundaryField, alignment_defect, divergence, normal_inflow
from .geometry.sets import hausdorff_points, set_volume
from .geometry.tube import MovingTube
from .scare import ScareFunction, necessary_integral

VOLUME_TOL = 0.02


def sphere_measure(d: int) -> float:
    """Surface measure of the unit sphere in R^d: 2 pi^(d/2) / Gamma(d/2)."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass
class VolumeBoundReport:
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(np.all(self.margin >= -self.tolerance))

    def rows(self):
        for t, m, b, g in zip(self.times, self.measured, self.bound, self.margin):
            yield {"t": t, "measured": m, "bound": b, "margin": g}


def volume_bound_check(run, f: ScareFunction, d: int = 2) -> VolumeBoundReport:
    """Compare measured volumes with e^{phi'(1) t} V0 - omega M d/(d-1) t."""
    M = necessary_integral(f, d)
    if not np.isfinite(M):
        raise PreconditionError("the volume bound needs a finite necessary integral")
    times = np.asarray(run.times, float)
    vols = run.volumes() if hasattr(run, "volumes") else np.asarray(run[1], float)
    v0 = vols[0]
    rate = float(f.derivative(1.0))
    bound = np.exp(rate * (times - times[0])) * v0 - sphere_measure(d) * M * d / (d - 1) * (times - times[0])
    margin = vols - bound
    return VolumeBoundReport(times, vols, bound, margin, VOLUME_TOL * v0)


# divergence -------------------------------------------------------------------------

# Dunavant degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_TRI_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_TRI_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def _triangulate(boundary: np.ndarray) -> np.ndarray:
    tri = shapely.constrained_delaunay_triangles(Polygon(boundary))
    return np.array([np.asarray(g.exterior.coords)[:3] for g in tri.geoms])


def divergence_integral(boundary: np.ndarray, agent, f: ScareFunction, d: int = 2, levels: int = 3) -> float:
    """Integral of div v(., agent) over the polygon, by triangle quadrature.

    Triangles are split uniformly ``levels`` times when close to the agent
    relative to their size.
    """
    agent = np.asarray(agent, float)
    if Polygon(boundary).buffer(0).contains(shapely.Point(agent)):
        raise DomainError("agent inside the set: divergence integrand is singular")
    tris = _triangulate(boundary)
    total = 0.0
    for _ in range(levels + 1):
        cen = tris.mean(axis=1)
        size = np.max(np.linalg.norm(tris - cen[:, None, :], axis=2), axis=1)
        dist = np.linalg.norm(cen - agent, axis=1)
        fine = dist < 4 * size
        total += _tri_quad(tris[~fine], agent, f, d)
        tris = _split(tris[fine])
        if not len(tris):
            break
    if len(tris):
        total += _tri_quad(tris, agent, f, d)
    return total


def _split(tris: np.ndarray) -> np.ndarray:
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate([np.stack(t, axis=1) for t in [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]])


def _tri_quad(tris: np.ndarray, agent, f, d) -> float:
    if not len(tris):
        return 0.0
    area = 0.5 * np.abs((tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
                        - (tris[:, 2, 0] - tris[:, 0, 0]) * (tris[:, 1, 1] - tris[:, 0, 1]))
    pts = np.einsum("qk,tkj->tqj", _TRI_BARY, tris)
    r = np.linalg.norm(pts - agent, axis=2)
    return float(np.sum(area * (divergence(f, r, d) @ _TRI_W)))


@dataclass
class DivergenceBalance:
    times: np.ndarray
    rate: np.ndarray
    integral: np.ndarray
    residual: np.ndarray

    def relative(self) -> np.ndarray:
        return np.abs(self.residual) / np.maximum(np.abs(self.rate), 1e-300)


def divergence_balance(run, control, f: ScareFunction, d: int = 2) -> DivergenceBalance:
    """Finite-difference volume rate against the integral of div v at interval midpoints.

    The set at the midpoint is approximated by the polygon whose vertices
    average the two end states (valid when vertices were not re-sampled in
    between).
    """
    times = np.asarray(run.times, float)
    vols = run.volumes()
    mids, rates, ints = [], [], []
    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        tm = 0.5 * (t0 + t1)
        b0, b1 = run.states[k].boundary, run.states[k + 1].boundary
        mid_poly = 0.5 * (b0 + b1) if b0.shape == b1.shape else b0
        rates.append((vols[k + 1] - vols[k]) / (t1 - t0))
        ints.append(divergence_integral(mid_poly, control.position(tm), f, d))
        mids.append(tm)
    rates, ints = np.array(rates), np.array(ints)
    return DivergenceBalance(np.array(mids), rates, ints, rates - ints)


# profiles --------------------------------------------------------------------------


@dataclass
class ProfileReport:
    eps: np.ndarray
    inflow: np.ndarray
    defect: np.ndarray
    slope: float

    def rows(self):
        for e, i, a in zip(self.eps, self.inflow, self.defect):
            yield {"eps": e, "normal_inflow": i, "alignment_defect": a}

    @property
    def inflow_increasing(self) -> bool:
        # eps is listed in decreasing order
        return bool(np.all(np.diff(self.inflow) > 0))

    @property
    def defect_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.defect) < 0))


def blowup_profile(tube: MovingTube, f: ScareFunction, t: float, eps_ladder, n_panels: int = 256,
                   n_feet: int = 64) -> ProfileReport:
    """Normal inflow and alignment defect across an eps ladder, with the log-log slope of the inflow."""
    eps = np.sort(np.asarray(eps_ladder, float))[::-1]
    field = BoundaryField(tube, f, n_panels, 1.0)
    inflow = np.array([normal_inflow(field, tube, t, e, n_feet) for e in eps])
    defect = np.array([alignment_defect(field, tube, t, e, n_feet) for e in eps])
    slope = float(np.polyfit(np.log(eps), np.log(np.abs(inflow)), 1)[0])
    return ProfileReport(eps, inflow, defect, slope)


# errors ------------------------------------------------------------------------------


@dataclass
class ErrorSummary:
    times: np.ndarray
    sup_error: float
    per_time_error: np.ndarray
    per_time_dH: np.ndarray

    def rows(self):
        for t, e, h in zip(self.times, self.per_time_error, self.per_time_dH):
            yield {"t": t, "max_error": e, "hausdorff": h}


def _unpack(run):
    if isinstance(run, tuple):
        return np.asarray(run[0], float), np.asarray(run[1], float)
    return np.asarray(run.times, float), np.asarray(run.points, float)


def error_summary(reference, candidate) -> ErrorSummary:
    """Sup over samples and times of |candidate - reference|, and per-time Hausdorff distance.

    Both arguments are trajectory ensembles (objects with ``times`` and
    ``points`` of shape (K, m, 2), or ``(times, points)`` tuples).  The
    candidate is linearly interpolated onto the reference times.
    """
    t_ref, p_ref = _unpack(reference)
    t_can, p_can = _unpack(candidate)
    if p_ref.ndim == 2:
        p_ref = p_ref[:, None, :]
    if p_can.ndim == 2:
        p_can = p_can[:, None, :]
    if p_ref.shape[1:] != p_can.shape[1:]:
        raise DomainError(f"sample sets differ: {p_ref.shape[1:]} vs {p_can.shape[1:]}")
    if t_ref.shape != t_can.shape or not np.allclose(t_ref, t_can, rtol=0, atol=1e-12):
        flat = p_can.reshape(len(t_can), -1)
        p_can = np.stack([np.interp(t_ref, t_can, flat[:, j]) for j in range(flat.shape[1])], axis=1)
        p_can = p_can.reshape((len(t_ref),) + p_ref.shape[1:])
    err = np.linalg.norm(p_can - p_ref, axis=2)
    per_time = err.max(axis=1)
    dH = np.array([hausdorff_points(a, b) for a, b in zip(p_ref, p_can)])
    return ErrorSummary(t_ref, float(per_time.max()), per_time, dH)


# export -----------------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, rows, columns) -> None:
    """Write dict rows as CSV with full-precision floats (deterministic output)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])
