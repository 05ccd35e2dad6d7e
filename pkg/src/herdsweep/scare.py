"""Scare functions and their classification against the structural conditions.

A scare function is a positive, strictly decreasing radial profile
``phi(r)`` giving the speed at which a point at distance ``r`` flees the
agent.  Two kinds are supported: the power law ``c * r**-p`` (classified in
closed form) and a tabulated profile with log-log linear interpolation
(classified by numeric limit estimation that abstains when inconclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError

# grid r = 2**-k used by the numeric limit tests
_LIMIT_KS = np.arange(4, 21)
_LIMIT_THRESHOLD = 1e-3
_DIVERGENCE_RUN = 5
_A2PRIME_WITNESSES = (0.6, 0.75, 0.9)
# roundoff allowance when comparing quantities that are equal in exact arithmetic
_REL_TOL = 1e-9


@dataclass(frozen=True)
class ScareFunction:
    kind: str
    p: float = 0.0
    c: float = 1.0
    samples: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind == "power-law":
            if not (self.p >= 0 and self.c > 0):
                raise DomainError(f"power law needs p >= 0 and c > 0, got p={self.p}, c={self.c}")
        elif self.kind == "tabulated":
            tab = np.asarray(self.samples, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                raise DomainError("tabulated scare function needs at least two (r, phi) rows")
            r, ph = tab[:, 0], tab[:, 1]
            if np.any(r <= 0) or np.any(ph <= 0):
                raise DomainError("tabulated samples must have r > 0 and phi > 0")
            if np.any(np.diff(r) <= 0):
                raise DomainError("tabulated radii must be strictly increasing")
            if np.any(np.diff(ph) >= 0):
                raise DomainError("tabulated phi must be strictly decreasing")
            object.__setattr__(self, "samples", tuple(map(tuple, tab.tolist())))
        else:
            raise DomainError(f"unknown scare function kind {self.kind!r}")

    @classmethod
    def power_law(cls, p: float, c: float = 1.0) -> "ScareFunction":
        return cls(kind="power-law", p=float(p), c=float(c))

    @classmethod
    def tabulated(cls, samples) -> "ScareFunction":
        return cls(kind="tabulated", samples=tuple(map(tuple, np.asarray(samples, float).tolist())))

    # table helpers -------------------------------------------------------
    def _log_table(self):
        tab = np.asarray(self.samples, dtype=float)
        lr, lp = np.log(tab[:, 0]), np.log(tab[:, 1])
        slopes = np.diff(lp) / np.diff(lr)
        return lr, lp, slopes

    @property
    def table_range(self) -> tuple[float, float]:
        if self.kind != "tabulated":
            return (0.0, math.inf)
        return (self.samples[0][0], self.samples[-1][0])

    def _local_slope(self, r: np.ndarray) -> np.ndarray:
        # d log(phi) / d log(r) of the piecewise power law
        lr, _, slopes = self._log_table()
        idx = np.clip(np.searchsorted(lr, np.log(r)) - 1, 0, len(slopes) - 1)
        return slopes[idx]

    # evaluation ----------------------------------------------------------
    def __call__(self, r):
        return phi_eval(self, r)

    def derivative(self, r):
        r = _positive(r)
        if self.kind == "power-law":
            return -self.p * self.c * r ** (-self.p - 1.0)
        return phi_eval(self, r) * self._local_slope(r) / r

    def escape_time(self, r):
        """Time for a point starting on the agent to reach distance ``r``.

        This is the integral of ``1/phi`` from 0 to ``r``; a point dwelling
        near a static agent for time ``tau`` is pushed at least to radius
        ``sweep_radius(tau)``.
        """
        if self.kind == "power-law":
            r = np.asarray(r, dtype=float)
            return r ** (self.p + 1.0) / ((self.p + 1.0) * self.c)
        r = float(r)
        if r <= 0:
            return 0.0
        val, _ = integrate.quad(lambda s: 1.0 / float(phi_eval(self, s)), 0.0, r, limit=200)
        return val

    def sweep_radius(self, tau: float) -> float:
        if tau <= 0:
            return 0.0
        if self.kind == "power-law":
            return float(((self.p + 1.0) * self.c * tau) ** (1.0 / (self.p + 1.0)))
        hi = 1.0
        while self.escape_time(hi) < tau:
            hi *= 2.0
        return optimize.brentq(lambda r: self.escape_time(r) - tau, 0.0, hi, xtol=1e-14)

    def to_json(self) -> dict:
        if self.kind == "power-law":
            return {"kind": "power-law", "p": self.p, "c": self.c}
        return {"kind": "tabulated", "samples": [list(s) for s in self.samples]}

    @classmethod
    def from_json(cls, obj: dict) -> "ScareFunction":
        kind = obj.get("kind")
        if kind == "power-law":
            return cls.power_law(float(obj["p"]), float(obj.get("c", 1.0)))
        if kind == "tabulated":
            return cls.tabulated(obj["samples"])
        raise DomainError(f"unknown scare function kind {kind!r}")


def _positive(r):
    arr = np.asarray(r, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("scare function evaluated at r <= 0")
    return arr


def phi_eval(f: ScareFunction, r):
    """Evaluate ``phi(r)``; scalars in, scalars out."""
    arr = _positive(r)
    if f.kind == "power-law":
        out = f.c * arr ** (-f.p)
    else:
        lr, lp, slopes = f._log_table()
        x = np.log(arr)
        out = np.exp(np.interp(x, lr, lp))
        # power-law continuation past either end of the table
        lo, hi = x < lr[0], x > lr[-1]
        out = np.where(lo, np.exp(lp[0] + slopes[0] * (x - lr[0])), out)
        out = np.where(hi, np.exp(lp[-1] + slopes[-1] * (x - lr[-1])), out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of classifying a scare function in dimension ``dimension``.

    Boolean fields are ``None`` when the numeric test abstained; the names of
    abstaining conditions are listed in ``abstained``.
    """

    a1: bool | None
    a2: bool | None
    a2prime: bool | None
    a2prime_witness: float | None
    necessary_integral_diverges: bool | None
    ec2_limsup_infinite: bool | None
    ndiv_nonpositive_near_zero: bool | None
    method: str
    dimension: int
    abstained: tuple = ()

    def __post_init__(self):
        if self.a2 is True and self.necessary_integral_diverges is False:
            raise AssertionError("condition A2 holds but the necessary integral is finite")
        if self.method == "analytic" and self.a2prime is True and self.a2 is not True:
            raise AssertionError("A2' without A2 for a power law")

    def to_json(self) -> dict:
        return {
            "a1": self.a1,
            "a2": self.a2,
            "a2prime": self.a2prime,
            "a2prime_witness": self.a2prime_witness,
            "necessary_integral_diverges": self.necessary_integral_diverges,
            "ec2_limsup_infinite": self.ec2_limsup_infinite,
            "ndiv_nonpositive_near_zero": self.ndiv_nonpositive_near_zero,
            "method": self.method,
            "dimension": self.dimension,
            "abstained": list(self.abstained),
        }


def classify(f: ScareFunction, d: int) -> ConditionReport:
    if d < 2:
        raise DomainError("dimension must be at least 2")
    if f.kind == "power-law":
        return _classify_power_law(f, d)
    return _classify_tabulated(f, d)


def _classify_power_law(f: ScareFunction, d: int) -> ConditionReport:
    p = f.p
    a1 = p > 0
    a2 = p > d
    return ConditionReport(
        a1=a1,
        a2=a2,
        a2prime=a2,
        a2prime_witness=0.75 if a2 else None,
        necessary_integral_diverges=p >= d - 1,
        ec2_limsup_infinite=p > d - 1,
        ndiv_nonpositive_near_zero=p >= d - 1,
        method="analytic",
        dimension=d,
    )


def _limit_is_zero(values: np.ndarray) -> bool:
    tail = values[-3:]
    return bool(np.all(np.isfinite(tail)) and np.all(np.diff(tail) < 0) and np.all(tail < _LIMIT_THRESHOLD))


def _classify_tabulated(f: ScareFunction, d: int) -> ConditionReport:
    r = 2.0 ** (-_LIMIT_KS.astype(float))
    rmin, rmax = f.table_range
    abstained = []

    def in_table(x):
        return bool(np.all(x >= rmin) and np.all(x <= rmax))

    phi_r = phi_eval(f, r)
    # A1 on the table: strictly decreasing and positive by construction; limits
    # are judged from the end slopes.
    _, _, slopes = f._log_table()
    a1 = bool(slopes[0] < 0 and slopes[-1] < 0)

    # A2 with the representative kappa = 1
    a2 = None
    arg = np.sqrt(r)
    if in_table(r) and in_table(arg):
        ratio = (r ** (d / 2) * phi_eval(f, arg) + 1.0) / (r**d * phi_r)
        if _limit_is_zero(ratio):
            a2 = True
    if a2 is None:
        abstained.append("a2")

    a2prime, witness = None, None
    for b in _A2PRIME_WITNESSES:
        arg = r**b
        if not (in_table(r) and in_table(arg)):
            continue
        ratio = (r ** (b * d) * phi_eval(f, arg) + 1.0) / (r**d * phi_r)
        if _limit_is_zero(ratio):
            a2prime, witness = True, b
            break
    if a2prime is None:
        abstained.append("a2prime")

    necessary = _tabulated_integral(f, d)[0]
    if necessary is None:
        abstained.append("necessary_integral_diverges")

    ec2 = None
    if in_table(r):
        g = r ** (d - 1) * phi_r
        tail = g[-_DIVERGENCE_RUN:]
        if np.all(np.diff(tail) > 0) and tail[-1] >= 2 * tail[0]:
            ec2 = True
        elif np.all(np.diff(tail) <= _REL_TOL * tail[1:]):
            ec2 = False
    if ec2 is None:
        abstained.append("ec2_limsup_infinite")

    ndiv = None
    if in_table(r):
        div = f.derivative(r) + (d - 1) / r * phi_r
        if np.all(div <= _REL_TOL * (d - 1) / r * phi_r):
            ndiv = True
        elif np.all(div[-_DIVERGENCE_RUN:] > 0):
            ndiv = False
    if ndiv is None:
        abstained.append("ndiv_nonpositive_near_zero")

    if a2 is True and necessary is False:
        # the numeric tests disagree with the implication; do not guess
        a2 = None
        abstained.append("a2")
    return ConditionReport(
        a1=a1,
        a2=a2,
        a2prime=a2prime,
        a2prime_witness=witness,
        necessary_integral_diverges=necessary,
        ec2_limsup_infinite=ec2,
        ndiv_nonpositive_near_zero=ndiv,
        method="numeric-limit",
        dimension=d,
        abstained=tuple(abstained),
    )


def _shell_integrals(f: ScareFunction, d: int, ks) -> np.ndarray:
    out = []
    for k in ks:
        a, b = 2.0 ** (-k - 1), 2.0 ** (-k)
        val, _ = integrate.quad(lambda s: s ** (d - 2) * float(phi_eval(f, s)), a, b)
        out.append(val)
    return np.array(out)


def _tabulated_integral(f: ScareFunction, d: int):
    """Return (diverges, M) for the tabulated kind; (None, None) on abstention."""
    rmin, _ = f.table_range
    kmax = int(math.floor(-math.log2(rmin))) - 1
    if kmax < _DIVERGENCE_RUN + 1:
        return None, None
    ks = np.arange(0, kmax + 1)
    shells = _shell_integrals(f, d, ks)
    tail = shells[-_DIVERGENCE_RUN:]
    if np.all(np.diff(tail) >= -_REL_TOL * tail[1:]):
        return True, math.inf
    q = tail[1:] / tail[:-1]
    if np.all(q < 1):
        # geometric tail estimate for the unresolved part near 0
        ratio = float(q.max())
        total = float(shells.sum()) + float(tail[-1]) * ratio / (1.0 - ratio)
        return False, total
    return None, None


def necessary_integral(f: ScareFunction, d: int) -> float:
    """``M = int_0^1 r**(d-2) phi(r) dr``; ``math.inf`` when it diverges.

    Returns ``math.nan`` for a tabulated profile whose table does not reach
    small enough radii to decide either way.
    """
    if d < 2:
        raise DomainError("dimension must be at least 2")
    if f.kind == "power-law":
        if f.p >= d - 1:
            return math.inf
        return f.c / (d - 1 - f.p)
    diverges, total = _tabulated_integral(f, d)
    if diverges is None:
        return math.nan
    return total
