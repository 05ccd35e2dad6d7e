"""Scenario files: JSON descriptions of a run (scare function, sets, tube, budget)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .geometry import sets as _sets
from .geometry.sets import SetState
from .geometry.tube import LevelSetGrid, MovingTube, ball_tube, ellipse_tube, levelset_tube
from .scare import ScareFunction

SCHEMA_VERSION = 1
DEFAULT_LADDER = [(20, 32), (40, 64), (80, 128)]


def parse_phi(text: str) -> ScareFunction:
    """``power:<p>`` or ``power:<p>:<c>``, or ``table:<csv path>`` with columns r, phi."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "power":
            parts = rest.split(":")
            c = float(parts[1]) if len(parts) > 1 else 1.0
            return ScareFunction.power_law(float(parts[0]), c)
        if kind == "table":
            data = np.loadtxt(rest, delimiter=",", ndmin=2)
            return ScareFunction.tabulated(data.tolist())
    except (ValueError, IndexError, OSError) as exc:
        raise DomainError(f"cannot parse scare function {text!r}: {exc}") from exc
    raise DomainError(f"unknown scare function spec {text!r}; expected power:<p> or table:<path>")


def parse_ladder(text: str) -> list[tuple[int, int]]:
    """``20x32,40x64`` -> [(20, 32), (40, 64)]."""
    try:
        ladder = [tuple(int(v) for v in item.lower().split("x")) for item in text.split(",") if item]
    except ValueError as exc:
        raise DomainError(f"cannot parse ladder {text!r}") from exc
    if not ladder or any(len(r) != 2 or min(r) < 1 for r in ladder):
        raise DomainError(f"ladder entries must look like nxN with positive integers: {text!r}")
    return ladder


def make_set(spec: dict, seed: int = 0, base: Path | None = None) -> SetState:
    """Build a SetState from a named primitive."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError(f"set spec needs a 'kind': {spec!r}")
    kind = spec["kind"]
    n = int(spec.get("vertices", 256))
    spacing = float(spec.get("spacing", 0.05))
    jitter = float(spec.get("jitter", 0.0))
    common = {"n_boundary": n, "spacing": spacing, "jitter": jitter, "seed": seed}
    try:
        if kind == "disk":
            return _sets.disk(spec.get("center", (0.0, 0.0)), float(spec["radius"]), **common)
        if kind == "ellipse":
            return _sets.ellipse(spec.get("center", (0.0, 0.0)), float(spec["a"]), float(spec["b"]), **common)
        if kind == "square":
            return _sets.square(spec.get("center", (0.0, 0.0)), float(spec["half"]), **common)
        if kind == "polygon":
            return _sets.polygon(spec["vertices"], **common)
        if kind == "levelset":
            grid = LevelSetGrid.load(_resolve(spec["grid"], base))
            return _levelset_set(grid, n, spacing, jitter, seed)
    except KeyError as exc:
        raise DomainError(f"set spec of kind {kind!r} misses field {exc}") from exc
    raise DomainError(f"unknown set kind {kind!r}")


def _levelset_set(grid: LevelSetGrid, n: int, spacing: float, jitter: float, seed: int) -> SetState:
    from skimage import measure

    cs = measure.find_contours(grid.values, 0.0)
    if not cs:
        raise DomainError("level-set grid has no zero contour")
    c = max(cs, key=len)
    pts = np.column_stack([grid.origin[0] + c[:, 1] * grid.spacing[0], grid.origin[1] + c[:, 0] * grid.spacing[1]])
    bnd = _sets.resample_closed(pts, n)
    return SetState(bnd, _sets.grid_samples(bnd, spacing, jitter, seed), {"kind": "levelset"})


def _resolve(path, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def make_tube(spec, T: float, base: Path | None = None) -> MovingTube | None:
    """A tube from its spec; ``None`` or ``"auto"`` means build from the sets."""
    if spec is None or spec == "auto":
        return None
    kind = spec.get("kind")
    try:
        if kind == "ball":
            return ball_tube(T, spec["center0"], spec["radius0"], spec.get("center1"), spec.get("radius1"))
        if kind == "ellipse":
            return ellipse_tube(T, spec["center0"], spec["a0"], spec["b0"], spec.get("center1"),
                                spec.get("a1"), spec.get("b1"))
        if kind == "levelset":
            return levelset_tube(T, LevelSetGrid.load(_resolve(spec["grid0"], base)),
                                 LevelSetGrid.load(_resolve(spec["grid1"], base)))
    except KeyError as exc:
        raise DomainError(f"tube spec of kind {kind!r} misses field {exc}") from exc
    raise DomainError(f"unknown tube kind {kind!r}")


@dataclass
class Scenario:
    raw: dict
    scare: ScareFunction
    dimension: int
    T: float
    eps: float
    ladder: list
    seed: int = 0
    omega0: SetState | None = None
    omega1: SetState | None = None
    tube: MovingTube | None = None
    delta: float | None = None
    out: str | None = None
    profile: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return scenario_hash(self.raw)


def scenario_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(raw, path.parent)


def scenario_from_dict(raw: dict, base: Path | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise DomainError("scenario must be a JSON object")
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise DomainError(f"unsupported scenario version {version}")
    scare_spec = raw.get("scare")
    if isinstance(scare_spec, str):
        scare = parse_phi(scare_spec)
    elif isinstance(scare_spec, dict):
        scare = ScareFunction.from_json(scare_spec)
    else:
        raise DomainError("scenario needs a 'scare' entry")
    T = float(raw.get("T", 1.0))
    eps = float(raw.get("eps", 0.05))
    if T <= 0 or eps <= 0:
        raise DomainError("scenario needs T > 0 and eps > 0")
    dim = int(raw.get("dimension", 2))
    ladder = raw.get("ladder", DEFAULT_LADDER)
    ladder = parse_ladder(ladder) if isinstance(ladder, str) else [tuple(map(int, r)) for r in ladder]
    seed = int(raw.get("seed", 0))
    omega0 = make_set(raw["omega0"], seed, base) if "omega0" in raw else None
    omega1 = make_set(raw["omega1"], seed, base) if "omega1" in raw else None
    tube = make_tube(raw.get("tube"), T, base)
    delta = raw.get("delta")
    return Scenario(raw, scare, dim, T, eps, ladder, seed, omega0, omega1, tube,
                    None if delta is None else float(delta), raw.get("out"), raw.get("profile", {}))
