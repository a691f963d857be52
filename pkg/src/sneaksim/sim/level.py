"""Level files: room geometry with its pickups, plus the guard that watches it."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..classify import StepIntensity
from ..errors import InvariantViolation, LevelParseError
from .geometry import Rect, Vec2, segment_hits_rect

LEVEL_FORMAT_VERSION = 1
DEFAULT_HEAR_RANGES = {StepIntensity.SNEAK_STEP: 0.0, StepIntensity.WALK_STEP: 3.0, StepIntensity.STOMP: 6.0}


@dataclass(frozen=True)
class Waypoint:
    pos: Vec2
    dwell: float = 0.0
    facing: float | None = None   # radians; None keeps the arrival heading


@dataclass(frozen=True)
class GuardSpec:
    waypoints: tuple[Waypoint, ...]
    move_speed: float = 1.0
    fov_deg: float = 90.0
    view_range: float = 10.0
    hear_ranges: dict = field(default_factory=lambda: dict(DEFAULT_HEAR_RANGES))

    @property
    def fov(self) -> float:
        return math.radians(self.fov_deg)

    def hear_range(self, intensity: StepIntensity) -> float:
        return self.hear_ranges[intensity]


@dataclass(frozen=True)
class Obstacle:
    """Box footprint with a height.  A non-empty ``path`` (offsets from the
    base footprint) makes it move back and forth along the path at ``speed``."""

    rect: Rect
    height: float
    path: tuple[Vec2, ...] = ()
    speed: float = 0.0

    @property
    def moving(self) -> bool:
        return len(self.path) > 1 and self.speed > 0

    def offset_at(self, t: float) -> Vec2:
        if not self.moving:
            return self.path[0] if self.path else (0.0, 0.0)
        legs = [math.dist(a, b) for a, b in zip(self.path, self.path[1:])]
        total = sum(legs)
        s = math.fmod(t * self.speed, 2 * total)
        if s > total:
            s = 2 * total - s
        for (a, b), d in zip(zip(self.path, self.path[1:]), legs):
            if s <= d:
                f = s / d if d else 0.0
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= d
        return self.path[-1]

    def footprint_at(self, t: float) -> Rect:
        dx, dz = self.offset_at(t)
        return self.rect.translated(dx, dz)

    def swept(self) -> Rect:
        """Bounding box of every footprint the obstacle can occupy."""
        if not self.path:
            return self.rect
        out = self.rect.translated(*self.path[0])
        for off in self.path[1:]:
            out = out.union(self.rect.translated(*off))
        return out


@dataclass(frozen=True)
class Laser:
    a: Vec2
    b: Vec2
    height: float


@dataclass(frozen=True)
class LevelSpec:
    id: int
    name: str
    description: str
    concept: str
    bounds: Rect
    teleporter: Vec2
    tablet: Vec2
    guard: GuardSpec
    obstacles: tuple[Obstacle, ...] = ()
    lasers: tuple[Laser, ...] = ()
    tablet_hidden: bool = False

    @property
    def guard_outside(self) -> bool:
        return not any(self.bounds.contains(w.pos) for w in self.guard.waypoints)

    def obstacles_at(self, t: float) -> list[tuple[Rect, float]]:
        return [(o.footprint_at(t), o.height) for o in self.obstacles]


# --- parsing ----------------------------------------------------------------

def _vec(value, what: str) -> Vec2:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise LevelParseError(f"{what} must be a pair of numbers, got {value!r}")
    x, z = float(value[0]), float(value[1])
    if not (math.isfinite(x) and math.isfinite(z)):
        raise LevelParseError(f"{what} must be finite")
    return (x, z)


def _num(table: dict, key: str, what: str, default=None) -> float:
    if key not in table:
        if default is None:
            raise LevelParseError(f"{what}: missing {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise LevelParseError(f"{what}.{key} must be a finite number, got {v!r}")
    return float(v)


def _rect(value, what: str) -> Rect:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise LevelParseError(f"{what} must be [x0, z0, x1, z1]")
    a = _vec(value[:2], what)
    b = _vec(value[2:], what)
    try:
        return Rect(a[0], a[1], b[0], b[1])
    except ValueError:
        raise InvariantViolation(f"{what} is empty: {list(value)}") from None


def _check_keys(table: dict, allowed: set[str], what: str) -> None:
    extra = set(table) - allowed
    if extra:
        raise LevelParseError(f"unknown key(s) in {what}: {', '.join(sorted(extra))}")


def level_from_dict(data: dict[str, Any]) -> LevelSpec:
    version = data.get("format_version")
    if version != LEVEL_FORMAT_VERSION:
        raise LevelParseError(f"unsupported level format_version {version!r}")
    _check_keys(data, {"format_version", "id", "name", "description", "concept", "bounds", "teleporter",
                       "tablet", "tablet_hidden", "guard", "obstacles", "lasers"}, "level")
    lid = data.get("id")
    if isinstance(lid, bool) or not isinstance(lid, int):
        raise LevelParseError("level id must be an integer")
    text = {}
    for key in ("name", "description", "concept"):
        v = data.get(key, "")
        if not isinstance(v, str):
            raise LevelParseError(f"{key} must be a string")
        text[key] = v

    g = data.get("guard")
    if not isinstance(g, dict):
        raise LevelParseError("level needs a [guard] table")
    _check_keys(g, {"move_speed", "fov_deg", "view_range", "hear_ranges", "waypoints"}, "[guard]")
    wps = []
    raw_wps = g.get("waypoints")
    if not isinstance(raw_wps, list) or not raw_wps:
        raise LevelParseError("guard needs at least one [[guard.waypoints]] entry")
    for i, w in enumerate(raw_wps):
        if not isinstance(w, dict):
            raise LevelParseError(f"guard waypoint {i} must be a table")
        _check_keys(w, {"pos", "dwell", "facing"}, f"guard waypoint {i}")
        facing = w.get("facing")
        if facing is not None:
            facing = math.radians(_num(w, "facing", f"guard waypoint {i}"))
        if "pos" not in w:
            raise LevelParseError(f"guard waypoint {i}: missing 'pos'")
        wps.append(Waypoint(_vec(w["pos"], f"guard waypoint {i}.pos"),
                            _num(w, "dwell", f"guard waypoint {i}", 0.0), facing))
    hear = dict(DEFAULT_HEAR_RANGES)
    raw_hear = g.get("hear_ranges", {})
    if not isinstance(raw_hear, dict):
        raise LevelParseError("guard.hear_ranges must be a table")
    for key in raw_hear:
        try:
            intensity = StepIntensity(key)
        except ValueError:
            raise LevelParseError(f"unknown intensity {key!r} in guard.hear_ranges") from None
        hear[intensity] = _num(raw_hear, key, "guard.hear_ranges")
    guard = GuardSpec(tuple(wps), _num(g, "move_speed", "guard", 1.0), _num(g, "fov_deg", "guard", 90.0),
                      _num(g, "view_range", "guard", 10.0), hear)

    obstacles = []
    for i, o in enumerate(data.get("obstacles", [])):
        if not isinstance(o, dict):
            raise LevelParseError(f"obstacle {i} must be a table")
        _check_keys(o, {"rect", "height", "path", "speed"}, f"obstacle {i}")
        if "rect" not in o:
            raise LevelParseError(f"obstacle {i}: missing 'rect'")
        path = tuple(_vec(p, f"obstacle {i}.path") for p in o.get("path", []))
        obstacles.append(Obstacle(_rect(o["rect"], f"obstacle {i}.rect"), _num(o, "height", f"obstacle {i}"),
                                  path, _num(o, "speed", f"obstacle {i}", 0.0)))
    lasers = []
    for i, la in enumerate(data.get("lasers", [])):
        if not isinstance(la, dict):
            raise LevelParseError(f"laser {i} must be a table")
        _check_keys(la, {"a", "b", "height"}, f"laser {i}")
        if "a" not in la or "b" not in la:
            raise LevelParseError(f"laser {i} needs endpoints 'a' and 'b'")
        lasers.append(Laser(_vec(la["a"], f"laser {i}.a"), _vec(la["b"], f"laser {i}.b"),
                            _num(la, "height", f"laser {i}")))
    for key in ("bounds", "teleporter", "tablet"):
        if key not in data:
            raise LevelParseError(f"level needs {key!r}")
    hidden = data.get("tablet_hidden", False)
    if not isinstance(hidden, bool):
        raise LevelParseError("tablet_hidden must be true or false")
    return LevelSpec(lid, text["name"], text["description"], text["concept"], _rect(data["bounds"], "bounds"),
                     _vec(data["teleporter"], "teleporter"), _vec(data["tablet"], "tablet"), guard,
                     tuple(obstacles), tuple(lasers), hidden)


def validate_level(level: LevelSpec, grab_radius: float = 0.5) -> LevelSpec:
    """Raise InvariantViolation unless the level is playable and self-consistent."""
    b = level.bounds
    g = level.guard
    if not 1 <= level.id <= 99:
        raise InvariantViolation(f"level id {level.id} out of range 1..99")
    for name, p in (("teleporter", level.teleporter), ("tablet", level.tablet)):
        if not b.contains(p):
            raise InvariantViolation(f"{name} {p} lies outside the bounds")
        for i, o in enumerate(level.obstacles):
            if o.swept().contains(p):
                raise InvariantViolation(f"{name} {p} lies inside obstacle {i}")
    if math.dist(level.teleporter, level.tablet) <= grab_radius:
        raise InvariantViolation("tablet overlaps the teleporter")
    for i, o in enumerate(level.obstacles):
        if not o.height > 0:
            raise InvariantViolation(f"obstacle {i} needs a positive height")
        if o.speed < 0:
            raise InvariantViolation(f"obstacle {i} has a negative speed")
        if not o.swept().inside(b):
            raise InvariantViolation(f"obstacle {i} leaves the bounds")
    for i, la in enumerate(level.lasers):
        if not (b.contains(la.a) and b.contains(la.b)):
            raise InvariantViolation(f"laser {i} lies outside the bounds")
        if la.a == la.b:
            raise InvariantViolation(f"laser {i} has zero length")
        if not la.height > 0:
            raise InvariantViolation(f"laser {i} needs a positive beam height")

    if not 0 < g.fov_deg <= 360:
        raise InvariantViolation(f"guard fov_deg {g.fov_deg} outside (0, 360]")
    if not g.view_range > 0:
        raise InvariantViolation("guard view_range must be positive")
    if g.move_speed < 0:
        raise InvariantViolation("guard move_speed must be non-negative")
    if g.hear_ranges[StepIntensity.SNEAK_STEP] != 0:
        raise InvariantViolation("sneak steps must be inaudible (hear range 0)")
    ranges = [g.hear_ranges[i] for i in StepIntensity]
    if any(r < 0 for r in ranges) or ranges != sorted(ranges):
        raise InvariantViolation(f"hear ranges must be non-negative and grow with loudness, got {ranges}")
    for i, w in enumerate(g.waypoints):
        if w.dwell < 0:
            raise InvariantViolation(f"guard waypoint {i} has a negative dwell")
    inside = [b.contains(w.pos) for w in g.waypoints]
    if any(inside) and not all(inside):
        raise InvariantViolation("guard waypoints must all lie inside the room or all outside it")
    if len(g.waypoints) > 1 and g.move_speed == 0 and len({w.pos for w in g.waypoints}) > 1:
        raise InvariantViolation("a guard with move_speed 0 cannot have distinct waypoint positions")
    if all(inside):
        n = len(g.waypoints)
        for i in range(n if n > 1 else 0):
            p, q = g.waypoints[i].pos, g.waypoints[(i + 1) % n].pos
            for j, o in enumerate(level.obstacles):
                if segment_hits_rect(p, q, o.swept()):
                    raise InvariantViolation(f"guard leg {i} crosses obstacle {j}")
    return level


def load_level(source: str | Path, grab_radius: float = 0.5) -> LevelSpec:
    path = Path(source)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise LevelParseError(f"cannot read level {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise LevelParseError(f"{path}: {exc}") from None
    return validate_level(level_from_dict(data), grab_radius)


def bundled_level_paths() -> list[Path]:
    root = resources.files(__package__).joinpath("levels")
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_levels() -> list[LevelSpec]:
    levels = [load_level(p) for p in bundled_level_paths()]
    return sorted(levels, key=lambda lv: lv.id)


def bundled_level(level_id: int) -> LevelSpec:
    for lv in bundled_levels():
        if lv.id == level_id:
            return lv
    raise LevelParseError(f"no bundled level {level_id}")


def load_levels(source: str | Path | None = None, ids: list[int] | None = None) -> list[LevelSpec]:
    """Levels from a directory of TOML files (bundled set if None), optionally a subset by id."""
    if source is None:
        levels = bundled_levels()
    else:
        path = Path(source)
        files = sorted(path.glob("*.toml")) if path.is_dir() else [path]
        if not files:
            raise LevelParseError(f"no level files in {path}")
        levels = sorted((load_level(f) for f in files), key=lambda lv: lv.id)
    ids_seen = [lv.id for lv in levels]
    if len(set(ids_seen)) != len(ids_seen):
        raise InvariantViolation("duplicate level ids")
    if ids is not None:
        by_id = {lv.id: lv for lv in levels}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise LevelParseError(f"unknown level id(s): {', '.join(map(str, missing))}")
        levels = [by_id[i] for i in ids]
    return levels
