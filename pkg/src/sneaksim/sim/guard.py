"""Guard perception (sight, hearing) and its finite-state machine."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

from ..classify import NoiseEvent
from ..config import SimConfig
from .geometry import Rect, Vec2, bearing, in_cone, segment_hits_rect, turn_toward, wrap
from .level import GuardSpec, LevelSpec

_EPS = 1e-9
_ARRIVE = 1e-9


class GuardMode(str, Enum):
    PATROLLING = "patrolling"
    INVESTIGATING = "investigating"
    ALERT = "alert"
    CAUGHT = "caught"


# mode changes a single guard_step may make
TRANSITIONS: dict[GuardMode, frozenset[GuardMode]] = {
    GuardMode.PATROLLING: frozenset({GuardMode.PATROLLING, GuardMode.INVESTIGATING, GuardMode.ALERT,
                                     GuardMode.CAUGHT}),
    GuardMode.INVESTIGATING: frozenset({GuardMode.INVESTIGATING, GuardMode.PATROLLING, GuardMode.ALERT,
                                        GuardMode.CAUGHT}),
    GuardMode.ALERT: frozenset({GuardMode.ALERT, GuardMode.INVESTIGATING, GuardMode.CAUGHT}),
    GuardMode.CAUGHT: frozenset({GuardMode.CAUGHT}),
}


@dataclass(frozen=True)
class PlayerState:
    pos: Vec2
    hmd_height: float = 1.7
    has_tablet: bool = False
    crouch_height: float = 1.2

    @property
    def crouching(self) -> bool:
        return self.hmd_height < self.crouch_height


@dataclass(frozen=True)
class GuardState:
    mode: GuardMode
    pos: Vec2
    facing: float
    alertness: float = 0.0
    target: Vec2 | None = None       # investigation target
    waypoint: int = 0                # patrol waypoint being approached or dwelt at
    at_waypoint: bool = True
    timer: float = 0.0               # dwell or search time spent so far
    searching: bool = False
    visible: bool = False            # sight result of the previous step
    last_seen: Vec2 | None = None

    @classmethod
    def initial(cls, spec: GuardSpec) -> GuardState:
        w0 = spec.waypoints[0]
        if w0.facing is not None:
            facing = w0.facing
        elif len(spec.waypoints) > 1:
            facing = bearing(w0.pos, spec.waypoints[1].pos)
        else:
            facing = 0.0
        return cls(GuardMode.PATROLLING, w0.pos, wrap(facing))


@dataclass(frozen=True)
class GuardEvent:
    kind: str
    payload: dict


def line_of_sight(guard: GuardState, spec: GuardSpec, player: PlayerState, level: LevelSpec | None = None,
                  obstacles: Iterable[tuple[Rect, float]] | None = None, eye_height: float = 1.6) -> bool:
    """Whether the guard sees the player's head.

    Needs range, the view cone and a clear ground-plane segment: any obstacle
    at least as tall as the lower of eye and head blocks.  A guard outside the
    room sees nothing through the walls.
    """
    if level is not None and not level.bounds.contains(guard.pos):
        return False
    if math.dist(guard.pos, player.pos) > spec.view_range:
        return False
    if not in_cone(guard.pos, guard.facing, spec.fov, player.pos):
        return False
    if obstacles is None:
        obstacles = level.obstacles_at(0.0) if level is not None else ()
    h = min(eye_height, player.hmd_height)
    for rect, height in obstacles:
        if height >= h and segment_hits_rect(guard.pos, player.pos, rect):
            return False
    return True


def hearing_check(guard: GuardState, spec: GuardSpec, noise: NoiseEvent) -> bool:
    """Pure radius test; walls and obstacles do not muffle sound."""
    radius = spec.hear_range(noise.intensity)
    return radius > 0 and math.dist(noise.pos, guard.pos) <= radius


def _move(pos: Vec2, goal: Vec2, step: float) -> tuple[Vec2, bool]:
    d = math.dist(pos, goal)
    if d <= step + _ARRIVE:
        return goal, True
    f = step / d
    return (pos[0] + f * (goal[0] - pos[0]), pos[1] + f * (goal[1] - pos[1])), False


def _nearest_waypoint(spec: GuardSpec, pos: Vec2) -> int:
    dists = [math.dist(w.pos, pos) for w in spec.waypoints]
    return dists.index(min(dists))


def _patrol(g: GuardState, spec: GuardSpec, dt: float, turn: float) -> GuardState:
    wps = spec.waypoints
    w = wps[g.waypoint]
    if not g.at_waypoint:
        if spec.move_speed == 0:
            # a stationary guard "returns" by turning back to its post
            return replace(g, at_waypoint=True, timer=0.0)
        heading = bearing(g.pos, w.pos) if g.pos != w.pos else g.facing
        pos, arrived = _move(g.pos, w.pos, spec.move_speed * dt)
        g = replace(g, pos=pos, facing=wrap(heading))
        if not arrived:
            return g
        return replace(g, at_waypoint=True, timer=0.0)
    facing = g.facing if w.facing is None else turn_toward(g.facing, w.facing, turn * dt)
    timer = g.timer + dt
    turned = w.facing is None or abs(facing - wrap(w.facing)) < 1e-12
    g = replace(g, facing=facing, timer=timer)
    if len(wps) == 1 or timer < w.dwell - _EPS or not turned:
        return g
    nxt = (g.waypoint + 1) % len(wps)
    return replace(g, waypoint=nxt, at_waypoint=False, timer=0.0)


def _investigate(g: GuardState, spec: GuardSpec, dt: float, turn: float, search_time: float) -> GuardState:
    if not g.searching:
        if spec.move_speed > 0:
            heading = bearing(g.pos, g.target) if g.pos != g.target else g.facing
            pos, arrived = _move(g.pos, g.target, spec.move_speed * dt)
            g = replace(g, pos=pos, facing=wrap(heading))
        else:
            goal = bearing(g.pos, g.target) if g.pos != g.target else g.facing
            facing = turn_toward(g.facing, goal, turn * dt)
            arrived = abs(facing - wrap(goal)) < 1e-12
            g = replace(g, facing=facing)
        if arrived:
            g = replace(g, searching=True, timer=0.0)
        return g
    timer = g.timer + dt
    if timer < search_time - _EPS:
        return replace(g, timer=timer)
    wp = _nearest_waypoint(spec, g.pos)
    return replace(g, mode=GuardMode.PATROLLING, target=None, searching=False, timer=0.0,
                   waypoint=wp, at_waypoint=g.pos == spec.waypoints[wp].pos)


def guard_step(state: GuardState, spec: GuardSpec, player: PlayerState, noises: Sequence[NoiseEvent],
               level: LevelSpec, dt: float, cfg: SimConfig = SimConfig(),
               obstacles: Iterable[tuple[Rect, float]] | None = None) -> tuple[GuardState, list[GuardEvent]]:
    """Advance the guard one tick.

    Order within a tick: hearing, then movement, then sight and alertness.
    Caught is absorbing; only a level restart builds a fresh state.
    """
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    if state.mode is GuardMode.CAUGHT:
        return state, []
    events: list[GuardEvent] = []
    g = state
    turn = math.radians(cfg.turn_rate_deg)

    if g.mode is not GuardMode.ALERT:
        heard = [n for n in noises if hearing_check(g, spec, n)]
        if heard:
            latest = max(heard, key=lambda n: n.t)
            if g.mode is GuardMode.PATROLLING:
                events.append(GuardEvent("HeardNoise", {"pos": list(latest.pos),
                                                        "intensity": latest.intensity.value,
                                                        "mode": GuardMode.INVESTIGATING.value}))
            # a newer noise replaces the current target and restarts the search
            g = replace(g, mode=GuardMode.INVESTIGATING, target=latest.pos, searching=False, timer=0.0)

    if g.mode is GuardMode.PATROLLING:
        g = _patrol(g, spec, dt, turn)
    elif g.mode is GuardMode.INVESTIGATING:
        g = _investigate(g, spec, dt, turn, cfg.search_time)
    elif g.mode is GuardMode.ALERT:
        g = replace(g, facing=wrap(bearing(g.pos, player.pos)) if g.pos != player.pos else g.facing)

    obs = level.obstacles_at(0.0) if obstacles is None else list(obstacles)
    visible = line_of_sight(g, spec, player, level, obs, cfg.eye_height)
    if visible:
        alert = min(1.0, g.alertness + cfg.fill_rate * dt)
        if not g.visible:
            events.append(GuardEvent("Spotted", {"guard_pos": list(g.pos), "player_pos": list(player.pos)}))
        g = replace(g, mode=GuardMode.ALERT, alertness=alert, visible=True, last_seen=player.pos,
                    searching=False, target=None, timer=0.0)
    else:
        alert = max(0.0, g.alertness - cfg.decay_rate * dt)
        g = replace(g, alertness=alert, visible=False)
        if state.visible:
            events.append(GuardEvent("LostSight", {"last_seen": list(g.last_seen)}))
            g = replace(g, mode=GuardMode.INVESTIGATING, target=g.last_seen, searching=False, timer=0.0)

    if g.alertness >= 1.0 - _EPS:
        g = replace(g, mode=GuardMode.CAUGHT, alertness=1.0)
        events.append(GuardEvent("Caught", {"guard_pos": list(g.pos), "player_pos": list(player.pos)}))
    return g, events
