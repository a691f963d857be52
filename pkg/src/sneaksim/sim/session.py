"""Fixed-tick session simulation and the session log."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..classify import Classification, GaitStateSample, NoiseEvent, StepIntensity
from ..config import Config
from ..errors import EmptyDevice, StreamExhausted, TraceError
from ..motion import DeviceId, MotionTrace
from .geometry import Vec2, segment_intersection
from .guard import GuardState, PlayerState, guard_step
from .level import LevelSpec

SESSION_FORMAT_VERSION = 1
EVENT_KINDS = ("HeardNoise", "Spotted", "LostSight", "Caught", "LevelRestart", "TabletGrabbed",
               "LaserTripped", "LevelComplete")
DETECTION_KINDS = ("HeardNoise", "Spotted")
_ROUND = 9


def _r(x: float) -> float:
    return round(float(x), _ROUND)


def _rv(p) -> list[float]:
    return [_r(p[0]), _r(p[1])]


@dataclass(frozen=True)
class PlayerStream:
    """Player input for the simulator, in the recording's own coordinates.

    ``pos`` rows are ground-plane (x, z) head positions at times ``t``; the
    simulator only uses their frame-to-frame displacement.
    """

    t: np.ndarray
    pos: np.ndarray
    height: np.ndarray
    noises: tuple[NoiseEvent, ...] = ()
    states: tuple[GaitStateSample, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        pos = np.asarray(self.pos, dtype=float).reshape(-1, 2)
        height = np.broadcast_to(np.asarray(self.height, dtype=float), t.shape).copy()
        if len(t) < 1 or len(pos) != len(t):
            raise TraceError("player stream needs matching times and positions")
        if np.any(np.diff(t) <= 0):
            raise TraceError("player stream times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "noises", tuple(sorted(self.noises, key=lambda n: n.t)))

    @property
    def start(self) -> float:
        return float(self.t[0])

    @property
    def end(self) -> float:
        return float(self.t[-1])

    @classmethod
    def from_classification(cls, trace: MotionTrace, result: Classification, mechanism: str,
                            player_height: float = 1.7) -> PlayerStream:
        if mechanism == "gamepad":
            if result.positions is None:
                raise TraceError("gamepad classification carries no positions")
            p = result.positions
            return cls(p[:, 0], p[:, 1:3], np.full(len(p), player_height), result.noises, result.states)
        if DeviceId.HMD not in trace:
            raise EmptyDevice(DeviceId.HMD)
        hmd = trace.track(DeviceId.HMD)
        return cls(hmd.t, hmd.pos[:, [0, 2]], hmd.pos[:, 1], result.noises, result.states)


@dataclass(frozen=True)
class SimEvent:
    seq: int
    t: float
    level: int
    kind: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seq": self.seq, "t": self.t, "level": self.level, "kind": self.kind, **self.payload}


@dataclass
class LevelLog:
    id: int
    ticks: int = 0
    detections: int = 0
    restarts: int = 0
    completed: bool = False
    dt: float = 1 / 90

    @property
    def playtime(self) -> float:
        return _r(self.ticks * self.dt)

    def to_dict(self) -> dict:
        return {"id": self.id, "playtime": self.playtime, "detections": self.detections,
                "restarts": self.restarts, "completed": self.completed}


@dataclass
class SessionLog:
    seed: int
    config_fingerprint: str
    levels: list[LevelLog]
    events: list[SimEvent]
    complete: bool
    mechanism: str | None = None
    dt: float = 1 / 90

    @property
    def playtime(self) -> float:
        return _r(sum(lv.ticks for lv in self.levels) * self.dt)

    @property
    def detections(self) -> int:
        return sum(lv.detections for lv in self.levels)

    @property
    def restarts(self) -> int:
        return sum(lv.restarts for lv in self.levels)

    def summary(self) -> str:
        return f"playtime={self.playtime} detections={self.detections} restarts={self.restarts}"

    def to_dict(self) -> dict:
        return {
            "format_version": SESSION_FORMAT_VERSION,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "mechanism": self.mechanism,
            "dt": self.dt,
            "complete": self.complete,
            "levels": [lv.to_dict() for lv in self.levels],
            "totals": {"playtime": self.playtime, "detections": self.detections, "restarts": self.restarts},
            "events": [e.to_dict() for e in self.events],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")


def session_from_dict(data: dict) -> dict:
    """Validate a parsed session log; returns it unchanged."""
    if data.get("format_version") != SESSION_FORMAT_VERSION:
        raise TraceError(f"unsupported session log format_version {data.get('format_version')!r}")
    for key in ("levels", "totals", "events", "complete"):
        if key not in data:
            raise TraceError(f"session log lacks {key!r}")
    return data


def load_session(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"),
                          parse_constant=lambda c: (_ for _ in ()).throw(ValueError(c)))
    except (OSError, ValueError) as exc:
        raise TraceError(f"cannot read session log {path}: {exc}") from None
    if not isinstance(data, dict):
        raise TraceError(f"{path}: session log must be a JSON object")
    return session_from_dict(data)


def laser_check(player: PlayerState, level: LevelSpec, prev_pos: Vec2) -> list[Vec2]:
    """Crossing points of beams the move ``prev_pos -> player.pos`` breaks.

    A beam only trips when the head is at or above it; the start point is
    excluded so a player resting on a beam does not trip it twice.
    """
    if prev_pos == player.pos:
        return []
    hits = []
    for laser in level.lasers:
        if player.hmd_height < laser.height:
            continue
        hit = segment_intersection(prev_pos, player.pos, laser.a, laser.b)
        if hit is not None and hit != prev_pos:
            hits.append(hit)
    return hits


class _Run:
    """Mutable per-session state for :func:`simulate_session`."""

    def __init__(self, levels: Sequence[LevelSpec], config: Config, seed: int, mechanism: str | None):
        self.levels = list(levels)
        self.cfg = config.sim
        self.logs = [LevelLog(lv.id, dt=self.cfg.dt) for lv in self.levels]
        self.events: list[SimEvent] = []
        self.index = 0
        self.log = SessionLog(seed, config.fingerprint(), self.logs, self.events, False, mechanism, self.cfg.dt)

    @property
    def level(self) -> LevelSpec:
        return self.levels[self.index]

    def emit(self, t: float, kind: str, payload: dict | None = None) -> None:
        lv = self.logs[self.index]
        if kind in DETECTION_KINDS:
            lv.detections += 1
        if kind == "Caught":
            lv.restarts += 1
        self.events.append(SimEvent(len(self.events), _r(t), self.level.id, kind, payload or {}))

    def enter(self) -> None:
        self.guard = GuardState.initial(self.level.guard)
        self.pos = self.level.teleporter
        self.has_tablet = False
        self.level_ticks = 0


def simulate_session(levels: Sequence[LevelSpec], stream: PlayerStream, config: Config = Config(),
                     seed: int = 0, mechanism: str | None = None) -> SessionLog:
    """Play ``levels`` in order with the given player stream.

    Each tick advances the player by the stream's displacement (clamped to the
    room), checks lasers, steps the guard with the noises of that tick, then
    handles capture, tablet pickup and completion.  Raises StreamExhausted,
    carrying the partial log, if the stream ends first.  The simulation has
    no random elements; ``seed`` is recorded for provenance.
    """
    if not levels:
        raise ValueError("no levels to play")
    cfg = config.sim
    dt = cfg.dt
    run = _Run(levels, config, seed, mechanism)
    run.enter()

    n_ticks = int(math.floor((stream.end - stream.start) / dt + 1e-9))
    ticks = stream.start + np.arange(n_ticks + 1) * dt
    raw = np.column_stack([np.interp(ticks, stream.t, stream.pos[:, k]) for k in range(2)])
    heights = np.interp(ticks, stream.t, stream.height)
    noise_tick = np.searchsorted(ticks, [n.t for n in stream.noises], side="left")
    noise_tick = np.maximum(noise_tick, 1)
    by_tick: dict[int, list[NoiseEvent]] = {}
    for n, k in zip(stream.noises, noise_tick.tolist()):
        by_tick.setdefault(k, []).append(n)

    for k in range(1, n_ticks + 1):
        t = float(ticks[k])
        lv = run.level
        prev = run.pos
        moved = (run.pos[0] + raw[k, 0] - raw[k - 1, 0], run.pos[1] + raw[k, 1] - raw[k - 1, 1])
        run.pos = lv.bounds.clamp(moved)
        offset = (run.pos[0] - raw[k, 0], run.pos[1] - raw[k, 1])
        height = float(heights[k])
        player = PlayerState(run.pos, height, run.has_tablet, cfg.crouch_height)

        noises = [NoiseEvent(n.t, (n.pos[0] + offset[0], n.pos[1] + offset[1]), n.intensity)
                  for n in by_tick.get(k, ())]
        for hit in laser_check(player, lv, prev):
            run.emit(t, "LaserTripped", {"pos": _rv(hit)})
            noises.append(NoiseEvent(t, hit, StepIntensity.STOMP))

        run.level_ticks += 1
        obstacles = lv.obstacles_at(run.level_ticks * dt)
        run.guard, g_events = guard_step(run.guard, lv.guard, player, noises, lv, dt, cfg, obstacles)
        for ev in g_events:
            run.emit(t, ev.kind, {k_: _rv(v) if isinstance(v, list) else v for k_, v in ev.payload.items()})
        run.logs[run.index].ticks += 1

        if any(ev.kind == "Caught" for ev in g_events):
            run.emit(t, "LevelRestart")
            run.enter()
            continue
        if not run.has_tablet and math.dist(run.pos, lv.tablet) <= cfg.grab_radius:
            run.has_tablet = True
            run.emit(t, "TabletGrabbed", {"pos": _rv(run.pos)})
        if run.has_tablet and math.dist(run.pos, lv.teleporter) <= cfg.grab_radius:
            run.logs[run.index].completed = True
            run.emit(t, "LevelComplete", {"playtime": run.logs[run.index].playtime})
            run.index += 1
            if run.index == len(run.levels):
                run.log.complete = True
                return run.log
            run.enter()
    raise StreamExhausted(run.log)
