"""Synthetic gait traces with known touchdowns.

Feet alternate swing and stance.  Every swing is a straight move from the
foot's last footprint to the next one: a sine-shaped speed bump that ends at a
touchdown speed, followed by a linear ramp to rest over ``ramp_frames``
frames.  The ramp is aligned to the sample grid, so its backward-difference
deceleration equals the step's target exactly and is the largest value of the
swing.  The HMD follows the same footprint schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .classify import GaitClass, StepEvent, StepIntensity
from .errors import RateTooLow, SynthError, TooCrowded
from .motion import (
    DEFAULT_RATE,
    DEFAULT_WINDOW,
    FEET,
    DeviceId,
    DeviceTrack,
    MotionTrace,
    check_window,
    derive_kinematics,
)

FOOT_HEIGHT = 0.05
FOOT_SPACING = 0.2
HMD_HEIGHT = 1.7
HMD_BOB = 0.02
HMD_SWAY = 0.015
MIN_STANCE_FRAMES = 2
# the swing's own deceleration stays below this fraction of the touchdown target
SWING_DECEL_FRACTION = 0.8

_INTENSITY = {"sneak": StepIntensity.SNEAK_STEP, "walk": StepIntensity.WALK_STEP,
              "stomp": StepIntensity.STOMP, "run": StepIntensity.STOMP}
_GAIT = {"sneak": GaitClass.SNEAKING, "walk": GaitClass.WALKING,
         "stomp": GaitClass.WALKING, "run": GaitClass.RUNNING}


@dataclass(frozen=True)
class GaitProfile:
    """One synthetic gait.

    ``cadence`` is steps per second over both feet; ``stance_ratio`` is the
    grounded fraction of one foot's cycle and sets the nominal swing time.
    ``swing_peak_speed`` caps the swing speed; a swing that would exceed it,
    or whose own deceleration would rival the touchdown, is lengthened into
    the stance phase.
    """

    label: str
    cadence: float
    step_length: float
    swing_peak_speed: float
    touchdown_decel_target: float
    stance_ratio: float
    jitter: float = 0.0
    ramp_frames: int = 3

    def __post_init__(self):
        if self.label not in _INTENSITY:
            raise SynthError(f"unknown profile label {self.label!r}; use one of {sorted(_INTENSITY)}")
        if not self.cadence > 0:
            raise SynthError("cadence must be positive")
        if not self.step_length > 0:
            raise SynthError("step_length must be positive")
        if not 0 < self.stance_ratio < 1:
            raise SynthError("stance_ratio must lie in (0, 1)")
        if not self.touchdown_decel_target > 0:
            raise SynthError("touchdown_decel_target must be positive")
        if not self.swing_peak_speed > 0:
            raise SynthError("swing_peak_speed must be positive")
        if not 0 <= self.jitter < 0.5:
            raise SynthError("jitter must lie in [0, 0.5)")
        if self.ramp_frames < DEFAULT_WINDOW:
            raise SynthError(f"ramp_frames must be at least {DEFAULT_WINDOW}")

    @property
    def intensity(self) -> StepIntensity:
        return _INTENSITY[self.label]

    @property
    def gait_class(self) -> GaitClass:
        return _GAIT[self.label]

    @property
    def mean_speed(self) -> float:
        return self.cadence * self.step_length


PROFILES: dict[str, GaitProfile] = {
    "sneak": GaitProfile("sneak", cadence=1.0, step_length=0.3, swing_peak_speed=2.0,
                         touchdown_decel_target=3.0, stance_ratio=0.5),
    "walk": GaitProfile("walk", cadence=1.7, step_length=0.5, swing_peak_speed=4.0,
                        touchdown_decel_target=10.0, stance_ratio=0.5),
    "stomp": GaitProfile("stomp", cadence=2.2, step_length=0.5, swing_peak_speed=6.0,
                         touchdown_decel_target=22.0, stance_ratio=0.4),
    "run": GaitProfile("run", cadence=3.5, step_length=0.5, swing_peak_speed=8.0,
                       touchdown_decel_target=30.0, stance_ratio=0.3),
}


def get_profile(name: str, **overrides) -> GaitProfile:
    try:
        profile = PROFILES[name]
    except KeyError:
        raise SynthError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}") from None
    return replace(profile, **overrides) if overrides else profile


@dataclass(frozen=True)
class PathSpec:
    waypoints: tuple[tuple[float, float], ...]
    dwell: tuple[float, ...] = ()

    def __post_init__(self):
        wps = tuple((float(x), float(z)) for x, z in self.waypoints)
        if not wps:
            raise SynthError("path needs at least one waypoint")
        for a, b in zip(wps, wps[1:]):
            if a == b:
                raise SynthError(f"consecutive waypoints must differ, got {a} twice")
        dwell = tuple(float(d) for d in self.dwell) or (0.0,) * len(wps)
        if len(dwell) != len(wps):
            raise SynthError("dwell needs one entry per waypoint")
        if any(d < 0 for d in dwell):
            raise SynthError("dwell times must be non-negative")
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "dwell", dwell)

    @classmethod
    def straight(cls, length: float, start=(0.0, 0.0), heading: float = 0.0, dwell_end: float = 0.0) -> PathSpec:
        x, z = start
        end = (x + length * math.cos(heading), z + length * math.sin(heading))
        if length <= 0:
            return cls((start,), (dwell_end,))
        return cls((start, end), (0.0, dwell_end))

    @property
    def length(self) -> float:
        return sum(math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:]))


@dataclass(frozen=True)
class Swing:
    foot: DeviceId
    start: float          # lift-off time, s
    ramp_start: float     # frame-aligned start of the touchdown ramp
    land: float           # frame-aligned time the foot comes to rest
    src: tuple[float, float]
    dst: tuple[float, float]
    decel: float
    touchdown_speed: float
    amplitude: float

    @property
    def distance(self) -> float:
        return math.dist(self.src, self.dst)

    def progress(self, t: np.ndarray) -> np.ndarray:
        """Distance travelled along the swing at times ``t`` (clamped to [0, distance])."""
        t = np.asarray(t, dtype=float)
        ts = self.ramp_start - self.start
        tr = self.land - self.ramp_start
        d_sine = self.distance - self.touchdown_speed * tr / 2
        out = np.zeros_like(t)
        tau = np.clip(t - self.start, 0.0, ts)
        if ts > 0:
            out = self.touchdown_speed * tau + self.amplitude * ts / math.pi * (1 - np.cos(math.pi * tau / ts))
        r = np.clip(t - self.ramp_start, 0.0, tr)
        ramp = self.touchdown_speed * r - self.touchdown_speed * r * r / (2 * tr)
        return np.where(t >= self.ramp_start, d_sine + ramp, out)

    def peak_speed(self) -> float:
        return self.touchdown_speed + self.amplitude


@dataclass(frozen=True)
class Schedule:
    """Footstep plan shared by the feet, HMD and gamepad generators."""

    profile: GaitProfile
    rate: float
    swings: tuple[Swing, ...]
    start_feet: dict = field(compare=False)
    hmd_knots: np.ndarray = field(compare=False)     # rows of t, x, z
    moving: tuple[tuple[float, float, tuple[float, float]], ...] = ()  # (t0, t1, leg normal)
    end: float = 0.0

    def ground_truth(self) -> list[StepEvent]:
        return [StepEvent(s.land, s.foot, s.decel, self.profile.intensity, s.dst) for s in self.swings]

    @property
    def times(self) -> np.ndarray:
        n = int(round(self.end * self.rate))
        return np.arange(n + 1) / self.rate


def _jitter(rng: np.random.Generator, amount: float) -> float:
    if amount <= 0:
        return 1.0
    return 1.0 + amount * float(np.clip(rng.standard_normal(), -2.0, 2.0))


def _swing_time(d_sine: float, v_td: float, nominal: float, decel: float, vmax: float) -> float:
    """Shortest admissible sine-phase duration, at least ``nominal``."""
    c = 2 * SWING_DECEL_FRACTION * decel / math.pi ** 2
    t_decel = (-v_td + math.sqrt(v_td * v_td + 4 * c * d_sine)) / (2 * c)
    t_speed = d_sine * math.pi / (2 * (vmax - v_td) + math.pi * v_td)
    return max(nominal, t_decel, t_speed)


def plan_steps(profile: GaitProfile, path: PathSpec, rate: float = DEFAULT_RATE, seed: int = 0) -> Schedule:
    if rate < 20 * profile.cadence:
        raise RateTooLow(f"rate {rate} Hz too low for cadence {profile.cadence}; need >= {20 * profile.cadence}")
    rng = np.random.default_rng(seed)
    dt = 1.0 / rate
    K = profile.ramp_frames
    step_period = 1.0 / profile.cadence
    nominal_swing = (1 - profile.stance_ratio) * 2 * step_period

    wps = path.waypoints
    first_dir = _unit(wps[0], wps[1]) if len(wps) > 1 else (1.0, 0.0)
    normal = _left(first_dir)
    half = FOOT_SPACING / 2
    feet_pos = {
        DeviceId.LEFT_FOOT: (wps[0][0] + normal[0] * half, wps[0][1] + normal[1] * half),
        DeviceId.RIGHT_FOOT: (wps[0][0] - normal[0] * half, wps[0][1] - normal[1] * half),
    }
    start_feet = dict(feet_pos)
    free_at = {f: -math.inf for f in FEET}
    foot_cycle = list(FEET)
    next_foot = 0

    swings: list[Swing] = []
    knots = [(0.0, *wps[0])]
    moving = []
    cursor = path.dwell[0]
    knots.append((cursor, *wps[0]))

    def place(foot, land_t, dst, leg_normal):
        f_land = int(round(land_t * rate))
        land = f_land / rate
        ramp_start = (f_land - K) / rate
        src = feet_pos[foot]
        decel = profile.touchdown_decel_target * _jitter(rng, profile.jitter)
        v_td = decel * K * dt
        d = math.dist(src, dst)
        d_sine = d - v_td * K * dt / 2
        if d_sine <= 0:
            # shorter than the touchdown ramp itself (a foot squaring up after a turn): stay put
            return land
        latest_start = ramp_start - max(free_at[foot] + MIN_STANCE_FRAMES * dt, -math.inf)
        if profile.swing_peak_speed <= v_td:
            raise SynthError("swing_peak_speed must exceed the touchdown speed")
        ts = _swing_time(d_sine, v_td, nominal_swing - K * dt, decel, profile.swing_peak_speed)
        if d_sine < v_td * ts:
            ts = d_sine / v_td
        if ts > latest_start + 1e-12:
            raise SynthError(
                f"profile {profile.label!r} infeasible: swing needs {ts:.3f} s but only "
                f"{latest_start:.3f} s of the cycle is free"
            )
        amp = (d_sine - v_td * ts) * math.pi / (2 * ts)
        swings.append(Swing(foot, ramp_start - ts, ramp_start, land, src, dst, decel, v_td, amp))
        feet_pos[foot] = dst
        free_at[foot] = land
        return land

    for i in range(len(wps) - 1):
        a, b = wps[i], wps[i + 1]
        leg = math.dist(a, b)
        u = _unit(a, b)
        nrm = _left(u)
        leg_start = cursor
        t = leg_start
        s = 0.0
        while s < leg:
            step = min(profile.step_length * _jitter(rng, profile.jitter), leg - s)
            period = step_period * _jitter(rng, profile.jitter)
            if leg - s - step < 0.5 * profile.step_length:
                # absorb a short remainder into this step, stretching its duration to match
                period *= max(1.0, (leg - s) / step)
                step = leg - s
            nxt = s + step
            foot = foot_cycle[next_foot]
            side = 1 if foot is DeviceId.LEFT_FOOT else -1
            dst = (a[0] + u[0] * nxt + nrm[0] * half * side, a[1] + u[1] * nxt + nrm[1] * half * side)
            t = place(foot, t + period, dst, nrm)
            knots.append((t, a[0] + u[0] * nxt, a[1] + u[1] * nxt))
            next_foot = 1 - next_foot
            s = nxt
        moving.append((leg_start, t, nrm))
        # bring the trailing foot alongside
        foot = foot_cycle[next_foot]
        side = 1 if foot is DeviceId.LEFT_FOOT else -1
        dst = (b[0] + nrm[0] * half * side, b[1] + nrm[1] * half * side)
        t = place(foot, t + step_period * _jitter(rng, profile.jitter), dst, nrm)
        next_foot = 1 - next_foot
        knots.append((t, *b))
        cursor = t + path.dwell[i + 1]
        knots.append((cursor, *b))

    end = max(cursor, knots[-1][0])
    if swings:
        end = max(end, swings[-1].land + 0.5)
    end = math.ceil(end * rate - 1e-9) / rate
    knots.append((end, *knots[-1][1:]))
    return Schedule(profile, rate, tuple(swings), start_feet, np.array(knots), tuple(moving), end)


def _unit(a, b) -> tuple[float, float]:
    d = math.dist(a, b)
    return ((b[0] - a[0]) / d, (b[1] - a[1]) / d)


def _left(u) -> tuple[float, float]:
    return (u[1], -u[0])


def feet_trace(schedule: Schedule) -> MotionTrace:
    t = schedule.times
    tracks = []
    for foot in FEET:
        xz = np.tile(np.asarray(schedule.start_feet[foot], dtype=float), (len(t), 1))
        for sw in schedule.swings:
            if sw.foot is not foot:
                continue
            after = t >= sw.start
            d = sw.distance
            direction = (np.asarray(sw.dst) - np.asarray(sw.src)) / d
            xz[after] = np.asarray(sw.src) + np.outer(sw.progress(t[after]), direction)
        pos = np.column_stack([xz[:, 0], np.full(len(t), FOOT_HEIGHT), xz[:, 1]])
        tracks.append(DeviceTrack(foot, t, pos=pos))
    return MotionTrace(tracks)


def _hmd_xz(schedule: Schedule, t: np.ndarray) -> np.ndarray:
    k = schedule.hmd_knots
    return np.column_stack([np.interp(t, k[:, 0], k[:, 1]), np.interp(t, k[:, 0], k[:, 2])])


def hmd_trace(schedule: Schedule, height: float = HMD_HEIGHT) -> MotionTrace:
    t = schedule.times
    xz = _hmd_xz(schedule, t)
    y = np.full(len(t), float(height))
    cad = schedule.profile.cadence
    for t0, t1, nrm in schedule.moving:
        inside = (t >= t0) & (t <= t1)
        span = t1 - t0
        if span <= 0:
            continue
        halves = max(1, round(span * cad))
        phase = math.pi * (t[inside] - t0) / span
        # whole half-cycles: sway and bob start and end at zero with the movement
        sway = HMD_SWAY * np.sin(phase * halves)
        y[inside] += HMD_BOB * np.sin(phase * 2 * halves)
        xz[inside, 0] += sway * nrm[0]
        xz[inside, 1] += sway * nrm[1]
    pos = np.column_stack([xz[:, 0], y, xz[:, 1]])
    return MotionTrace([DeviceTrack(DeviceId.HMD, t, pos=pos)])


def gamepad_trace(schedule: Schedule, walk_speed: float = 1.5, sneak_speed: float = 0.5) -> MotionTrace:
    """Stick input that drives a gamepad player along the HMD's path.

    Sneak profiles hold the sneak button and scale deflection by
    ``sneak_speed``; other profiles scale by ``walk_speed``.
    """
    t = schedule.times
    k = schedule.hmd_knots
    sneak = schedule.profile.label == "sneak"
    scale = sneak_speed if sneak else walk_speed
    idx = np.clip(np.searchsorted(k[:, 0], t, side="right") - 1, 0, len(k) - 2)
    span = k[idx + 1, 0] - k[idx, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = np.where(span > 0, (k[idx + 1, 1] - k[idx, 1]) / span, 0.0)
        vz = np.where(span > 0, (k[idx + 1, 2] - k[idx, 2]) / span, 0.0)
    axes = np.clip(np.column_stack([vx, vz]) / scale, -1.0, 1.0)
    return MotionTrace([DeviceTrack(DeviceId.GAMEPAD, t, axes=axes, sneak=np.full(len(t), sneak))])


def synth_feet(profile: GaitProfile, path: PathSpec, rate: float = DEFAULT_RATE,
               seed: int = 0) -> tuple[MotionTrace, list[StepEvent]]:
    """Left/right foot trace plus ground-truth touchdowns (foot-at-rest times)."""
    schedule = plan_steps(profile, path, rate, seed)
    return feet_trace(schedule), schedule.ground_truth()


def synth_hmd(profile: GaitProfile, path: PathSpec, rate: float = DEFAULT_RATE, seed: int = 0,
              height: float = HMD_HEIGHT) -> MotionTrace:
    return hmd_trace(plan_steps(profile, path, rate, seed), height)


def synth_session(profile: GaitProfile, path: PathSpec, rate: float = DEFAULT_RATE, seed: int = 0,
                  devices: Sequence[DeviceId] = (DeviceId.HMD, *FEET),
                  height: float = HMD_HEIGHT) -> tuple[MotionTrace, list[StepEvent]]:
    """All requested devices from one shared step schedule."""
    schedule = plan_steps(profile, path, rate, seed)
    trace = MotionTrace([])
    if any(d in FEET for d in devices):
        trace = trace.merged(feet_trace(schedule))
    if DeviceId.HMD in devices:
        trace = trace.merged(hmd_trace(schedule, height))
    if DeviceId.GAMEPAD in devices:
        trace = trace.merged(gamepad_trace(schedule))
    return trace, schedule.ground_truth()


def inject_spikes(trace: MotionTrace, count: int, magnitude: float, seed: int = 0,
                  devices: Sequence[DeviceId] = FEET, window: int = DEFAULT_WINDOW) -> MotionTrace:
    """Insert ``count`` single-frame tracking glitches.

    Each glitch displaces one sample vertically and puts it back on the next
    frame, producing one raw decel spike of ``magnitude`` two frames later.
    Spikes land only where the clean decel is zero across the median window on
    either side, and are at least ``window`` frames apart, so a median filter
    of that window removes them without touching the rest of the signal.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return trace
    window = check_window(window)
    h = window // 2
    rng = np.random.default_rng(seed)

    clean: dict[DeviceId, np.ndarray] = {}
    candidates = []
    for dev in devices:
        track = trace.track(dev)
        series = derive_kinematics(trace, dev)
        idx = np.searchsorted(track.t, series.t)
        dl = np.full(len(track), np.nan)
        dl[idx] = series.decel
        # a frame whose decel is defined but its predecessor's speed is not starts a segment
        seg_start = np.zeros(len(track), dtype=bool)
        seg_start[idx[np.r_[True, np.diff(series.segment) != 0]]] = True
        dl[seg_start] = np.nan
        clean[dev] = dl
        zero = dl == 0
        for i in range(1, len(track) - 2 - 2 * h):
            lo, hi = i + 2 - 2 * h, i + 2 + 2 * h
            if lo >= 1 and hi < len(track) and zero[lo:hi + 1].all():
                candidates.append((dev, i))
    order = rng.permutation(len(candidates))

    pos = {dev: trace.track(dev).pos.copy() for dev in devices}
    taken: dict[DeviceId, list[int]] = {dev: [] for dev in devices}
    placed = 0
    for c in order:
        if placed == count:
            break
        dev, i = candidates[c]
        if any(abs(i - j) < window for j in taken[dev]):
            continue
        track = trace.track(dev)
        dt = track.t[i + 1] - track.t[i]
        dt2 = track.t[i + 2] - track.t[i + 1]
        v_next = np.linalg.norm(pos[dev][i + 2] - pos[dev][i + 1]) / dt2
        target = (v_next + magnitude * dt2) * dt
        step = pos[dev][i + 1] - pos[dev][i]
        disc = step[1] ** 2 - step @ step + target ** 2
        if disc < 0:
            continue
        trial = pos[dev].copy()
        trial[i, 1] += -step[1] + math.sqrt(disc) if step[1] <= 0 else step[1] + math.sqrt(disc)
        # displacement along y: |step - delta| must equal target
        delta = trial[i, 1] - pos[dev][i, 1]
        if not math.isclose(math.hypot(step[0], step[1] - delta, step[2]), target, rel_tol=1e-9):
            trial[i, 1] = pos[dev][i, 1] + step[1] - math.sqrt(disc)
        if _isolated(track.t, trial, clean[dev], i):
            pos[dev] = trial
            taken[dev].append(i)
            placed += 1
    if placed < count:
        raise TooCrowded(f"placed {placed} of {count} spikes; trace has too few quiet frames")
    out = trace
    for dev in devices:
        tr = trace.track(dev)
        out = out.with_track(DeviceTrack(dev, tr.t, pos=pos[dev]))
    return out


def _isolated(t: np.ndarray, pos: np.ndarray, clean: np.ndarray, i: int) -> bool:
    lo, hi = max(i - 1, 0), min(i + 4, len(t))
    tt = t[lo:hi]
    pp = pos[lo:hi]
    dt = np.diff(tt)
    speed = np.linalg.norm(np.diff(pp, axis=0), axis=1) / dt
    decel = np.maximum(0.0, (speed[:-1] - speed[1:]) / dt[1:])
    frames = np.arange(lo + 2, hi)
    want_zero = frames != i + 2
    return bool(np.all(decel[want_zero] == 0) and decel[~want_zero].size == 1 and decel[~want_zero][0] > 0
                and np.all(clean[frames] == 0))
