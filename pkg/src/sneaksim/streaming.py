"""Online (sample-at-a-time) versions of the three classifiers.

Each classifier consumes samples in time order through ``push`` and returns
whatever output became final; ``flush`` ends the stream.  The collected output
equals the batch functions in :mod:`sneaksim.classify` exactly.  The tracker
runs ``window // 2 + 1`` frames behind its input because a median and a local
maximum both need frames that have not arrived yet.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .classify import (
    Classification,
    DecelThresholds,
    GaitClass,
    GaitStateSample,
    GamepadConfig,
    HmdConfig,
    HmdSpeedState,
    NoiseEvent,
    StepEvent,
    TrackerConfig,
    _Cadence,
    gait_state_at,
)
from .errors import MissingAxes, NonMonotonicTime
from .motion import DEFAULT_MAX_GAP, FEET, DeviceId, MotionSample, check_window

_EPS = 1e-9


@dataclass
class Output:
    states: list[GaitStateSample] = field(default_factory=list)
    noises: list[NoiseEvent] = field(default_factory=list)
    steps: list[StepEvent] = field(default_factory=list)

    def extend(self, other: Output) -> None:
        self.states.extend(other.states)
        self.noises.extend(other.noises)
        self.steps.extend(other.steps)


class _Differ:
    """Backward-difference speed of one device, restarting after gaps."""

    def __init__(self, device: DeviceId, max_gap: float):
        self.device = device
        self.max_gap = max_gap
        self.prev_t: float | None = None
        self.prev_pos: np.ndarray | None = None
        self.prev_speed: float | None = None

    def push(self, t: float, pos) -> tuple[bool, tuple | None]:
        """Returns (segment_break, frame) where frame is (t, speed, hspeed, decel, pos) or None."""
        pos = np.asarray(pos, dtype=float)
        if self.prev_t is not None and t <= self.prev_t:
            raise NonMonotonicTime(f"{self.device.value}: timestamps not strictly increasing")
        brk = self.prev_t is not None and t - self.prev_t > self.max_gap
        if self.prev_t is None or brk:
            self.prev_t, self.prev_pos, self.prev_speed = t, pos, None
            return brk, None
        dt = t - self.prev_t
        disp = (pos - self.prev_pos)[None, :]
        speed = float(np.linalg.norm(disp, axis=1)[0] / dt)
        hspeed = float(np.hypot(disp[:, 0], disp[:, 2])[0] / dt)
        decel = 0.0 if self.prev_speed is None else max(0.0, (self.prev_speed - speed) / dt)
        self.prev_t, self.prev_pos, self.prev_speed = t, pos, speed
        return False, (t, speed, hspeed, decel, pos)


class _FootDetector:
    """Median filter plus refractory peak picking for one foot."""

    def __init__(self, foot: DeviceId, thresholds: DecelThresholds, cfg: TrackerConfig, max_gap: float):
        self.foot = foot
        self.thresholds = thresholds
        self.cfg = cfg
        self.half = cfg.window // 2
        self.differ = _Differ(foot, max_gap)
        self.last_step = -math.inf
        self._reset_segment()

    def _reset_segment(self):
        self.raw: deque = deque()        # (t, decel, pos) not yet filtered, plus left context
        self.head: float | None = None   # first raw decel of the segment (edge padding)
        self.n_filtered_ctx = 0
        self.filtered: deque = deque()   # (t, value, pos) awaiting the local-max test
        self.prev_filtered: float | None = None

    @property
    def undecided_from(self) -> float:
        """Earliest frame time whose step status is still open (inf if none)."""
        times = [f[0] for f in self.filtered] + [r[0] for r in self.raw][self.n_filtered_ctx:]
        return min(times) if times else math.inf

    def push(self, t: float, pos) -> tuple[list[StepEvent], bool]:
        """New final steps, and whether this sample produced a kinematic frame."""
        brk, frame = self.differ.push(t, pos)
        steps: list[StepEvent] = []
        if brk:
            steps += self._end_segment()
        if frame is not None:
            ft, _, _, decel, fpos = frame
            steps += self._add_raw(ft, decel, fpos)
        return steps, frame is not None

    def flush(self) -> list[StepEvent]:
        return self._end_segment()

    # raw frames -> filtered frames
    def _add_raw(self, t, decel, pos) -> list[StepEvent]:
        if self.head is None:
            self.head = decel
        self.raw.append((t, decel, pos))
        steps = []
        # raw holds n_filtered_ctx frames of left context followed by unfiltered frames
        while len(self.raw) - self.n_filtered_ctx > self.half:
            steps += self._filter_next(tail=None)
        return steps

    def _filter_next(self, tail: float | None) -> list[StepEvent]:
        h = self.half
        k = self.n_filtered_ctx       # index of the frame being filtered within raw
        vals = [r[1] for r in self.raw]
        left = vals[max(0, k - h):k]
        left = [self.head] * (h - len(left)) + left
        right = vals[k + 1:k + 1 + h]
        if tail is not None:
            right = right + [tail] * (h - len(right))
        window = left + [vals[k]] + right
        value = float(np.median(np.asarray(window))) if h else vals[k]
        t, _, pos = self.raw[k]
        self.n_filtered_ctx += 1
        while self.n_filtered_ctx > h:
            self.raw.popleft()
            self.n_filtered_ctx -= 1
        return self._add_filtered(t, value, pos)

    # filtered frames -> steps
    def _add_filtered(self, t, value, pos) -> list[StepEvent]:
        self.filtered.append((t, value, pos))
        if len(self.filtered) < 2:
            return []
        return self._decide(next_value=self.filtered[1][1])

    def _decide(self, next_value: float | None) -> list[StepEvent]:
        t, value, pos = self.filtered.popleft()
        prev = self.prev_filtered
        self.prev_filtered = value
        is_max = (value >= self.thresholds.step_floor
                  and (prev is None or value >= prev)
                  and (next_value is None or value >= next_value))
        if is_max and t - self.last_step >= self.cfg.refractory - _EPS:
            self.last_step = t
            return [StepEvent(t, self.foot, value, self.thresholds.intensity(value),
                              (float(pos[0]), float(pos[2])))]
        return []

    def _end_segment(self) -> list[StepEvent]:
        steps = []
        if self.raw:
            tail = self.raw[-1][1]
            while len(self.raw) > self.n_filtered_ctx:
                steps += self._filter_next(tail=tail)
        while self.filtered:
            nxt = self.filtered[1][1] if len(self.filtered) > 1 else None
            steps += self._decide(next_value=nxt)
        self._reset_segment()
        return steps


class OnlineTracker:
    """Streaming foot-tracker classifier.

    States are stamped at every foot frame time, as in the batch version, and
    released once both feet have settled every possible step up to that time.
    """

    def __init__(self, thresholds: DecelThresholds = DecelThresholds(), cfg: TrackerConfig = TrackerConfig(),
                 max_gap: float = DEFAULT_MAX_GAP):
        check_window(cfg.window)
        self.thresholds = thresholds
        self.cfg = cfg
        self.feet = {f: _FootDetector(f, thresholds, cfg, max_gap) for f in FEET}
        self.steps: list[StepEvent] = []
        self.step_times: list[float] = []
        self.pending: list[float] = []   # frame times not yet classified, sorted, unique
        self.clock = -math.inf

    def push(self, sample: MotionSample) -> Output:
        if sample.device not in self.feet:
            return Output()
        if sample.pos is None:
            raise MissingAxes(f"{sample.device.value} sample at t={sample.t} has no position")
        self.clock = max(self.clock, sample.t)
        new_steps, framed = self.feet[sample.device].push(sample.t, sample.pos)
        if framed:
            self._add_time(sample.t)
        return self._release(new_steps, final=False)

    def flush(self) -> Output:
        new_steps = []
        for det in self.feet.values():
            new_steps += det.flush()
        return self._release(new_steps, final=True)

    def _add_time(self, t: float) -> None:
        if not self.pending or t > self.pending[-1]:
            self.pending.append(t)
        elif t not in self.pending:
            self.pending.append(t)
            self.pending.sort()

    def _release(self, new_steps: list[StepEvent], final: bool) -> Output:
        out = Output()
        new_steps.sort(key=lambda e: (e.t, e.foot.order))
        for s in new_steps:
            i = bisect.bisect_right(self.step_times, s.t)
            self.steps.insert(i, s)
            self.step_times.insert(i, s.t)
            out.steps.append(s)
            out.noises.append(NoiseEvent(s.t, s.pos, s.intensity))
        bound = math.inf if final else min(d.undecided_from for d in self.feet.values())
        while self.pending:
            t = self.pending[0]
            # later samples may still share this timestamp
            if not final and not (t + _EPS < bound and t < self.clock):
                break
            self.pending.pop(0)
            out.states.append(GaitStateSample(float(t), self._state_at(t)))
        return out

    def _state_at(self, t: float) -> GaitClass:
        j = bisect.bisect_right(self.step_times, t + _EPS)
        lo = j
        while lo > 0 and t - self.step_times[lo - 1] < self.cfg.horizon - _EPS:
            lo -= 1
        window = self.steps[max(0, lo - 1):j] if j - lo < 2 else self.steps[lo:j]
        return gait_state_at(t, window, self.thresholds, self.cfg)


class OnlineHmd:
    def __init__(self, cfg: HmdConfig = HmdConfig(), max_gap: float = DEFAULT_MAX_GAP):
        self.cfg = cfg
        self.differ = _Differ(DeviceId.HMD, max_gap)
        self.machine = HmdSpeedState(cfg)
        self.cadence = _Cadence(cfg.cadence)
        self.window: deque = deque()
        self.first: float | None = None

    def push(self, sample: MotionSample) -> Output:
        out = Output()
        if sample.device is not DeviceId.HMD:
            return out
        brk, frame = self.differ.push(sample.t, sample.pos)
        if brk:
            self.window.clear()
            self.first = None
        if frame is None:
            return out
        t, _, hspeed, _, pos = frame
        if self.first is None:
            self.first = t
        self.window.append((t, hspeed))
        while self.window[0][0] <= t - self.cfg.window + _EPS:
            self.window.popleft()
        mean = None
        if t - self.first >= self.cfg.window - _EPS:
            mean = math.fsum(h for _, h in self.window) / len(self.window)
        state = self.machine.update(mean)
        out.states.append(GaitStateSample(float(t), state))
        noise = self.cadence.update(float(t), state is GaitClass.WALKING, pos[[0, 2]])
        if noise is not None:
            out.noises.append(noise)
        return out

    def flush(self) -> Output:
        return Output()


class OnlineGamepad:
    def __init__(self, cfg: GamepadConfig = GamepadConfig(), start_pos=(0.0, 0.0), bounds=None):
        self.cfg = cfg
        self.bounds = bounds
        self.pos = np.asarray(start_pos, dtype=float)
        self.prev: tuple[float, np.ndarray] | None = None
        self.cadence = _Cadence(cfg.cadence)
        self.positions: list[tuple[float, float, float]] = []

    def push(self, sample: MotionSample) -> Output:
        out = Output()
        if sample.device is not DeviceId.GAMEPAD:
            return out
        if sample.axes is None:
            raise MissingAxes(f"gamepad record at t={sample.t} lacks deflection")
        if self.prev is not None:
            t0, vel0 = self.prev
            if sample.t <= t0:
                raise NonMonotonicTime("gamepad: timestamps not strictly increasing")
            nxt = self.pos + vel0 * (sample.t - t0)
            if self.bounds is not None:
                b = self.bounds
                nxt = np.clip(nxt, [b[0], b[1]], [b[2], b[3]])
            self.pos = nxt
        defl = np.asarray(sample.axes, dtype=float)[None, :]
        norm = np.linalg.norm(defl, axis=1)
        if norm[0] > 1.0:
            defl = defl / norm[:, None]
        speed = self.cfg.sneak_speed if sample.sneak else self.cfg.walk_speed
        vel = defl[0] * speed
        self.prev = (sample.t, vel)
        sneaking = bool(sample.sneak) or float(np.hypot(*vel)) <= self.cfg.sneak_speed + _EPS
        state = GaitClass.SNEAKING if sneaking else GaitClass.WALKING
        t = float(sample.t)
        self.positions.append((t, float(self.pos[0]), float(self.pos[1])))
        out.states.append(GaitStateSample(t, state))
        noise = self.cadence.update(t, not sneaking, self.pos)
        if noise is not None:
            out.noises.append(noise)
        return out

    def flush(self) -> Output:
        return Output()


def run_online(classifier, samples: Iterable[MotionSample]) -> Classification:
    """Feed ``samples`` through an online classifier and collect its output."""
    total = Output()
    for s in samples:
        total.extend(classifier.push(s))
    total.extend(classifier.flush())
    steps = sorted(total.steps, key=lambda e: (e.t, e.foot.order))
    noises = total.noises
    if isinstance(classifier, OnlineTracker):
        noises = [NoiseEvent(s.t, s.pos, s.intensity) for s in steps]
    positions = None
    if isinstance(classifier, OnlineGamepad):
        positions = np.array(classifier.positions).reshape(-1, 3)
    return Classification(tuple(total.states), tuple(noises), tuple(steps), positions)
