"""Gait classification: foot-tracker deceleration peaks, HMD speed proxy, gamepad sneak mode.

All three mechanisms produce the same output shape: a gait-state sample per
input frame plus discrete :class:`NoiseEvent` records that the simulator's
guard can hear.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    ClassOverlap,
    InsufficientData,
    InvalidThresholds,
    MissingAxes,
    TraceParseError,
)
from .motion import (
    DEFAULT_WINDOW,
    FEET,
    DeviceId,
    KinematicSeries,
    MotionTrace,
    check_window,
    derive_kinematics,
    sliding_window_filter,
)

OUTPUT_FORMAT_VERSION = 1
_EPS = 1e-9


class GaitClass(str, Enum):
    SNEAKING = "sneaking"
    WALKING = "walking"
    RUNNING = "running"


class StepIntensity(str, Enum):
    SNEAK_STEP = "sneak_step"
    WALK_STEP = "walk_step"
    STOMP = "stomp"

    @property
    def loudness(self) -> int:
        return _LOUDNESS[self]


_LOUDNESS = {StepIntensity.SNEAK_STEP: 0, StepIntensity.WALK_STEP: 1, StepIntensity.STOMP: 2}


@dataclass(frozen=True)
class DecelThresholds:
    """Peak-deceleration class boundaries in m/s².

    The defaults separate the bundled synthetic profiles; recalibrate for
    recorded data with :func:`calibrate_thresholds`.
    """

    step_floor: float = 2.0
    walk_min: float = 8.0
    stomp_min: float = 18.0

    def __post_init__(self):
        vals = (self.step_floor, self.walk_min, self.stomp_min)
        if not all(math.isfinite(v) for v in vals) or not 0 < self.step_floor < self.walk_min < self.stomp_min:
            raise InvalidThresholds(
                f"need 0 < step_floor < walk_min < stomp_min, got {self.step_floor}, "
                f"{self.walk_min}, {self.stomp_min}"
            )

    def intensity(self, peak: float) -> StepIntensity:
        if peak >= self.stomp_min:
            return StepIntensity.STOMP
        if peak >= self.walk_min:
            return StepIntensity.WALK_STEP
        return StepIntensity.SNEAK_STEP


@dataclass(frozen=True)
class TrackerConfig:
    window: int = DEFAULT_WINDOW
    refractory: float = 0.25
    horizon: float = 1.0
    run_interval: float = 0.35

    def __post_init__(self):
        check_window(self.window)
        if not self.refractory > 0:
            raise ValueError("refractory must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class HmdConfig:
    sneak_max_hspeed: float = 0.4
    window: float = 0.5
    hysteresis_margin: float = 0.1
    cadence: float = 0.5

    def __post_init__(self):
        if not self.sneak_max_hspeed > 0:
            raise ValueError("sneak_max_hspeed must be positive")
        if not self.window > 0:
            raise ValueError("window must be positive")
        if not self.hysteresis_margin >= 0:
            raise ValueError("hysteresis_margin must be non-negative")
        if not self.cadence > 0:
            raise ValueError("cadence must be positive")


@dataclass(frozen=True)
class GamepadConfig:
    walk_speed: float = 1.5
    sneak_speed: float = 0.5
    cadence: float = 0.5

    def __post_init__(self):
        if not self.walk_speed > self.sneak_speed > 0:
            raise ValueError("need walk_speed > sneak_speed > 0")
        if not self.cadence > 0:
            raise ValueError("cadence must be positive")


@dataclass(frozen=True)
class StepEvent:
    t: float
    foot: DeviceId
    peak_decel: float
    intensity: StepIntensity
    pos: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class GaitStateSample:
    t: float
    state: GaitClass


@dataclass(frozen=True)
class NoiseEvent:
    t: float
    pos: tuple[float, float]
    intensity: StepIntensity


@dataclass(frozen=True)
class Classification:
    """Classifier output.  ``positions`` is only set by the gamepad model
    (rows of t, x, z); ``steps`` only by the tracker."""

    states: tuple[GaitStateSample, ...]
    noises: tuple[NoiseEvent, ...]
    steps: tuple[StepEvent, ...] = ()
    positions: np.ndarray | None = field(default=None, compare=False)

    def state_counts(self) -> dict[GaitClass, int]:
        counts = {g: 0 for g in GaitClass}
        for s in self.states:
            counts[s.state] += 1
        return counts

    def intensity_counts(self) -> dict[StepIntensity, int]:
        counts = {i: 0 for i in StepIntensity}
        for n in self.noises:
            counts[n.intensity] += 1
        return counts


# --- tracker mechanism ------------------------------------------------------

def _local_maxima(decel: np.ndarray, floor: float) -> np.ndarray:
    """Indices whose value is >= both neighbours (missing neighbours pass) and >= floor."""
    n = len(decel)
    if n == 0:
        return np.zeros(0, dtype=int)
    ok = decel >= floor
    if n > 1:
        ok[1:] &= decel[1:] >= decel[:-1]
        ok[:-1] &= decel[:-1] >= decel[1:]
    return np.flatnonzero(ok)


def find_peaks(series: KinematicSeries, floor: float, refractory: float) -> list[int]:
    """Frame indices of refractory-separated decel maxima in one foot series."""
    picked: list[int] = []
    last_t = -math.inf
    for a, b in series.segment_bounds():
        for i in _local_maxima(series.decel[a:b], floor) + a:
            t = series.t[i]
            if t - last_t >= refractory - _EPS:
                picked.append(int(i))
                last_t = t
    return picked


def detect_steps(series: KinematicSeries | Sequence[KinematicSeries],
                 thresholds: DecelThresholds = DecelThresholds(),
                 refractory: float = 0.25) -> list[StepEvent]:
    """Footstep touchdowns from already-filtered foot kinematics.

    A step is a local maximum of decel at or above ``thresholds.step_floor``;
    maxima within ``refractory`` seconds after an emitted step of the same
    foot are dropped.
    """
    if not isinstance(thresholds, DecelThresholds):
        raise InvalidThresholds("thresholds must be DecelThresholds")
    if not refractory > 0:
        raise ValueError("refractory must be positive")
    if isinstance(series, KinematicSeries):
        series = [series]
    steps = []
    for s in series:
        for i in find_peaks(s, thresholds.step_floor, refractory):
            peak = float(s.decel[i])
            steps.append(StepEvent(float(s.t[i]), s.device, peak, thresholds.intensity(peak),
                                   (float(s.pos[i, 0]), float(s.pos[i, 2]))))
    steps.sort(key=lambda e: (e.t, e.foot.order))
    return steps


def foot_series(trace: MotionTrace, window: int = DEFAULT_WINDOW) -> list[KinematicSeries]:
    trace.require(*FEET)
    return [sliding_window_filter(derive_kinematics(trace, foot), window) for foot in FEET]


def gait_state_at(t: float, steps: Sequence[StepEvent], thresholds: DecelThresholds,
                  cfg: TrackerConfig) -> GaitClass:
    """State implied by ``steps`` (time-ordered, all with ``step.t <= t``)."""
    recent = [s for s in steps if t - s.t < cfg.horizon - _EPS]
    if not recent:
        return GaitClass.SNEAKING
    if len(steps) >= 2:
        a, b = steps[-2], steps[-1]
        if (t - a.t < cfg.horizon - _EPS and a.foot != b.foot
                and b.t - a.t < cfg.run_interval - _EPS
                and a.peak_decel >= thresholds.stomp_min and b.peak_decel >= thresholds.stomp_min):
            return GaitClass.RUNNING
    if any(s.intensity is not StepIntensity.SNEAK_STEP for s in recent):
        return GaitClass.WALKING
    return GaitClass.SNEAKING


def states_from_steps(times: Iterable[float], steps: Sequence[StepEvent],
                      thresholds: DecelThresholds, cfg: TrackerConfig) -> list[GaitStateSample]:
    out = []
    j = 0
    for t in times:
        while j < len(steps) and steps[j].t <= t + _EPS:
            j += 1
        lo = j
        while lo > 0 and t - steps[lo - 1].t < cfg.horizon - _EPS:
            lo -= 1
        # keep one extra step before the horizon for the running pair check
        window = steps[max(0, lo - 1):j] if j - lo < 2 else steps[lo:j]
        out.append(GaitStateSample(float(t), gait_state_at(t, window, thresholds, cfg)))
    return out


def tracker_classifier(trace: MotionTrace, thresholds: DecelThresholds = DecelThresholds(),
                       cfg: TrackerConfig = TrackerConfig()) -> Classification:
    """Foot-tracker mechanism: kinematics, median filter, peak detection per foot."""
    series = foot_series(trace, cfg.window)
    steps = detect_steps(series, thresholds, cfg.refractory)
    times = np.union1d(series[0].t, series[1].t)
    states = states_from_steps(times, steps, thresholds, cfg)
    noises = tuple(NoiseEvent(s.t, s.pos, s.intensity) for s in steps)
    return Classification(tuple(states), noises, tuple(steps))


# --- HMD mechanism ----------------------------------------------------------

class _Cadence:
    """Emits a WalkStep noise on entering Walking and every ``period`` seconds after."""

    def __init__(self, period: float):
        self.period = period
        self.next_t: float | None = None

    def update(self, t: float, walking: bool, pos) -> NoiseEvent | None:
        if not walking:
            self.next_t = None
            return None
        if self.next_t is None or t >= self.next_t - _EPS:
            self.next_t = t + self.period if self.next_t is None else self.next_t + self.period
            return NoiseEvent(t, (float(pos[0]), float(pos[1])), StepIntensity.WALK_STEP)
        return None


class HmdSpeedState:
    """Hysteresis state machine over the trailing-window mean horizontal speed."""

    def __init__(self, cfg: HmdConfig):
        self.cfg = cfg
        self.state = GaitClass.SNEAKING

    def update(self, mean_hspeed: float | None) -> GaitClass:
        if mean_hspeed is not None:
            if mean_hspeed < self.cfg.sneak_max_hspeed:
                self.state = GaitClass.SNEAKING
            elif mean_hspeed > self.cfg.sneak_max_hspeed + self.cfg.hysteresis_margin:
                self.state = GaitClass.WALKING
        return self.state


def trailing_means(series: KinematicSeries, window: float) -> list[float | None]:
    """Mean hspeed over frames in (t - window, t]; None until the window has filled."""
    out: list[float | None] = []
    for a, b in series.segment_bounds():
        t = series.t[a:b]
        h = series.hspeed[a:b]
        first = t[0]
        lo = 0
        for i in range(len(t)):
            while t[lo] <= t[i] - window + _EPS:
                lo += 1
            if t[i] - first < window - _EPS:
                out.append(None)
            else:
                out.append(math.fsum(h[lo:i + 1].tolist()) / (i + 1 - lo))
    return out


def hmd_classifier(trace: MotionTrace, cfg: HmdConfig = HmdConfig()) -> Classification:
    """HMD mechanism: horizontal head speed as a proxy for sneaking.

    Never reports Stomp or Running; Walking emits cadence WalkStep noise at
    the head's ground-plane position.
    """
    series = derive_kinematics(trace, DeviceId.HMD)
    machine = HmdSpeedState(cfg)
    cadence = _Cadence(cfg.cadence)
    states, noises = [], []
    for i, mean in enumerate(trailing_means(series, cfg.window)):
        t = float(series.t[i])
        state = machine.update(mean)
        states.append(GaitStateSample(t, state))
        noise = cadence.update(t, state is GaitClass.WALKING, series.pos[i, [0, 2]])
        if noise is not None:
            noises.append(noise)
    return Classification(tuple(states), tuple(noises))


# --- gamepad mechanism ------------------------------------------------------

def gamepad_model(trace: MotionTrace, cfg: GamepadConfig = GamepadConfig(),
                  start_pos: tuple[float, float] = (0.0, 0.0),
                  bounds: tuple[float, float, float, float] | None = None) -> Classification:
    """Joystick locomotion with a held sneak button.

    Deflection (ax, ay) maps to ground-plane (x, z), clipped to the unit disk
    and scaled by the sneak or walk speed.  Sneaking when the button is held or
    the resulting speed does not exceed ``cfg.sneak_speed``.
    """
    track = trace.track(DeviceId.GAMEPAD)
    if track.axes is None:
        raise MissingAxes("gamepad track carries no stick deflection")
    missing = np.flatnonzero(np.isnan(track.axes).any(axis=1))
    if len(missing):
        raise MissingAxes(f"gamepad record at t={track.t[missing[0]]} lacks deflection")
    defl = track.axes.copy()
    norm = np.linalg.norm(defl, axis=1)
    over = norm > 1.0
    defl[over] /= norm[over, None]
    speed = np.where(track.sneak, cfg.sneak_speed, cfg.walk_speed)
    vel = defl * speed[:, None]

    n = len(track.t)
    pos = np.empty((n, 2))
    pos[0] = start_pos
    for k in range(n - 1):
        nxt = pos[k] + vel[k] * (track.t[k + 1] - track.t[k])
        if bounds is not None:
            nxt = np.clip(nxt, [bounds[0], bounds[1]], [bounds[2], bounds[3]])
        pos[k + 1] = nxt

    cadence = _Cadence(cfg.cadence)
    states, noises = [], []
    for k in range(n):
        sneaking = bool(track.sneak[k]) or float(np.hypot(*vel[k])) <= cfg.sneak_speed + _EPS
        state = GaitClass.SNEAKING if sneaking else GaitClass.WALKING
        t = float(track.t[k])
        states.append(GaitStateSample(t, state))
        noise = cadence.update(t, not sneaking, pos[k])
        if noise is not None:
            noises.append(noise)
    positions = np.column_stack([track.t, pos])
    positions.setflags(write=False)
    return Classification(tuple(states), tuple(noises), positions=positions)


# --- calibration ------------------------------------------------------------

_LABEL_CLASS = {
    GaitClass.SNEAKING: 0, StepIntensity.SNEAK_STEP: 0,
    GaitClass.WALKING: 1, StepIntensity.WALK_STEP: 1,
    GaitClass.RUNNING: 2, StepIntensity.STOMP: 2,
}
_LABEL_ALIASES = {"sneak": 0, "walk": 1, "run": 2, "stomp": 2}
CLASS_NAMES = ("sneak", "walk", "stomp")


def label_class(label) -> int:
    """Map a gait label (enum or name) to 0 = sneak, 1 = walk, 2 = stomp/run."""
    if label in _LABEL_CLASS:
        return _LABEL_CLASS[label]
    if isinstance(label, str):
        key = label.lower()
        if key in _LABEL_ALIASES:
            return _LABEL_ALIASES[key]
        for enum in (GaitClass, StepIntensity):
            try:
                return _LABEL_CLASS[enum(key)]
            except ValueError:
                pass
    raise ValueError(f"unknown gait label {label!r}")


def measured_peaks(trace: MotionTrace, window: int = DEFAULT_WINDOW, refractory: float = 0.25,
                   min_peak: float = 0.5) -> list[tuple[float, float]]:
    """(time, peak decel) of every filtered foot peak above ``min_peak``."""
    out = []
    for s in foot_series(trace, window):
        out.extend((float(s.t[i]), float(s.decel[i])) for i in find_peaks(s, min_peak, refractory))
    out.sort()
    return out


def thresholds_from_peaks(peaks_by_class: Sequence[Sequence[float]], min_peaks: int = 5) -> DecelThresholds:
    """Thresholds from sneak, walk and stomp peak samples (in that order).

    Each class boundary is the midpoint between the lower class's 95th and the
    upper class's 5th percentile; the step floor is half the sneak 5th percentile.
    """
    if len(peaks_by_class) != 3:
        raise InsufficientData("need peak samples for sneak, walk and stomp classes")
    arrays = []
    for name, peaks in zip(CLASS_NAMES, peaks_by_class):
        arr = np.asarray(peaks, dtype=float)
        if len(arr) < min_peaks:
            raise InsufficientData(f"{name}: {len(arr)} peaks, need at least {min_peaks}")
        arrays.append(arr)
    sneak, walk, stomp = arrays
    bounds = []
    for (lo_name, lo), (hi_name, hi) in (((CLASS_NAMES[0], sneak), (CLASS_NAMES[1], walk)),
                                         ((CLASS_NAMES[1], walk), (CLASS_NAMES[2], stomp))):
        upper_lo = float(np.percentile(lo, 95))
        lower_hi = float(np.percentile(hi, 5))
        if upper_lo >= lower_hi:
            raise ClassOverlap(
                f"{lo_name} and {hi_name} peaks overlap: {lo_name} 95th percentile {upper_lo:.3f}"
                f" >= {hi_name} 5th percentile {lower_hi:.3f}"
            )
        bounds.append((upper_lo + lower_hi) / 2)
    floor = float(np.percentile(sneak, 5)) / 2
    return DecelThresholds(floor, bounds[0], bounds[1])


def calibrate_thresholds(labeled: Iterable[tuple[MotionTrace, object]], window: int = DEFAULT_WINDOW,
                         refractory: float = 0.25, min_peak: float = 0.5) -> DecelThresholds:
    """Fit thresholds to labeled foot traces.

    Each item is ``(trace, label)`` for a uniformly labeled trace, or
    ``(trace, [(t0, t1, label), ...])`` to label time segments; peaks outside
    every segment are ignored.
    """
    buckets: list[list[float]] = [[], [], []]
    for trace, label in labeled:
        peaks = measured_peaks(trace, window, refractory, min_peak)
        if isinstance(label, (list, tuple)):
            for t0, t1, seg_label in label:
                cls = label_class(seg_label)
                buckets[cls].extend(p for t, p in peaks if t0 <= t <= t1)
        else:
            buckets[label_class(label)].extend(p for _, p in peaks)
    return thresholds_from_peaks(buckets)


# --- noise indicator --------------------------------------------------------

def noise_indicator(t: float, events: Iterable[StepEvent | NoiseEvent],
                    thresholds: DecelThresholds = DecelThresholds(),
                    state: GaitClass | None = None, decay: float = 1.0) -> float:
    """Loudness readout in [0, 1] for the hand-held indicator.

    Uses the latest event at or before ``t``: its peak relative to
    ``stomp_min`` (nominal class peaks when no peak is known), fading linearly
    to 0 over ``decay`` seconds.  Sneak steps and a Sneaking state read 0.
    """
    if state is GaitClass.SNEAKING:
        return 0.0
    latest = None
    for e in events:
        if e.t <= t + _EPS and (latest is None or e.t >= latest.t):
            latest = e
    if latest is None or latest.intensity is StepIntensity.SNEAK_STEP:
        return 0.0
    peak = getattr(latest, "peak_decel", None)
    if peak is None:
        peak = thresholds.stomp_min if latest.intensity is StepIntensity.STOMP else thresholds.walk_min
    fade = max(0.0, 1.0 - (t - latest.t) / decay)
    return min(1.0, peak / thresholds.stomp_min) * fade


# --- output files -----------------------------------------------------------

def output_records(result: Classification, mechanism: str) -> list[dict]:
    recs = [(s.t, 0, {"t": s.t, "kind": "state", "state": s.state.value}) for s in result.states]
    recs += [(n.t, 1, {"t": n.t, "kind": "noise", "pos": list(n.pos), "intensity": n.intensity.value})
             for n in result.noises]
    recs.sort(key=lambda r: (r[0], r[1]))
    header = {"kind": "header", "format_version": OUTPUT_FORMAT_VERSION, "mechanism": mechanism}
    return [header] + [r[2] for r in recs]


def write_classification(result: Classification, dest: str | Path | IO[str], mechanism: str) -> None:
    lines = [json.dumps(r, allow_nan=False) for r in output_records(result, mechanism)]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8", newline="\n")
    else:
        dest.write(text)


def read_classification(path: str | Path) -> tuple[str | None, Classification]:
    """Read a classifier output file; returns (mechanism, classification)."""
    mechanism = None
    states, noises = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "header":
                    mechanism = rec.get("mechanism")
                elif kind == "state":
                    states.append(GaitStateSample(float(rec["t"]), GaitClass(rec["state"])))
                elif kind == "noise":
                    x, z = rec["pos"]
                    noises.append(NoiseEvent(float(rec["t"]), (float(x), float(z)),
                                             StepIntensity(rec["intensity"])))
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceParseError(f"bad classifier record: {exc}", lineno, str(path)) from None
    return mechanism, Classification(tuple(states), tuple(noises))
