"""Trace data model and kinematic derivations.

A :class:`MotionTrace` holds timestamped samples per tracked device.  From a
device track we derive per-frame speed, horizontal (ground-plane) speed and a
non-negative deceleration magnitude using backward differences, so the same
numbers are available in a streaming setting.

Coordinates: the ground plane is spanned by x and z, height is y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyDevice, InvalidWindow, NonMonotonicTime, TraceError, TraceParseError

TRACE_FORMAT_VERSION = 1
DEFAULT_MAX_GAP = 0.2
DEFAULT_RATE = 90.0
DEFAULT_WINDOW = 3


class DeviceId(str, Enum):
    HMD = "hmd"
    LEFT_FOOT = "left_foot"
    RIGHT_FOOT = "right_foot"
    GAMEPAD = "gamepad"

    @property
    def order(self) -> int:
        return _DEVICE_ORDER[self]


_DEVICE_ORDER = {d: i for i, d in enumerate(DeviceId)}
FEET = (DeviceId.LEFT_FOOT, DeviceId.RIGHT_FOOT)


@dataclass(frozen=True)
class MotionSample:
    t: float
    device: DeviceId
    pos: tuple[float, float, float] | None = None
    axes: tuple[float, float] | None = None
    sneak: bool = False

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise TraceError(f"non-finite timestamp {self.t!r}")
        if self.pos is not None and not all(math.isfinite(c) for c in self.pos):
            raise TraceError(f"non-finite position at t={self.t}")
        if self.axes is not None and not all(math.isfinite(c) for c in self.axes):
            raise TraceError(f"non-finite stick deflection at t={self.t}")
        if self.device is not DeviceId.GAMEPAD and self.pos is None:
            raise TraceError(f"{self.device.value} sample at t={self.t} has no position")


@dataclass(frozen=True, eq=False)
class DeviceTrack:
    """Column-oriented samples of one device.

    Positional devices carry ``pos`` (N, 3).  Gamepad tracks carry ``axes`` (N, 2),
    with NaN rows where a record had no deflection, and ``sneak`` (N,).
    """

    device: DeviceId
    t: np.ndarray
    pos: np.ndarray | None = None
    axes: np.ndarray | None = None
    sneak: np.ndarray | None = None

    def __post_init__(self):
        for name in ("t", "pos", "axes", "sneak"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=bool if name == "sneak" else float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        n = len(self.t)
        if self.pos is not None and self.pos.shape != (n, 3):
            raise TraceError(f"{self.device.value}: positions must have shape ({n}, 3)")
        if self.axes is not None and self.axes.shape != (n, 2):
            raise TraceError(f"{self.device.value}: axes must have shape ({n}, 2)")
        if self.sneak is not None and self.sneak.shape != (n,):
            raise TraceError(f"{self.device.value}: sneak flags must have shape ({n},)")
        if not np.all(np.isfinite(self.t)):
            raise TraceError(f"{self.device.value}: non-finite timestamp")
        if self.pos is not None and not np.all(np.isfinite(self.pos)):
            raise TraceError(f"{self.device.value}: non-finite position")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            i = int(np.argmax(np.diff(self.t) <= 0)) + 1
            raise NonMonotonicTime(
                f"{self.device.value}: timestamps not strictly increasing at t={self.t[i]}"
            )

    def __len__(self) -> int:
        return len(self.t)

    def samples(self) -> Iterator[MotionSample]:
        for i in range(len(self.t)):
            pos = axes = None
            sneak = False
            if self.pos is not None:
                pos = tuple(float(c) for c in self.pos[i])
            if self.axes is not None and not np.any(np.isnan(self.axes[i])):
                axes = tuple(float(c) for c in self.axes[i])
            if self.sneak is not None:
                sneak = bool(self.sneak[i])
            yield MotionSample(float(self.t[i]), self.device, pos, axes, sneak)

    def segment_bounds(self, max_gap: float) -> list[tuple[int, int]]:
        """Half-open index ranges of the runs separated by gaps > ``max_gap``."""
        if len(self.t) == 0:
            return []
        cuts = np.flatnonzero(np.diff(self.t) > max_gap) + 1
        edges = [0, *cuts.tolist(), len(self.t)]
        return list(zip(edges[:-1], edges[1:]))

    def shifted(self, dt: float) -> DeviceTrack:
        return DeviceTrack(self.device, self.t + dt, self.pos, self.axes, self.sneak)

    def equals(self, other: DeviceTrack) -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b, equal_nan=a.dtype.kind == "f")

        return self.device == other.device and all(
            same(getattr(self, n), getattr(other, n)) for n in ("t", "pos", "axes", "sneak")
        )


class MotionTrace:
    """Samples grouped per device.

    Per device, timestamps are strictly increasing.  Gaps longer than
    ``max_gap`` do not invalidate the trace; they flag it ``discontinuous`` and
    split kinematic derivation.
    """

    def __init__(self, tracks: Mapping[DeviceId, DeviceTrack] | Iterable[DeviceTrack] = (),
                 max_gap: float = DEFAULT_MAX_GAP):
        if isinstance(tracks, Mapping):
            tracks = tracks.values()
        self._tracks: dict[DeviceId, DeviceTrack] = {}
        for tr in sorted(tracks, key=lambda tr: tr.device.order):
            if len(tr):
                self._tracks[tr.device] = tr
        self.max_gap = float(max_gap)

    @classmethod
    def from_samples(cls, samples: Iterable[MotionSample], max_gap: float = DEFAULT_MAX_GAP) -> MotionTrace:
        grouped: dict[DeviceId, list[MotionSample]] = {}
        for s in samples:
            grouped.setdefault(s.device, []).append(s)
        tracks = []
        for dev, group in grouped.items():
            t = [s.t for s in group]
            if dev is DeviceId.GAMEPAD:
                axes = [s.axes if s.axes is not None else (math.nan, math.nan) for s in group]
                tracks.append(DeviceTrack(dev, t, axes=axes, sneak=[s.sneak for s in group]))
            else:
                tracks.append(DeviceTrack(dev, t, pos=[s.pos for s in group]))
        return cls(tracks, max_gap=max_gap)

    @classmethod
    def from_positions(cls, device: DeviceId, t, pos, max_gap: float = DEFAULT_MAX_GAP) -> MotionTrace:
        return cls([DeviceTrack(device, t, pos=pos)], max_gap=max_gap)

    @property
    def devices(self) -> tuple[DeviceId, ...]:
        return tuple(self._tracks)

    def __contains__(self, device: DeviceId) -> bool:
        return device in self._tracks

    def track(self, device: DeviceId) -> DeviceTrack:
        try:
            return self._tracks[device]
        except KeyError:
            raise EmptyDevice(device) from None

    def require(self, *devices: DeviceId) -> None:
        for d in devices:
            if d not in self._tracks:
                raise EmptyDevice(d)

    @property
    def discontinuous(self) -> bool:
        return any(len(tr.segment_bounds(self.max_gap)) > 1 for tr in self._tracks.values())

    @property
    def start(self) -> float:
        return min(float(tr.t[0]) for tr in self._tracks.values())

    @property
    def end(self) -> float:
        return max(float(tr.t[-1]) for tr in self._tracks.values())

    def samples(self) -> list[MotionSample]:
        out = [s for tr in self._tracks.values() for s in tr.samples()]
        out.sort(key=lambda s: (s.t, s.device.order))
        return out

    def with_track(self, track: DeviceTrack) -> MotionTrace:
        tracks = dict(self._tracks)
        tracks[track.device] = track
        return MotionTrace(tracks, max_gap=self.max_gap)

    def merged(self, other: MotionTrace) -> MotionTrace:
        tracks = dict(self._tracks)
        tracks.update(other._tracks)
        return MotionTrace(tracks, max_gap=self.max_gap)

    def shifted(self, dt: float) -> MotionTrace:
        return MotionTrace([tr.shifted(dt) for tr in self._tracks.values()], max_gap=self.max_gap)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionTrace):
            return NotImplemented
        return self.devices == other.devices and all(
            self._tracks[d].equals(other._tracks[d]) for d in self.devices
        )

    def __repr__(self) -> str:
        counts = ", ".join(f"{d.value}={len(tr)}" for d, tr in self._tracks.items())
        return f"MotionTrace({counts})"


@dataclass(frozen=True)
class KinematicFrame:
    t: float
    speed: float
    hspeed: float
    decel: float


@dataclass(frozen=True, eq=False)
class KinematicSeries:
    """Per-frame kinematics of one device.

    Frame ``i`` is derived from the sample pair (i-1, i) and stamped with the
    later sample's time and position.  ``segment`` numbers the continuous runs
    of the source track; nothing is differenced across a segment boundary.
    """

    device: DeviceId
    t: np.ndarray
    speed: np.ndarray
    hspeed: np.ndarray
    decel: np.ndarray
    pos: np.ndarray
    segment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.segment is None:
            object.__setattr__(self, "segment", np.zeros(len(self.t), dtype=int))
        for name in ("t", "speed", "hspeed", "decel", "pos", "segment"):
            arr = np.array(getattr(self, name), dtype=int if name == "segment" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.t)

    def frames(self) -> list[KinematicFrame]:
        return [
            KinematicFrame(float(t), float(s), float(h), float(d))
            for t, s, h, d in zip(self.t, self.speed, self.hspeed, self.decel)
        ]

    def segment_bounds(self) -> list[tuple[int, int]]:
        if len(self.t) == 0:
            return []
        cuts = np.flatnonzero(np.diff(self.segment) != 0) + 1
        edges = [0, *cuts.tolist(), len(self.t)]
        return list(zip(edges[:-1], edges[1:]))

    def with_decel(self, decel) -> KinematicSeries:
        return KinematicSeries(self.device, self.t, self.speed, self.hspeed, decel, self.pos, self.segment)


def _decel_from_speed(speed: np.ndarray, dt: np.ndarray) -> np.ndarray:
    decel = np.zeros_like(speed)
    if len(speed) > 1:
        decel[1:] = np.maximum(0.0, (speed[:-1] - speed[1:]) / dt[1:])
    return decel


def derive_kinematics(trace: MotionTrace, device: DeviceId, max_gap: float | None = None) -> KinematicSeries:
    """Speed, horizontal speed and deceleration of one positional device.

    ``speed_i = |p_i - p_{i-1}| / dt_i`` and ``decel_i = max(0, (speed_{i-1} - speed_i) / dt_i)``;
    the first frame of every continuous run has no previous speed and gets 0.
    """
    track = trace.track(device)
    if len(track) < 2:
        raise EmptyDevice(device)
    if track.pos is None:
        raise TraceError(f"{device.value} carries no positions")
    if np.any(np.diff(track.t) <= 0):
        raise NonMonotonicTime(f"{device.value}: timestamps not strictly increasing")
    gap = trace.max_gap if max_gap is None else max_gap

    parts = []
    for seg_id, (a, b) in enumerate(track.segment_bounds(gap)):
        if b - a < 2:
            continue
        t = track.t[a:b]
        p = track.pos[a:b]
        dt = np.diff(t)
        disp = np.diff(p, axis=0)
        speed = np.linalg.norm(disp, axis=1) / dt
        hspeed = np.hypot(disp[:, 0], disp[:, 2]) / dt
        parts.append((t[1:], speed, hspeed, _decel_from_speed(speed, dt), p[1:],
                      np.full(len(dt), seg_id)))
    if not parts:
        raise EmptyDevice(device)
    cols = [np.concatenate(c) for c in zip(*parts)]
    return KinematicSeries(device, *cols)


def median_filter(values: np.ndarray, window: int) -> np.ndarray:
    """Running median with edge replication; ``window`` must be odd."""
    values = np.asarray(values, dtype=float)
    if window == 1 or len(values) == 0:
        return values.copy()
    half = window // 2
    padded = np.pad(values, half, mode="edge")
    return np.median(sliding_window_view(padded, window), axis=1)


def check_window(window) -> int:
    if isinstance(window, bool) or not isinstance(window, (int, np.integer)):
        raise InvalidWindow(f"window must be an odd integer >= 1, got {window!r}")
    if window < 1 or window % 2 == 0:
        raise InvalidWindow(f"window must be an odd integer >= 1, got {window}")
    return int(window)


def sliding_window_filter(series: KinematicSeries, window: int = DEFAULT_WINDOW) -> KinematicSeries:
    """Replace each decel value by the median of its surrounding window.

    Runs across segment boundaries are filtered independently, each with its
    own clamped (edge-replicated) ends.
    """
    window = check_window(window)
    if window == 1:
        return series
    out = np.empty(len(series))
    for a, b in series.segment_bounds():
        out[a:b] = median_filter(series.decel[a:b], window)
    return series.with_decel(out)


def resample_trace(trace: MotionTrace, rate: float) -> MotionTrace:
    """Resample every device to a uniform grid at ``rate`` Hz.

    The grid starts at the device's first timestamp and spans to its last,
    bridging any dropouts.  Positions are linearly interpolated; gamepad
    deflection and sneak flag are held (zero-order) from the latest sample at
    or before the grid time.
    """
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    tracks = []
    for dev in trace.devices:
        track = trace.track(dev)
        if len(track) < 2:
            raise EmptyDevice(dev)
        t = track.t
        n = int(math.floor((t[-1] - t[0]) * rate + 1e-9)) + 1
        grid = t[0] + np.arange(n) / rate
        pos = axes = sneak = None
        if track.pos is not None:
            pos = np.column_stack([np.interp(grid, t, track.pos[:, k]) for k in range(3)])
        if track.axes is not None:
            idx = np.clip(np.searchsorted(t, grid + 1e-12, side="right") - 1, 0, len(t) - 1)
            axes, sneak = track.axes[idx], track.sneak[idx]
        tracks.append(DeviceTrack(dev, grid, pos=pos, axes=axes, sneak=sneak))
    return MotionTrace(tracks, max_gap=trace.max_gap)


# --- JSON Lines trace files -------------------------------------------------

def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} not allowed")


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{what} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite")
    return value


def parse_sample(record: dict) -> MotionSample:
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    t = _number(record.get("t"), "t")
    if t < 0:
        raise ValueError("t must be non-negative")
    try:
        device = DeviceId(record.get("device"))
    except ValueError:
        raise ValueError(f"unknown device {record.get('device')!r}") from None
    if device is DeviceId.GAMEPAD:
        axes = record.get("axes")
        if axes is not None:
            if not isinstance(axes, list) or len(axes) != 2:
                raise ValueError("axes must be a list of 2 numbers")
            axes = tuple(_number(a, "axes") for a in axes)
            if any(abs(a) > 1.0 for a in axes):
                raise ValueError("axes must lie in [-1, 1]")
        sneak = record.get("sneak", False)
        if not isinstance(sneak, bool):
            raise ValueError("sneak must be true or false")
        return MotionSample(t, device, axes=axes, sneak=sneak)
    pos = record.get("pos")
    if not isinstance(pos, list) or len(pos) != 3:
        raise ValueError("pos must be a list of 3 numbers")
    return MotionSample(t, device, pos=tuple(_number(c, "pos") for c in pos))


def read_trace(source: str | Path | IO[str], max_gap: float = DEFAULT_MAX_GAP) -> MotionTrace:
    """Read a JSON Lines trace; errors carry the offending line number."""
    if isinstance(source, (str, Path)):
        path = str(source)
        try:
            with open(source, encoding="utf-8") as fh:
                return _read_lines(fh, path, max_gap)
        except OSError as exc:
            raise TraceParseError(str(exc), path=path) from None
    return _read_lines(source, getattr(source, "name", None), max_gap)


def _read_lines(lines: Iterable[str], path: str | None, max_gap: float) -> MotionTrace:
    samples = []
    last_t: dict[DeviceId, float] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line, parse_constant=_reject_constant)
            if isinstance(record, dict) and record.get("kind") == "header":
                continue
            sample = parse_sample(record)
        except (ValueError, TraceError) as exc:
            raise TraceParseError(str(exc), lineno, path) from None
        prev = last_t.get(sample.device)
        if prev is not None and sample.t <= prev:
            raise TraceParseError(
                f"{sample.device.value}: timestamp {sample.t} not after {prev}", lineno, path
            )
        last_t[sample.device] = sample.t
        samples.append(sample)
    if not samples:
        raise TraceParseError("trace contains no samples", path=path)
    return MotionTrace.from_samples(samples, max_gap=max_gap)


def sample_record(s: MotionSample) -> dict:
    rec: dict = {"t": s.t, "device": s.device.value}
    if s.device is DeviceId.GAMEPAD:
        if s.axes is not None:
            rec["axes"] = list(s.axes)
        rec["sneak"] = s.sneak
    else:
        rec["pos"] = list(s.pos)
    return rec


def write_trace(trace: MotionTrace, dest: str | Path | IO[str], header: bool = True) -> None:
    def emit(fh):
        if header:
            fh.write(json.dumps({"kind": "header", "format_version": TRACE_FORMAT_VERSION}) + "\n")
        for s in trace.samples():
            fh.write(json.dumps(sample_record(s), allow_nan=False) + "\n")

    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            emit(fh)
    else:
        emit(dest)
