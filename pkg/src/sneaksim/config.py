"""Shared TOML configuration: thresholds, classifier windows, speeds, simulator tuning.

A file may hold any subset of the sections below; missing keys keep their
defaults and unknown keys are rejected::

    format_version = 1
    [tracker]   step_floor, walk_min, stomp_min, window, refractory, horizon, run_interval
    [hmd]       sneak_max_hspeed, window, hysteresis_margin, cadence
    [gamepad]   walk_speed, sneak_speed, cadence
    [trace]     max_gap
    [sim]       dt, fill_rate, decay_rate, search_time, turn_rate_deg, eye_height,
                crouch_height, grab_radius, player_height
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classify import DecelThresholds, GamepadConfig, HmdConfig, TrackerConfig
from .errors import ConfigError
from .motion import DEFAULT_MAX_GAP

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 90.0
    fill_rate: float = 0.5
    decay_rate: float = 0.25
    search_time: float = 3.0
    turn_rate_deg: float = 180.0
    eye_height: float = 1.6
    crouch_height: float = 1.2
    grab_radius: float = 0.5
    # head height used when the stream carries none (gamepad play)
    player_height: float = 1.7

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ConfigError(f"sim.dt must lie in (0, 0.1], got {self.dt}")
        for name in ("fill_rate", "turn_rate_deg", "eye_height", "crouch_height", "grab_radius", "player_height"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"sim.{name} must be positive")
        for name in ("decay_rate", "search_time"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"sim.{name} must be non-negative")


@dataclass(frozen=True)
class Config:
    thresholds: DecelThresholds = field(default_factory=DecelThresholds)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    hmd: HmdConfig = field(default_factory=HmdConfig)
    gamepad: GamepadConfig = field(default_factory=GamepadConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    max_gap: float = DEFAULT_MAX_GAP

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": CONFIG_FORMAT_VERSION,
            "tracker": {**asdict(self.thresholds), **asdict(self.tracker)},
            "hmd": asdict(self.hmd),
            "gamepad": asdict(self.gamepad),
            "trace": {"max_gap": self.max_gap},
            "sim": asdict(self.sim),
        }

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


_THRESHOLD_KEYS = {f.name for f in fields(DecelThresholds)}
_SECTIONS = {
    "tracker": _THRESHOLD_KEYS | {f.name for f in fields(TrackerConfig)},
    "hmd": {f.name for f in fields(HmdConfig)},
    "gamepad": {f.name for f in fields(GamepadConfig)},
    "trace": {"max_gap"},
    "sim": {f.name for f in fields(SimConfig)},
}


def _number(section: str, key: str, value) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key} must be finite")
    return value


def config_from_dict(data: dict[str, Any], base: Config | None = None) -> Config:
    cfg = base or Config()
    version = data.get("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config format_version {version!r}")
    for name in data:
        if name != "format_version" and name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
    try:
        for section, allowed in _SECTIONS.items():
            table = data.get(section, {})
            if not isinstance(table, dict):
                raise ConfigError(f"[{section}] must be a table")
            unknown = set(table) - allowed
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
            vals = {k: _number(section, k, v) for k, v in table.items()}
            if not vals:
                continue
            if section == "tracker":
                th = {k: float(v) for k, v in vals.items() if k in _THRESHOLD_KEYS}
                rest = {k: v for k, v in vals.items() if k not in _THRESHOLD_KEYS}
                if "window" in rest and not float(rest["window"]).is_integer():
                    raise ConfigError("tracker.window must be an integer")
                if "window" in rest:
                    rest["window"] = int(rest["window"])
                cfg = replace(cfg, thresholds=replace(cfg.thresholds, **th), tracker=replace(cfg.tracker, **rest))
            elif section == "trace":
                if not vals["max_gap"] > 0:
                    raise ConfigError("trace.max_gap must be positive")
                cfg = replace(cfg, max_gap=float(vals["max_gap"]))
            else:
                cfg = replace(cfg, **{section: replace(getattr(cfg, section), **vals)})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_override(item: str) -> tuple[str, str, Any]:
    """Split ``section.key=value``; the value is read as a TOML scalar."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    lhs, raw = item.split("=", 1)
    if lhs.count(".") != 1:
        raise ConfigError(f"override {item!r} must name section.key")
    section, key = (p.strip() for p in lhs.split("."))
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        raise ConfigError(f"override {item!r}: value is not a TOML scalar") from None
    return section, key, value


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> Config:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        section, key, value = parse_override(item)
        data.setdefault(section, {})[key] = value
    return config_from_dict(data)


def dump_config(cfg: Config) -> str:
    return tomli_w.dumps(cfg.to_dict())


def save_config(cfg: Config, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")
