"""``sneaksim`` command line: classify, synth, calibrate, simulate, stats, levels.

Exit codes: 0 success, 2 bad input or failed validation, 3 the player trace
ended before the last level was completed (the partial log is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .classify import (
    Classification, GaitClass, StepIntensity, calibrate_thresholds, gamepad_model, hmd_classifier,
    tracker_classifier, write_classification,
)
from .config import Config, load_config, save_config, tomllib
from .errors import SneakSimError, StreamExhausted, SynthError
from .motion import DEFAULT_RATE, DeviceId, FEET, MotionTrace, read_trace, write_trace
from .sim.level import LevelSpec, load_level, load_levels, validate_level
from .sim.session import PlayerStream, simulate_session
from .stats import aggregate, load_logs, render_table
from .synth import PROFILES, GaitProfile, PathSpec, get_profile, synth_session

DEFAULT_SEED = 0
MECHANISMS = ("tracker", "hmd", "gamepad")
CONFIG_ENV = "SNEAKSIM_CONFIG"
TRUTH_FORMAT_VERSION = 1


class UsageError(SneakSimError):
    pass


# --- shared pipeline --------------------------------------------------------

def classify_trace(trace: MotionTrace, mechanism: str, config: Config = Config()) -> Classification:
    if mechanism == "tracker":
        trace.require(*FEET)
        return tracker_classifier(trace, config.thresholds, config.tracker)
    if mechanism == "hmd":
        trace.require(DeviceId.HMD)
        return hmd_classifier(trace, config.hmd)
    if mechanism == "gamepad":
        trace.require(DeviceId.GAMEPAD)
        return gamepad_model(trace, config.gamepad)
    raise UsageError(f"unknown mechanism {mechanism!r}")


def player_stream(trace: MotionTrace, mechanism: str, config: Config = Config()) -> PlayerStream:
    """Classify ``trace`` and wrap the result as simulator input."""
    result = classify_trace(trace, mechanism, config)
    return PlayerStream.from_classification(trace, result, mechanism, config.sim.player_height)


def summary_lines(result: Classification) -> list[str]:
    ic = result.intensity_counts()
    sc = result.state_counts()
    total = max(1, len(result.states))
    pct = " ".join(f"{g.value}={100 * sc.get(g, 0) / total:.1f}%" for g in GaitClass)
    return [
        f"sneak_steps={ic.get(StepIntensity.SNEAK_STEP, 0)} walk_steps={ic.get(StepIntensity.WALK_STEP, 0)} "
        f"stomps={ic.get(StepIntensity.STOMP, 0)}",
        f"states={len(result.states)} {pct}",
    ]


def _config(args) -> Config:
    path = args.config or os.environ.get(CONFIG_ENV) or None
    return load_config(path, args.overrides)


def _pairs(items: Sequence[str], what: str) -> list[tuple[str, str]]:
    out = []
    for item in items:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"{what} arguments look like LABEL=PATH, got {item!r}")
        out.append((label, path))
    return out


# --- subcommands ------------------------------------------------------------

def cmd_classify(args) -> int:
    cfg = _config(args)
    trace = read_trace(args.trace, cfg.max_gap)
    result = classify_trace(trace, args.mechanism, cfg)
    out = Path(args.out) if args.out else Path(args.trace).with_suffix(f".{args.mechanism}.jsonl")
    write_classification(result, out, args.mechanism)
    for line in summary_lines(result):
        print(line)
    return 0


def _load_profile(spec: str) -> GaitProfile:
    if spec in PROFILES:
        return PROFILES[spec]
    path = Path(spec)
    if path.suffix != ".toml":
        raise SynthError(f"unknown profile {spec!r}; choose from {', '.join(PROFILES)} or give a .toml file")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise SynthError(f"cannot read profile {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SynthError(f"{path}: {exc}") from None
    table = dict(data.get("profile", data))
    base = table.pop("base", None)
    allowed = {f.name for f in fields(GaitProfile)}
    unknown = set(table) - allowed
    if unknown:
        raise SynthError(f"unknown profile key(s): {', '.join(sorted(unknown))}")
    try:
        if base is not None:
            return get_profile(base, **table)
        return GaitProfile(**table)
    except TypeError as exc:
        raise SynthError(f"incomplete profile in {path}: {exc}") from None


def write_truth(steps, dest: Path, profile: GaitProfile, seed: int) -> None:
    lines = [{"kind": "header", "format_version": TRUTH_FORMAT_VERSION, "profile": asdict(profile), "seed": seed}]
    lines += [{"kind": "step", "t": s.t, "foot": s.foot.value, "intensity": s.intensity.value,
               "pos": list(s.pos)} for s in steps]
    dest.write_text("".join(json.dumps(r, allow_nan=False) + "\n" for r in lines), encoding="utf-8", newline="\n")


def cmd_synth(args) -> int:
    profile = _load_profile(args.profile)
    if args.jitter is not None:
        profile = replace(profile, jitter=args.jitter)
    if not args.duration > 0:
        raise UsageError("--duration must be positive")
    devices = tuple(DeviceId(d) for d in args.devices.split(","))
    path = PathSpec.straight(profile.mean_speed * args.duration, tuple(args.start),
                             math.radians(args.heading), args.dwell)
    trace, truth = synth_session(profile, path, args.rate, args.seed, devices)
    out = Path(args.out or f"{Path(args.profile).stem}-seed{args.seed}.jsonl")
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.jsonl")
    write_trace(trace, out)
    write_truth(truth, truth_path, profile, args.seed)
    print(f"wrote {out} ({len(trace.samples())} samples) and {truth_path} ({len(truth)} steps)")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    labeled = [(read_trace(p, cfg.max_gap), label) for label, p in _pairs(args.labeled, "calibrate")]
    try:
        th = calibrate_thresholds(labeled, cfg.tracker.window, cfg.tracker.refractory)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_config(replace(cfg, thresholds=th), args.out)
    print(f"step_floor={th.step_floor:.3f} walk_min={th.walk_min:.3f} stomp_min={th.stomp_min:.3f}")
    return 0


def _ids(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--ids takes comma-separated integers, got {text!r}") from None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    levels = load_levels(args.levels, _ids(args.ids))
    trace = read_trace(args.trace, cfg.max_gap)
    stream = player_stream(trace, args.mechanism, cfg)
    out = Path(args.out) if args.out else Path(args.trace).with_suffix(".session.json")
    try:
        log = simulate_session(levels, stream, cfg, args.seed, args.mechanism)
    except StreamExhausted as exc:
        exc.log.save(out)
        print(exc.log.summary())
        print(f"incomplete: {exc}", file=sys.stderr)
        return 3
    log.save(out)
    print(log.summary())
    return 0


def cmd_stats(args) -> int:
    groups: dict[str, list[str]] = {}
    for label, path in _pairs(args.groups, "stats"):
        groups.setdefault(label, []).append(path)
    report = aggregate({label: load_logs(paths) for label, paths in groups.items()})
    print(render_table(report), end="")
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8", newline="\n")
    return 0


def _level_arg(value: str, source: str | None) -> LevelSpec:
    if value.isdigit():
        return load_levels(source, [int(value)])[0]
    return load_level(value)


def level_dict(lv: LevelSpec) -> dict:
    g = lv.guard
    return {
        "id": lv.id, "name": lv.name, "description": lv.description, "concept": lv.concept,
        "bounds": [lv.bounds.x0, lv.bounds.z0, lv.bounds.x1, lv.bounds.z1],
        "teleporter": list(lv.teleporter), "tablet": list(lv.tablet), "tablet_hidden": lv.tablet_hidden,
        "guard": {
            "outside": lv.guard_outside, "move_speed": g.move_speed, "fov_deg": g.fov_deg,
            "view_range": g.view_range, "hear_ranges": {k.value: v for k, v in g.hear_ranges.items()},
            "waypoints": [{"pos": list(w.pos), "dwell": w.dwell,
                           "facing": None if w.facing is None else round(math.degrees(w.facing), 6)}
                          for w in g.waypoints],
        },
        "obstacles": [{"rect": [o.rect.x0, o.rect.z0, o.rect.x1, o.rect.z1], "height": o.height,
                       "path": [list(p) for p in o.path], "speed": o.speed} for o in lv.obstacles],
        "lasers": [{"a": list(la.a), "b": list(la.b), "height": la.height} for la in lv.lasers],
    }


def _show(lv: LevelSpec) -> list[str]:
    g = lv.guard
    b = lv.bounds
    lines = [f"level {lv.id:02d}: {lv.name}", f"  description: {lv.description}", f"  concept:     {lv.concept}",
             f"  bounds: ({b.x0}, {b.z0})-({b.x1}, {b.z1}), {b.area:g} m^2",
             f"  teleporter: {lv.teleporter}  tablet: {lv.tablet}{' (hidden)' if lv.tablet_hidden else ''}"]
    where = "outside the room" if lv.guard_outside else "inside"
    lines.append(f"  guard ({where}): speed {g.move_speed} m/s, fov {g.fov_deg:g} deg, range {g.view_range} m")
    for w in g.waypoints:
        facing = "" if w.facing is None else f", facing {math.degrees(w.facing):g} deg"
        lines.append(f"    waypoint {w.pos}, dwell {w.dwell} s{facing}")
    for o in lv.obstacles:
        r = o.rect
        move = f", moving along {list(o.path)} at {o.speed} m/s" if o.moving else ""
        lines.append(f"  obstacle ({r.x0}, {r.z0})-({r.x1}, {r.z1}), height {o.height} m{move}")
    for la in lv.lasers:
        lines.append(f"  laser {la.a}-{la.b} at {la.height} m")
    return lines


def cmd_levels(args) -> int:
    if args.action == "list":
        levels = load_levels(args.levels)
        if args.json:
            print(json.dumps([{"id": lv.id, "description": lv.description, "concept": lv.concept}
                              for lv in levels], indent=2))
        else:
            for lv in levels:
                print(f"{lv.id:02d}  {lv.description:<40}  {lv.concept}")
        return 0
    if args.action == "show":
        if not args.target:
            raise UsageError("levels show needs a level id or file")
        for target in args.target:
            lv = _level_arg(target, args.levels)
            if args.json:
                print(json.dumps(level_dict(lv), indent=2))
            else:
                print("\n".join(_show(lv)))
        return 0
    targets = args.target or [None]
    for target in targets:
        if target is None:
            checked = load_levels(args.levels)
        else:
            checked = load_levels(target) if Path(target).is_dir() else [load_level(target)]
        for lv in checked:
            validate_level(lv)
            print(f"ok  level {lv.id:02d} ({lv.name})" + (f"  {target}" if target else ""))
    return 0


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"TOML configuration file (default: ${CONFIG_ENV})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value; repeatable")

    p = argparse.ArgumentParser(prog="sneaksim", description="Sneaking detection and stealth-game simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="classify a motion trace")
    c.add_argument("trace")
    c.add_argument("--mechanism", choices=MECHANISMS, required=True)
    c.add_argument("--out", help="classifier output (default: <trace>.<mechanism>.jsonl)")
    c.set_defaults(func=cmd_classify)

    s = sub.add_parser("synth", help="generate a synthetic gait trace")
    s.add_argument("--profile", required=True, help=f"{', '.join(PROFILES)} or a profile .toml file")
    s.add_argument("--duration", type=float, default=10.0, help="walking time in seconds")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--rate", type=float, default=DEFAULT_RATE)
    s.add_argument("--jitter", type=float)
    s.add_argument("--start", type=float, nargs=2, default=(0.5, 2.0), metavar=("X", "Z"))
    s.add_argument("--heading", type=float, default=0.0, help="walking direction in degrees")
    s.add_argument("--dwell", type=float, default=0.0, help="standing time after the last step")
    s.add_argument("--devices", default="hmd,left_foot,right_foot,gamepad")
    s.add_argument("--out")
    s.add_argument("--truth", help="ground-truth steps (default: <out>.truth.jsonl)")
    s.set_defaults(func=cmd_synth)

    k = sub.add_parser("calibrate", parents=[common], help="fit deceleration thresholds to labeled traces")
    k.add_argument("labeled", nargs="+", metavar="LABEL=TRACE", help="label is sneak, walk or stomp")
    k.add_argument("--out", required=True, help="configuration file to write")
    k.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("simulate", parents=[common], help="play the levels with a motion trace")
    m.add_argument("trace")
    m.add_argument("--mechanism", choices=MECHANISMS, required=True)
    m.add_argument("--levels", help="directory or file of levels (default: bundled)")
    m.add_argument("--ids", help="comma-separated level ids to play, in order")
    m.add_argument("--seed", type=int, default=DEFAULT_SEED)
    m.add_argument("--out", help="session log (default: <trace>.session.json)")
    m.set_defaults(func=cmd_simulate)

    t = sub.add_parser("stats", help="aggregate session logs per condition")
    t.add_argument("groups", nargs="+", metavar="CONDITION=PATH")
    t.add_argument("--out", help="JSON report")
    t.set_defaults(func=cmd_stats)

    lv = sub.add_parser("levels", help="list, show or validate levels")
    lv.add_argument("action", choices=("list", "show", "validate"))
    lv.add_argument("target", nargs="*", help="level id or file (show); files or directories (validate)")
    lv.add_argument("--levels", help="directory of levels (default: bundled)")
    lv.add_argument("--json", action="store_true")
    lv.set_defaults(func=cmd_levels)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SneakSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 2
