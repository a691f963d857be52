"""Stealth-game simulator: levels, guard AI and session playback."""

from .guard import GuardMode, GuardState, PlayerState, guard_step, hearing_check, line_of_sight
from .level import LevelSpec, bundled_level, bundled_levels, load_level, load_levels, validate_level
from .session import PlayerStream, SessionLog, load_session, simulate_session

__all__ = [
    "GuardMode", "GuardState", "PlayerState", "guard_step", "hearing_check", "line_of_sight",
    "LevelSpec", "bundled_level", "bundled_levels", "load_level", "load_levels", "validate_level",
    "PlayerStream", "SessionLog", "load_session", "simulate_session",
]
