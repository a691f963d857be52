"""Exception hierarchy shared by all sneaksim modules."""

from __future__ import annotations


class SneakSimError(Exception):
    """Base class; the CLI maps every subclass to exit code 2 unless noted."""


class TraceError(SneakSimError):
    pass


class TraceParseError(TraceError):
    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where = f"{where}{lineno}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class EmptyDevice(TraceError):
    def __init__(self, device):
        self.device = device
        name = getattr(device, "value", device)
        super().__init__(f"missing device: {name}")


class NonMonotonicTime(TraceError):
    pass


class InvalidWindow(SneakSimError, ValueError):
    pass


class InvalidThresholds(SneakSimError, ValueError):
    pass


class MissingAxes(TraceError):
    pass


class CalibrationError(SneakSimError):
    pass


class ClassOverlap(CalibrationError):
    pass


class InsufficientData(CalibrationError):
    pass


class SynthError(SneakSimError):
    pass


class RateTooLow(SynthError):
    pass


class TooCrowded(SynthError):
    pass


class ConfigError(SneakSimError):
    pass


class LevelError(SneakSimError):
    pass


class LevelParseError(LevelError):
    pass


class InvariantViolation(LevelError):
    pass


class StreamExhausted(SneakSimError):
    """The player stream ended before the final level was completed.

    The partial session log is attached as ``log``; the CLI exits with 3.
    """

    def __init__(self, log):
        self.log = log
        super().__init__("player stream exhausted before the final level completed")


class StatsError(SneakSimError):
    pass


class MixedLevelSets(StatsError):
    pass


class EmptyGroup(StatsError):
    pass
