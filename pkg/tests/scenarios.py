"""Hand-authored player streams and the logs they must produce.

Times of the expected events are worked out from the path geometry alone:
the simulator tick that first satisfies a distance condition is
``ceil(t * 90)`` where ``t`` solves the condition on the straight leg.
"""

from __future__ import annotations

import math

import numpy as np

from sneaksim.classify import NoiseEvent, StepIntensity
from sneaksim.motion import DeviceId, MotionTrace
from sneaksim.sim.session import PlayerStream

RATE = 90
DT = 1 / RATE


def knot_stream(knots, noises=(), rate=RATE) -> PlayerStream:
    """Piecewise-linear stream through ``(t, (x, z), head_height)`` knots."""
    kt = np.array([k[0] for k in knots], dtype=float)
    n = int(round(kt[-1] * rate))
    t = np.arange(n + 1) / rate
    pos = np.column_stack([np.interp(t, kt, [k[1][0] for k in knots]), np.interp(t, kt, [k[1][1] for k in knots])])
    h = np.interp(t, kt, [k[2] for k in knots])
    return PlayerStream(t, pos, h, tuple(noises))


def tick_at(t: float) -> int:
    """First simulator tick at or after time ``t`` (stream starting at 0)."""
    return math.ceil(t * RATE - 1e-9)


# --- level 1: steal the tablet, guard outside -------------------------------

def level1_hmd_trace(rate=RATE) -> MotionTrace:
    """Head walks 3 m east at 0.3 m/s, waits, and walks back."""
    t = np.arange(int(32 * rate) + 1) / rate
    x = np.interp(t, [0.0, 0.05, 10.05, 21.66, 31.66, 32.0], [0.5, 0.5, 3.5, 3.5, 0.5, 0.5])
    pos = np.column_stack([x, np.full_like(t, 1.7), np.full_like(t, 2.0)])
    return MotionTrace.from_positions(DeviceId.HMD, t, pos)


def level1_expected():
    # tablet (3.5, 2) is within 0.5 m once x >= 3.0: 2.5 m at 0.3 m/s after t = 0.05
    grab = tick_at(0.05 + 2.5 / 0.3)
    # teleporter (0.5, 2) within 0.5 m once x <= 1.0 on the way back
    done = tick_at(21.66 + 2.5 / 0.3)
    return [("TabletGrabbed", grab), ("LevelComplete", done)]


# --- level 6: stomp lure, then around the crates ----------------------------

LEVEL6_STOMP = 9.005
LEVEL6_KNOTS = [
    (0.0, (0.5, 0.5), 1.7),
    (6.0, (2.45, 0.9), 1.7),     # wait west of the crates
    (9.0, (2.45, 0.9), 1.7),
    (12.5, (3.6, 0.9), 1.7),     # slip along the south face
    (17.0, (3.6, 2.45), 1.7),    # up the east side past the tablet
    (22.0, (3.6, 0.5), 1.7),
    (31.0, (0.5, 0.5), 1.7),     # back home along the south wall
    (32.0, (0.5, 0.5), 1.7),
]


def level6_stream() -> PlayerStream:
    return knot_stream(LEVEL6_KNOTS, [NoiseEvent(LEVEL6_STOMP, (2.45, 0.9), StepIntensity.STOMP)])


def level6_expected():
    # guard dwells at (1.0, 3.4) at t = 9; the stomp is 2.89 m away, inside the 6 m stomp range
    heard = tick_at(LEVEL6_STOMP)
    # x = 3.6 leg: z = 0.9 + 1.55 (t - 12.5) / 4.5 reaches 1.9 (0.5 m below the tablet)
    grab = tick_at(12.5 + 4.5 * 1.0 / 1.55)
    # x = 3.6 - 3.1 (t - 22) / 9 reaches 1.0
    done = tick_at(22.0 + 9.0 * 2.6 / 3.1)
    return [("HeardNoise", heard), ("TabletGrabbed", grab), ("LevelComplete", done)]


# --- level 9: trip the beam standing, sneak back crouched -------------------

LEVEL9_KNOTS = [
    (0.0, (0.5, 0.5), 1.7),
    (0.02, (0.5, 0.5), 1.7),
    (6.3, (0.5, 2.7), 1.7),      # standing walk north; crosses the beam at z = 1.9
    (10.0, (0.5, 2.7), 1.7),     # hide behind the tall box while the guard searches
    (11.8, (0.5, 3.3), 1.7),
    (12.3, (0.5, 3.3), 1.0),     # crouch
    (20.3, (0.5, 0.5), 1.0),     # crouched return under the beam
    (21.0, (0.5, 0.5), 1.0),
]


def level9_stream() -> PlayerStream:
    return knot_stream(LEVEL9_KNOTS)


def level9_expected():
    trip = tick_at(0.02 + 6.28 * 1.4 / 2.2)
    # tablet (0.6, 3.5): within 0.5 m of x = 0.5 once z >= 3.5 - sqrt(0.24)
    grab = tick_at(10.0 + 1.8 * (3.5 - math.sqrt(0.24) - 2.7) / 0.6)
    # crouched leg z = 3.3 - 2.8 (t - 12.3) / 8 reaches 1.0
    done = tick_at(12.3 + 8.0 * 2.3 / 2.8)
    return [("LaserTripped", trip), ("HeardNoise", trip), ("TabletGrabbed", grab), ("LevelComplete", done)]
