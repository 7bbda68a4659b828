"""Reference trajectories: hover, straight passes and zig-zag patterns.

Paths are chains of rest-to-rest quintic (minimum-jerk) segments between
waypoints, so position is C2 across joins and every leg starts and ends at
zero velocity. Takeoff and landing are vertical segments added around the
path. Yaw can be fixed, follow the path tangent, or face a fixed point
(ship-relative flight keeps the camera on the ship that way).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ReferencePoint:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    yaw: float
    yaw_rate: float


@dataclass(frozen=True)
class Segment:
    name: str
    start: np.ndarray
    end: np.ndarray
    t0: float
    duration: float

    def sample(self, t: float):
        s = min(max((t - self.t0) / self.duration, 0.0), 1.0)
        blend = s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
        dblend = 30.0 * s * s * (1.0 - s) ** 2 / self.duration
        ddblend = (60.0 * s - 180.0 * s ** 2 + 120.0 * s ** 3) / self.duration ** 2
        delta = self.end - self.start
        return (self.start + blend * delta, dblend * delta, ddblend * delta)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Piecewise quintic reference; callable at any t (clamped to the ends)."""

    segments: tuple[Segment, ...]
    yaw_mode: str = "fixed"           # fixed | path | face_point
    yaw_value: float = 0.0
    face_point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def duration(self) -> float:
        last = self.segments[-1]
        return last.t0 + last.duration

    def _segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if t < seg.t0 + seg.duration:
                return seg
        return self.segments[-1]

    def _yaw_at(self, t: float) -> float:
        pos, vel, _ = self._segment_at(t).sample(t)
        if self.yaw_mode == "fixed":
            return self.yaw_value
        if self.yaw_mode == "face_point":
            d = self.face_point - pos
            return math.atan2(d[1], d[0])
        if self.yaw_mode == "path":
            if np.hypot(vel[0], vel[1]) < 1e-6:
                return self.yaw_value
            return math.atan2(vel[1], vel[0])
        raise ValueError(f"unknown yaw mode {self.yaw_mode!r}")

    def __call__(self, t: float) -> ReferencePoint:
        pos, vel, acc = self._segment_at(t).sample(t)
        yaw = self._yaw_at(t)
        h = 1e-3
        ya = self._yaw_at(t - h)
        yb = self._yaw_at(t + h)
        yaw_rate = math.remainder(yb - ya, 2.0 * math.pi) / (2.0 * h)
        return ReferencePoint(pos, vel, acc, yaw, yaw_rate)


def _chain(points: list[np.ndarray], names: list[str], speed: float,
           min_duration: float = 1.0) -> tuple[Segment, ...]:
    segments = []
    t0 = 0.0
    for a, b, name in zip(points[:-1], points[1:], names):
        dist = float(np.linalg.norm(b - a))
        # rest-to-rest quintic peaks at 1.875x the average speed
        duration = max(min_duration, dist / max(speed, 1e-6) * 1.875)
        segments.append(Segment(name, a, b, t0, duration))
        t0 += duration
    return tuple(segments)


def make_trajectory(kind: str, spec: dict) -> ReferenceTrajectory:
    """Build a reference trajectory.

    Common spec keys: speed (m/s, default 1.0), altitude (m, default 3.0),
    start (3,), yaw_mode/yaw/face_point, hover_time (s, pause at the ends).
    Kinds:
      hover    - position (3,), duration (s)
      straight - start -> goal at altitude, plus takeoff and landing
      zigzag   - legs (list of 3-vectors) visited in order after takeoff,
                 returning to land at the start
    """
    speed = float(spec.get("speed", 1.0))
    yaw_mode = spec.get("yaw_mode", "fixed")
    yaw_value = float(spec.get("yaw", 0.0))
    face_point = np.asarray(spec.get("face_point", (0.0, 0.0, 0.0)), dtype=float)

    if kind == "hover":
        p = np.asarray(spec["position"], dtype=float)
        duration = float(spec.get("duration", 10.0))
        seg = Segment("hover", p, p, 0.0, duration)
        return ReferenceTrajectory((seg,), yaw_mode, yaw_value, face_point)

    start = np.asarray(spec["start"], dtype=float)
    altitude = float(spec.get("altitude", 3.0))
    up = np.array([start[0], start[1], altitude])

    if kind == "straight":
        goal = np.asarray(spec["goal"], dtype=float)
        goal_up = np.array([goal[0], goal[1], altitude])
        points = [start, up, goal_up, np.array([goal[0], goal[1], start[2]])]
        names = ["takeoff", "cruise", "landing"]
    elif kind == "zigzag":
        legs = [np.asarray(p, dtype=float) for p in spec["legs"]]
        if not legs:
            raise ValueError("zigzag needs at least one leg waypoint")
        points = [start, up] + legs + [up, start]
        names = (["takeoff"] + [f"leg{i}" for i in range(len(legs))]
                 + ["return", "landing"])
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")

    segments = list(_chain(points, names, speed))
    hover_time = float(spec.get("hover_time", 0.0))
    if hover_time > 0:
        end = segments[-1]
        segments.append(Segment("hold", end.end, end.end,
                                end.t0 + end.duration, hover_time))
    return ReferenceTrajectory(tuple(segments), yaw_mode, yaw_value, face_point)
