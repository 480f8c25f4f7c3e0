from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Waveform:
    """Piecewise-linear voltage waveform, clamped to its end values."""

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise ValueError("waveform needs matching, non-empty time/value lists")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("waveform times must be non-decreasing")
        if not all(math.isfinite(x) for x in times + values):
            raise ValueError("waveform breakpoints must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def dc(cls, v: float) -> Waveform:
        return cls((0.0,), (v,))

    @classmethod
    def pwl(cls, points) -> Waveform:
        ts, vs = zip(*points)
        return cls(ts, vs)

    @classmethod
    def edges(cls, v0: float, transitions, ramp: float) -> Waveform:
        """Start at ``v0``; each ``(t_mid, v)`` ramps linearly to ``v`` centred on ``t_mid``."""
        pts = [(0.0, v0)]
        v = v0
        for t_mid, v_new in transitions:
            a, b = t_mid - ramp / 2, t_mid + ramp / 2
            if a < pts[-1][0]:
                raise ValueError("overlapping waveform edges")
            pts.append((a, v))
            pts.append((b, v_new))
            v = v_new
        return cls.pwl(pts)

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def at(self, t):
        return np.interp(t, self.times, self.values)

    def shifted(self, dt: float) -> Waveform:
        return Waveform(tuple(t + dt for t in self.times), self.values)
