"""Right-continuous step functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function.

    ``f(t) = values[k]`` for the largest ``k`` with ``knots[k] <= t`` and
    ``value_before_first_knot`` for ``t < knots[0]``.
    """

    knots: np.ndarray
    values: np.ndarray
    value_before_first_knot: float = 0.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if knots.shape != values.shape:
            raise ValueError("knots and values must have equal length")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "value_before_first_knot", float(self.value_before_first_knot))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        table = np.concatenate([[self.value_before_first_knot], self.values])
        out = table[idx + 1]
        return out if out.ndim else float(out)

    def __len__(self) -> int:
        return self.knots.size

    def is_monotone(self) -> bool:
        v = np.concatenate([[self.value_before_first_knot], self.values])
        return bool(np.all(np.diff(v) >= 0))

    def scaled(self, c: float) -> "StepFunction":
        return StepFunction(self.knots, c * self.values, c * self.value_before_first_knot)

    def time_scaled(self, c: float) -> "StepFunction":
        """Return ``t -> f(c t)`` for ``c > 0``."""
        return StepFunction(self.knots / c, self.values, self.value_before_first_knot)

    def on_grid(self, grid) -> "StepFunction":
        grid = np.unique(np.asarray(grid, dtype=float))
        return StepFunction(grid, self(grid), self.value_before_first_knot)

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "value_before_first_knot": self.value_before_first_knot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(d["knots"], d["values"], d.get("value_before_first_knot", 0.0))

    @classmethod
    def from_jumps(cls, times, jumps, start: float = 0.0) -> "StepFunction":
        """Cumulative sum of ``jumps`` located at ``times`` (ties aggregated)."""
        times = np.asarray(times, dtype=float)
        jumps = np.asarray(jumps, dtype=float)
        if times.size == 0:
            return cls(np.empty(0), np.empty(0), start)
        knots, inv = np.unique(times, return_inverse=True)
        agg = np.zeros(knots.size)
        np.add.at(agg, inv, jumps)
        return cls(knots, start + np.cumsum(agg), start)
