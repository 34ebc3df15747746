"""Right-continuous non-decreasing step functions on [0, inf)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepFunction:
    """Cumulative step function: 0 before the first jump, flat after the last.

    ``jump_times`` are strictly increasing and positive; ``cumulative_values``
    hold the function value at (and after) each jump. Evaluation is
    right-continuous, so the jump at exactly ``t`` is included in ``f(t)``.
    """

    jump_times: np.ndarray
    cumulative_values: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        cv = np.asarray(self.cumulative_values, dtype=float)
        if jt.ndim != 1 or cv.ndim != 1 or jt.shape != cv.shape:
            raise ValueError("jump_times and cumulative_values must be 1-d and aligned")
        if jt.size and (np.any(jt <= 0.0) or np.any(np.diff(jt) <= 0.0)):
            raise ValueError("jump_times must be positive and strictly increasing")
        if cv.size and (cv[0] < 0.0 or np.any(np.diff(cv) < 0.0)):
            raise ValueError("cumulative_values must be non-negative and non-decreasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "cumulative_values", cv)

    def __call__(self, t):
        """Evaluate at scalar or array ``t``; values before the first jump are 0."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="right")
        padded = np.concatenate(([0.0], self.cumulative_values))
        out = padded[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    @property
    def increments(self) -> np.ndarray:
        """Jump sizes at each jump time."""
        return np.diff(self.cumulative_values, prepend=0.0)

    @property
    def final_value(self) -> float:
        return float(self.cumulative_values[-1]) if self.cumulative_values.size else 0.0
