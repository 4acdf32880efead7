"""Time grids measured in year fractions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, InvalidTimeGrid

# Matching tolerance when locating a time value on a grid. Grids are parsed
# from the same decimal config in normal use, so matches are usually exact;
# the tolerance only absorbs last-ulp noise from arithmetic on times.
TIME_MATCH_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing, non-negative year-fraction time steps.

    Parameters
    ----------
    times : array-like of float
        At least one entry, strictly increasing, all finite and >= 0.
    labels : list of str, optional
        One label per time step (e.g. "t0", "t1").
    """

    times: np.ndarray
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or t.size < 1:
            raise InvalidTimeGrid("grid needs at least one time step")
        if not np.all(np.isfinite(t)):
            raise InvalidTimeGrid("grid times must be finite")
        if np.any(t < 0):
            raise InvalidTimeGrid("grid times must be non-negative year fractions")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidTimeGrid("grid times must be strictly increasing (no duplicates)")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != t.size:
                raise InvalidTimeGrid("one label per time step required")
            object.__setattr__(self, "labels", labels)
        t.flags.writeable = False
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return int(self.times.size)

    def contains(self, time: float) -> bool:
        return bool(np.any(np.abs(self.times - time) <= TIME_MATCH_TOL * max(1.0, abs(time))))

    def index_of(self, time: float) -> int:
        """Index of `time` on the grid, or GridMismatch if absent."""
        hits = np.nonzero(np.abs(self.times - time) <= TIME_MATCH_TOL * max(1.0, abs(time)))[0]
        if hits.size == 0:
            raise GridMismatch(f"time {time} is not on the grid")
        return int(hits[0])

    def label(self, index: int) -> str:
        if self.labels is not None:
            return self.labels[index]
        return f"t{index}"
