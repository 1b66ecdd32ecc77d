"""Piecewise-constant trajectories of a jump process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..markov import Distribution, StateSpace


@dataclass(frozen=True)
class Trajectory:
    """Right-continuous path: start state, jump times, states after each jump.

    Jump times are strictly increasing in (0, horizon]; consecutive states
    differ; the path holds its last state until the horizon.
    """

    x0: int
    times: np.ndarray
    states: np.ndarray
    horizon: float
    space: StateSpace

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        states = np.ascontiguousarray(self.states, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if times.shape != states.shape:
            raise ValidationError("times and states must have equal length")
        if times.size:
            if times[0] <= 0.0 or times[-1] > self.horizon:
                raise ValidationError("jump times must lie in (0, horizon]")
            if np.any(np.diff(times) <= 0.0):
                raise ValidationError("jump times must be strictly increasing")
            seq = np.concatenate(([self.x0], states))
            if np.any(seq[1:] == seq[:-1]):
                raise ValidationError("consecutive states must differ")

    @property
    def n_jumps(self):
        return int(self.times.size)

    @property
    def final_state(self):
        return int(self.states[-1]) if self.times.size else self.x0

    def segments(self):
        """(state, duration) for every constant piece, in path order."""
        bounds = np.concatenate(([0.0], self.times, [self.horizon]))
        seq = np.concatenate(([self.x0], self.states))
        return seq, np.diff(bounds)

    def state_at(self, t):
        """State occupied at time t (right-continuous convention)."""
        if not 0.0 <= t <= self.horizon:
            raise ValidationError(f"time {t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.x0 if k == 0 else int(self.states[k - 1])


def occupation_measure(traj):
    """Empirical occupation measure: fraction of time in each state."""
    if traj.horizon <= 0.0:
        raise ValidationError("occupation measure needs a positive horizon")
    seq, durations = traj.segments()
    occ = np.zeros(traj.space.n)
    np.add.at(occ, seq, durations)
    return Distribution(traj.space, occ / occ.sum())
