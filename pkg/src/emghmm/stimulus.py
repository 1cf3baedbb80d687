"""Stimulus schedule, initial-guess state labels and per-repetition ranges."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

REST, ACTIVE = 0, 1

# sample-domain comparisons tolerate float round-off in t * rate
_EPS = 1e-9


@dataclass(frozen=True)
class StimulusSchedule:
    """Timing of the cue played to the subject.

    Stimulus ``k`` occupies ``[k * period + hardware_delay_s, ... + stimulus_len_s)``
    in recording time, where ``period = stimulus_len_s + rest_len_s``.
    """

    stimulus_len_s: float = 3.0
    rest_len_s: float = 5.0
    repetitions: int = 20
    hardware_delay_s: float = 0.5
    rate_hz: float = 1100.0

    def __post_init__(self):
        if not self.stimulus_len_s > 0:
            raise ValueError("stimulus_len_s must be positive")
        if self.rest_len_s < 0:
            raise ValueError("rest_len_s must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.hardware_delay_s < 0:
            raise ValueError("hardware_delay_s must be non-negative")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")

    @property
    def period_s(self) -> float:
        return self.stimulus_len_s + self.rest_len_s

    @property
    def duration_s(self) -> float:
        """Length of a recording that holds the whole schedule."""
        return self.hardware_delay_s + self.repetitions * self.period_s

    def stimulus_start_s(self, k: int) -> float:
        return k * self.period_s + self.hardware_delay_s

    def intervals(self) -> list[tuple[float, float]]:
        return [(self.stimulus_start_s(k), self.stimulus_start_s(k) + self.stimulus_len_s)
                for k in range(self.repetitions)]


@dataclass(frozen=True)
class StateSequence:
    """Binary per-window labels plus what is needed to map indices to seconds."""

    states: np.ndarray
    hop_samples: int = 1
    window_len_samples: int = 0
    rate_hz: float = 1.0
    offset: int = 0  # index of states[0] in the full recording's window grid

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        if states.ndim != 1:
            raise ValueError("states must be a 1-D vector")
        if states.size and not np.all((states == REST) | (states == ACTIVE)):
            raise ValueError("states must be 0 or 1")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.size

    def with_states(self, states) -> StateSequence:
        return StateSequence(states, self.hop_samples, self.window_len_samples,
                             self.rate_hz, self.offset)

    def __getitem__(self, item: slice) -> StateSequence:
        if not isinstance(item, slice):
            raise TypeError("StateSequence supports slicing only")
        start = item.indices(len(self))[0]
        return StateSequence(self.states[item], self.hop_samples, self.window_len_samples,
                             self.rate_hz, self.offset + start)

    @property
    def window_s(self) -> float:
        return self.hop_samples / self.rate_hz

    def center_s(self, index) -> np.ndarray | float:
        return ((np.asarray(index) + self.offset) * self.hop_samples
                + self.window_len_samples / 2.0) / self.rate_hz

    def boundary_s(self, index) -> np.ndarray | float:
        """Time of the boundary in front of window ``index``.

        Midway between the centers of windows ``index - 1`` and ``index``.
        """
        return self.center_s(index) - self.window_s / 2.0


def _window_centers(n: int, hop_samples: int, window_len_samples: int) -> np.ndarray:
    return np.arange(n) * hop_samples + window_len_samples / 2.0


def stimulus_labels(schedule: StimulusSchedule, num_windows: int, window_len_samples: int,
                    hop_samples: int) -> StateSequence:
    """Label a window 1 when its center falls inside a stimulus interval."""
    if num_windows < 1:
        raise ValueError("num_windows must be positive")
    if hop_samples < 1 or window_len_samples < 0:
        raise ValueError("invalid window geometry")
    centers = _window_centers(num_windows, hop_samples, window_len_samples)
    states = np.zeros(num_windows, dtype=np.int64)
    for start, stop in schedule.intervals():
        lo, hi = start * schedule.rate_hz, stop * schedule.rate_hz
        states[(centers >= lo - _EPS) & (centers < hi - _EPS)] = ACTIVE
    return StateSequence(states, hop_samples, window_len_samples, schedule.rate_hz)


def split_repetitions(seq_len: int, schedule: StimulusSchedule, hop_samples: int,
                      window_len_samples: int = 0) -> list[range]:
    """Partition ``[0, seq_len)`` into one window range per repetition.

    Repetition ``k`` starts at the first window whose center reaches stimulus
    ``k`` and runs up to the start of repetition ``k + 1``, so it holds the
    stimulus and the trailing rest. The first range also absorbs any lead-in
    before the first stimulus; the last one runs to ``seq_len``.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be positive")
    bounds = [0]
    for k in range(1, schedule.repetitions):
        t = schedule.stimulus_start_s(k) * schedule.rate_hz
        first = math.ceil((t - window_len_samples / 2.0) / hop_samples - _EPS)
        bounds.append(min(max(first, bounds[-1]), seq_len))
    bounds.append(seq_len)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
