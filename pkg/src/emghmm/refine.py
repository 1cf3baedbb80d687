"""Turn raw Viterbi paths into one activity segment per repetition."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stimulus import ACTIVE, StateSequence

DEFAULT_MIN_DURATION_S = 0.8


@dataclass(frozen=True)
class ActivitySegment:
    onset_s: float
    termination_s: float
    onset_window: int | None = None  # half-open window range when derived from states
    termination_window: int | None = None

    def __post_init__(self):
        if not self.onset_s < self.termination_s:
            raise ValueError(f"segment onset {self.onset_s} is not before termination {self.termination_s}")
        if self.onset_window is not None and not self.onset_window < self.termination_window:
            raise ValueError("segment onset window is not before termination window")

    @property
    def duration_s(self) -> float:
        return self.termination_s - self.onset_s

    @classmethod
    def from_windows(cls, states: StateSequence, onset: int, termination: int) -> ActivitySegment:
        return cls(float(states.boundary_s(onset)), float(states.boundary_s(termination)),
                   int(onset), int(termination))


def active_runs(states) -> list[tuple[int, int]]:
    """Maximal runs of 1s as half-open ``(start, stop)`` index pairs."""
    s = np.asarray(states, dtype=np.int8)
    padded = np.concatenate([[0], s, [0]])
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    stops = np.flatnonzero(diff == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def remove_short_segments(states: StateSequence, min_duration_s: float = DEFAULT_MIN_DURATION_S,
                          hop_samples: int | None = None, rate_hz: float | None = None) -> StateSequence:
    """Zero out every activity run shorter than ``min_duration_s``.

    A run of ``n`` windows lasts ``n * hop / rate`` seconds; a run of exactly
    the threshold survives.
    """
    hop = states.hop_samples if hop_samples is None else hop_samples
    rate = states.rate_hz if rate_hz is None else rate_hz
    min_samples = min_duration_s * rate
    out = np.array(states.states)
    for start, stop in active_runs(out):
        if (stop - start) * hop < min_samples - 1e-9:
            out[start:stop] = 0
    return states.with_states(out)


def consolidate_edges(states: StateSequence) -> ActivitySegment | None:
    """First onset to last termination, or ``None`` when nothing is active."""
    active = np.flatnonzero(states.states == ACTIVE)
    if active.size == 0:
        return None
    return ActivitySegment.from_windows(states, int(active[0]), int(active[-1]) + 1)


def segment_error(detected: ActivitySegment, truth: ActivitySegment) -> tuple[float, float]:
    """Signed (onset, termination) errors in seconds, detected minus truth."""
    return (detected.onset_s - truth.onset_s, detected.termination_s - truth.termination_s)


# -- JSON lines ------------------------------------------------------------

def write_segments_jsonl(segments: dict[int, ActivitySegment], path: str | Path) -> None:
    lines = [json.dumps({"repetition": k, "onset_s": seg.onset_s, "termination_s": seg.termination_s})
             for k, seg in sorted(segments.items())]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_segments_jsonl(path: str | Path) -> dict[int, ActivitySegment]:
    segments = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                segments[int(rec["repetition"])] = ActivitySegment(float(rec["onset_s"]),
                                                                   float(rec["termination_s"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad segment record ({exc})") from None
    return segments
