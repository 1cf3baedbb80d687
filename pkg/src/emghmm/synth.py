"""Synthetic sEMG recordings with known activity segments.

The model is amplitude-modulated white Gaussian noise: the detector only sees
RMS envelopes, so spectral shape does not matter here. Each repetition gets
one activity segment that starts ``reaction_delay`` after its stimulus and
lasts ``gesture_duration``; inside the segment the noise standard deviation
rises from ``rest_noise_sigma`` to ``rest_noise_sigma * activity_gain`` along
a raised-cosine attack and falls back along a matching decay.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .refine import ActivitySegment
from .signal_core import MultiChannelSignal
from .stimulus import StimulusSchedule


@dataclass(frozen=True)
class SynthConfig:
    schedule: StimulusSchedule = field(default_factory=StimulusSchedule)
    channels: int = 3
    rest_noise_sigma: float = 1.0
    activity_gain: float = 5.0
    reaction_delay_s: float = 0.5
    reaction_jitter_s: float = 0.2  # per-repetition delay ~ U[mean - jitter, mean + jitter]
    gesture_duration_s: float = 2.0
    gesture_jitter_s: float = 0.3
    envelope_ramp_s: float = 0.3
    seed: int = 0

    def __post_init__(self):
        sched = self.schedule
        if self.channels < 1:
            raise ValueError("channels must be at least 1")
        if not self.rest_noise_sigma > 0:
            raise ValueError("rest_noise_sigma must be positive")
        if self.activity_gain < 1:
            raise ValueError("activity_gain must be at least 1")
        if self.reaction_jitter_s < 0 or self.gesture_jitter_s < 0 or self.envelope_ramp_s < 0:
            raise ValueError("jitters and ramp length must be non-negative")
        if self.reaction_delay_s - self.reaction_jitter_s < 0:
            raise ValueError("reaction delay can become negative")
        if self.gesture_duration_s - self.gesture_jitter_s <= 0:
            raise ValueError("gesture duration can become non-positive")
        if self.gesture_duration_s > sched.stimulus_len_s:
            raise ValueError("gesture_duration_s exceeds the stimulus length")
        longest = (self.reaction_delay_s + self.reaction_jitter_s
                   + self.gesture_duration_s + self.gesture_jitter_s)
        if longest > sched.period_s + 1e-12:
            raise ValueError("reaction delay plus gesture duration can overrun the repetition")

    @property
    def rate_hz(self) -> float:
        return self.schedule.rate_hz


@dataclass(frozen=True)
class GroundTruth:
    segments: tuple[ActivitySegment, ...]

    def __len__(self):
        return len(self.segments)

    def as_dict(self) -> dict[int, ActivitySegment]:
        return dict(enumerate(self.segments))


def _gain_profile(t: np.ndarray, segments, gain: float, ramp_s: float) -> np.ndarray:
    shape = np.zeros_like(t)
    for seg in segments:
        ramp = min(ramp_s, seg.duration_s / 2.0)
        inside = (t >= seg.onset_s) & (t < seg.termination_s)
        ti = t[inside]
        s = np.ones_like(ti)
        if ramp > 0:
            rise = ti - seg.onset_s < ramp
            s[rise] = 0.5 * (1 - np.cos(np.pi * (ti[rise] - seg.onset_s) / ramp))
            fall = seg.termination_s - ti < ramp
            s[fall] = 0.5 * (1 - np.cos(np.pi * (seg.termination_s - ti[fall]) / ramp))
        shape[inside] = s
    return 1.0 + (gain - 1.0) * shape


def generate(config: SynthConfig) -> tuple[MultiChannelSignal, GroundTruth]:
    """Draw one recording; bit-identical for a fixed seed."""
    sched = config.schedule
    rng = np.random.default_rng(config.seed)
    reps = sched.repetitions
    delays = config.reaction_delay_s + config.reaction_jitter_s * rng.uniform(-1, 1, reps)
    durations = config.gesture_duration_s + config.gesture_jitter_s * rng.uniform(-1, 1, reps)
    segments = []
    for k in range(reps):
        onset = sched.stimulus_start_s(k) + delays[k]
        segments.append(ActivitySegment(float(onset), float(onset + durations[k])))

    n_samples = int(round(sched.duration_s * sched.rate_hz))
    t = np.arange(n_samples) / sched.rate_hz
    sigma = config.rest_noise_sigma * _gain_profile(t, segments, config.activity_gain,
                                                    config.envelope_ramp_s)
    data = rng.standard_normal((config.channels, n_samples)) * sigma
    return MultiChannelSignal(data, sched.rate_hz), GroundTruth(tuple(segments))
