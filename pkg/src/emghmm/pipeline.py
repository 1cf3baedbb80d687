"""End-to-end detection: RMS -> quantize -> label -> estimate -> Viterbi -> refine."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .hmm import DEFAULT_SMOOTHING, DiscreteHmm, ViterbiResult, estimate_supervised, viterbi_decode
from .refine import DEFAULT_MIN_DURATION_S, ActivitySegment, consolidate_edges, remove_short_segments
from .signal_core import (DEFAULT_HOP, DEFAULT_NUM_LEVELS, DEFAULT_WINDOW_LEN, MultiChannelSignal,
                          QuantizedSequence, RmsEnvelope, collapse_channels, compute_rms_envelope,
                          quantize_uniform)
from .stimulus import StateSequence, StimulusSchedule, split_repetitions, stimulus_labels


@dataclass(frozen=True)
class DetectionConfig:
    window_len_samples: int = DEFAULT_WINDOW_LEN
    hop_samples: int = DEFAULT_HOP
    num_levels: int = DEFAULT_NUM_LEVELS
    smoothing: float = DEFAULT_SMOOTHING
    min_duration_s: float = DEFAULT_MIN_DURATION_S
    per_recording: bool = False  # one HMM for the whole recording instead of one per repetition


@dataclass(frozen=True)
class RepetitionDetection:
    repetition: int
    windows: range
    model: DiscreteHmm | None
    viterbi: ViterbiResult | None
    refined: StateSequence | None
    segment: ActivitySegment | None


@dataclass(frozen=True)
class DetectionResult:
    envelope: RmsEnvelope
    observations: QuantizedSequence
    labels: StateSequence
    repetitions: tuple[RepetitionDetection, ...]

    @property
    def segments(self) -> dict[int, ActivitySegment]:
        return {r.repetition: r.segment for r in self.repetitions if r.segment is not None}

    @property
    def failures(self) -> list[int]:
        return [r.repetition for r in self.repetitions if r.segment is None]


def detect_activity(signal: MultiChannelSignal, schedule: StimulusSchedule,
                    config: DetectionConfig = DetectionConfig()) -> DetectionResult:
    """Detect one activity segment per stimulus repetition.

    A repetition whose cleaned path holds no activity is reported through
    ``DetectionResult.failures`` rather than raised.
    """
    if schedule.rate_hz != signal.rate_hz:
        schedule = dataclasses.replace(schedule, rate_hz=signal.rate_hz)
    envelope = compute_rms_envelope(signal, config.window_len_samples, config.hop_samples)
    observations = quantize_uniform(collapse_channels(envelope), config.num_levels)
    labels = stimulus_labels(schedule, envelope.num_windows, config.window_len_samples,
                             config.hop_samples)
    ranges = split_repetitions(envelope.num_windows, schedule, config.hop_samples,
                               config.window_len_samples)

    shared = None
    if config.per_recording:
        shared = estimate_supervised(observations, labels, config.smoothing)

    results = []
    for k, rng in enumerate(ranges):
        if len(rng) < 2:
            results.append(RepetitionDetection(k, rng, None, None, None, None))
            continue
        sl = slice(rng.start, rng.stop)
        obs, lab = observations[sl], labels[sl]
        model = shared if shared is not None else estimate_supervised(obs, lab, config.smoothing)
        decoded = viterbi_decode(model, obs, template=lab)
        refined = remove_short_segments(decoded.states, config.min_duration_s)
        results.append(RepetitionDetection(k, rng, model, decoded, refined, consolidate_edges(refined)))
    return DetectionResult(envelope, observations, labels, tuple(results))
