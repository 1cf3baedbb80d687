"""Threshold-free activity detection in surface EMG with a two-state discrete HMM."""

from .hmm import DiscreteHmm, ViterbiResult, estimate_supervised, sequence_log_likelihood, viterbi_decode
from .pipeline import DetectionConfig, DetectionResult, detect_activity
from .refine import ActivitySegment, consolidate_edges, remove_short_segments, segment_error
from .signal_core import (MultiChannelSignal, QuantizedSequence, RmsEnvelope, collapse_channels,
                          compute_rms_envelope, quantize_uniform)
from .stimulus import StateSequence, StimulusSchedule, split_repetitions, stimulus_labels
from .synth import GroundTruth, SynthConfig, generate
from .validation import (ClassifierModel, EdgeWindowSet, classify, evaluate_split,
                         extract_edge_windows, scatter_export, train_linear_svm)

__version__ = "0.1.0"
