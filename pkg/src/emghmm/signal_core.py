"""Raw sEMG containers, RMS envelope and uniform quantization.

The detector never looks at raw samples directly. Each channel is reduced to a
sliding-window RMS envelope, the channels are averaged into one stream, and
that stream is quantized to a small alphabet of observation symbols.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_WINDOW_LEN = 110  # 100 ms at 1.1 kHz
DEFAULT_HOP = 55
DEFAULT_NUM_LEVELS = 16


class SignalFormatError(ValueError):
    """Malformed signal CSV. ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class MultiChannelSignal:
    data: np.ndarray  # (channels, samples)
    rate_hz: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("signal data must be a (channels, samples) matrix")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples_per_channel(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.samples_per_channel / self.rate_hz


@dataclass(frozen=True)
class RmsEnvelope:
    values: np.ndarray  # (channels, windows)
    window_len_samples: int
    hop_samples: int
    rate_hz: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("envelope values must be a (channels, windows) matrix")
        if np.any(values < 0):
            raise ValueError("RMS envelope values must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_windows(self) -> int:
        return self.values.shape[1]

    def window_centers_s(self) -> np.ndarray:
        idx = np.arange(self.num_windows)
        return (idx * self.hop_samples + self.window_len_samples / 2.0) / self.rate_hz


@dataclass(frozen=True)
class QuantizedSequence:
    symbols: np.ndarray
    num_levels: int = DEFAULT_NUM_LEVELS
    quantizer_min: float = 0.0
    quantizer_max: float = 1.0

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.int64)
        if symbols.ndim != 1:
            raise ValueError("symbols must be a 1-D vector")
        if self.num_levels < 2:
            raise ValueError("num_levels must be at least 2")
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.num_levels):
            raise ValueError(f"symbols must lie in [0, {self.num_levels - 1}]")
        if not self.quantizer_min < self.quantizer_max:
            raise ValueError("quantizer_min must be below quantizer_max")
        symbols.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return self.symbols.size

    def __getitem__(self, item: slice) -> QuantizedSequence:
        if not isinstance(item, slice):
            raise TypeError("QuantizedSequence supports slicing only")
        return QuantizedSequence(self.symbols[item], self.num_levels,
                                 self.quantizer_min, self.quantizer_max)

    def bin_centers(self) -> np.ndarray:
        """Dequantize each symbol to the center of its bin."""
        width = (self.quantizer_max - self.quantizer_min) / self.num_levels
        return self.quantizer_min + (self.symbols + 0.5) * width


def compute_rms_envelope(signal: MultiChannelSignal, window_len_samples: int = DEFAULT_WINDOW_LEN,
                         hop_samples: int = DEFAULT_HOP) -> RmsEnvelope:
    """Sliding-window RMS of every channel.

    Window ``w`` covers samples ``[w * hop, w * hop + window_len)``; only whole
    windows are kept, so the envelope has
    ``(T - window_len) // hop + 1`` entries per channel.
    """
    window_len_samples = int(window_len_samples)
    hop_samples = int(hop_samples)
    if window_len_samples < 1 or hop_samples < 1:
        raise ValueError("window length and hop must be at least one sample")
    if window_len_samples > signal.samples_per_channel:
        raise ValueError(
            f"window of {window_len_samples} samples is longer than the signal "
            f"({signal.samples_per_channel} samples)")

    squared = signal.data ** 2
    # cumulative sums give every window mean in O(T) per channel
    csum = np.concatenate([np.zeros((signal.channels, 1)), np.cumsum(squared, axis=1)], axis=1)
    n_win = (signal.samples_per_channel - window_len_samples) // hop_samples + 1
    starts = np.arange(n_win) * hop_samples
    sums = csum[:, starts + window_len_samples] - csum[:, starts]
    mean_sq = np.maximum(sums / window_len_samples, 0.0)  # cumsum round-off can dip below 0
    return RmsEnvelope(np.sqrt(mean_sq), window_len_samples, hop_samples, signal.rate_hz)


def collapse_channels(envelope: RmsEnvelope) -> np.ndarray:
    """Average the per-channel RMS values into a single observation stream."""
    return envelope.values.mean(axis=0)


def quantize_uniform(values, num_levels: int = DEFAULT_NUM_LEVELS) -> QuantizedSequence:
    """Map values onto ``num_levels`` equal-width bins spanning their min..max.

    A constant input has no usable range and maps to symbol 0 everywhere.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("cannot quantize an empty sequence")
    if num_levels < 2:
        raise ValueError("num_levels must be at least 2")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return QuantizedSequence(np.zeros(values.size, dtype=np.int64), num_levels, lo, lo + 1.0)
    symbols = np.floor((values - lo) / (hi - lo) * num_levels).astype(np.int64)
    symbols = np.clip(symbols, 0, num_levels - 1)
    return QuantizedSequence(symbols, num_levels, lo, hi)


# -- CSV I/O ---------------------------------------------------------------

def write_signal_csv(signal: MultiChannelSignal, path: str | Path) -> None:
    """Write ``t,ch1,...,chC`` rows, one per sample."""
    t = np.arange(signal.samples_per_channel) / signal.rate_hz
    table = np.column_stack([t, signal.data.T])
    header = ",".join(["t"] + [f"ch{i + 1}" for i in range(signal.channels)])
    buf = io.StringIO()
    np.savetxt(buf, table, delimiter=",", fmt="%.17g", header=header, comments="")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_signal_csv(path: str | Path, rate_hz: float) -> MultiChannelSignal:
    """Parse a signal CSV. The ``t`` column is ignored; the rate comes from the caller."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SignalFormatError("empty file", 1) from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t":
            raise SignalFormatError("header must be 't,ch1,...,chC'", 1)
        n_cols = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != n_cols:
                raise SignalFormatError(f"expected {n_cols} fields, found {len(row)}", lineno)
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise SignalFormatError(str(exc), lineno) from None
    if not rows:
        raise SignalFormatError("no samples after header", 2)
    return MultiChannelSignal(np.array(rows).T, rate_hz)
