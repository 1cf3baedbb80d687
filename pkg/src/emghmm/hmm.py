"""Discrete first-order HMM: supervised counting estimator and Viterbi decoder.

All probabilities are handled as natural logs internally; a zero probability
is ``-inf`` and propagates through sums without special cases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import QuantizedSequence
from .stimulus import StateSequence

DEFAULT_SMOOTHING = 1.0
_ROW_TOL = 1e-9


class DegenerateModelError(ValueError):
    """A probability row cannot be estimated (no counts and no smoothing)."""


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True)
class DiscreteHmm:
    initial: np.ndarray  # (N,)
    transition: np.ndarray  # (N, N), rows sum to 1
    emission: np.ndarray  # (N, M), rows sum to 1

    def __post_init__(self):
        pi = np.asarray(self.initial, dtype=float)
        trans = np.asarray(self.transition, dtype=float)
        emit = np.asarray(self.emission, dtype=float)
        n = pi.size
        if pi.ndim != 1 or trans.shape != (n, n) or emit.ndim != 2 or emit.shape[0] != n:
            raise ValueError("inconsistent model shapes")
        for name, arr in (("initial", pi), ("transition", trans), ("emission", emit)):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} probabilities must be finite and non-negative")
            if np.any(np.abs(np.atleast_2d(arr).sum(axis=1) - 1.0) > _ROW_TOL):
                raise ValueError(f"{name} rows must sum to 1")
        for name, arr in (("initial", pi), ("transition", trans), ("emission", emit)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_states(self) -> int:
        return self.initial.size

    @property
    def num_symbols(self) -> int:
        return self.emission.shape[1]

    # -- plain-text key/value format ------------------------------------

    def dumps(self) -> str:
        def row(values):
            return " ".join(repr(float(v)) for v in values)

        lines = [f"N {self.num_states}", f"M {self.num_symbols}", f"pi {row(self.initial)}"]
        lines += [f"T {i} {row(r)}" for i, r in enumerate(self.transition)]
        lines += [f"E {i} {row(r)}" for i, r in enumerate(self.emission)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> DiscreteHmm:
        fields: dict[str, list[str]] = {}
        trans_rows: dict[int, list[float]] = {}
        emit_rows: dict[int, list[float]] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            key, rest = parts[0], parts[1:]
            try:
                if key in ("T", "E"):
                    target = trans_rows if key == "T" else emit_rows
                    target[int(rest[0])] = [float(v) for v in rest[1:]]
                elif key in ("N", "M", "pi"):
                    fields[key] = rest
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"model line {lineno}: {exc}") from None
        try:
            n, m = int(fields["N"][0]), int(fields["M"][0])
            pi = [float(v) for v in fields["pi"]]
            trans = [trans_rows[i] for i in range(n)]
            emit = [emit_rows[i] for i in range(n)]
        except KeyError as exc:
            raise ValueError(f"model text is missing {exc}") from None
        model = cls(np.array(pi), np.array(trans), np.array(emit))
        if model.num_symbols != m:
            raise ValueError(f"emission rows have {model.num_symbols} entries, header says M={m}")
        return model


@dataclass(frozen=True)
class ViterbiResult:
    states: StateSequence
    log_likelihood: float


def _normalize_counts(counts: np.ndarray, smoothing: float, what: str) -> np.ndarray:
    counts = counts + smoothing
    totals = counts.sum(axis=-1, keepdims=True)
    if np.any(totals == 0):
        raise DegenerateModelError(f"{what}: a state has no counts and smoothing is 0")
    return counts / totals


def _check_symbols(model: DiscreteHmm, symbols: np.ndarray):
    if symbols.size and (symbols.min() < 0 or symbols.max() >= model.num_symbols):
        raise ValueError(f"observation symbols must lie in [0, {model.num_symbols - 1}]")


def estimate_supervised(observations: QuantizedSequence, labels: StateSequence,
                        smoothing: float = DEFAULT_SMOOTHING, num_states: int = 2) -> DiscreteHmm:
    """Estimate pi, T and E by counting over a labeled sequence.

    Every row is ``(count + smoothing) / (row total + width * smoothing)``.
    With no smoothing, a state that never occurs makes its rows undefined and
    raises :class:`DegenerateModelError`. A state that only occurs as the final
    label has no outgoing pairs; its transition row is then taken as a pure
    self-loop.
    """
    obs = observations.symbols
    states = labels.states
    if obs.size != states.size:
        raise ValueError(f"length mismatch: {obs.size} observations, {states.size} labels")
    if obs.size < 2:
        raise ValueError("need at least two labeled observations")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    if states.max() >= num_states:
        raise ValueError("label outside the state range")
    m = observations.num_levels

    pi_counts = np.zeros(num_states)
    pi_counts[states[0]] = 1.0

    trans_counts = np.zeros((num_states, num_states))
    np.add.at(trans_counts, (states[:-1], states[1:]), 1.0)
    present = np.bincount(states, minlength=num_states) > 0
    for i in range(num_states):
        if present[i] and trans_counts[i].sum() == 0:
            trans_counts[i, i] = 1.0

    emit_counts = np.zeros((num_states, m))
    np.add.at(emit_counts, (states, obs), 1.0)

    return DiscreteHmm(
        _normalize_counts(pi_counts, smoothing, "initial"),
        _normalize_counts(trans_counts, smoothing, "transition"),
        _normalize_counts(emit_counts, smoothing, "emission"),
    )


def viterbi_decode(model: DiscreteHmm, observations: QuantizedSequence,
                   template: StateSequence | None = None) -> ViterbiResult:
    """Most probable state path in log space.

    Ties go to the lower state index, both for the final state and at every
    backtrack step. If every path has probability zero the result carries
    ``-inf`` and the tie-break path. ``template`` supplies the hop/rate
    metadata attached to the returned states.
    """
    obs = observations.symbols
    if obs.size < 1:
        raise ValueError("need at least one observation")
    _check_symbols(model, obs)
    log_t = _log(model.transition)
    log_e = _log(model.emission)

    n_obs, n = obs.size, model.num_states
    back = np.zeros((n_obs, n), dtype=np.int64)
    delta = _log(model.initial) + log_e[:, obs[0]]
    for t in range(1, n_obs):
        scores = delta[:, np.newaxis] + log_t  # scores[i, j]: best path ending i, then i -> j
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(n)] + log_e[:, obs[t]]

    path = np.zeros(n_obs, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(n_obs - 1, 0, -1):
        path[t - 1] = back[t, path[t]]

    if template is None:
        states = StateSequence(path)
    else:
        states = template.with_states(path)
    return ViterbiResult(states, float(delta[path[-1]]))


def sequence_log_likelihood(model: DiscreteHmm, observations: QuantizedSequence,
                            states: StateSequence) -> float:
    """Log joint probability of a given state path and the observations."""
    obs, path = observations.symbols, states.states
    if obs.size != path.size:
        raise ValueError(f"length mismatch: {obs.size} observations, {path.size} states")
    if obs.size == 0:
        raise ValueError("empty sequence")
    _check_symbols(model, obs)
    if path.max() >= model.num_states:
        raise ValueError("state outside the model")
    with np.errstate(divide="ignore"):
        total = np.log(model.initial[path[0]])
        total += np.log(model.transition[path[:-1], path[1:]]).sum()
        total += np.log(model.emission[path, obs]).sum()
    return float(total)
