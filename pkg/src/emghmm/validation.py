"""Edge-window classification used to check detected transitions.

Around every onset or termination a short window is split into a pre-edge and a
post-edge half. Each half becomes one sample: the per-channel RMS, labeled
with the state the edge claims for that side. If the edges are placed well the
two classes separate cleanly, so a linear SVM scores high; edges taken straight
from the stimulus schedule mislabel the reaction lag and score lower.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .refine import ActivitySegment
from .signal_core import MultiChannelSignal
from .stimulus import StimulusSchedule

log = logging.getLogger(__name__)

DEFAULT_HALF_WIDTH_S = 0.25
DEFAULT_C = 1.0
DEFAULT_FOLDS = 5

ONSET, TERMINATION = "onset", "termination"
STIMULUS, DETECTED = "stimulus", "detected"
HALF_SPLIT = "half-split"

# (pre-edge label, post-edge label)
_EDGE_LABELS = {ONSET: (0, 1), TERMINATION: (1, 0)}


@dataclass(frozen=True)
class EdgeWindowSet:
    features: np.ndarray  # (n, channels) per-channel RMS
    labels: np.ndarray  # (n,) over {0, 1}
    edge_kinds: tuple[str, ...]
    source: str
    repetitions: np.ndarray  # (n,) repetition each sample came from
    skipped: int = 0  # edges dropped for being too close to the recording boundary

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            feats = feats.reshape(len(labels), -1)
        if feats.shape[0] != labels.size or len(self.edge_kinds) != labels.size:
            raise ValueError("features, labels and edge kinds must have equal length")
        if np.any(feats < 0):
            raise ValueError("edge-window features are RMS values and must be non-negative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "repetitions", np.asarray(self.repetitions, dtype=np.int64))

    def __len__(self):
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> EdgeWindowSet:
        index = np.asarray(index, dtype=np.int64)
        return EdgeWindowSet(self.features[index], self.labels[index],
                             tuple(self.edge_kinds[i] for i in index), self.source,
                             self.repetitions[index])

    def of_kind(self, kind: str) -> EdgeWindowSet:
        return self.subset([i for i, k in enumerate(self.edge_kinds) if k == kind])


@dataclass(frozen=True)
class ClassifierModel:
    weights: np.ndarray
    bias: float
    C: float = DEFAULT_C

    def decision_function(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.weights.size:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model ({self.weights.size})")
        return x @ self.weights + self.bias


def extract_edge_windows(signal: MultiChannelSignal, edges, half_width_s: float = DEFAULT_HALF_WIDTH_S,
                         source: str = DETECTED) -> EdgeWindowSet:
    """Build two labeled RMS samples per edge.

    ``edges`` holds ``(repetition, edge_time_s, edge_kind)`` triples. Edges
    whose window would leave the recording are skipped and counted.
    """
    if not half_width_s > 0:
        raise ValueError("half_width_s must be positive")
    half = int(round(half_width_s * signal.rate_hz))
    if half < 1:
        raise ValueError("half window is shorter than one sample")
    feats, labels, kinds, reps = [], [], [], []
    skipped = 0
    for rep, t, kind in edges:
        if kind not in _EDGE_LABELS:
            raise ValueError(f"unknown edge kind {kind!r}")
        center = int(round(t * signal.rate_hz))
        if center - half < 0 or center + half > signal.samples_per_channel:
            skipped += 1
            continue
        pre_label, post_label = _EDGE_LABELS[kind]
        for lo, hi, label in ((center - half, center, pre_label), (center, center + half, post_label)):
            feats.append(np.sqrt(np.mean(signal.data[:, lo:hi] ** 2, axis=1)))
            labels.append(label)
            kinds.append(kind)
            reps.append(rep)
    if skipped:
        log.warning("skipped %d edge(s) too close to the recording boundary", skipped)
    feats = np.array(feats) if feats else np.zeros((0, signal.channels))
    return EdgeWindowSet(feats, np.array(labels, dtype=np.int64), tuple(kinds), source,
                         np.array(reps, dtype=np.int64), skipped)


def stimulus_edges(schedule: StimulusSchedule):
    edges = []
    for k, (start, stop) in enumerate(schedule.intervals()):
        edges += [(k, start, ONSET), (k, stop, TERMINATION)]
    return edges


def segment_edges(segments: dict[int, ActivitySegment]):
    edges = []
    for k, seg in sorted(segments.items()):
        edges += [(k, seg.onset_s, ONSET), (k, seg.termination_s, TERMINATION)]
    return edges


# -- linear SVM --------------------------------------------------------------

def _smo(Q: np.ndarray, y: np.ndarray, C: float, alpha: np.ndarray, eps: float, max_iter: int):
    """Solve the soft-margin SVM dual with SMO (second-order working-set choice).

    min 1/2 a'Qa - sum(a)  s.t.  0 <= a <= C, y'a = 0,  Q = yy' * K.
    Starts from ``alpha`` and stops once the maximal KKT violation is below
    ``eps``. Returns the multipliers and the bias of ``f(x) = w.x + b``.
    """
    qd = np.diag(Q).copy()
    alpha = alpha.copy()
    grad = Q @ alpha - 1.0
    tau = 1e-12

    for _ in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        g_max = score[i]
        g_min = score[low].min()
        if g_max - g_min < eps:
            break
        # second-order choice of j among violating low candidates
        b = g_max - score
        cand = low & (b > 0)
        a = qd[i] + qd - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, tau)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(qd[i] + qd[j] + 2.0 * Q[i, j], tau)
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(qd[i] + qd[j] - 2.0 * Q[i, j], tau)
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        grad += Q[:, i] * (alpha[i] - ai_old) + Q[:, j] * (alpha[j] - aj_old)
    else:
        log.warning("SMO stopped after %d iterations without reaching eps=%g", max_iter, eps)

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0 if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return alpha, -float(rho)


def svm_objective(model: ClassifierModel, features, labels) -> float:
    """Primal objective 1/2 |w|^2 + C * sum(hinge) with labels in {0, 1}."""
    y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    margins = y * model.decision_function(features)
    return float(0.5 * model.weights @ model.weights + model.C * np.maximum(0.0, 1.0 - margins).sum())


def train_linear_svm(train: EdgeWindowSet, C: float = DEFAULT_C, tol: float = 1e-6,
                     max_iter: int = 100_000) -> ClassifierModel:
    """Soft-margin linear SVM minimizing 1/2 |w|^2 + C * sum of hinge losses."""
    if not C > 0:
        raise ValueError("C must be positive")
    labels = np.asarray(train.labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("training set must contain both classes")
    X = np.asarray(train.features, dtype=float)
    y = np.where(labels > 0, 1.0, -1.0)
    Q = (y[:, None] * y[None, :]) * (X @ X.T)
    alpha = np.zeros(y.size)
    eps = 1e-3
    # tighten the KKT tolerance until the duality gap certifies the objective
    while True:
        alpha, bias = _smo(Q, y, C, alpha, eps, max_iter)
        model = ClassifierModel((alpha * y) @ X, bias, C)
        primal = svm_objective(model, X, labels)
        dual = alpha.sum() - 0.5 * alpha @ Q @ alpha
        if primal - dual <= tol * max(1.0, abs(primal)) or eps < 1e-13:
            return model
        eps /= 10.0


def classify(model: ClassifierModel, features) -> np.ndarray:
    """Label 1 iff ``w.x + b > 0``; an exact zero maps to 0."""
    return (model.decision_function(features) > 0).astype(np.int64)


def accuracy_pct(predicted, truth) -> float:
    return 100.0 * float(np.mean(np.asarray(predicted) == np.asarray(truth)))


def _stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for idx in members:
            folds[pos % k].append(int(idx))
            pos += 1
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def evaluate_split(data: EdgeWindowSet, C: float = DEFAULT_C, mode: str = HALF_SPLIT,
                   k: int = DEFAULT_FOLDS, seed: int = 0) -> float:
    """Held-out accuracy in percent.

    ``half-split`` shuffles with ``seed``, trains on the first half and tests
    on the rest. ``k-fold`` averages over ``k`` class-stratified folds.
    """
    n = len(data)
    rng = np.random.default_rng(seed)
    if mode == HALF_SPLIT:
        if n < 4:
            raise ValueError(f"half-split needs at least 4 samples, got {n}")
        order = rng.permutation(n)
        train_idx, test_idx = np.sort(order[: n // 2]), np.sort(order[n // 2:])
        model = train_linear_svm(data.subset(train_idx), C)
        test = data.subset(test_idx)
        return accuracy_pct(classify(model, test.features), test.labels)
    if mode in ("k-fold", "kfold"):
        counts = np.bincount(data.labels, minlength=2)
        if k < 2 or counts.min() < k:
            raise ValueError(f"{k}-fold evaluation needs at least {k} samples of each class")
        scores = []
        for fold in _stratified_folds(data.labels, k, rng):
            train_idx = np.setdiff1d(np.arange(n), fold)
            model = train_linear_svm(data.subset(train_idx), C)
            test = data.subset(fold)
            scores.append(accuracy_pct(classify(model, test.features), test.labels))
        return float(np.mean(scores))
    raise ValueError(f"unknown evaluation mode {mode!r}")


def mode_name(mode: str, k: int = DEFAULT_FOLDS) -> str:
    return HALF_SPLIT if mode == HALF_SPLIT else f"{k}-fold"


# -- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class AccuracyRecord:
    gesture: str
    subject: str
    edge_kind: str
    source: str
    mode: str
    accuracy_pct: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy_pct <= 100.0:
            raise ValueError("accuracy must lie in [0, 100]")


@dataclass
class AccuracyReport:
    records: list[AccuracyRecord] = field(default_factory=list)

    def mean(self, **match) -> float:
        vals = [r.accuracy_pct for r in self.records
                if all(getattr(r, key) == val for key, val in match.items())]
        if not vals:
            raise KeyError(f"no records match {match}")
        return float(np.mean(vals))

    def to_jsonl(self) -> str:
        fields = ("gesture", "subject", "edge_kind", "source", "mode", "accuracy_pct")
        return "".join(json.dumps({f: getattr(r, f) for f in fields}) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> AccuracyReport:
        records = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append(AccuracyRecord(str(rec["gesture"]), str(rec["subject"]),
                                              rec["edge_kind"], rec["source"], rec["mode"],
                                              float(rec["accuracy_pct"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"report line {lineno}: {exc}") from None
        return cls(records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> AccuracyReport:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def validate_recording(signal: MultiChannelSignal, schedule: StimulusSchedule,
                       segments: dict[int, ActivitySegment], *, half_width_s: float = DEFAULT_HALF_WIDTH_S,
                       C: float = DEFAULT_C, k: int = DEFAULT_FOLDS, seed: int = 0,
                       gesture: str = "synthetic", subject: str = "s0"):
    """Score stimulus-derived and detected edges with both evaluation modes.

    Returns the report (2 sources x 2 edge kinds x 2 modes) and the two edge
    window sets it was computed from.
    """
    sets = {
        STIMULUS: extract_edge_windows(signal, stimulus_edges(schedule), half_width_s, STIMULUS),
        DETECTED: extract_edge_windows(signal, segment_edges(segments), half_width_s, DETECTED),
    }
    report = AccuracyReport()
    for source, data in sets.items():
        for kind in (ONSET, TERMINATION):
            subset = data.of_kind(kind)
            for mode in (HALF_SPLIT, "k-fold"):
                acc = evaluate_split(subset, C, mode, k, seed)
                report.records.append(AccuracyRecord(gesture, subject, kind, source,
                                                     mode_name(mode, k), acc))
    return report, sets


def scatter_rows(data: EdgeWindowSet) -> list[list]:
    """One row per sample: per-channel RMS, label, source."""
    if len(data) == 0:
        raise ValueError("empty edge-window set")
    return [[*map(float, f), int(lab), data.source] for f, lab in zip(data.features, data.labels)]


def scatter_export(data: EdgeWindowSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"ch{i + 1}" for i in range(data.dim)] + ["label", "source"])
    for row in scatter_rows(data):
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
