"""Command-line entry point: ``emghmm {synth,detect,validate,report}``.

Settings resolve as command-line flag, then ``--config`` JSON file, then the
built-in defaults of :class:`PipelineConfig`.

Exit codes: 0 success, 2 usage error, 3 data error, 4 detection produced no
segments.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pipeline import DetectionConfig, detect_activity
from .refine import read_segments_jsonl, segment_error, write_segments_jsonl
from .signal_core import SignalFormatError, read_signal_csv, write_signal_csv
from .stimulus import StimulusSchedule
from .synth import SynthConfig, generate
from .validation import DETECTED, STIMULUS, AccuracyReport, scatter_export, validate_recording

log = logging.getLogger("emghmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NO_SEGMENTS = 0, 2, 3, 4


class DataError(Exception):
    """Input data is missing or unusable; maps to exit code 3."""


@dataclass
class PipelineConfig:
    # stimulus schedule
    rate_hz: float = 1100.0
    stim_s: float = 3.0
    rest_s: float = 5.0
    reps: int = 20
    hw_delay_s: float = 0.5
    # synthetic generator
    channels: int = 3
    rest_sigma: float = 1.0
    gain: float = 5.0
    reaction_s: float = 0.5
    reaction_jitter_s: float = 0.2
    gesture_s: float = 2.0
    gesture_jitter_s: float = 0.3
    ramp_s: float = 0.3
    # detection
    window: int = 110
    hop: int = 55
    levels: int = 16
    smoothing: float = 1.0
    min_duration_s: float = 0.8
    per_recording: bool = False
    # validation
    half_width_s: float = 0.25
    C: float = 1.0
    folds: int = 5
    seed: int = 0
    gesture: str = "synthetic"
    subject: str = "s0"
    # paths
    signal: str = "signal.csv"
    truth: str | None = None
    segments: str = "segments.jsonl"
    out_dir: str = "."

    def schedule(self) -> StimulusSchedule:
        return StimulusSchedule(self.stim_s, self.rest_s, self.reps, self.hw_delay_s, self.rate_hz)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(self.schedule(), self.channels, self.rest_sigma, self.gain,
                           self.reaction_s, self.reaction_jitter_s, self.gesture_s,
                           self.gesture_jitter_s, self.ramp_s, self.seed)

    def detection_config(self) -> DetectionConfig:
        return DetectionConfig(self.window, self.hop, self.levels, self.smoothing,
                               self.min_duration_s, self.per_recording)


_FLAGS = {
    "rate_hz": "--rate-hz", "stim_s": "--stim-s", "rest_s": "--rest-s", "reps": "--reps",
    "hw_delay_s": "--hw-delay-s", "channels": "--channels", "rest_sigma": "--rest-sigma",
    "gain": "--gain", "reaction_s": "--reaction-s", "reaction_jitter_s": "--reaction-jitter-s",
    "gesture_s": "--gesture-s", "gesture_jitter_s": "--gesture-jitter-s", "ramp_s": "--ramp-s",
    "window": "--window", "hop": "--hop", "levels": "--levels", "smoothing": "--smoothing",
    "min_duration_s": "--min-duration-s", "half_width_s": "--half-width-s", "C": "-C",
    "folds": "--folds", "seed": "--seed", "gesture": "--gesture", "subject": "--subject",
    "signal": "--signal", "truth": "--truth", "segments": "--segments", "out_dir": "--out-dir",
}

_COMMAND_FIELDS = {
    "synth": ["rate_hz", "stim_s", "rest_s", "reps", "hw_delay_s", "channels", "rest_sigma", "gain",
              "reaction_s", "reaction_jitter_s", "gesture_s", "gesture_jitter_s", "ramp_s", "seed",
              "out_dir"],
    "detect": ["rate_hz", "stim_s", "rest_s", "reps", "hw_delay_s", "window", "hop", "levels",
               "smoothing", "min_duration_s", "signal", "truth", "out_dir"],
    "validate": ["rate_hz", "stim_s", "rest_s", "reps", "hw_delay_s", "half_width_s", "C", "folds",
                 "seed", "gesture", "subject", "signal", "segments", "out_dir"],
}


def _field_type(name: str):
    return {f.name: f.type for f in dataclasses.fields(PipelineConfig)}[name]


def _coerce(name: str, value):
    kind = _field_type(name)
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    if kind in ("bool", bool):
        return bool(value)
    return None if value is None else str(value)


def load_config(path: str | Path | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from None
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in raw.items():
        setattr(cfg, key, _coerce(key, value))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emghmm", description="HMM activity detection for sEMG")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"synth": "generate a synthetic recording and its ground truth",
             "detect": "detect one activity segment per stimulus repetition",
             "validate": "edge-window SVM accuracy for stimulus vs detected edges"}
    for name, names in _COMMAND_FIELDS.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON file with PipelineConfig keys")
        for field_name in names:
            kind = _field_type(field_name)
            conv = {"int": int, "float": float}.get(kind, str) if isinstance(kind, str) else kind
            p.add_argument(_FLAGS[field_name], dest=field_name, type=conv, default=None)
        if name == "detect":
            p.add_argument("--per-recording", dest="per_recording", action="store_const", const=True,
                           default=None, help="train one HMM for the whole recording")
    p = sub.add_parser("report", help="aggregate accuracy reports into a comparison table")
    p.add_argument("reports", nargs="+", help="report.jsonl files from 'validate'")
    p.add_argument("--out", help="write the table as CSV here instead of stdout")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    for key, value in vars(args).items():
        if value is not None and hasattr(cfg, key) and key not in ("command", "config"):
            setattr(cfg, key, value)
    return cfg


def _read_signal(cfg: PipelineConfig):
    path = Path(cfg.signal)
    if not path.exists():
        raise DataError(f"signal file {path} not found")
    return read_signal_csv(path, cfg.rate_hz)


# -- commands ----------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    signal, truth = generate(cfg.synth_config())
    write_signal_csv(signal, out / "signal.csv")
    write_segments_jsonl(truth.as_dict(), out / "truth.jsonl")
    log.info("wrote %d samples x %d channels and %d truth segments to %s",
             signal.samples_per_channel, signal.channels, len(truth), out)
    return EXIT_OK


def cmd_detect(cfg: PipelineConfig) -> int:
    out = Path(cfg.out_dir)
    signal = _read_signal(cfg)
    result = detect_activity(signal, cfg.schedule(), cfg.detection_config())
    out.mkdir(parents=True, exist_ok=True)
    write_segments_jsonl(result.segments, out / "segments.jsonl")

    models = out / "models"
    models.mkdir(exist_ok=True)
    for rep in result.repetitions:
        if rep.model is not None:
            (models / f"rep_{rep.repetition:03d}.hmm").write_text(rep.model.dumps(), encoding="utf-8")

    with open(out / "states.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["repetition", "window", "time_s", "symbol", "stimulus_label",
                         "viterbi_state", "refined_state"])
        for rep in result.repetitions:
            if rep.viterbi is None:
                continue
            for i, w in enumerate(rep.windows):
                writer.writerow([rep.repetition, w, repr(float(result.labels.center_s(w))),
                                 int(result.observations.symbols[w]), int(result.labels.states[w]),
                                 int(rep.viterbi.states.states[i]), int(rep.refined.states[i])])

    summary = {"repetitions": len(result.repetitions), "detected": len(result.segments),
               "failures": result.failures}
    if cfg.truth:
        truth = read_segments_jsonl(cfg.truth)
        errors = {k: segment_error(seg, truth[k]) for k, seg in result.segments.items() if k in truth}
        summary["errors_s"] = {str(k): {"onset": e[0], "termination": e[1]}
                               for k, e in sorted(errors.items())}
    (out / "detect_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    log.info("detected %d of %d repetitions", len(result.segments), len(result.repetitions))
    if not result.segments:
        log.error("detection produced no segments")
        return EXIT_NO_SEGMENTS
    return EXIT_OK


def cmd_validate(cfg: PipelineConfig) -> int:
    out = Path(cfg.out_dir)
    if not Path(cfg.segments).exists():
        raise DataError(f"detection output {cfg.segments} not found; run 'detect' first")
    signal = _read_signal(cfg)
    segments = read_segments_jsonl(cfg.segments)
    report, sets = validate_recording(signal, cfg.schedule(), segments, half_width_s=cfg.half_width_s,
                                      C=cfg.C, k=cfg.folds, seed=cfg.seed, gesture=cfg.gesture,
                                      subject=cfg.subject)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "report.jsonl")
    scatter = scatter_export(sets[STIMULUS]) + "".join(scatter_export(sets[DETECTED]).splitlines(True)[1:])
    (out / "scatter.csv").write_text(scatter, encoding="utf-8")
    for rec in report.records:
        log.info("%-11s %-8s %-10s %6.2f%%", rec.edge_kind, rec.source, rec.mode, rec.accuracy_pct)
    return EXIT_OK


def comparison_table(reports: list[AccuracyReport]) -> list[dict]:
    """Mean accuracy per (gesture, edge kind, mode), stimulus vs detected side by side."""
    groups: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for report in reports:
        for rec in report.records:
            groups[(rec.gesture, rec.edge_kind, rec.mode)][rec.source].append(rec.accuracy_pct)
    rows = []
    for (gesture, kind, mode), by_source in sorted(groups.items()):
        stim = float(np.mean(by_source[STIMULUS])) if by_source.get(STIMULUS) else float("nan")
        det = float(np.mean(by_source[DETECTED])) if by_source.get(DETECTED) else float("nan")
        rows.append({"gesture": gesture, "edge_kind": kind, "mode": mode, "stimulus_pct": stim,
                     "detected_pct": det, "gain_pct": det - stim,
                     "n": max(len(v) for v in by_source.values())})
    return rows


def cmd_report(paths: list[str], out: str | None) -> int:
    reports = []
    for path in paths:
        if not Path(path).exists():
            raise DataError(f"report {path} not found")
        reports.append(AccuracyReport.read(path))
    rows = comparison_table(reports)
    cols = ["gesture", "edge_kind", "mode", "stimulus_pct", "detected_pct", "gain_pct", "n"]
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([f"{row[c]:.2f}" if isinstance(row[c], float) else row[c] for c in cols])
    finally:
        if out:
            fh.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.reports, args.out)
        cfg = resolve_config(args)
        return {"synth": cmd_synth, "detect": cmd_detect, "validate": cmd_validate}[args.command](cfg)
    except SignalFormatError as exc:
        log.error("malformed signal: %s", exc)
        return EXIT_DATA
    except (DataError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
