"""Multi-label reports, per-source F1, inference timing and energy estimates."""

from __future__ import annotations

import json
import math
import threading
import time
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DataError, LabelError, RangeError
from .wfdb_io import CINC2020_SOURCES

AVERAGES = ("micro avg", "macro avg", "weighted avg", "samples avg")
HEADER = ("Classes", "Precision", "Recall", "F1 Score", "Support")
DEFAULT_FACTOR = 0.545  # g CO2 per Wh

# (Wh, g) pairs as published for the twelve trained pipelines
REFERENCE_ENERGY_PAIRS = (
    (127, 69), (148, 81), (77, 42), (44, 24), (92, 51), (42, 23),
    (630, 344), (740, 404), (396, 216), (223, 122), (497, 271), (286, 156),
)


def half_up(value: float, digits: int = 2) -> Decimal:
    """Round half away from zero on the shortest decimal repr of ``value``."""
    return Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)


def render(value: float, digits: int = 2) -> str:
    return str(half_up(value, digits))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_score(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are zero."""
    return _ratio(2 * p * r, p + r)


@dataclass(frozen=True)
class ReportRow:
    label: str
    precision: float
    recall: float
    f1: float
    support: int

    def cells(self, digits: int = 2) -> tuple[str, ...]:
        return (
            self.label,
            render(self.precision, digits),
            render(self.recall, digits),
            render(self.f1, digits),
            str(self.support),
        )

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "support": self.support}


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple[ReportRow, ...]
    averages: tuple[ReportRow, ...]

    def row(self, label: str) -> ReportRow:
        for r in self.classes + self.averages:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def rows(self) -> tuple[ReportRow, ...]:
        return self.classes + self.averages

    def to_text(self, digits: int = 2) -> str:
        table = [HEADER] + [r.cells(digits) for r in self.rows]
        widths = [max(len(line[i]) for line in table) for i in range(len(HEADER))]
        out = []
        for line in table:
            first = line[0].ljust(widths[0])
            rest = [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])]
            out.append("  ".join([first] + rest))
        return "\n".join(out) + "\n"

    def to_latex_rows(self, digits: int = 2) -> list[str]:
        """Body rows in the ``a & b & c & d & n \\\\ \\hline`` tabular layout."""
        return [" & ".join(r.cells(digits)) + r" \\ \hline" for r in self.rows]

    def to_json(self) -> str:
        doc = {
            "classes": {r.label: r.as_dict() for r in self.classes},
            "averages": {r.label: r.as_dict() for r in self.averages},
        }
        return json.dumps(doc, indent=2)


def _check_sets(true_sets, pred_sets, vocabulary):
    if len(true_sets) != len(pred_sets):
        raise DataError(f"{len(true_sets)} label sets but {len(pred_sets)} predictions")
    vocab = set(vocabulary)
    true_sets = [frozenset(s) for s in true_sets]
    pred_sets = [frozenset(s) for s in pred_sets]
    for i, (t, p) in enumerate(zip(true_sets, pred_sets)):
        unknown = (t | p) - vocab
        if unknown:
            raise LabelError(f"record {i}: labels {sorted(unknown)} outside vocabulary")
    return true_sets, pred_sets


def confusion_counts(true_sets, pred_sets, vocabulary) -> dict[str, tuple[int, int, int]]:
    """Per-class ``(tp, fp, fn)``."""
    true_sets, pred_sets = _check_sets(true_sets, pred_sets, vocabulary)
    counts = {c: [0, 0, 0] for c in vocabulary}
    for t, p in zip(true_sets, pred_sets):
        for c in t & p:
            counts[c][0] += 1
        for c in p - t:
            counts[c][1] += 1
        for c in t - p:
            counts[c][2] += 1
    return {c: tuple(v) for c, v in counts.items()}


def classification_report(
    true_sets: Sequence[Iterable[str]],
    pred_sets: Sequence[Iterable[str]],
    vocabulary: Sequence[str],
) -> ClassificationReport:
    true_sets, pred_sets = _check_sets(true_sets, pred_sets, vocabulary)
    counts = confusion_counts(true_sets, pred_sets, vocabulary)

    rows = []
    for c in vocabulary:
        tp, fp, fn = counts[c]
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        rows.append(ReportRow(c, p, r, f1_score(p, r), tp + fn))
    total = sum(r.support for r in rows)

    tp = sum(v[0] for v in counts.values())
    fp = sum(v[1] for v in counts.values())
    fn = sum(v[2] for v in counts.values())
    mp, mr = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    micro = ReportRow("micro avg", mp, mr, f1_score(mp, mr), total)

    k = len(rows)
    macro = ReportRow(
        "macro avg",
        _ratio(math.fsum(r.precision for r in rows), k),
        _ratio(math.fsum(r.recall for r in rows), k),
        _ratio(math.fsum(r.f1 for r in rows), k),
        total,
    )
    weighted = ReportRow(
        "weighted avg",
        _ratio(math.fsum(r.precision * r.support for r in rows), total),
        _ratio(math.fsum(r.recall * r.support for r in rows), total),
        _ratio(math.fsum(r.f1 * r.support for r in rows), total),
        total,
    )

    sp, sr, sf = [], [], []
    for t, p in zip(true_sets, pred_sets):
        hit = len(t & p)
        rp, rr = _ratio(hit, len(p)), _ratio(hit, len(t))
        sp.append(rp)
        sr.append(rr)
        sf.append(f1_score(rp, rr))
    n = len(true_sets)
    samples = ReportRow(
        "samples avg", _ratio(math.fsum(sp), n), _ratio(math.fsum(sr), n), _ratio(math.fsum(sf), n), total
    )
    return ClassificationReport(tuple(rows), (micro, macro, weighted, samples))


def micro_f1(true_sets, pred_sets, vocabulary) -> float:
    counts = confusion_counts(true_sets, pred_sets, vocabulary)
    tp = sum(v[0] for v in counts.values())
    fp = sum(v[1] for v in counts.values())
    fn = sum(v[2] for v in counts.values())
    return _ratio(2 * tp, 2 * tp + fp + fn)


@dataclass(frozen=True)
class GroupScore:
    source: str
    records: int
    mean_length_s: float
    f1: float


def f1_by_group(
    true_sets: Sequence[Iterable[str]],
    pred_sets: Sequence[Iterable[str]],
    tags: Sequence[str],
    vocabulary: Sequence[str],
    lengths_s: Sequence[float] | None = None,
    sources: Sequence[str] | None = None,
) -> list[GroupScore]:
    """Micro-F1 per source tag, in ``sources`` order; empty buckets are dropped."""
    sources = tuple(CINC2020_SOURCES.values()) if sources is None else tuple(sources)
    true_sets, pred_sets = _check_sets(true_sets, pred_sets, vocabulary)
    if len(tags) != len(true_sets):
        raise DataError(f"{len(tags)} source tags for {len(true_sets)} records")
    if lengths_s is not None and len(lengths_s) != len(true_sets):
        raise DataError(f"{len(lengths_s)} lengths for {len(true_sets)} records")
    unknown = sorted(set(tags) - set(sources))
    if unknown:
        raise DataError(f"unknown source tags: {unknown}")

    out = []
    for src in sources:
        idx = [i for i, t in enumerate(tags) if t == src]
        if not idx:
            warnings.warn(f"no records for source {src}; row omitted", stacklevel=2)
            continue
        mean_len = math.fsum(lengths_s[i] for i in idx) / len(idx) if lengths_s is not None else math.nan
        f1 = micro_f1([true_sets[i] for i in idx], [pred_sets[i] for i in idx], vocabulary)
        out.append(GroupScore(src, len(idx), mean_len, f1))
    return out


def render_group_table(rows_by_model: Mapping[str, Sequence[GroupScore]]) -> str:
    """Model rows by source columns; each header carries the mean length in seconds."""
    sources: list[GroupScore] = []
    seen = set()
    for scores in rows_by_model.values():
        for s in scores:
            if s.source not in seen:
                seen.add(s.source)
                sources.append(s)
    header = ["Model"] + [
        f"{s.source} (l={half_up(s.mean_length_s, 0)})" if not math.isnan(s.mean_length_s) else s.source
        for s in sources
    ]
    lines = [header]
    for model, scores in rows_by_model.items():
        lookup = {s.source: s.f1 for s in scores}
        lines.append([model] + [render(lookup[s.source]) if s.source in lookup else "-" for s in sources])
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    text = []
    for line in lines:
        text.append("  ".join([line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]))
    return "\n".join(text) + "\n"


@dataclass(frozen=True)
class TimingReport:
    """Per-record mean stage durations in milliseconds."""

    processing_ms: float
    prediction_ms: float
    records: int = 0
    repetitions: int = 0

    def __post_init__(self):
        if self.processing_ms < 0 or self.prediction_ms < 0:
            raise RangeError("stage durations must be non-negative")

    @property
    def total_ms(self) -> float:
        return self.processing_ms + self.prediction_ms

    def rendered(self, digits: int = 1) -> tuple[str, str, str]:
        """Rounded cells; the total is the sum of the rounded stages so the row adds up."""
        p, q = half_up(self.processing_ms, digits), half_up(self.prediction_ms, digits)
        return str(p), str(q), str(p + q)

    def as_dict(self) -> dict:
        return {
            "processing_ms": self.processing_ms,
            "prediction_ms": self.prediction_ms,
            "total_ms": self.total_ms,
            "records": self.records,
            "repetitions": self.repetitions,
        }


def render_timing_table(reports: Mapping[str, TimingReport]) -> str:
    lines = [("Model", "Processing (ms)", "Prediction (ms)", "Total (ms)")]
    lines += [(name, *rep.rendered()) for name, rep in reports.items()]
    widths = [max(len(line[i]) for line in lines) for i in range(4)]
    return "\n".join(
        "  ".join([line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]) for line in lines
    ) + "\n"


def _measure(process_fn, predict_fn, records, repetitions):
    proc, pred = [], []
    for _ in range(repetitions):
        tp = tq = 0.0
        for rec in records:
            t0 = time.perf_counter()
            feats = process_fn(rec)
            t1 = time.perf_counter()
            predict_fn(feats)
            t2 = time.perf_counter()
            tp += t1 - t0
            tq += t2 - t1
        proc.append(tp / len(records))
        pred.append(tq / len(records))
    return proc, pred


def time_pipeline(
    process_fn: Callable,
    predict_fn: Callable,
    records: Sequence,
    repetitions: int = 3,
) -> TimingReport:
    """Mean per-record stage latency; the first repetition is a discarded warm-up.

    The loop runs on its own thread so the measurement is isolated from
    whatever the calling thread holds.
    """
    records = list(records)
    if not records:
        raise DataError("no records to time")
    if repetitions < 3:
        raise RangeError(f"repetitions must be >= 3, got {repetitions}")

    box: dict = {}

    def run():
        try:
            box["result"] = _measure(process_fn, predict_fn, records, repetitions)
        except BaseException as exc:  # re-raised on the caller's thread
            box["error"] = exc

    worker = threading.Thread(target=run, name="ecgbench-timing")
    worker.start()
    worker.join()
    if "error" in box:
        raise box["error"]
    proc, pred = box["result"]
    kept = repetitions - 1
    return TimingReport(
        processing_ms=1000.0 * math.fsum(proc[1:]) / kept,
        prediction_ms=1000.0 * math.fsum(pred[1:]) / kept,
        records=len(records),
        repetitions=kept,
    )


@dataclass(frozen=True)
class Device:
    watts: float
    utilization: float = 1.0
    name: str = ""


@dataclass(frozen=True)
class EnergyReport:
    duration_h: float
    devices: tuple[Device, ...]
    factor_g_per_wh: float
    energy_wh: float = field(init=False)
    co2_g: float = field(init=False)

    def __post_init__(self):
        energy = math.fsum(d.watts * d.utilization * self.duration_h for d in self.devices)
        object.__setattr__(self, "energy_wh", energy)
        object.__setattr__(self, "co2_g", energy * self.factor_g_per_wh)

    def as_dict(self) -> dict:
        return {
            "duration_h": self.duration_h,
            "devices": [{"name": d.name, "watts": d.watts, "utilization": d.utilization} for d in self.devices],
            "factor_g_per_wh": self.factor_g_per_wh,
            "energy_wh": self.energy_wh,
            "co2_g": self.co2_g,
        }


def estimate_energy(
    duration_h: float,
    devices: Iterable[Device | tuple[float, float]],
    factor_g_per_wh: float = DEFAULT_FACTOR,
) -> EnergyReport:
    devs = tuple(d if isinstance(d, Device) else Device(*d) for d in devices)
    if duration_h < 0:
        raise RangeError(f"duration must be non-negative, got {duration_h}")
    for d in devs:
        if d.watts < 0 or d.utilization < 0:
            raise RangeError(f"device power and utilization must be non-negative: {d}")
    if not factor_g_per_wh > 0:
        raise RangeError(f"emission factor must be positive, got {factor_g_per_wh}")
    return EnergyReport(duration_h, devs, factor_g_per_wh)


def co2_from_energy(energy_wh: float, factor_g_per_wh: float = DEFAULT_FACTOR) -> float:
    if energy_wh < 0:
        raise RangeError(f"energy must be non-negative, got {energy_wh}")
    return estimate_energy(1.0, [Device(energy_wh)], factor_g_per_wh).co2_g


def calibrate_factor(pairs: Iterable[tuple[float, float]] = REFERENCE_ENERGY_PAIRS) -> float:
    """Least-squares slope through the origin of grams against watt-hours."""
    pairs = list(pairs)
    den = math.fsum(w * w for w, _ in pairs)
    if not den:
        raise DataError("need at least one non-zero energy value")
    return math.fsum(w * g for w, g in pairs) / den
