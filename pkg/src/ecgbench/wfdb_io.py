"""WFDB-style record headers, sample payloads, labels and dataset manifests.

Only the parts of the WFDB format that the challenge data needs are handled:
the ``.hea`` text header, format-16 sample streams (optionally behind a byte
offset such as ``16+24``) and a CSV fallback holding one column of raw ADC
values per lead.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import statistics
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    LabelError,
    LengthError,
    ParseError,
    RangeError,
    SplitError,
    StructureError,
)
from .rng import substream

CINC2017_CLASSES = ("N", "A", "O", "~")
CINC2020_CLASSES = (
    "AF", "AFL", "Brady", "CRBBB", "IAVB", "IRBBB", "LAD", "LAnFB", "LBBB",
    "LPR", "LQRSV", "LQT", "NSIVCB", "Other", "PAC", "PR", "PVC", "QAb", "RAD",
    "RBBB", "SA", "SB", "SNR", "STach", "SVPB", "TAb", "TInv", "VPB",
)
OTHER = "Other"
SPLITS = ("train", "val", "test")

# record-name prefix -> source database (CinC 2020 naming)
CINC2020_SOURCES = {
    "A": "CPSC",
    "Q": "CPSC-Extra",
    "I": "INCART",
    "S": "PTB",
    "HR": "PTB-XL",
    "E": "G12EC",
}

DEFAULT_GAIN = 200.0  # WFDB: gain 0 or absent means 200 adu/mV
INT16_MIN, INT16_MAX = -32768, 32767

_GAIN_RE = re.compile(r"^([-+]?[0-9.]+(?:[eE][-+]?\d+)?)(?:\((-?\d+)\))?(?:/(\S+))?$")


@dataclass(frozen=True)
class LeadSpec:
    """One signal-specification line of a header."""

    file_name: str
    fmt: int = 16
    byte_offset: int = 0
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_res: int = 16
    adc_zero: int = 0
    init_value: int = 0
    checksum: int = 0
    block_size: int = 0
    description: str = ""


@dataclass(frozen=True)
class RecordHeader:
    record_id: str
    num_leads: int
    sampling_rate_hz: int
    num_samples: int
    leads: tuple[LeadSpec, ...]
    comments: tuple[str, ...] = ()

    def __post_init__(self):
        if self.num_leads < 1:
            raise StructureError("num_leads must be >= 1")
        if not 50 <= self.sampling_rate_hz <= 5000:
            raise StructureError(f"sampling rate {self.sampling_rate_hz} outside [50, 5000]")
        if self.num_samples < 1:
            raise StructureError("num_samples must be >= 1")
        if len(self.leads) != self.num_leads:
            raise StructureError(
                f"header declares {self.num_leads} leads but has {len(self.leads)} signal lines"
            )
        for lead in self.leads:
            if not lead.gain > 0:
                raise StructureError(f"gain must be positive, got {lead.gain}")

    @property
    def gains(self) -> tuple[float, ...]:
        return tuple(lead.gain for lead in self.leads)

    @property
    def baselines(self) -> tuple[int, ...]:
        return tuple(lead.baseline for lead in self.leads)

    @property
    def lead_names(self) -> tuple[str, ...]:
        return tuple(lead.description for lead in self.leads)

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sampling_rate_hz

    def comment_value(self, key: str) -> str | None:
        """Value of a ``key: value`` comment line, e.g. ``Dx`` or ``Age``."""
        for line in self.comments:
            name, sep, value = line.strip().partition(":")
            if sep and name.strip() == key:
                return value.strip()
        return None


@dataclass(frozen=True, eq=False)
class SignalRecord:
    header: RecordHeader
    samples: np.ndarray  # (num_leads, num_samples), mV

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        expected = (self.header.num_leads, self.header.num_samples)
        if samples.shape != expected:
            raise StructureError(f"samples shape {samples.shape} does not match header {expected}")
        if not np.all(np.isfinite(samples)):
            raise DataError("record contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def record_id(self) -> str:
        return self.header.record_id


def _parse_int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}", line) from None


def _parse_record_line(tokens: list[str], line: int) -> tuple[str, int, int, int]:
    if len(tokens) < 4:
        raise ParseError("record line needs name, leads, rate and sample count", line)
    name = tokens[0].split("/")[0]
    nsig = _parse_int(tokens[1], "lead count", line)
    fs_token = re.split(r"[/(]", tokens[2])[0]
    try:
        fs = float(fs_token)
    except ValueError:
        raise ParseError(f"invalid sampling rate {tokens[2]!r}", line) from None
    if not fs.is_integer():
        raise ParseError(f"sampling rate {fs} is not an integer", line)
    nsamp = _parse_int(tokens[3], "sample count", line)
    if nsig < 1:
        raise ParseError("lead count must be >= 1", line)
    if not 50 <= fs <= 5000:
        raise ParseError(f"sampling rate {fs:g} outside [50, 5000]", line)
    if nsamp < 1:
        raise ParseError("sample count must be >= 1", line)
    return name, nsig, int(fs), nsamp


def _parse_signal_line(text: str, line: int) -> LeadSpec:
    tokens = text.split(maxsplit=8)
    if len(tokens) < 2:
        raise ParseError("signal line needs file name and format", line)
    file_name, fmt_token = tokens[0], tokens[1]
    m = re.match(r"^(\d+)(?:x\d+)?(?::\d+)?(?:\+(\d+))?$", fmt_token)
    if not m:
        raise ParseError(f"invalid format {fmt_token!r}", line)
    fmt = int(m.group(1))
    offset = int(m.group(2) or 0)

    gain, baseline, units = DEFAULT_GAIN, None, "mV"
    if len(tokens) > 2:
        gm = _GAIN_RE.match(tokens[2])
        if not gm:
            raise ParseError(f"invalid gain field {tokens[2]!r}", line)
        gain = float(gm.group(1))
        if gain == 0:
            gain = DEFAULT_GAIN
        if gain < 0:
            raise ParseError("gain must be positive", line)
        if gm.group(2) is not None:
            baseline = int(gm.group(2))
        if gm.group(3):
            units = gm.group(3)
    ints = [
        _parse_int(tok, "signal field", line) for tok in tokens[3:min(len(tokens), 8)]
    ]
    adc_res, adc_zero, init_value, checksum, block_size = (ints + [16, 0, 0, 0, 0][len(ints):])[:5]
    description = tokens[8] if len(tokens) > 8 else ""
    if baseline is None:
        baseline = adc_zero
    return LeadSpec(
        file_name=file_name,
        fmt=fmt,
        byte_offset=offset,
        gain=gain,
        baseline=baseline,
        units=units,
        adc_res=adc_res,
        adc_zero=adc_zero,
        init_value=init_value,
        checksum=checksum,
        block_size=block_size,
        description=description,
    )


def parse_header(text: str) -> RecordHeader:
    """Parse the contents of a ``.hea`` file.

    Comment lines (``#`` prefix) may appear anywhere; their text after the
    ``#`` is kept verbatim and in order.
    """
    if not text or not text.strip():
        raise ParseError("empty header", 1)
    record = None
    leads: list[LeadSpec] = []
    comments: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if raw.lstrip().startswith("#"):
            comments.append(raw.lstrip()[1:])
            continue
        if not stripped:
            continue
        if record is None:
            record = _parse_record_line(stripped.split(), lineno)
        else:
            leads.append(_parse_signal_line(stripped, lineno))
    if record is None:
        raise ParseError("no record line found", 1)
    name, nsig, fs, nsamp = record
    if len(leads) != nsig:
        raise StructureError(f"header declares {nsig} leads but has {len(leads)} signal lines")
    return RecordHeader(
        record_id=name,
        num_leads=nsig,
        sampling_rate_hz=fs,
        num_samples=nsamp,
        leads=tuple(leads),
        comments=tuple(comments),
    )


def _fmt_number(value: float) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


def format_header(header: RecordHeader) -> str:
    lines = [
        f"{header.record_id} {header.num_leads} {header.sampling_rate_hz} {header.num_samples}"
    ]
    for lead in header.leads:
        fmt = f"{lead.fmt}+{lead.byte_offset}" if lead.byte_offset else str(lead.fmt)
        fields = [
            lead.file_name,
            fmt,
            f"{_fmt_number(lead.gain)}({lead.baseline})/{lead.units}",
            str(lead.adc_res),
            str(lead.adc_zero),
            str(lead.init_value),
            str(lead.checksum),
            str(lead.block_size),
        ]
        if lead.description:
            fields.append(lead.description)
        lines.append(" ".join(fields))
    lines.extend("#" + c for c in header.comments)
    return "\n".join(lines) + "\n"


def _raw_from_bytes(header: RecordHeader, payload: bytes) -> np.ndarray:
    fmts = {lead.fmt for lead in header.leads}
    if fmts != {16}:
        raise StructureError(f"only WFDB format 16 is supported, header uses {sorted(fmts)}")
    offsets = {lead.byte_offset for lead in header.leads}
    if len(offsets) != 1 or len({lead.file_name for lead in header.leads}) != 1:
        raise StructureError("all leads must share one signal file and byte offset")
    offset = offsets.pop()
    expected = 2 * header.num_leads * header.num_samples
    body = memoryview(payload)[offset:]
    if len(body) != expected:
        raise LengthError(
            f"payload holds {len(body)} bytes, header requires {expected} "
            f"({header.num_samples} samples x {header.num_leads} leads)"
        )
    frames = np.frombuffer(body, dtype="<i2").reshape(header.num_samples, header.num_leads)
    return frames.T.astype(np.float64)


def _raw_from_csv(header: RecordHeader, text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header row
    if len(rows) != header.num_samples:
        raise LengthError(f"CSV holds {len(rows)} samples, header requires {header.num_samples}")
    try:
        raw = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"non-numeric CSV value: {exc}") from None
    if raw.shape[1] != header.num_leads:
        raise StructureError(f"CSV has {raw.shape[1]} columns, header declares {header.num_leads} leads")
    return raw.T


def read_record(header: RecordHeader, payload: bytes | str) -> SignalRecord:
    """Decode a sample payload into millivolts using the header's gains."""
    if isinstance(payload, (bytes, bytearray, memoryview)):
        raw = _raw_from_bytes(header, bytes(payload))
    elif isinstance(payload, str):
        raw = _raw_from_csv(header, payload)
    else:
        raise TypeError(f"payload must be bytes or str, got {type(payload).__name__}")
    gains = np.asarray(header.gains)[:, None]
    baselines = np.asarray(header.baselines, dtype=np.float64)[:, None]
    samples = (raw - baselines) / gains
    if not np.all(np.isfinite(samples)):
        raise DataError("non-finite sample after unit conversion")
    return SignalRecord(header, samples)


def quantize(record: SignalRecord) -> np.ndarray:
    """Digital (int16) representation of a record; RangeError if it overflows."""
    gains = np.asarray(record.header.gains)[:, None]
    baselines = np.asarray(record.header.baselines, dtype=np.float64)[:, None]
    raw = np.rint(record.samples * gains + baselines)
    if raw.size and (raw.min() < INT16_MIN or raw.max() > INT16_MAX):
        worst = raw.flat[np.argmax(np.abs(raw))]
        raise RangeError(f"sample value {worst:.0f} adu exceeds the 16-bit range")
    return raw.astype(np.int16)


def write_record(record: SignalRecord) -> tuple[str, bytes]:
    """Serialize to header text and a format-16 payload (``<id>.dat``)."""
    raw = quantize(record)
    header = record.header
    leads = []
    for i, lead in enumerate(header.leads):
        total = int(raw[i].astype(np.int64).sum())
        checksum = (total + 32768) % 65536 - 32768
        leads.append(
            replace(
                lead,
                file_name=f"{header.record_id}.dat",
                fmt=16,
                byte_offset=0,
                adc_res=16,
                init_value=int(raw[i, 0]),
                checksum=checksum,
                block_size=0,
            )
        )
    new_header = replace(header, leads=tuple(leads))
    payload = np.ascontiguousarray(raw.T).astype("<i2").tobytes()
    return format_header(new_header), payload


def load_record(hea_path: str | Path) -> SignalRecord:
    """Read a record from disk, locating its payload next to the header.

    A ``.csv`` file with the record name takes precedence over the binary
    signal file named in the header.
    """
    hea_path = Path(hea_path)
    header = parse_header(hea_path.read_text(encoding="utf-8"))
    csv_path = hea_path.with_suffix(".csv")
    if csv_path.exists():
        return read_record(header, csv_path.read_text(encoding="utf-8"))
    data_path = hea_path.parent / header.leads[0].file_name
    if not data_path.exists():
        raise DataError(f"signal file {data_path} not found")
    return read_record(header, data_path.read_bytes())


def save_record(record: SignalRecord, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text, payload = write_record(record)
    hea = directory / f"{record.record_id}.hea"
    hea.write_text(text, encoding="utf-8")
    (directory / f"{record.record_id}.dat").write_bytes(payload)
    return hea


# ---------------------------------------------------------------- labels


@dataclass(frozen=True)
class LabelSet:
    record_id: str
    labels: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(self.labels))
        if not self.labels:
            raise LabelError(f"record {self.record_id} has no labels")

    def validate(self, vocabulary: Sequence[str]) -> "LabelSet":
        unknown = self.labels - set(vocabulary)
        if unknown:
            raise LabelError(f"record {self.record_id}: labels {sorted(unknown)} not in vocabulary")
        return self

    @property
    def primary(self) -> str:
        return min(self.labels)


def load_dx_mapping(path: str | Path | None = None) -> dict[str, str]:
    """SNOMED-CT code -> class abbreviation table (CSV with ``code,symbol``)."""
    if path is None:
        text = resources.files("ecgbench.data").joinpath("dx_mapping.csv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    mapping = {}
    for row in csv.DictReader(io.StringIO(text)):
        mapping[row["code"].strip()] = row["symbol"].strip()
    return mapping


def labels_from_reference_row(row: str, vocabulary: Sequence[str] = CINC2017_CLASSES) -> LabelSet:
    """``"A00001,N"`` -> LabelSet; exactly one symbol per row."""
    parts = [p.strip() for p in row.strip().split(",")]
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise LabelError(f"malformed reference row {row!r}")
    return LabelSet(parts[0], {parts[1]}).validate(vocabulary)


def labels_from_dx(
    record_id: str,
    codes: Iterable[str],
    vocabulary: Sequence[str] = CINC2020_CLASSES,
    mapping: Mapping[str, str] | None = None,
) -> LabelSet:
    """Map diagnosis codes to class symbols, collapsing the rest to ``Other``."""
    if mapping is None:
        mapping = load_dx_mapping()
    vocab = set(vocabulary)
    labels = set()
    for code in codes:
        code = code.strip()
        if not code:
            continue
        symbol = mapping.get(code)
        if symbol in vocab:
            labels.add(symbol)
        elif OTHER in vocab:
            labels.add(OTHER)
    if not labels:
        raise LabelError(f"record {record_id} has no mappable diagnosis codes")
    return LabelSet(record_id, labels)


def parse_labels(
    source: str | RecordHeader,
    vocabulary: Sequence[str],
    mapping: Mapping[str, str] | None = None,
) -> LabelSet:
    """Labels from a reference-CSV row (CinC 2017) or a header's ``Dx`` comment."""
    if isinstance(source, RecordHeader):
        dx = source.comment_value("Dx")
        if dx is None:
            raise LabelError(f"record {source.record_id} has no Dx comment")
        return labels_from_dx(source.record_id, dx.split(","), vocabulary, mapping)
    return labels_from_reference_row(source, vocabulary)


def read_reference_csv(text: str, vocabulary: Sequence[str] = CINC2017_CLASSES) -> dict[str, LabelSet]:
    out = {}
    for row in text.splitlines():
        if row.strip():
            ls = labels_from_reference_row(row, vocabulary)
            out[ls.record_id] = ls
    return out


# --------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    path: str
    labels: tuple[str, ...]
    length_s: float
    split: str | None = None
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(sorted(self.labels)))
        if not self.labels:
            raise LabelError(f"entry {self.record_id} has no labels")
        if self.split is not None and self.split not in SPLITS:
            raise SplitError(f"unknown split tag {self.split!r}")

    @property
    def stratum(self) -> str:
        return self.labels[0]


def length_stats(lengths: Sequence[float]) -> dict:
    if not lengths:
        return {"count": 0, "mean": None, "min": None, "median": None, "max": None}
    values = [float(v) for v in lengths]
    return {
        "count": len(values),
        "mean": math.fsum(values) / len(values),
        "min": min(values),
        "median": float(statistics.median(values)),
        "max": max(values),
    }


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for e in self.entries:
            if e.split not in SPLITS:
                raise SplitError(f"entry {e.record_id} lacks a split tag")
        if not self.stats:
            object.__setattr__(self, "stats", self.compute_stats())

    def compute_stats(self) -> dict:
        return {
            s: length_stats([e.length_s for e in self.entries if e.split == s]) for s in SPLITS
        }

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_json(self) -> str:
        doc = {
            "version": 1,
            "entries": [
                {
                    "record_id": e.record_id,
                    "path": e.path,
                    "labels": list(e.labels),
                    "length_s": e.length_s,
                    "split": e.split,
                    "source": e.source,
                }
                for e in self.entries
            ],
            "stats": self.stats,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        entries = [ManifestEntry(**{**e, "labels": tuple(e["labels"])}) for e in doc["entries"]]
        return cls(tuple(entries), doc.get("stats") or {})


def split_sizes(n: int, ratios: Sequence[float] = (0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Train/val/test sizes: held-out splits take the ceiling, train the remainder.

    The test share is carved first, then validation from what is left, which
    yields 5116/1706/1706 for 8528 records and 25860/8620/8621 for 43101.
    """
    r_train, r_val, r_test = (Fraction(r).limit_denominator(10**6) for r in ratios)
    n_test = math.ceil(r_test * n)
    rest = n - n_test
    n_val = math.ceil(r_val / (r_train + r_val) * rest) if r_train + r_val else rest
    return rest - n_val, n_val, n_test


def _assign_leftovers(rows: dict, leftovers: dict, deficits: list[int]) -> dict:
    """Give each stratum's leftover units to distinct splits with fractional quota.

    Bipartite max-flow (strata -> splits); a feasible integral assignment
    always exists because the fractional parts themselves are a feasible flow.
    """
    strata = sorted(rows)
    split_cap = deficits[:]
    flow = {c: set() for c in strata}
    owner: dict[int, list[str]] = {j: [] for j in range(len(deficits))}

    def augment(c: str, seen: set) -> bool:
        for j in range(len(deficits)):
            if j in flow[c] or not rows[c][j] or j in seen:
                continue
            seen.add(j)
            if split_cap[j] > 0:
                split_cap[j] -= 1
                flow[c].add(j)
                owner[j].append(c)
                return True
            for other in list(owner[j]):
                if augment(other, seen):
                    owner[j].remove(other)
                    flow[other].discard(j)
                    flow[c].add(j)
                    owner[j].append(c)
                    return True
        return False

    for c in strata:
        for _ in range(leftovers[c]):
            if not augment(c, set()):
                raise SplitError("could not apportion strata across splits")
    return flow


def split_dataset(
    entries: Sequence[ManifestEntry],
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> DatasetManifest:
    """Deterministic stratified train/val/test split.

    Strata are the lexicographically-first label of each record. Per-stratum
    counts are a controlled rounding of their proportional quotas, so every
    stratum lands within one record of the global ratios while the split
    totals follow :func:`split_sizes`.
    """
    if len(entries) < 3:
        raise SplitError(f"need at least 3 entries to split, got {len(entries)}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise SplitError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    ids = [e.record_id for e in entries]
    if len(set(ids)) != len(ids):
        raise SplitError("duplicate record ids in manifest entries")

    n = len(entries)
    sizes = split_sizes(n, ratios)
    by_stratum: dict[str, list[ManifestEntry]] = {}
    for e in sorted(entries, key=lambda e: (e.record_id, e.path)):
        by_stratum.setdefault(e.stratum, []).append(e)

    alloc, fractional, leftovers = {}, {}, {}
    for c, members in by_stratum.items():
        quotas = [Fraction(len(members) * size, n) for size in sizes]
        alloc[c] = [math.floor(q) for q in quotas]
        fractional[c] = [q != math.floor(q) for q in quotas]
        leftovers[c] = len(members) - sum(alloc[c])
    deficits = [sizes[j] - sum(alloc[c][j] for c in alloc) for j in range(3)]
    for c, splits in _assign_leftovers(fractional, leftovers, deficits).items():
        for j in splits:
            alloc[c][j] += 1

    rng = substream(seed, "split")
    out = []
    for c in sorted(by_stratum):
        members = by_stratum[c]
        order = rng.permutation(len(members))
        n_train, n_val, _ = alloc[c]
        for rank, idx in enumerate(order):
            tag = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            out.append(replace(members[idx], split=tag))
    out.sort(key=lambda e: e.record_id)
    return DatasetManifest(tuple(out))


def source_of(record_id: str) -> str:
    for prefix in sorted(CINC2020_SOURCES, key=len, reverse=True):
        if record_id.startswith(prefix):
            return CINC2020_SOURCES[prefix]
    return ""


def scan_directory(
    directory: str | Path,
    vocabulary: Sequence[str],
    reference: Mapping[str, LabelSet] | None = None,
    mapping: Mapping[str, str] | None = None,
) -> list[ManifestEntry]:
    """Manifest entries (unsplit) for every ``.hea`` file under ``directory``.

    Labels come from ``reference`` when given (CinC 2017), otherwise from the
    header ``Dx`` comments (CinC 2020).
    """
    entries = []
    for hea in sorted(Path(directory).rglob("*.hea")):
        header = parse_header(hea.read_text(encoding="utf-8"))
        if reference is not None:
            if header.record_id not in reference:
                raise LabelError(f"record {header.record_id} missing from reference labels")
            labels = reference[header.record_id].validate(vocabulary)
        else:
            labels = parse_labels(header, vocabulary, mapping)
        entries.append(
            ManifestEntry(
                record_id=header.record_id,
                path=str(hea),
                labels=tuple(labels.labels),
                length_s=header.duration_s,
                source=source_of(header.record_id) if reference is None else "",
            )
        )
    return entries
