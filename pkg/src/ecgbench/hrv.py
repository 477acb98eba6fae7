"""R-peak detection, NN intervals and Poincaré representations."""

from __future__ import annotations

import bisect
import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dsp import Signal, bandpass_filter
from .errors import DataError, InsufficientData, InsufficientPeaks, LengthError
from .wfdb_io import SignalRecord

NN_MIN_S, NN_MAX_S = 0.3, 2.0
REFRACTORY_S = 0.2
IMAGE_SIZE = 224
DEFAULT_AXIS_RANGE = (0.2, 2.0)


@dataclass(frozen=True, eq=False)
class RPeakList:
    indices: np.ndarray
    sampling_rate_hz: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and idx[0] < 0:
            raise DataError("peak indices must be non-negative")
        gaps = np.diff(idx)
        if np.any(gaps <= 0):
            raise DataError("peak indices must be strictly increasing")
        if np.any(gaps < REFRACTORY_S * self.sampling_rate_hz - 1e-9):
            raise DataError("peaks closer than the 200 ms refractory period")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def times_s(self) -> np.ndarray:
        return self.indices / self.sampling_rate_hz


@dataclass(frozen=True, eq=False)
class NNSeries:
    intervals_s: np.ndarray

    def __post_init__(self):
        nn = np.asarray(self.intervals_s, dtype=np.float64).reshape(-1)
        if np.any((nn < NN_MIN_S) | (nn > NN_MAX_S)):
            raise DataError(f"NN intervals must lie in [{NN_MIN_S}, {NN_MAX_S}] s")
        nn.setflags(write=False)
        object.__setattr__(self, "intervals_s", nn)

    def __len__(self):
        return len(self.intervals_s)


def _envelope(x: np.ndarray, fs: int) -> np.ndarray:
    deriv = np.abs(np.diff(x, prepend=x[0]))
    width = max(1, int(round(0.08 * fs)))
    return np.convolve(deriv, np.ones(width) / width, mode="same")


def _local_maxima(env: np.ndarray) -> np.ndarray:
    # rising edge into a peak or plateau start
    left = np.concatenate([[False], env[1:] > env[:-1]])
    right = np.concatenate([env[:-1] >= env[1:], [False]])
    return np.flatnonzero(left & right & (env > 0))


def _dominant(cand: np.ndarray, env: np.ndarray, radius: int) -> np.ndarray:
    """Drop candidates that have a larger candidate within ``radius`` samples."""
    keep = []
    for i, p in enumerate(cand):
        lo = bisect.bisect_left(cand, p - radius + 1)
        hi = bisect.bisect_right(cand, p + radius - 1)
        neighbours = env[cand[lo:hi]]
        if env[p] >= neighbours.max():
            if keep and p - keep[-1] < radius and env[keep[-1]] == env[p]:
                continue  # equal-height twin: keep the earlier one
            keep.append(p)
    return np.asarray(keep, dtype=np.int64)


def detect_rpeaks(filtered: Signal) -> RPeakList:
    """Hamilton-style QRS detector on an already band-passed single lead.

    The rectified derivative is smoothed with an 80 ms moving average; an
    envelope peak is a beat when it exceeds 0.45 x the mean of the last eight
    accepted peaks and falls outside the 200 ms refractory period. When no
    beat appears within 1.5 x the mean RR interval, the largest skipped peak
    above half the threshold is taken (search-back). Each beat is finally
    moved to the signal maximum within +-100 ms.
    """
    x = np.asarray(filtered.samples, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("detect_rpeaks expects a single lead")
    fs = filtered.sampling_rate_hz
    if len(x) < 2 * fs:
        raise LengthError("signal shorter than 2 s")
    env = _envelope(x, fs)
    refractory = int(np.ceil(REFRACTORY_S * fs))
    cand = _local_maxima(env)
    if cand.size == 0:
        return RPeakList(np.empty(0, dtype=np.int64), fs)
    cand = _dominant(cand, env, refractory)

    # initial peak estimates: maxima of 2 s windows over the first 8 s
    init_len = min(len(x), 8 * fs)
    win = 2 * fs
    qrs_buf = deque(
        (env[a:min(a + win, init_len)].max() for a in range(0, init_len, win)), maxlen=8
    )
    rr_buf: deque = deque(maxlen=8)
    beats: list[int] = []
    accepted = set()

    def accept(p):
        if beats:
            rr_buf.append(p - beats[-1])
        beats.append(int(p))
        accepted.add(int(p))
        qrs_buf.append(env[p])

    def search_back(limit_pos):
        while beats and rr_buf and limit_pos - beats[-1] > 1.5 * np.mean(rr_buf):
            th = 0.45 * np.mean(qrs_buf)
            lo = bisect.bisect_left(cand, beats[-1] + refractory)
            hi = bisect.bisect_left(cand, limit_pos)
            best = None
            for q in cand[lo:hi]:
                if q not in accepted and env[q] > th / 2 and (best is None or env[q] > env[best]):
                    best = q
            if best is None:
                break
            accept(best)

    for p in cand:
        search_back(p)
        th = 0.45 * np.mean(qrs_buf)
        if env[p] > th and (not beats or p - beats[-1] >= refractory):
            accept(p)
    search_back(len(x))

    radius = int(round(0.1 * fs))
    refined: list[int] = []
    for b in sorted(beats):
        lo, hi = max(0, b - radius), min(len(x), b + radius + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        if refined and r - refined[-1] < refractory:
            if x[r] > x[refined[-1]]:
                refined[-1] = r
            continue
        refined.append(r)
    # a replacement can move a peak back toward its predecessor
    cleaned: list[int] = []
    for r in refined:
        if cleaned and r - cleaned[-1] < refractory:
            if x[r] > x[cleaned[-1]]:
                cleaned[-1] = r
            continue
        cleaned.append(r)
    return RPeakList(np.asarray(cleaned, dtype=np.int64), fs)


def to_nn_intervals(peaks: RPeakList, tolerance: float = 0.2, history: int = 5) -> NNSeries:
    """RR intervals with artifacts removed.

    An interval is dropped when it lies outside [0.3, 2.0] s, or when it
    deviates more than ``tolerance`` (relative) from the median of the last
    ``history`` accepted intervals.
    """
    if len(peaks) < 3:
        raise InsufficientPeaks(f"need at least 3 peaks, got {len(peaks)}")
    rr = np.diff(peaks.indices) / peaks.sampling_rate_hz
    kept: list[float] = []
    for value in rr:
        if not NN_MIN_S <= value <= NN_MAX_S:
            continue
        if kept:
            ref = float(np.median(kept[-history:]))
            if abs(value - ref) > tolerance * ref:
                continue
        kept.append(float(value))
    return NNSeries(np.asarray(kept))


def poincare_points(nn: NNSeries) -> np.ndarray:
    """``(NN_i, NN_{i+1})`` pairs as an ``(n-1, 2)`` array."""
    v = nn.intervals_s
    if len(v) < 2:
        raise InsufficientData(f"need at least 2 NN intervals, got {len(v)}")
    return np.column_stack([v[:-1], v[1:]])


@dataclass(frozen=True, eq=False)
class PoincareImage:
    pixels: np.ndarray
    axis_range_s: tuple[float, float] = DEFAULT_AXIS_RANGE

    def to_uint8(self) -> np.ndarray:
        return np.floor(self.pixels * 255 + 0.5).astype(np.uint8)

    def to_pgm(self) -> bytes:
        h, w = self.pixels.shape
        return f"P5\n{w} {h}\n255\n".encode("ascii") + self.to_uint8().tobytes()

    def to_png(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.to_uint8(), mode="L").save(buf, format="PNG")
        return buf.getvalue()


def rasterize_poincare(
    points,
    axis_range_s: tuple[float, float] = DEFAULT_AXIS_RANGE,
    size: int = IMAGE_SIZE,
) -> PoincareImage:
    """Stamp each point as a 3x3 block of +0.5, saturating at 1.0.

    Row 0 is the top of the plot (largest NN_{i+1}); points outside the axis
    range are clamped to the border.
    """
    lo, hi = axis_range_s
    if not lo < hi:
        raise DataError(f"invalid axis range {axis_range_s}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    counts = np.zeros((size, size))
    if len(pts):
        scale = (size - 1) / (hi - lo)
        cols = np.clip(np.floor((pts[:, 0] - lo) * scale + 0.5), 0, size - 1).astype(int)
        rows = size - 1 - np.clip(np.floor((pts[:, 1] - lo) * scale + 0.5), 0, size - 1).astype(int)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                r, c = rows + dr, cols + dc
                ok = (r >= 0) & (r < size) & (c >= 0) & (c < size)
                np.add.at(counts, (r[ok], c[ok]), 1)
    return PoincareImage(np.minimum(0.5 * counts, 1.0), (float(lo), float(hi)))


def select_lead(record: SignalRecord) -> int:
    """Lead II when the header names one, otherwise the first lead."""
    for i, name in enumerate(record.header.lead_names):
        if name.strip().upper() == "II":
            return i
    return 0


def record_peaks(record: SignalRecord, low_hz: float = 3.0, high_hz: float = 45.0) -> RPeakList:
    lead = select_lead(record)
    sig = Signal(record.samples[lead], record.header.sampling_rate_hz)
    return detect_rpeaks(bandpass_filter(sig, low_hz, high_hz))


def poincare_from_record(record: SignalRecord, low_hz: float = 3.0, high_hz: float = 45.0):
    """Full pipeline for one record: returns ``(peaks, nn, image)``."""
    peaks = record_peaks(record, low_hz, high_hz)
    nn = to_nn_intervals(peaks)
    image = rasterize_poincare(poincare_points(nn))
    return peaks, nn, image
