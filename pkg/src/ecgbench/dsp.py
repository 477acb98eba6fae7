"""Signal conditioning: band-pass, resampling, differencing, scaling, windowing.

Every operation works along the last axis, so a ``(leads, samples)`` matrix is
processed lead by lead. Variance is the population (divide-by-n) variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandError, DataError, LengthError

DEFAULT_WINDOW = 18000  # 60 s at 300 Hz
DEFAULT_RATE = 300
_BASE_TAPS = 301  # at 300 Hz; scaled with the sampling rate
_VARIANCE_FLOOR = 1e-24


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    sampling_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 0 or samples.shape[-1] < 1:
            raise LengthError("signal must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise DataError("signal contains non-finite values")
        if self.sampling_rate_hz <= 0:
            raise DataError("sampling rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[-1]

    def with_samples(self, samples, sampling_rate_hz=None) -> "Signal":
        return Signal(samples, self.sampling_rate_hz if sampling_rate_hz is None else sampling_rate_hz)


def num_taps(fs: float) -> int:
    """Odd FIR length: 301 taps at 300 Hz, proportional to ``fs``."""
    n = int(round(_BASE_TAPS * fs / DEFAULT_RATE))
    return n if n % 2 else n + 1


def bandpass_taps(fs: float, low_hz: float = 3.0, high_hz: float = 45.0, taps: int | None = None) -> np.ndarray:
    """Hamming-windowed sinc band-pass, unit gain at the band centre."""
    if not 0 < low_hz < high_hz < fs / 2:
        raise BandError(f"need 0 < low ({low_hz}) < high ({high_hz}) < fs/2 ({fs / 2})")
    taps = num_taps(fs) if taps is None else taps
    m = np.arange(taps) - (taps - 1) / 2
    lo, hi = low_hz / fs, high_hz / fs
    h = 2 * hi * np.sinc(2 * hi * m) - 2 * lo * np.sinc(2 * lo * m)
    h *= np.hamming(taps)
    centre = (low_hz + high_hz) / 2 / fs
    h /= np.abs(np.sum(h * np.exp(-2j * np.pi * centre * np.arange(taps))))
    return h


def _fir_zero_phase(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    delay = (len(h) - 1) // 2
    n = x.shape[-1]
    flat = x.reshape(-1, n)
    out = np.empty_like(flat)
    for i, row in enumerate(flat):
        out[i] = np.convolve(row, h, mode="full")[delay:delay + n]
    return out.reshape(x.shape)


def bandpass_filter(signal: Signal, low_hz: float = 3.0, high_hz: float = 45.0) -> Signal:
    """Linear-phase FIR band-pass with the group delay removed.

    Output has the input's length; samples beyond the edges are taken as zero.
    """
    h = bandpass_taps(signal.sampling_rate_hz, low_hz, high_hz)
    return signal.with_samples(_fir_zero_phase(signal.samples, h))


def resample_linear(signal: Signal, target_hz: int) -> Signal:
    """Linear interpolation onto a ``target_hz`` grid starting at the first sample.

    Grid points past the last input sample take the last value (clamped).
    """
    if target_hz < 50:
        raise DataError(f"target rate must be >= 50 Hz, got {target_hz}")
    src = signal.sampling_rate_hz
    if target_hz == src:
        return signal.with_samples(signal.samples.copy())
    n = len(signal)
    n_out = max(1, (2 * n * target_hz + src) // (2 * src))
    t = np.arange(n_out) * (src / target_hz)
    x = signal.samples.reshape(-1, n)
    out = np.stack([np.interp(t, np.arange(n), row) for row in x])
    return Signal(out.reshape(signal.samples.shape[:-1] + (n_out,)), target_hz)


def first_difference(signal: Signal) -> Signal:
    """``y[i] = x[i] - x[i-1]`` with ``y[0] = 0``."""
    if len(signal) < 2:
        raise LengthError("first difference needs at least 2 samples")
    x = signal.samples
    out = np.zeros_like(x)
    out[..., 1:] = np.diff(x, axis=-1)
    return signal.with_samples(out)


def standardize(signal: Signal) -> Signal:
    """Zero mean, unit population variance; constant rows map to zeros."""
    x = signal.samples
    mean = x.mean(axis=-1, keepdims=True)
    centred = x - mean
    var = np.mean(centred**2, axis=-1, keepdims=True)
    flat = var <= _VARIANCE_FLOOR
    std = np.sqrt(np.where(flat, 1.0, var))
    return signal.with_samples(np.where(flat, 0.0, centred / std))


def fix_length(signal: Signal, window: int = DEFAULT_WINDOW) -> Signal:
    """Centre-crop or symmetrically zero-pad to exactly ``window`` samples.

    Odd leftovers go to the end: the extra padded zero is appended, and a crop
    drops the extra sample from the end.
    """
    if window < 1:
        raise LengthError("window must be >= 1")
    x = signal.samples
    n = x.shape[-1]
    if n >= window:
        start = (n - window) // 2
        return signal.with_samples(x[..., start:start + window].copy())
    left = (window - n) // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(left, window - n - left)]
    return signal.with_samples(np.pad(x, pad))


def prepare_model_input(
    signal: Signal,
    target_hz: int = DEFAULT_RATE,
    window: int | None = DEFAULT_WINDOW,
) -> np.ndarray:
    """Resample, difference, standardise and window; returns ``(leads, window)``."""
    s = resample_linear(signal, target_hz)
    s = standardize(first_difference(s))
    if window is not None:
        s = fix_length(s, window)
    return np.atleast_2d(s.samples)
