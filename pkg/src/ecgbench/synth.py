"""Synthetic ECG generator with known R-peak positions.

Each beat is a sum of Gaussian bumps (P, Q, R, S, T); wave offsets and widths
for P and T stretch with the square root of the RR interval.
"""

from __future__ import annotations

import numpy as np

from .wfdb_io import LeadSpec, RecordHeader, SignalRecord

# (amplitude mV, centre offset s, width s, scales with sqrt(RR))
_WAVES = (
    (0.15, -0.17, 0.022, True),   # P
    (-0.12, -0.028, 0.009, False),  # Q
    (1.00, 0.0, 0.010, False),    # R
    (-0.25, 0.028, 0.009, False),  # S
    (0.30, 0.26, 0.045, True),    # T
)


def beat_times_constant(bpm: float, duration_s: float, first_s: float | None = None) -> np.ndarray:
    period = 60.0 / bpm
    start = period / 2 if first_s is None else first_s
    return np.arange(start, duration_s - 0.05, period)


def beat_times_sweep(bpm_start: float, bpm_end: float, duration_s: float, first_s: float = 0.5) -> np.ndarray:
    """Beats whose instantaneous rate moves linearly in time between two values."""
    times = [first_s]
    while True:
        t = times[-1]
        bpm = bpm_start + (bpm_end - bpm_start) * min(t / duration_s, 1.0)
        nxt = t + 60.0 / bpm
        if nxt > duration_s - 0.05:
            break
        times.append(nxt)
    return np.asarray(times)


def ecg_waveform(beat_times: np.ndarray, fs: int, duration_s: float, amplitude: float = 1.0) -> np.ndarray:
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    x = np.zeros(n)
    rr = np.diff(beat_times, prepend=beat_times[0] - (beat_times[1] - beat_times[0] if len(beat_times) > 1 else 1.0))
    for tb, r in zip(beat_times, rr):
        stretch = np.sqrt(max(r, 0.25))
        lo, hi = np.searchsorted(t, [tb - 0.6, tb + 0.8])
        tt = t[lo:hi]
        for amp, off, width, scales in _WAVES:
            c = tb + (off * stretch if scales else off)
            w = width * stretch if scales else width
            x[lo:hi] += amplitude * amp * np.exp(-0.5 * ((tt - c) / w) ** 2)
    return x


def add_noise(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    power = np.mean(x**2)
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return x + rng.normal(0.0, sigma, size=x.shape)


def synthetic_ecg(
    fs: int = 300,
    duration_s: float = 60.0,
    bpm: float | tuple[float, float] = 60.0,
    snr_db: float | None = None,
    seed: int = 0,
    jitter: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(signal_mV, true_peak_indices)``.

    ``bpm`` may be a ``(start, end)`` pair for a linear rate sweep. ``jitter``
    adds a relative random perturbation to each RR interval.
    """
    rng = np.random.default_rng(seed)
    if isinstance(bpm, tuple):
        times = beat_times_sweep(bpm[0], bpm[1], duration_s)
    else:
        times = beat_times_constant(bpm, duration_s, first_s=rng.uniform(0.3, 60.0 / bpm))
    if jitter:
        rr = np.diff(times) * (1 + rng.uniform(-jitter, jitter, size=len(times) - 1))
        times = np.concatenate([[times[0]], times[0] + np.cumsum(rr)])
        times = times[times < duration_s - 0.05]
    x = ecg_waveform(times, fs, duration_s)
    if snr_db is not None:
        x = add_noise(x, snr_db, rng)
    return x, np.rint(times * fs).astype(int)


def synthetic_record(
    record_id: str,
    fs: int = 300,
    duration_s: float = 30.0,
    bpm: float = 70.0,
    leads: tuple[str, ...] = ("ECG",),
    seed: int = 0,
    snr_db: float = 20.0,
    comments: tuple[str, ...] = (),
    gain: float = 1000.0,
) -> SignalRecord:
    """A WFDB-ready record whose leads are scaled copies of one synthetic trace."""
    base, _ = synthetic_ecg(fs, duration_s, bpm, snr_db=snr_db, seed=seed)
    scales = np.linspace(1.0, 0.6, len(leads))
    samples = np.stack([s * base for s in scales])
    samples = np.rint(samples * gain) / gain
    header = RecordHeader(
        record_id=record_id,
        num_leads=len(leads),
        sampling_rate_hz=fs,
        num_samples=samples.shape[1],
        leads=tuple(LeadSpec(file_name=f"{record_id}.dat", gain=gain, description=name) for name in leads),
        comments=tuple(comments),
    )
    return SignalRecord(header, samples)


def burst_dataset(
    n_records: int = 32,
    length: int = 1800,
    fs: int = 300,
    burst_hz: float = 25.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two-class toy set: class 1 carries a 25 Hz burst on top of noise.

    Returns ``X`` of shape ``(n, 1, length)`` and one-hot ``Y`` ``(n, 2)``.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length) / fs
    X = rng.normal(0.0, 1.0, size=(n_records, 1, length))
    labels = np.arange(n_records) % 2
    rng.shuffle(labels)
    for i in np.flatnonzero(labels):
        centre = rng.uniform(0.25, 0.75) * t[-1]
        envelope = np.exp(-0.5 * ((t - centre) / 0.4) ** 2)
        X[i, 0] += 2.0 * envelope * np.sin(2 * np.pi * burst_hz * t + rng.uniform(0, 2 * np.pi))
    Y = np.eye(2)[labels]
    return X, Y
