import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgbench.dsp import (
    Signal,
    bandpass_filter,
    bandpass_taps,
    first_difference,
    fix_length,
    num_taps,
    prepare_model_input,
    resample_linear,
    standardize,
)
from ecgbench.errors import BandError, DataError, LengthError

finite = st.floats(-1e3, 1e3, allow_nan=False)


def tone_amplitude(freq, fs=300, seconds=20):
    t = np.arange(fs * seconds) / fs
    y = bandpass_filter(Signal(np.sin(2 * np.pi * freq * t), fs)).samples
    core = y[fs * 5: fs * 15]  # away from the zero-extended edges
    spectrum = np.abs(np.fft.rfft(core)) * 2 / len(core)
    return spectrum[int(round(freq * len(core) / fs))]


def test_passband_and_stopband():
    assert abs(20 * np.log10(tone_amplitude(10.0))) <= 1.0
    assert tone_amplitude(0.5) <= 0.1
    assert tone_amplitude(1.5) <= 0.1  # low_hz / 2
    assert tone_amplitude(90.0) <= 0.1  # 2 * high_hz


def test_passband_ripple_across_band():
    fs = 300
    h = bandpass_taps(fs)
    freqs = np.linspace(6.0, 40.0, 60)
    response = np.abs([np.sum(h * np.exp(-2j * np.pi * f / fs * np.arange(len(h)))) for f in freqs])
    assert np.all(np.abs(20 * np.log10(response)) <= 1.0)


def test_taps_match_reference_design():
    signal = pytest.importorskip("scipy.signal")
    for fs in (300, 500, 257):
        h = bandpass_taps(fs)
        ref = signal.firwin(num_taps(fs), [3.0, 45.0], pass_zero=False, fs=fs)
        assert np.max(np.abs(h - ref)) < 1e-12


def test_filter_contract():
    assert num_taps(300) == 301
    z = bandpass_filter(Signal(np.zeros(500), 300))
    assert np.array_equal(z.samples, np.zeros(500))
    x = Signal(np.random.default_rng(0).normal(size=(2, 777)), 300)
    assert bandpass_filter(x).samples.shape == (2, 777)
    with pytest.raises(BandError):
        bandpass_filter(Signal(np.zeros(100), 80))
    with pytest.raises(BandError):
        bandpass_filter(Signal(np.zeros(100), 300), low_hz=50, high_hz=40)


def test_zero_phase():
    t = np.arange(3000) / 300
    x = np.sin(2 * np.pi * 10 * t)
    y = bandpass_filter(Signal(x, 300)).samples
    core = slice(600, 2400)
    lag = np.argmax(np.correlate(y[core], x[core], mode="full")) - (1800 - 1)
    assert lag == 0


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, 400, elements=finite),
    arrays(np.float64, 400, elements=finite),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
def test_filter_linearity(x, y, a, b):
    f = lambda v: bandpass_filter(Signal(v, 300)).samples
    lhs = f(a * x + b * y)
    rhs = a * f(x) + b * f(y)
    scale = 1 + np.max(np.abs(a * x)) + np.max(np.abs(b * y))
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale


def test_resample_examples():
    # same 1:2 ratio as a 2 Hz -> 4 Hz ramp, at rates the target floor allows
    x = Signal(np.array([0.0, 1.0, 2.0, 3.0]), 100)
    assert resample_linear(x, 200).samples.tolist() == [0, 0.5, 1, 1.5, 2, 2.5, 3, 3]
    s = Signal(np.random.default_rng(1).normal(size=300), 300)
    assert np.array_equal(resample_linear(s, 300).samples, s.samples)
    c = resample_linear(Signal(np.full(500, 2.5), 500), 300)
    assert len(c) == 300 and np.all(c.samples == 2.5)
    with pytest.raises(DataError):
        resample_linear(s, 10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 2000), st.sampled_from([257, 300, 360, 500, 1000]), st.sampled_from([100, 250, 300, 500]))
def test_resample_length_and_endpoints(n, src, dst):
    x = np.random.default_rng(n).normal(size=n)
    y = resample_linear(Signal(x, src), dst).samples
    assert len(y) == max(1, int(np.floor(n * dst / src + 0.5)))  # a signal never goes empty
    assert y[0] == x[0]
    assert np.min(y) >= np.min(x) and np.max(y) <= np.max(x)


def test_first_difference():
    assert first_difference(Signal(np.array([1.0, 3.0, 6.0]), 300)).samples.tolist() == [0, 2, 3]
    assert not first_difference(Signal(np.full(10, 4.0), 300)).samples.any()
    x = np.random.default_rng(2).normal(size=50)
    d = first_difference(Signal(np.cumsum(x), 300)).samples
    assert np.allclose(d[1:], x[1:], rtol=0, atol=1e-12)
    with pytest.raises(LengthError):
        first_difference(Signal(np.array([1.0]), 300))


def test_standardize_examples():
    z = standardize(Signal(np.array([2.0, 4.0, 6.0]), 300)).samples
    assert np.allclose(z, [-1.2247448713915890, 0.0, 1.2247448713915890], rtol=0, atol=1e-12)
    assert standardize(Signal(np.array([5.0, 5.0, 5.0]), 300)).samples.tolist() == [0, 0, 0]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 300), elements=finite))
def test_standardize_moments_and_idempotence(x):
    if np.ptp(x) == 0 or np.var(x) <= 1e-20:
        return
    z = standardize(Signal(x, 300)).samples
    assert abs(z.mean()) <= 1e-9
    assert abs(np.mean(z**2) - 1) <= 1e-9
    assert np.max(np.abs(standardize(Signal(z, 300)).samples - z)) <= 1e-9


def test_fix_length_examples():
    x = np.arange(18000.0)
    assert np.array_equal(fix_length(Signal(x, 300), 18000).samples, x)
    assert fix_length(Signal(np.array([1.0, 2, 3, 4]), 300), 8).samples.tolist() == [0, 0, 1, 2, 3, 4, 0, 0]
    assert fix_length(Signal(np.arange(10.0), 300), 4).samples.tolist() == [3, 4, 5, 6]
    assert fix_length(Signal(np.array([1.0, 2, 3]), 300), 6).samples.tolist() == [0, 1, 2, 3, 0, 0]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 400), elements=finite), st.integers(1, 400))
def test_fix_length_window_and_crop_energy(x, window):
    y = fix_length(Signal(x, 300), window).samples
    assert len(y) == window
    if len(x) >= window:
        start = (len(x) - window) // 2
        assert np.sum(y**2) == np.sum(x[start:start + window] ** 2)
    else:
        left = (window - len(x)) // 2
        assert np.array_equal(y[left:left + len(x)], x)
        assert not y[:left].any() and not y[left + len(x):].any()


def test_prepare_model_input_shape():
    x = Signal(np.random.default_rng(3).normal(size=(12, 5000)), 500)
    out = prepare_model_input(x, 300, 1800)
    assert out.shape == (12, 1800)
    assert np.all(np.isfinite(out))
