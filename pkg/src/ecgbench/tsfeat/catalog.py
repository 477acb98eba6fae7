"""The 22 time-series feature groups and their parameter schemas.

Conventions: population variance everywhere; ``count_above``/``count_below``
use weak inequalities; a feature that is undefined for the input (constant
series, out-of-range coefficient) is reported as missing (``None``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable

import numpy as np

from ..errors import DataError, SpecError

_INT, _FLOAT, _BOOL, _STR = "int", "float", "bool", "str"

# group -> ordered (param, kind, allowed-values-or-None)
SCHEMAS: dict[str, tuple[tuple[str, str, tuple | None], ...]] = {
    "fft_coefficient": (("k", _INT, None), ("attr", _STR, ("real", "imag", "abs", "angle"))),
    "ratio_beyond_r_sigma": (("r", _FLOAT, None),),
    "autocorrelation": (("lag", _INT, None),),
    "energy_ratio_by_chunks": (("num_segments", _INT, None), ("segment_focus", _INT, None)),
    "index_mass_quantile": (("q", _FLOAT, None),),
    "lempel_ziv_complexity": (("bins", _INT, None),),
    "agg_autocorrelation": (("f_agg", _STR, ("mean", "median", "var")), ("maxlag", _INT, None)),
    "range_count": (("min", _FLOAT, None), ("max", _FLOAT, None)),
    "spkt_welch_density": (("k", _INT, None),),
    "change_quantiles": (
        ("ql", _FLOAT, None),
        ("qh", _FLOAT, None),
        ("isabs", _BOOL, None),
        ("f_agg", _STR, ("mean", "var")),
    ),
    "quantile": (("q", _FLOAT, None),),
    "number_peaks": (("n", _INT, None),),
    "count_below": (("t", _FLOAT, None),),
    "cwt_coefficients": (("k", _INT, None), ("w", _INT, None)),
    "number_crossing_m": (("m", _FLOAT, None),),
    "maximum": (),
    "kurtosis": (),
    "skewness": (),
    "fft_aggregated": (("aggtype", _STR, ("centroid", "variance", "skew", "kurtosis")),),
    "benford_correlation": (),
    "binned_entropy": (("max_bins", _INT, None),),
    "count_above": (("t", _FLOAT, None),),
}
GROUPS = tuple(SCHEMAS)


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(group: str, name: str, kind: str, allowed, value):
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise SpecError(f"{group}.{name} must be a bool, got {value!r}")
        return value
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise SpecError(f"{group}.{name} must be an integer, got {value!r}")
        return int(value)
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise SpecError(f"{group}.{name} must be a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value) and group != "range_count":
            raise SpecError(f"{group}.{name} must be finite")
        return value
    if not isinstance(value, str) or (allowed and value not in allowed):
        raise SpecError(f"{group}.{name} must be one of {allowed}, got {value!r}")
    return value


@dataclass(frozen=True)
class FeatureSpec:
    group: str
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.group not in SCHEMAS:
            raise SpecError(f"unknown feature group {self.group!r}")
        given = dict(self.params)
        schema = SCHEMAS[self.group]
        names = [p[0] for p in schema]
        if set(given) != set(names) or len(given) != len(self.params):
            raise SpecError(f"{self.group} expects params {names}, got {sorted(given)}")
        ordered = tuple(
            (name, _coerce(self.group, name, kind, allowed, given[name]))
            for name, kind, allowed in schema
        )
        object.__setattr__(self, "params", ordered)
        _check_ranges(self.group, dict(ordered))

    @classmethod
    def make(cls, group: str, **params) -> "FeatureSpec":
        return cls(group, tuple(params.items()))

    def __getitem__(self, name):
        return dict(self.params)[name]

    @property
    def name(self) -> str:
        parts = [self.group] + [f"{k}_{_format_value(v)}" for k, v in self.params]
        return "__".join(parts)


def _check_ranges(group: str, p: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise SpecError(f"{group}: {msg}")

    if group in ("fft_coefficient", "spkt_welch_density", "cwt_coefficients"):
        need(p["k"] >= 0, "k must be >= 0")
    if group == "cwt_coefficients":
        need(p["w"] >= 1, "w must be >= 1")
    if group == "autocorrelation":
        need(p["lag"] >= 0, "lag must be >= 0")
    if group == "energy_ratio_by_chunks":
        need(p["num_segments"] >= 1, "num_segments must be >= 1")
        need(0 <= p["segment_focus"] < p["num_segments"], "segment_focus out of range")
    if group == "index_mass_quantile":
        need(0 < p["q"] <= 1, "q must be in (0, 1]")
    if group == "quantile":
        need(0 <= p["q"] <= 1, "q must be in [0, 1]")
    if group == "lempel_ziv_complexity":
        need(1 <= p["bins"] <= 255, "bins must be in [1, 255]")
    if group == "agg_autocorrelation":
        need(p["maxlag"] >= 1, "maxlag must be >= 1")
    if group == "range_count":
        need(p["min"] < p["max"], "min must be < max")
    if group == "change_quantiles":
        need(0 <= p["ql"] < p["qh"] <= 1, "need 0 <= ql < qh <= 1")
    if group == "number_peaks":
        need(p["n"] >= 1, "n must be >= 1")
    if group == "ratio_beyond_r_sigma":
        need(p["r"] >= 0, "r must be >= 0")
    if group == "binned_entropy":
        need(p["max_bins"] >= 1, "max_bins must be >= 1")


class SeriesContext:
    """Per-series cache of quantities shared between feature groups."""

    def __init__(self, series):
        x = np.asarray(series, dtype=np.float64).reshape(-1)
        if len(x) < 2:
            raise DataError("feature extraction needs a series of length >= 2")
        if not np.all(np.isfinite(x)):
            raise DataError("feature extraction needs a finite series")
        self.x = x
        self.n = len(x)

    @cached_property
    def mean(self) -> float:
        return float(np.mean(self.x))

    @cached_property
    def centred(self) -> np.ndarray:
        return self.x - self.mean

    @cached_property
    def var(self) -> float:
        return float(np.mean(self.centred**2))

    @cached_property
    def flat(self) -> bool:
        # constant, or a variance so small that its square underflows
        return bool(np.ptp(self.x) == 0 or not self.var**2 > 0)

    @cached_property
    def rfft(self) -> np.ndarray:
        return np.fft.rfft(self.x)

    @cached_property
    def sorted(self) -> np.ndarray:
        return np.sort(self.x)

    @cached_property
    def autocov(self) -> np.ndarray:
        """Lagged sums of centred products, lag 0..n-1."""
        c = self.centred
        return np.correlate(c, c, mode="full")[self.n - 1:]

    def autocorr(self, lag: int) -> float:
        return float(self.autocov[lag] / ((self.n - lag) * self.var))


# ----------------------------------------------------------------- groups


def _fft_coefficient(ctx, k, attr):
    if k >= len(ctx.rfft):
        return None
    z = ctx.rfft[k]
    if attr == "real":
        return float(z.real)
    if attr == "imag":
        return float(z.imag)
    if attr == "abs":
        return float(abs(z))
    return float(np.degrees(np.arctan2(z.imag, z.real)))


def _ratio_beyond_r_sigma(ctx, r):
    std = math.sqrt(ctx.var)
    return float(np.count_nonzero(np.abs(ctx.centred) > r * std) / ctx.n)


def _autocorrelation(ctx, lag):
    if lag >= ctx.n or ctx.flat:
        return None
    return ctx.autocorr(lag)


def _energy_ratio_by_chunks(ctx, num_segments, segment_focus):
    sq = ctx.x**2
    total = float(np.sum(sq))
    if total == 0:
        return None
    chunk = np.array_split(sq, num_segments)[segment_focus]
    return float(np.sum(chunk) / total)


def _index_mass_quantile(ctx, q):
    cum = np.cumsum(np.abs(ctx.x))
    if cum[-1] == 0:
        return None
    mass = cum / cum[-1]  # last entry is exactly 1
    return float((np.argmax(mass >= q) + 1) / ctx.n)


def discretize(x: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width bin index in ``[0, bins)`` over ``[min, max]``."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros(len(x), dtype=np.int64)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def lz_phrase_count(symbols) -> int:
    seq = bytes(int(s) for s in symbols)
    phrases = set()
    ind, inc = 0, 1
    while ind + inc <= len(seq):
        sub = seq[ind:ind + inc]
        if sub in phrases:
            inc += 1
        else:
            phrases.add(sub)
            ind += inc
            inc = 1
    return len(phrases)


def _lempel_ziv_complexity(ctx, bins):
    return lz_phrase_count(discretize(ctx.x, bins)) / ctx.n


def _agg_autocorrelation(ctx, f_agg, maxlag):
    if ctx.flat:
        return None
    top = min(maxlag, ctx.n - 1)
    lags = np.arange(1, top + 1)
    values = ctx.autocov[1:top + 1] / ((ctx.n - lags) * ctx.var)
    return float({"mean": np.mean, "median": np.median, "var": np.var}[f_agg](values))


def _range_count(ctx, min, max):  # noqa: A002 - parameter names follow the catalog
    return float(np.count_nonzero((ctx.x >= min) & (ctx.x < max)))


def welch_density(x: np.ndarray) -> np.ndarray:
    """One-segment Welch estimate: periodic Hann window, mean removed, fs=1, one-sided."""
    n = len(x)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    spec = np.abs(np.fft.rfft((x - np.mean(x)) * w)) ** 2 / np.sum(w**2)
    if n % 2 == 0:
        spec[1:-1] *= 2
    else:
        spec[1:] *= 2
    return spec


def _spkt_welch_density(ctx, k):
    if k >= ctx.n // 2 + 1:
        return None
    return float(welch_density(ctx.x)[k])


def _change_quantiles(ctx, ql, qh, isabs, f_agg):
    lo, hi = np.quantile(ctx.x, [ql, qh])
    inside = (ctx.x >= lo) & (ctx.x <= hi)
    both = inside[:-1] & inside[1:]
    changes = np.diff(ctx.x)
    if isabs:
        changes = np.abs(changes)
    sel = changes[both]
    if sel.size == 0:
        return 0.0
    return float(np.mean(sel) if f_agg == "mean" else np.var(sel))


def _quantile(ctx, q):
    return float(np.quantile(ctx.x, q))


def _number_peaks(ctx, n):
    x = ctx.x
    if len(x) < 2 * n + 1:
        return 0.0
    core = x[n:len(x) - n]
    ok = np.ones(len(core), dtype=bool)
    for k in range(1, n + 1):
        ok &= core > x[n - k:len(x) - n - k]
        ok &= core > x[n + k:len(x) - n + k]
    return float(np.count_nonzero(ok))


def _count_below(ctx, t):
    return float(np.count_nonzero(ctx.x <= t) / ctx.n)


def _count_above(ctx, t):
    return float(np.count_nonzero(ctx.x >= t) / ctx.n)


def ricker(points: int, a: float) -> np.ndarray:
    amp = 2 / (math.sqrt(3 * a) * math.pi**0.25)
    t = np.arange(points) - (points - 1) / 2
    return amp * (1 - (t / a) ** 2) * np.exp(-(t**2) / (2 * a**2))


def _cwt_coefficients(ctx, k, w):
    if k >= ctx.n:
        return None
    points = min(10 * w, ctx.n)
    kernel = ricker(points, w)[::-1]
    return float(np.convolve(ctx.x, kernel, mode="same")[k])


def _number_crossing_m(ctx, m):
    above = ctx.x > m
    return float(np.count_nonzero(above[1:] != above[:-1]))


def _maximum(ctx):
    return float(np.max(ctx.x))


def _kurtosis(ctx):
    if ctx.flat:
        return None
    m4 = float(np.mean(ctx.centred**4))
    return m4 / ctx.var**2 - 3.0


def _skewness(ctx):
    if ctx.flat:
        return None
    m3 = float(np.mean(ctx.centred**3))
    return m3 / ctx.var**1.5


def _fft_aggregated(ctx, aggtype):
    a = np.abs(ctx.rfft)
    if np.ptp(ctx.x) == 0:
        a = np.zeros_like(a)  # exact spectrum of a constant: DC only
        a[0] = abs(ctx.x[0]) * ctx.n
    total = float(np.sum(a))
    if total == 0:
        return None
    p = a / total
    k = np.arange(len(a))
    centroid = float(np.sum(k * p))
    if aggtype == "centroid":
        return centroid
    d = k - centroid
    variance = float(np.sum(d**2 * p))
    if aggtype == "variance":
        return variance
    if variance <= 0:
        return None
    if aggtype == "skew":
        return float(np.sum(d**3 * p)) / variance**1.5
    return float(np.sum(d**4 * p)) / variance**2


BENFORD = np.log10(1 + 1 / np.arange(1, 10))


def first_digits(x: np.ndarray) -> np.ndarray:
    a = np.abs(x[x != 0])
    return np.floor(a / 10.0 ** np.floor(np.log10(a))).astype(np.int64)


def _benford_correlation(ctx):
    digits = first_digits(ctx.x)
    digits = np.clip(digits, 1, 9)  # guards log10 rounding at exact powers of ten
    if len(np.unique(digits)) < 2:
        return None
    freq = np.bincount(digits, minlength=10)[1:] / len(digits)
    if np.ptp(freq) == 0:
        return None
    return float(np.corrcoef(freq, BENFORD)[0, 1])


def _binned_entropy(ctx, max_bins):
    hist = np.bincount(discretize(ctx.x, max_bins), minlength=max_bins)
    p = hist[hist > 0] / ctx.n
    return float(-np.sum(p * np.log(p)))


_FUNCS: dict[str, Callable] = {
    "fft_coefficient": _fft_coefficient,
    "ratio_beyond_r_sigma": _ratio_beyond_r_sigma,
    "autocorrelation": _autocorrelation,
    "energy_ratio_by_chunks": _energy_ratio_by_chunks,
    "index_mass_quantile": _index_mass_quantile,
    "lempel_ziv_complexity": _lempel_ziv_complexity,
    "agg_autocorrelation": _agg_autocorrelation,
    "range_count": _range_count,
    "spkt_welch_density": _spkt_welch_density,
    "change_quantiles": _change_quantiles,
    "quantile": _quantile,
    "number_peaks": _number_peaks,
    "count_below": _count_below,
    "cwt_coefficients": _cwt_coefficients,
    "number_crossing_m": _number_crossing_m,
    "maximum": _maximum,
    "kurtosis": _kurtosis,
    "skewness": _skewness,
    "fft_aggregated": _fft_aggregated,
    "benford_correlation": _benford_correlation,
    "binned_entropy": _binned_entropy,
    "count_above": _count_above,
}
assert set(_FUNCS) == set(SCHEMAS)


def compute_feature(spec: FeatureSpec, series, context: SeriesContext | None = None) -> float | None:
    """Value of one feature, or ``None`` where it is undefined for ``series``."""
    if not isinstance(spec, FeatureSpec):
        raise SpecError(f"expected a FeatureSpec, got {type(spec).__name__}")
    ctx = context if context is not None else SeriesContext(series)
    with np.errstate(all="ignore"):
        value = _FUNCS[spec.group](ctx, **dict(spec.params))
    if value is not None and not math.isfinite(value):
        return None
    return value
