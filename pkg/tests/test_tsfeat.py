import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgbench.errors import DataError, EmptyMatrixError, GroupingError, SpecError
from ecgbench.tsfeat import (
    GROUPS,
    FeatureMatrix,
    FeatureSpec,
    aggregate_importance,
    build_feature_matrix,
    compute_feature,
    dump_config,
    extract_all,
    impute_and_prune,
    load_config,
    render_importance_table,
    specs_from_mapping,
)
from feature_oracles import ORACLES, agree, random_params, random_series


def f(group, x, **params):
    return compute_feature(FeatureSpec.make(group, **params), np.asarray(x, dtype=float))


@pytest.mark.parametrize("group", GROUPS)
def test_group_matches_oracle(group):
    rng = np.random.default_rng(sum(map(ord, group)))
    for i in range(100):
        n = int(rng.integers(16, 513))
        x = np.full(n, 1.5) if i % 25 == 0 else random_series(rng, n)
        params = random_params(group, rng, n)
        got = f(group, x, **params)
        want = ORACLES[group]([float(v) for v in x], **params)
        assert agree(group, params, got, want, x), (params, n, got, want)


def test_worked_examples():
    assert f("autocorrelation", [1, 2, 3, 4, 5], lag=1) == pytest.approx(0.5, abs=1e-12)
    assert f("ratio_beyond_r_sigma", [0, 0, 0, 0, 10], r=1) == pytest.approx(0.2)
    assert f("count_above", [0, 1, 2, 3], t=2) == 0.5
    assert f("fft_coefficient", [1, 2, 3, 4], k=1, attr="abs") == pytest.approx(2.8284271247, abs=1e-9)
    assert f("maximum", [5, 5, 5]) == 5
    assert f("kurtosis", [3, 3, 3, 3]) is None
    assert f("autocorrelation", [2, 2, 2], lag=1) is None


def test_unknown_group_and_bad_params():
    with pytest.raises(SpecError):
        FeatureSpec.make("approximate_entropy", m=2)
    with pytest.raises(SpecError):
        FeatureSpec.make("autocorrelation")
    with pytest.raises(SpecError):
        FeatureSpec.make("autocorrelation", lag=1, extra=2)
    with pytest.raises(SpecError):
        FeatureSpec.make("fft_coefficient", k=1, attr="phase")
    with pytest.raises(SpecError):
        FeatureSpec.make("change_quantiles", ql=0.8, qh=0.2, isabs=True, f_agg="mean")
    with pytest.raises(SpecError):
        FeatureSpec.make("number_peaks", n=1.5)


def test_series_preconditions():
    with pytest.raises(DataError):
        f("maximum", [1.0])
    with pytest.raises(DataError):
        f("maximum", [1.0, math.nan])


def test_feature_names_are_stable():
    assert FeatureSpec.make("fft_coefficient", attr="abs", k=3).name == "fft_coefficient__k_3__attr_abs"
    assert FeatureSpec.make("quantile", q=0.5).name == "quantile__q_0.5"
    assert FeatureSpec.make("maximum").name == "maximum"


def test_default_config_size_and_roundtrip():
    specs = load_config()
    assert len(specs) == 599
    assert {s.group for s in specs} == set(GROUPS)
    import tomli

    assert specs_from_mapping(tomli.loads(dump_config(specs))) == specs


def test_config_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('version = 1\n[[feature]]\ngroup = "nope"\n')
    with pytest.raises(SpecError):
        load_config(p)
    p.write_text('version = 2\n[[feature]]\ngroup = "maximum"\n')
    with pytest.raises(SpecError):
        load_config(p)
    p.write_text("version = [\n")
    with pytest.raises(SpecError):
        load_config(p)


def test_extract_all_default_grid_is_finite_or_flagged():
    x = np.random.default_rng(3).normal(size=100)
    v = extract_all(x, load_config())
    assert len(v.names) == 599
    assert not np.any(np.isinf(v.values))
    flagged = v.missing
    # only coefficients past the Nyquist index are undefined here
    assert all(n.split("__")[1] == "fft_coefficient" for n in np.array(v.names)[flagged])


def test_extract_all_cardinality_and_determinism():
    specs = [FeatureSpec.make("maximum"), FeatureSpec.make("quantile", q=0.5)]
    x = np.random.default_rng(0).normal(size=64)
    v1, v2 = extract_all(x, specs), extract_all(x, specs)
    assert v1.names == ("lead0__maximum", "lead0__quantile__q_0.5")
    assert np.array_equal(v1.values, v2.values)
    two = extract_all(np.stack([x, -x]), specs, ["I", "II"])
    assert two.names[2] == "II__maximum"
    with pytest.raises(SpecError):
        extract_all(x, [])


def test_matrix_permutation_equivariant_and_jobs_independent():
    rng = np.random.default_rng(1)
    recs = [(f"r{i}", rng.normal(size=80)) for i in range(6)]
    specs = load_config()[:40] + [FeatureSpec.make("kurtosis")]
    m = build_feature_matrix(recs, specs)
    order = [3, 0, 5, 1, 4, 2]
    shuffled = build_feature_matrix([recs[i] for i in order], specs)
    assert np.array_equal(shuffled.values, m.values[order], equal_nan=True)
    parallel = build_feature_matrix(recs, specs, jobs=2)
    assert np.array_equal(parallel.values, m.values, equal_nan=True)


def test_impute_and_prune_examples():
    m = FeatureMatrix(
        ("a", "b", "c"),
        ("allmissing", "partial", "const"),
        np.array([[np.nan, 1, 7], [np.nan, 2, 7], [np.nan, np.nan, 7]], dtype=float),
    )
    out = impute_and_prune(m)
    assert out.columns == ("partial",)
    assert out.column("partial").tolist() == [1, 2, -999]
    assert out.fill_value == -999
    with pytest.raises(EmptyMatrixError):
        impute_and_prune(FeatureMatrix(("a", "b"), ("c",), np.array([[1.0], [1.0]])))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 4), elements=st.one_of(st.just(math.nan), st.floats(-1e3, 1e3))))
def test_impute_and_prune_idempotent(values):
    m = FeatureMatrix(tuple("abcde"), ("w", "x", "y", "z"), values)
    try:
        once = impute_and_prune(m)
    except EmptyMatrixError:
        return
    twice = impute_and_prune(once)
    assert twice.columns == once.columns
    assert np.array_equal(twice.values, once.values)
    assert not np.any(np.isnan(once.values))


def test_csv_roundtrip(tmp_path):
    m = FeatureMatrix(("r1", "r2"), ("x__maximum", "x__kurtosis"), np.array([[0.1, np.nan], [1e-300, -2.5]]))
    m.save(tmp_path / "m.csv")
    back = FeatureMatrix.load(tmp_path / "m.csv")
    assert back.record_ids == m.record_ids and back.columns == m.columns
    assert np.array_equal(back.values, m.values, equal_nan=True)
    with pytest.raises(DataError):
        FeatureMatrix.from_csv("record_id,a\nr1,1,2\n")


_REVERSIBLE = [
    ("maximum", {}),
    ("quantile", {"q": 0.3}),
    ("range_count", {"min": -0.5, "max": 0.5}),
    ("count_above", {"t": 0.1}),
    ("count_below", {"t": 0.1}),
    ("binned_entropy", {"max_bins": 10}),
    ("kurtosis", {}),
    ("skewness", {}),
]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e3, 1e3)))
def test_time_reversal_symmetry(x):
    for group, params in _REVERSIBLE:
        a, b = f(group, x, **params), f(group, x[::-1], **params)
        if a is None or b is None:
            assert a is b
        else:
            assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9), group


def test_aggregate_importance():
    out = aggregate_importance({"fft_coefficient__k_1": 0.1, "fft_coefficient__k_2": 0.11, "quantile__q_0.5": 0.03})
    assert [(g.group, g.count) for g in out] == [("fft_coefficient", 2), ("quantile", 1)]
    assert out[0].score == pytest.approx(0.21) and out[1].score == pytest.approx(0.03)
    assert aggregate_importance({}) == []
    lead_named = aggregate_importance({"II__maximum": 1.0, "I__maximum": 2.0})
    assert lead_named[0].count == 2 and lead_named[0].score == 3.0
    with pytest.raises(GroupingError):
        aggregate_importance({"mystery__x": 1.0})


def test_importance_table_format():
    out = aggregate_importance({"fft_coefficient__k_1": 0.2138, "ratio_beyond_r_sigma__r_1": 0.1989})
    text = render_importance_table(out)
    lines = text.splitlines()
    assert lines[1].split() == ["fft_coefficient", "1", "0.2138"]
    assert lines[2].split() == ["ratio_beyond_r_sigma", "1", "0.1989"]


def test_binned_entropy_on_subnormal_range():
    assert f("binned_entropy", [5e-324, 0.0], max_bins=10) == pytest.approx(math.log(2))
    tight = [1.0, 1.0 + 2e-16, 1.0]
    assert f("binned_entropy", tight, max_bins=10) == pytest.approx(ORACLES["binned_entropy"](tight, 10))
