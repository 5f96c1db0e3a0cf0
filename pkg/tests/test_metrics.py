import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsdr.errors import InsufficientRepetitions, RankDeficient
from dsdr.metrics import MetricRecord, aggregate, mean_r_squared, r_squared, r_squared_columns, trace_correlation
from oracles import r_squared_grid, trace_corr_loop


def e(i, p=4):
    v = np.zeros(p)
    v[i] = 1.0
    return v[:, None]


def test_trace_correlation_examples():
    b = np.random.default_rng(0).standard_normal((5, 2))
    assert trace_correlation(b, b) == pytest.approx(1)
    assert trace_correlation(e(0), e(1)) == 0
    assert trace_correlation(e(0), (e(0) + e(1)) / np.sqrt(2)) == pytest.approx(0.5)
    with pytest.raises(RankDeficient):
        trace_correlation(e(0), np.zeros((4, 1)))
    with pytest.raises(RankDeficient):
        trace_correlation(np.hstack([e(0), e(0)]), e(0))


def test_trace_correlation_divisor_is_larger_rank():
    assert trace_correlation(e(0), np.hstack([e(0), e(1)])) == pytest.approx(0.5)


@given(st.integers(0, 100_000), st.integers(2, 9), st.integers(1, 3))
@settings(max_examples=50, deadline=None)
def test_trace_correlation_oracle_and_invariances(seed, p, k):
    k = min(k, p)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, k))
    b = rng.standard_normal((p, k))
    t = trace_correlation(a, b)
    assert abs(t - trace_corr_loop(a, b)) <= 1e-6
    assert abs(t - trace_correlation(b, a)) <= 1e-10
    m = rng.standard_normal((k, k)) + 3 * np.eye(k)
    assert abs(t - trace_correlation(a @ m, b)) <= 1e-10
    assert 0 <= t <= 1


def test_r_squared_examples():
    eye = np.eye(4)
    assert r_squared(e(0)[:, 0], e(0), eye) == pytest.approx(1)
    assert r_squared(e(1)[:, 0], e(0), eye) == 0
    assert r_squared((e(0) + e(1))[:, 0] / np.sqrt(2), e(0), eye) == pytest.approx(0.5)


@given(st.integers(0, 100_000), st.integers(2, 8), st.integers(1, 2))
@settings(max_examples=50, deadline=None)
def test_r_squared_matches_sphere_grid(seed, p, d):
    d = min(d, p)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p))
    sigma = a @ a.T + 0.5 * np.eye(p)
    b = rng.standard_normal((p, d))
    beta = rng.standard_normal(p)
    r = r_squared(beta, b, sigma)
    assert abs(r - r_squared_grid(beta, b, sigma)) <= 1e-6
    assert abs(r_squared(-3.7 * beta, b, sigma) - r) <= 1e-12


def test_r_squared_columns_and_mean():
    beta = np.hstack([e(0), e(1)])
    assert r_squared_columns(beta, e(0), np.eye(4)) == [1.0, 0.0]
    assert mean_r_squared(beta, e(0), np.eye(4)) == 0.5


def test_aggregate_examples():
    recs = [MetricRecord(0, 0.9, 0.9, 1.0, 10, 5), MetricRecord(1, 1.1, 1.0, 1.0, 10, 5)]
    out = aggregate(recs)
    assert out["mean"]["trace_correlation"] == pytest.approx(1.0)
    assert out["std"]["trace_correlation"] == pytest.approx(0.14142135623730953)
    assert out["std"]["bytes_up"] == 0
    with pytest.raises(InsufficientRepetitions):
        aggregate(recs[:1])


def test_aggregate_matches_batch_recomputation():
    rng = np.random.default_rng(1)
    vals = rng.uniform(0.9, 1.0, 200)
    recs = [MetricRecord(i, v, v**2, 0.1 * v, i, 2 * i) for i, v in enumerate(vals)]
    out = aggregate(recs)
    assert out["mean"]["trace_correlation"] == pytest.approx(vals.mean(), abs=1e-14)
    assert out["std"]["trace_correlation"] == pytest.approx(vals.std(ddof=1), abs=1e-14)
    assert out["mean"]["bytes_down"] == pytest.approx(199.0)
