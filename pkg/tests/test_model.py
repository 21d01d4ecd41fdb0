import math
import re
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from subdetect.errors import ParameterError, QuantizationOverflow
from subdetect.model import (
    MAX_SCALE,
    DyadicReal,
    make_mean_matrix,
    quantize,
    quantize_matrix,
    sample_discretized,
    sample_gaussian,
    standard_normal_matrix,
    theorem1_bound,
    theorem1_min_t,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
scales = st.integers(min_value=0, max_value=30)


@pytest.mark.parametrize("x, t, expected", [(0.3, 2, 0.25), (-0.3, 2, -0.5), (1.0, 8, 1.0)])
def test_quantize_examples(x, t, expected):
    assert float(quantize(x, t)) == expected


def test_quantize_rejects_large_scale():
    with pytest.raises(QuantizationOverflow):
        quantize(0.5, MAX_SCALE + 1)


def test_quantize_rejects_mantissa_overflow():
    with pytest.raises(QuantizationOverflow):
        quantize(1e300, MAX_SCALE)
    with pytest.raises(QuantizationOverflow):
        quantize(float("nan"), 4)


@pytest.mark.parametrize("x", [1e300, -1e300, 1.7e308])
def test_huge_values_overflow_with_their_value(x):
    with pytest.raises(QuantizationOverflow, match=re.escape(f"of {x} at t")):
        quantize(x, MAX_SCALE)
    with pytest.raises(QuantizationOverflow, match="overflows"):
        quantize_matrix(np.full((2, 2), x), MAX_SCALE)


@given(finite, scales)
def test_quantize_floors_within_one_cell(x, t):
    q = quantize(x, t)
    gap = Fraction(x) - q.value
    assert 0 <= gap < Fraction(1, 2**t)


@given(finite, scales)
def test_quantize_is_idempotent(x, t):
    q = quantize(x, t)
    assert quantize(float(q), t) == q


@given(finite, finite, scales)
def test_quantize_is_monotone(x, y, t):
    lo, hi = sorted((x, y))
    assert quantize(lo, t) <= quantize(hi, t)


def test_dyadic_rescale_floors():
    assert DyadicReal(7, 3).rescale(1) == DyadicReal(1, 1)
    assert float(DyadicReal(-7, 3).rescale(1)) == -1.0
    assert DyadicReal(3, 1).rescale(4).mantissa == 24


def test_dyadic_equality_is_by_value():
    assert DyadicReal(2, 1) == DyadicReal(1, 0)
    assert hash(DyadicReal(2, 1)) == hash(DyadicReal(1, 0))
    assert DyadicReal(1, 2) < DyadicReal(1, 1)


def test_quantize_matrix_matches_scalar_quantize(rng):
    x = rng.standard_normal((5, 5))
    Q = quantize_matrix(x, 12)
    for i in range(5):
        for j in range(5):
            assert Q.entry(i, j) == quantize(float(x[i, j]), 12)


def test_mean_matrix_example():
    theta = make_mean_matrix(4, {1, 2}, {3, 4}, 1.0)
    dense = theta.dense()
    assert dense.sum() == 4.0
    assert np.all(dense[:2, 2:] == 1.0)
    assert theta.in_M(2)
    assert not theta.in_M(3)
    assert theta.in_F(2)
    assert theta.in_M_tilde(2)


def test_null_mean_matrix_is_zero():
    theta = make_mean_matrix(6, [], [], 0.5)
    assert not theta.dense().any()


def test_mean_matrix_rejects_bad_input():
    with pytest.raises(ParameterError):
        make_mean_matrix(4, {0, 1}, {1}, 1.0)
    with pytest.raises(ParameterError):
        make_mean_matrix(4, {1}, {1}, -1.0)
    with pytest.raises(ParameterError):
        make_mean_matrix(4, {1, 2}, {1}, 1.0, values=[[1.0], [0.5]])


def test_mean_matrix_membership_with_values():
    theta = make_mean_matrix(5, {1, 2}, {1, 2}, 1.0, values=[[1.0, 2.0], [3.0, 1.5]])
    assert theta.in_M(2, lam=1.0)
    assert not theta.in_M(2, lam=1.6)


def test_standard_normal_matrix_is_keyed():
    a = standard_normal_matrix(8, 3, 0)
    assert np.array_equal(a, standard_normal_matrix(8, 3, 0))
    assert not np.array_equal(a, standard_normal_matrix(8, 3, 1))


def test_gaussian_moments():
    theta = make_mean_matrix(200, range(1, 21), range(1, 21), 2.0)
    X = sample_gaussian(theta, seed=5)
    noise = X - theta.dense()
    n = noise.size
    assert abs(noise.mean()) < 4 / math.sqrt(n)
    assert abs(noise.var() - 1.0) < 4 * math.sqrt(2 / n)
    assert abs(X[:20, :20].mean() - 2.0) < 4 / 20


def test_discretized_is_quantized_gaussian():
    theta = make_mean_matrix(10, {1}, {2}, 1.0)
    assert sample_discretized(theta, 6, seed=9) == quantize_matrix(sample_gaussian(theta, seed=9), 6)


def test_t0_zero_frequency():
    theta = make_mean_matrix(300, [], [], 0.0)
    Q = sample_discretized(theta, 0, seed=2)
    freq = float((Q.mantissas == 0).mean())
    expected = stats.norm.cdf(1) - stats.norm.cdf(0)
    assert abs(freq - expected) < 4 * math.sqrt(expected * (1 - expected) / Q.mantissas.size)


def test_fine_quantization_is_close_to_normal():
    theta = make_mean_matrix(100, [], [], 0.0)
    values = sample_discretized(theta, 30, seed=4).values().ravel()
    assert stats.kstest(values, "norm").pvalue > 0.001


@pytest.mark.parametrize("p, eps, t", [(16, 1, 16), (1, 0.5, 0), (64, 1, 24)])
def test_theorem1_min_t(p, eps, t):
    assert theorem1_min_t(p, eps) == t


def test_theorem1_bound():
    assert theorem1_bound(1, 0) == 2.0
    assert theorem1_bound(64, 24) == pytest.approx(0.125)


def test_theorem1_min_t_rejects_bad_eps():
    with pytest.raises(ParameterError):
        theorem1_min_t(16, 0)
