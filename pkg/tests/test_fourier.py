import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from almost_mathieu.fourier import FourierSeries, fourier_fit, fourier_from_samples

coef_st = st.integers(0, 12).flatmap(
    lambda K: st.tuples(arrays(np.float64, 2 * K + 1, elements=st.floats(-1, 1)),
                        arrays(np.float64, 2 * K + 1, elements=st.floats(-1, 1))))


def _samples(f, K):
    N = 2 * K + 1
    return f(np.arange(N) / N)


def test_cosine_coefficients():
    s = fourier_from_samples(_samples(lambda w: np.cos(2 * np.pi * w), 4), 4)
    expect = np.zeros(9)
    expect[3] = expect[5] = 0.5
    assert np.allclose(s.coefficients, expect, atol=1e-15)
    assert s.kmin == -4


def test_constant():
    s = fourier_from_samples(np.full(7, 2.5), 3)
    assert s.coefficient(0) == pytest.approx(2.5)
    assert np.allclose(np.delete(s.coefficients, 3), 0, atol=1e-15)


@given(coef_st)
def test_round_trip(parts):
    re, im = parts
    c = re + 1j * im
    K = c.size // 2
    f = FourierSeries.centered(c)
    got = fourier_from_samples(_samples(f, K), K)
    assert np.allclose(got.coefficients, c, atol=1e-12)
    # evaluation reproduces the samples
    assert np.allclose(got(np.arange(2 * K + 1) / (2 * K + 1)), _samples(f, K), atol=1e-12)


def test_sample_count_checked():
    with pytest.raises(ValueError):
        fourier_from_samples(np.ones(6), 3)
    with pytest.raises(ValueError):
        FourierSeries.centered(np.ones(4))


@given(coef_st, st.floats(0, 1), st.floats(0, 1))
def test_shift_conj_real_imag(parts, a, w):
    re, im = parts
    f = FourierSeries.centered(re + 1j * im)
    assert f.shifted(a)(w) == pytest.approx(f(w + a), abs=1e-10)
    assert f.conj()(w) == pytest.approx(np.conj(f(w)), abs=1e-10)
    assert f.real_part()(w) == pytest.approx(f(w).real, abs=1e-10)
    assert f.imag_part()(w) == pytest.approx(f(w).imag, abs=1e-10)
    assert f.real_part().reality_defect() < 1e-12
    g = FourierSeries(np.array([1.0, 2.0]), 3)
    assert (f + g)(w) == pytest.approx(f(w) + g(w), abs=1e-10)
    assert (f - g)(w) == pytest.approx(f(w) - g(w), abs=1e-10)


def test_decay_rate_and_strip():
    k = np.arange(-30, 31)
    s = FourierSeries(np.exp(-0.7 * np.abs(k)), -30)
    assert s.decay_rate() == pytest.approx(0.7, rel=1e-9)
    assert s.strip_estimate() == pytest.approx(0.7 / (2 * np.pi), rel=1e-9)
    assert np.isnan(FourierSeries(np.array([1.0]), 0).decay_rate())


def test_fit_converges_on_analytic_and_caps_on_rough():
    s, ok = fourier_fit(lambda w: 1.0 / (1.3 - np.cos(2 * np.pi * w)))
    assert ok
    w = np.linspace(0, 1, 37)
    assert np.allclose(s(w).real, 1.0 / (1.3 - np.cos(2 * np.pi * w)), atol=1e-11)
    _, ok = fourier_fit(lambda w: np.abs(w - 0.5), cap=64)
    assert not ok
