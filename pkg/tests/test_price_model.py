import math
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from evabid.price_model import (
    SIGMA_FLOOR, DeviationModel, DiscretePriceLaw, EstimationError, PriceModel, PriceSeries, anchored,
    by_day, cdf, discrete_lower_cvar, fit, fit_deviation, load_model, lower_cvar, pdf, read_prices,
    save_model, truncated_mean, write_prices,
)


def one(mu, sigma):
    return PriceModel([mu], [sigma])


def test_fit_two_samples():
    m = fit([[20.0], [40.0]])
    g = m.stage(0)
    assert g.mu == pytest.approx(30.0)
    assert g.sigma == pytest.approx(10.0 * math.sqrt(2.0))


def test_fit_constant_samples_floor():
    m = fit(np.full((5, 3), 30.0))
    np.testing.assert_allclose(m.mu, 30.0)
    np.testing.assert_allclose(m.sigma, SIGMA_FLOOR)


def test_fit_single_sample_names_slot():
    hist = np.array([[1.0, 2.0, 3.0], [4.0, np.nan, 6.0]])
    with pytest.raises(EstimationError, match="slot 1"):
        fit(hist)


def test_fit_is_periodic():
    m = fit(np.arange(12.0).reshape(3, 4))
    assert m.stage(5) == m.stage(1)


def test_anchored_shift():
    dev = DeviationModel(np.array([2.0]), np.array([5.0]))
    g = anchored([40.0], dev).stage(0)
    assert (g.mu, g.sigma) == (42.0, 5.0)


def test_anchored_zero_deviation_floor():
    dev = DeviationModel(np.zeros(1), np.zeros(1))
    g = anchored([40.0, 50.0], dev).stage(1)
    assert g.mu == 50.0 and g.sigma == SIGMA_FLOOR


def test_deviation_from_equal_series():
    rt = np.tile(np.linspace(20, 40, 6), (4, 1))
    dev = fit_deviation(rt, rt)
    np.testing.assert_allclose(dev.mean, 0.0)
    np.testing.assert_allclose(dev.std, SIGMA_FLOOR)


def test_anchored_missing_day_ahead():
    dev = DeviationModel(np.zeros(2), np.ones(2))
    with pytest.raises(EstimationError, match="slot 11"):
        anchored([40.0, np.nan], dev, start=10)


def test_anchored_is_bounded():
    m = anchored([40.0, 41.0], DeviationModel(np.zeros(1), np.ones(1)), start=5)
    assert m.stage(6).mu == 41.0
    with pytest.raises(IndexError):
        m.stage(7)


def test_cdf_pdf_values():
    m = one(25.0, 10.0)
    assert cdf(m, 0, 25.0) == pytest.approx(0.5)
    assert cdf(m, 0, -np.inf) == 0.0
    assert cdf(m, 0, np.inf) == 1.0
    assert pdf(m, 0, 25.0) == pytest.approx(0.0398942, abs=1e-7)
    total, _ = integrate.quad(lambda x: float(pdf(m, 0, x)), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_pdf_is_cdf_derivative():
    m = one(31.0, 7.5)
    x = np.linspace(31.0 - 30.0, 31.0 + 30.0, 100)
    h = 1e-4
    num = (cdf(m, 0, x + h) - cdf(m, 0, x - h)) / (2 * h)
    np.testing.assert_allclose(num, pdf(m, 0, x), rtol=1e-6, atol=1e-14)


def test_truncated_mean_examples():
    std = one(0.0, 1.0)
    assert truncated_mean(std, 0, 3.0, 3.0) == 0.0
    assert truncated_mean(std, 0, 0.0, np.inf) == pytest.approx(0.3989423, abs=1e-7)
    assert truncated_mean(one(17.0, 4.0), 0, -np.inf, np.inf) == pytest.approx(17.0)
    with pytest.raises(ValueError):
        truncated_mean(std, 0, 1.0, 0.0)


def test_lower_cvar_examples():
    std = one(0.0, 1.0)
    assert lower_cvar(std, 0, 0.95) == pytest.approx(-2.0627, abs=1e-4)
    assert lower_cvar(one(12.0, 3.0), 0, 1e-9) == pytest.approx(12.0, abs=1e-6)
    assert lower_cvar(one(12.0, SIGMA_FLOOR), 0, 0.99) == pytest.approx(12.0, abs=1.5)
    for a in (0.0, 1.0):
        with pytest.raises(ValueError):
            lower_cvar(std, 0, a)


@settings(max_examples=80, deadline=None)
@given(st.floats(-50, 150), st.floats(0.5, 40), st.floats(-4, 4), st.floats(0, 6), st.floats(0.01, 0.99))
def test_closed_forms_match_quadrature(mu, sigma, za, w, alpha):
    m = one(mu, sigma)
    a = mu + za * sigma
    b = a + w * sigma
    f = lambda x: x * float(pdf(m, 0, x))
    ref, _ = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-12)
    assert truncated_mean(m, 0, a, b) == pytest.approx(ref, abs=1e-8)
    q = mu + sigma * float(norm.ppf(1 - alpha))
    tail, _ = integrate.quad(f, -np.inf, q, epsabs=1e-12, epsrel=1e-12)
    assert lower_cvar(m, 0, alpha) == pytest.approx(tail / (1 - alpha), abs=1e-8 * max(1.0, abs(mu)))
    assert lower_cvar(m, 0, alpha) < mu


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 150), st.floats(0.5, 40), st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
def test_truncated_mean_additive(mu, sigma, za, w1, w2):
    m = one(mu, sigma)
    a = mu + za * sigma
    b = a + w1 * sigma
    c = b + w2 * sigma
    whole = truncated_mean(m, 0, a, c)
    assert whole == pytest.approx(truncated_mean(m, 0, a, b) + truncated_mean(m, 0, b, c), abs=1e-10)


def test_discrete_cvar_splits_atom():
    assert discrete_lower_cvar([10.0, 30.0], [0.5, 0.5], 0.5) == pytest.approx(10.0)
    # tail 0.4 of {0: 0.25, 10: 0.75} -> (0.25*0 + 0.15*10) / 0.4
    assert discrete_lower_cvar([10.0, 0.0], [0.75, 0.25], 0.6) == pytest.approx(3.75)


def test_discrete_law_validation():
    with pytest.raises(ValueError):
        DiscretePriceLaw(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    assert DiscretePriceLaw(np.array([10.0, 20.0]), np.array([0.25, 0.75])).mean == 17.5


def test_model_roundtrip(tmp_path):
    m = PriceModel(np.linspace(10, 50, 288), np.linspace(1, 9, 288))
    save_model(tmp_path / "m.csv", m)
    back = load_model(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.mu, m.mu)
    np.testing.assert_array_equal(back.sigma, m.sigma)


def test_prices_roundtrip_and_grid_check(tmp_path):
    ps = PriceSeries(datetime(2018, 1, 1), 5, np.array([30.0, 31.5, -2.0]), np.array([29.0, np.nan, 1.0]))
    p = tmp_path / "p.csv"
    write_prices(p, ps)
    back = read_prices(p)
    np.testing.assert_array_equal(back.rt, ps.rt)
    assert np.isnan(back.da[1])
    lines = p.read_text().splitlines()
    lines[2] = lines[2].replace("00:05:00", "00:06:00")
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="slot grid"):
        read_prices(p)


def test_by_day_drops_tail():
    assert by_day(np.arange(10.0), 4).shape == (2, 4)
