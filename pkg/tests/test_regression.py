import math

import numpy as np
import pytest

from cdrkit.errors import ConfigError, DiagnosticError
from cdrkit.regression import (
    ZNE_FIT_KINDS,
    analytic_depolarizing_coefficients,
    fit_constant,
    fit_linear,
    predict,
    zne_extrapolate,
    zne_fit_suite,
)


def test_exact_line():
    fit = fit_linear([0.0, 1.0, 2.0], [-1.0, 2.0, 5.0])
    assert fit.a1 == pytest.approx(3.0, abs=1e-12)
    assert fit.a2 == pytest.approx(-1.0, abs=1e-12)
    assert fit.cost == pytest.approx(0.0, abs=1e-24)


def test_two_samples_interpolate():
    fit = fit_linear([0.1, 0.9], [0.3, 0.5])
    assert fit.cost == pytest.approx(0.0, abs=1e-25)
    value, bar = predict(fit, 0.1)
    assert value == pytest.approx(0.3)
    assert bar < 1e-12


def test_noiseless_training_gives_identity(rng):
    x = rng.uniform(-1, 1, 40)
    fit = fit_linear(x, x)
    assert fit.a1 == pytest.approx(1.0, abs=1e-12)
    assert fit.a2 == pytest.approx(0.0, abs=1e-12)


def test_degenerate_noisy_values():
    with pytest.raises(DiagnosticError, match="constant"):
        fit_linear([0.5, 0.5, 0.5], [0.1, 0.2, 0.3])


def test_cost_is_global_minimum(rng):
    x = rng.uniform(-1, 1, 30)
    y = 2.0 * x - 0.3 + rng.normal(0, 0.05, 30)
    fit = fit_linear(x, y)

    def cost(a1, a2):
        r = y - (a1 * x + a2)
        return float(r @ r)

    base = cost(fit.a1, fit.a2)
    assert base == pytest.approx(fit.cost)
    for da1 in (-1e-3, 0.0, 1e-3):
        for da2 in (-1e-3, 0.0, 1e-3):
            assert cost(fit.a1 + da1, fit.a2 + da2) >= base - 1e-15


def test_error_bar_formula(rng):
    x = rng.uniform(-1, 1, 25)
    y = 1.5 * x + rng.normal(0, 0.1, 25)
    fit = fit_linear(x, y)
    assert fit.error_bar == 3.0 * math.sqrt(fit.cost / (fit.sample_count - 1))
    cfit = fit_constant(y)
    assert cfit.error_bar == 3.0 * math.sqrt(cfit.cost / (cfit.sample_count - 1))


def test_constant_fit():
    fit = fit_constant([0.0, 2.0])
    assert fit.a1 == 1.0
    assert fit.a2 == 0.0
    assert fit.cost == pytest.approx(2.0)
    same = fit_constant([0.7, 0.7, 0.7])
    assert same.a1 == pytest.approx(0.7)
    assert same.cost == pytest.approx(0.0)
    value, _ = predict(fit, 123.0)  # ignores the noisy input
    assert value == 1.0


def test_predict_is_affine(rng):
    fit = fit_linear(rng.uniform(-1, 1, 10), rng.uniform(-1, 1, 10))
    v1, _ = predict(fit, 0.6)
    v0, _ = predict(fit, 0.0)
    assert v1 - v0 == pytest.approx(fit.a1 * 0.6)


def test_analytic_coefficients():
    assert analytic_depolarizing_coefficients(0.0, 5, 3.0, 8) == (1.0, 0.0)
    assert analytic_depolarizing_coefficients(0.3, 0, 3.0, 8) == (1.0, 0.0)
    a1, a2 = analytic_depolarizing_coefficients(0.1, 4, 0.0, 16)
    assert a2 == 0.0  # traceless observable
    assert a1 == pytest.approx((1 - 0.1) ** -4)
    with pytest.raises(ConfigError):
        analytic_depolarizing_coefficients(1.0, 1, 0.0, 2)


def test_depolarizing_fit_recovers_analytic(rng):
    for p, m in [(0.01, 1), (0.05, 5), (0.1, 20)]:
        x_exact = rng.uniform(-1, 1, 12)
        trace_x, dim = 1.4, 16
        survival = (1 - p) ** m
        x_noisy = survival * x_exact + (1 - survival) * trace_x / dim
        fit = fit_linear(x_noisy, x_exact)
        a1, a2 = analytic_depolarizing_coefficients(p, m, trace_x, dim)
        assert abs(fit.a1 - a1) <= 1e-9
        assert abs(fit.a2 - a2) <= 1e-9
        corrected, _ = predict(fit, x_noisy[0])
        assert corrected == pytest.approx(x_exact[0], abs=1e-9)


def test_cubic_zne_exact():
    coef = [0.7, -0.3, 0.12, -0.05]
    scales = np.array([1.0, 1.1, 1.25, 1.5])
    values = coef[0] + coef[1] * scales + coef[2] * scales**2 + coef[3] * scales**3
    fit = zne_extrapolate(list(zip(scales, values)), "cubic")
    assert abs(fit.zero_noise_value - coef[0]) <= 1e-9


def test_exponential_zne_depolarizing():
    p, m = 0.03, 8
    a, b = 0.2, 0.6
    scales = np.array([1.0, 1.1, 1.25, 1.5])
    values = a + b * (1 - p) ** (scales * m)
    fit = zne_extrapolate(list(zip(scales, values)), "exponential")
    assert fit.kind == "exponential"
    assert abs(fit.zero_noise_value - (a + b)) <= 1e-6


def test_linear_zne():
    fit = zne_extrapolate([(1.0, 0.5), (2.0, 0.3)], "linear")
    assert fit.zero_noise_value == pytest.approx(0.7)


def test_zne_validation():
    with pytest.raises(ConfigError, match="distinct"):
        zne_extrapolate([(1.0, 0.5), (1.0, 0.4)], "linear")
    with pytest.raises(ConfigError, match="points"):
        zne_extrapolate([(1.0, 0.5), (1.1, 0.4)], "cubic")
    with pytest.raises(ConfigError, match="unknown"):
        zne_extrapolate([(1.0, 0.5), (1.1, 0.4)], "richardson")


def test_zne_suite_all_kinds(rng):
    scales = np.array([1.0, 1.1, 1.25, 1.5])
    values = 0.4 + 0.3 * np.exp(-0.8 * scales) + rng.normal(0, 1e-4, 4)
    fits = zne_fit_suite(list(zip(scales, values)))
    assert set(fits) == set(ZNE_FIT_KINDS)
    for fit in fits.values():
        assert np.isfinite(fit.zero_noise_value)


def test_exponential_fallback_flagged():
    # alternating data defeats the exponential model; the quadratic fallback
    # must be reported, not silent
    pts = [(1.0, 0.1), (1.1, -0.4), (1.25, 0.3), (1.5, -0.2)]
    fit = zne_extrapolate(pts, "exponential")
    if fit.kind == "quadratic":
        assert fit.fallback_from == "exponential"
    else:  # converged after all; either way the result is labelled
        assert fit.kind == "exponential"
