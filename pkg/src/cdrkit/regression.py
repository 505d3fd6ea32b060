"""Correction fits and zero-noise extrapolation.

The linear ansatz maps a noisy expectation value x to a1*x + a2; parameters
come from closed-form least squares over the training pairs. The residual
cost C = sum (x_exact - (a1 x_noisy + a2))^2 yields the reported error bar,
three standard deviations with stddev = sqrt(C / (L - 1)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConfigError, DiagnosticError

_DEGENERATE_VAR = 1e-24


@dataclass(frozen=True)
class FitResult:
    kind: str  # "linear" | "constant"
    a1: float
    a2: float
    cost: float
    sample_count: int

    @property
    def stddev(self) -> float:
        if self.sample_count < 2:
            return 0.0
        return math.sqrt(max(self.cost, 0.0) / (self.sample_count - 1))

    @property
    def error_bar(self) -> float:
        return 3.0 * self.stddev

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "a1": self.a1,
            "a2": self.a2,
            "C": self.cost,
            "L": self.sample_count,
            "error_bar": self.error_bar,
        }


def fit_linear(x_noisy, x_exact) -> FitResult:
    """Closed-form least squares for x_exact ~ a1 * x_noisy + a2."""
    x = np.asarray(x_noisy, dtype=float)
    y = np.asarray(x_exact, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError("training arrays must be equal-length vectors")
    if len(x) < 2:
        raise ConfigError(f"linear fit needs at least 2 samples, got {len(x)}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ConfigError("training values must be finite")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    var = float(dx @ dx)
    if var <= _DEGENERATE_VAR * max(1.0, float(x @ x)):
        raise DiagnosticError(
            "noisy training values are degenerate (zero variance); "
            "use the constant ansatz instead"
        )
    a1 = float(dx @ (y - ym)) / var
    a2 = ym - a1 * xm
    resid = y - (a1 * x + a2)
    return FitResult("linear", a1, a2, float(resid @ resid), len(x))


def fit_constant(x_exact) -> FitResult:
    """Least-squares constant: predict the mean exact value regardless of
    the noisy input. The constant lives in a1; a2 is unused."""
    y = np.asarray(x_exact, dtype=float)
    if y.ndim != 1 or len(y) < 1:
        raise ConfigError("constant fit needs at least 1 sample")
    a1 = float(y.mean())
    resid = y - a1
    return FitResult("constant", a1, 0.0, float(resid @ resid), len(y))


def predict(fit: FitResult, x_noisy: float) -> tuple[float, float]:
    """Corrected value and its error bar."""
    if fit.kind == "constant":
        return fit.a1, fit.error_bar
    return fit.a1 * x_noisy + fit.a2, fit.error_bar


def analytic_depolarizing_coefficients(
    p_err: float, m: int, trace_x: float, dim: int
) -> tuple[float, float]:
    """Exact linear-ansatz parameters under an m-fold global depolarizing
    channel: a1 = (1-p)^-m, a2 = -(1-(1-p)^m) Tr(X) / (d (1-p)^m)."""
    if not 0.0 <= p_err < 1.0:
        raise ConfigError(f"p_err must be in [0, 1), got {p_err}")
    if m < 0:
        raise ConfigError(f"m must be >= 0, got {m}")
    survival = (1.0 - p_err) ** m
    a1 = 1.0 / survival
    a2 = -(1.0 - survival) * trace_x / (dim * survival)
    return a1, a2


# ---------------------------------------------------------------------------
# Zero-noise extrapolation
# ---------------------------------------------------------------------------

ZNE_FIT_KINDS = ("linear", "quadratic", "cubic", "exponential")
_POLY_ORDER = {"linear": 1, "quadratic": 2, "cubic": 3}


@dataclass(frozen=True)
class ZNEFit:
    kind: str
    zero_noise_value: float
    uncertainty: float
    params: tuple[float, ...]
    fallback_from: str | None = None  # set when a nonlinear fit fell back

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "zero_noise_value": self.zero_noise_value,
            "uncertainty": self.uncertainty,
            "params": list(self.params),
        }
        if self.fallback_from is not None:
            out["fallback_from"] = self.fallback_from
        return out


def _poly_fit(scales: np.ndarray, values: np.ndarray, order: int) -> ZNEFit:
    kind = {v: k for k, v in _POLY_ORDER.items()}[order]
    if len(scales) < order + 1:
        raise ConfigError(
            f"{kind} extrapolation needs at least {order + 1} points, got {len(scales)}"
        )
    design = np.vander(scales, order + 1, increasing=True)
    coeffs, residuals, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < order + 1:
        raise DiagnosticError("ill-conditioned extrapolation design (repeated scales?)")
    dof = len(scales) - (order + 1)
    if dof > 0:
        rss = float(residuals[0]) if len(residuals) else float(
            np.sum((design @ coeffs - values) ** 2)
        )
        cov = rss / dof * np.linalg.inv(design.T @ design)
        unc = math.sqrt(max(cov[0, 0], 0.0))
    else:
        unc = 0.0  # exact interpolation, no residual to estimate from
    return ZNEFit(kind, float(coeffs[0]), unc, tuple(float(c) for c in coeffs))


def _exp_model(c, a, b, k):
    return a + b * np.exp(-k * c)


def _exp_fit(scales: np.ndarray, values: np.ndarray) -> ZNEFit:
    if len(scales) < 3:
        raise ConfigError(f"exponential extrapolation needs >= 3 points, got {len(scales)}")
    order = np.argsort(scales)
    s, v = scales[order], values[order]
    # decay-rate guess from the log-ratio of successive differences
    k0 = 1.0
    d0, d1 = v[1] - v[0], v[2] - v[1]
    if d0 != 0 and d1 != 0 and d1 / d0 > 0:
        h = 0.5 * (s[2] - s[0])
        ratio = d1 / d0
        if 0 < ratio < 1:
            k0 = -math.log(ratio) / max(h, 1e-9)
    a0 = v[-1]
    b0 = (v[0] - a0) * math.exp(k0 * s[0])
    try:
        params, cov = curve_fit(
            _exp_model, s, v, p0=(a0, b0, k0), maxfev=20000
        )
        pred0 = _exp_model(0.0, *params)
        # value at c=0 is a+b, so its variance is var(a)+var(b)+2cov(a,b)
        var = float(cov[0, 0] + cov[1, 1] + 2 * cov[0, 1])
        unc = math.sqrt(var) if np.isfinite(var) and var >= 0 else float("nan")
        return ZNEFit("exponential", float(pred0), unc, tuple(float(p) for p in params))
    except RuntimeError:
        fallback = _poly_fit(scales, values, 2)
        return ZNEFit(
            "quadratic",
            fallback.zero_noise_value,
            fallback.uncertainty,
            fallback.params,
            fallback_from="exponential",
        )


def zne_extrapolate(points, kind: str) -> ZNEFit:
    """Fit (scale, value) points and evaluate the fit at scale 0.

    ``points`` is a sequence of (c, value) pairs with distinct c. Polynomial
    kinds use least squares; "exponential" fits a + b*exp(-k c) and falls
    back to the quadratic fit (flagged, not silent) if it fails to converge.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError("points must be (scale, value) pairs")
    scales, values = pts[:, 0], pts[:, 1]
    if len(np.unique(scales)) != len(scales):
        raise ConfigError("extrapolation scales must be distinct")
    if kind in _POLY_ORDER:
        return _poly_fit(scales, values, _POLY_ORDER[kind])
    if kind == "exponential":
        return _exp_fit(scales, values)
    raise ConfigError(f"unknown extrapolation kind {kind!r}")


def zne_fit_suite(points, kinds=ZNE_FIT_KINDS) -> dict[str, ZNEFit]:
    """All requested fits side by side on the same points."""
    return {kind: zne_extrapolate(points, kind) for kind in kinds}


def fits_to_json(fits: dict[str, ZNEFit]) -> str:
    return json.dumps({k: f.to_dict() for k, f in fits.items()}, indent=1, sort_keys=True)
