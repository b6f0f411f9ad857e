"""Per-series classical forecasters: ARIMA by Hannan-Rissanen and a trend+Fourier decomposition.

ARIMA parameters come from two least-squares passes (Hannan-Rissanen) rather
than exact maximum likelihood:

1. a long autoregression on the differenced series estimates the innovations;
2. the differenced series is regressed on an intercept, its own lags and the
   lagged innovation estimates.

Orders are selected by ``AIC = n ln(sigma2) + 2 (p + q + P + Q + 1)`` where
``n`` is the number of residuals in the second regression. Seasonal terms
enter additively at lags ``s, 2s, ...``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from glad.core import ForecastSet

Z95 = 1.959964
SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 0

    def __post_init__(self):
        if not (0 <= self.p <= 3 and 0 <= self.d <= 1 and 0 <= self.q <= 2):
            raise ValueError(f"order out of range: {self}")
        seasonal = self.P or self.D or self.Q
        if seasonal and self.s < 2:
            raise ValueError("seasonal terms need a period s >= 2")
        if min(self.P, self.D, self.Q) < 0 or self.D > 1:
            raise ValueError(f"seasonal order out of range: {self}")

    @property
    def ar_lags(self) -> list:
        return list(range(1, self.p + 1)) + [self.s * k for k in range(1, self.P + 1)]

    @property
    def ma_lags(self) -> list:
        return list(range(1, self.q + 1)) + [self.s * k for k in range(1, self.Q + 1)]

    @property
    def n_params(self) -> int:
        return self.p + self.q + self.P + self.Q + 1


def default_grid(season: Optional[int] = None) -> list:
    """p in 0..3, d in 0..1, q in 0..2; with a period, also seasonal (1, D, 0) terms."""
    grid = [ArimaOrder(p, d, q) for p, d, q in itertools.product(range(4), range(2), range(3))]
    if season:
        grid += [ArimaOrder(p, d, q, 1, D, 0, season)
                 for p, d, q, D in itertools.product(range(4), range(2), range(3), range(2))]
    return grid


@dataclass
class ArimaFit:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    sigma2: float
    aic: float
    fallback: bool = False

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def difference_poly(order: ArimaOrder) -> np.ndarray:
    """Coefficients ``a`` with ``w_t = sum_k a[k] y_{t-k}``."""
    poly = np.array([1.0])
    for _ in range(order.d):
        poly = np.convolve(poly, [1.0, -1.0])
    for _ in range(order.D):
        seas = np.zeros(order.s + 1)
        seas[0], seas[-1] = 1.0, -1.0
        poly = np.convolve(poly, seas)
    return poly


def difference(y: np.ndarray, order: ArimaOrder) -> np.ndarray:
    a = difference_poly(order)
    k = a.size - 1
    return np.convolve(y, a, mode="valid") if k else np.array(y, dtype=float)


def _lagged(x, lags, start, stop):
    return np.column_stack([x[start - l:stop - l] for l in lags]) if lags else np.empty((stop - start, 0))


def _long_ar_order(n: int, order: ArimaOrder) -> int:
    base = max(order.ma_lags + order.ar_lags + [1])
    return min(max(base + 1, int(math.ceil(10 * math.log10(n)))), max(n // 4, base + 1))


def _required_start(n: int, order: ArimaOrder) -> int:
    """First index of the differenced series with every regressor available."""
    lags = order.ar_lags + order.ma_lags
    if order.ma_lags:
        return _long_ar_order(n, order) + max(lags)
    return max(lags + [0])


def _hannan_rissanen(w: np.ndarray, order: ArimaOrder, start: Optional[int] = None) -> Optional[ArimaFit]:
    n = w.size
    ar_lags, ma_lags = order.ar_lags, order.ma_lags
    if ma_lags:
        m = _long_ar_order(n, order)
        X = np.column_stack([np.ones(n - m), _lagged(w, list(range(1, m + 1)), m, n)])
        beta, _, rank, _ = np.linalg.lstsq(X, w[m:], rcond=None)
        if rank < X.shape[1]:
            return None
        e = np.zeros(n)
        e[m:] = w[m:] - X @ beta
    else:
        e = None
    own_start = _required_start(n, order)
    start = own_start if start is None else max(start, own_start)
    cols = [np.ones(n - start), _lagged(w, ar_lags, start, n)]
    if ma_lags:
        cols.append(_lagged(e, ma_lags, start, n))
    X = np.column_stack(cols)
    target = w[start:]
    beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        return None
    resid = target - X @ beta
    neff = resid.size
    sigma2 = max(float(resid @ resid) / neff, SIGMA2_FLOOR)
    na = len(ar_lags)
    return ArimaFit(
        order=order,
        ar=beta[1:1 + na],
        ma=beta[1 + na:],
        intercept=float(beta[0]),
        sigma2=sigma2,
        aic=neff * math.log(sigma2) + 2 * order.n_params,
    )


def _mean_fit(w: np.ndarray, order: ArimaOrder, start: int = 0) -> ArimaFit:
    base = ArimaOrder(0, order.d, 0, 0, order.D, 0, order.s)
    w = w[start:]
    mu = float(w.mean())
    sigma2 = max(float(((w - mu) ** 2).mean()), SIGMA2_FLOOR)
    return ArimaFit(base, np.zeros(0), np.zeros(0), mu, sigma2,
                    w.size * math.log(sigma2) + 2 * base.n_params, fallback=True)


def arima_grid(series, orders: Optional[Sequence[ArimaOrder]] = None) -> list:
    """Hannan-Rissanen fits of every order in ``orders`` (default: :func:`default_grid`).

    Every candidate is scored on residuals over one common span of the
    original series, so AIC values share the same ``n`` and are comparable.
    A singular regression (e.g. a constant series) falls back to the mean
    model of the same differencing, with ``fallback=True`` and a warning.
    """
    y = np.asarray(series, dtype=float)
    orders = list(orders) if orders is not None else default_grid()
    if not orders:
        raise ValueError("empty order grid")
    max_p = max(o.p for o in orders)
    max_q = max(o.q for o in orders)
    if y.size < 10 * (max_p + max_q + 1):
        raise ValueError(f"series of length {y.size} too short for orders up to p={max_p}, q={max_q}")
    # common first residual index in original-series time
    k_of = {o: difference_poly(o).size - 1 for o in orders}
    origin = max(k_of[o] + _required_start(y.size - k_of[o], o) for o in orders)
    if y.size - origin < 2 * (max(o.n_params for o in orders) + 1):
        raise ValueError("series too short for the requested seasonal/MA lags")
    fits = []
    for order in orders:
        w = difference(y, order)
        start = origin - k_of[order]
        fit = _hannan_rissanen(w, order, start)
        if fit is None:
            fit = _mean_fit(w, order, start)
            warnings.warn(f"singular regression for ARIMA{(order.p, order.d, order.q)}; using mean model",
                          RuntimeWarning, stacklevel=2)
        fits.append(fit)
    return fits


def arima_fit(series, orders: Optional[Sequence[ArimaOrder]] = None) -> ArimaFit:
    """Best-AIC fit over ``orders``; the first order wins AIC ties."""
    fits = arima_grid(series, orders)
    return min(fits, key=lambda f: f.aic)


def arima_forecast(fit: ArimaFit, series, eval_range: range) -> ForecastSet:
    """Rolling one-step forecasts over ``eval_range`` using the true past values.

    Parameters stay fixed; innovations are filtered from the start of the
    series (taken as zero while lags are unavailable).
    """
    y = np.asarray(series, dtype=float)
    if eval_range.stop > y.size:
        raise ValueError("evaluation range extends past the series")
    order = fit.order
    a = difference_poly(order)
    k = a.size - 1
    if eval_range.start < k + 1:
        raise ValueError(f"evaluation must start at t >= {k + 1}")
    w = difference(y, order)  # w[j] corresponds to y[j + k]
    ar_lags, ma_lags = order.ar_lags, order.ma_lags
    ar = fit.ar if fit.ar.size == len(ar_lags) else np.zeros(len(ar_lags))
    ma = fit.ma if fit.ma.size == len(ma_lags) else np.zeros(len(ma_lags))
    nw = eval_range.stop - k
    what = np.full(nw, fit.intercept)
    e = np.zeros(nw)
    for j in range(nw):
        acc = fit.intercept
        for coef, lag in zip(ar, ar_lags):
            if j - lag >= 0:
                acc += coef * w[j - lag]
        for coef, lag in zip(ma, ma_lags):
            if j - lag >= 0:
                acc += coef * e[j - lag]
        what[j] = acc
        if j < w.size:
            e[j] = w[j] - acc
    t = np.arange(eval_range.start, eval_range.stop)
    # y_t = w_t - sum_{m>=1} a[m] y_{t-m}
    past = np.zeros(t.size)
    for m in range(1, k + 1):
        past -= a[m] * y[t - m]
    fc = what[t - k] + past
    hw = np.full(t.size, Z95 * fit.sigma)
    return ForecastSet(eval_range.start, fc[None, :], hw[None, :])


# -- trend + Fourier decomposition ----------------------------------------------

CHANGEPOINT_QUANTILES = (0.25, 0.5, 0.75)


@dataclass
class DecompFit:
    t0: int
    scale: float
    changepoints: np.ndarray  # in scaled time
    periods: tuple
    fourier_order: int
    coef: np.ndarray
    sigma: float
    ridge: bool = False
    z: float = Z95

    @property
    def trend_coef(self) -> np.ndarray:
        return self.coef[:2 + self.changepoints.size]

    @property
    def seasonal_coef(self) -> np.ndarray:
        return self.coef[2 + self.changepoints.size:]

    def half_width(self) -> float:
        return self.z * self.sigma


def _design(t, t0, scale, changepoints, periods, K):
    s = (t - t0) / scale
    cols = [np.ones_like(s), s] + [np.maximum(0.0, s - c) for c in changepoints]
    for P in periods:
        for k in range(1, K + 1):
            ang = 2 * np.pi * k * t / P
            cols += [np.sin(ang), np.cos(ang)]
    return np.column_stack(cols)


def decomp_fit(series, train_range: range, periods=(), fourier_order: int = 3) -> DecompFit:
    """Least squares on a piecewise-linear trend plus Fourier terms.

    Trend changepoints sit at the 25/50/75% quantiles of the training span.
    A rank-deficient design is solved as ridge regression with lambda 1e-6.
    """
    y = np.asarray(series, dtype=float)[train_range.start:train_range.stop]
    periods = tuple(int(p) for p in periods)
    if periods and y.size < 2 * max(periods):
        raise ValueError(f"training length {y.size} shorter than twice the longest period")
    t = np.arange(train_range.start, train_range.stop, dtype=float)
    t0 = float(train_range.start)
    scale = float(max(y.size - 1, 1))
    cps = np.array(CHANGEPOINT_QUANTILES)
    X = _design(t, t0, scale, cps, periods, fourier_order)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    ridge = rank < X.shape[1]
    if ridge:
        warnings.warn("rank-deficient decomposition design; using ridge 1e-6", RuntimeWarning, stacklevel=2)
        coef = np.linalg.solve(X.T @ X + 1e-6 * np.eye(X.shape[1]), X.T @ y)
    resid = y - X @ coef
    return DecompFit(int(t0), scale, cps, periods, fourier_order, coef, float(resid.std()), ridge)


def decomp_predict(fit: DecompFit, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    X = _design(t, fit.t0, fit.scale, fit.changepoints, fit.periods, fit.fourier_order)
    return X @ fit.coef


def decomp_forecast(fit: DecompFit, eval_range: range) -> ForecastSet:
    t = np.arange(eval_range.start, eval_range.stop)
    fc = decomp_predict(fit, t)
    hw = np.full(t.size, fit.half_width())
    return ForecastSet(eval_range.start, fc[None, :], hw[None, :])


@dataclass
class PanelForecaster:
    """Applies a per-series baseline to every node of a panel."""

    kind: str
    periods: tuple = ()
    fourier_order: int = 3
    season: Optional[int] = None
    fits: list = field(default_factory=list)

    def fit(self, values: np.ndarray, train_range: range) -> "PanelForecaster":
        self.fits = []
        for row in values:
            if self.kind == "arima":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    self.fits.append(arima_fit(row[train_range.start:train_range.stop], default_grid(self.season)))
            elif self.kind == "decomp":
                self.fits.append(decomp_fit(row, train_range, self.periods, self.fourier_order))
            else:
                raise ValueError(f"unknown baseline {self.kind!r}")
        return self

    def forecast(self, values: np.ndarray, eval_range: range) -> ForecastSet:
        parts = []
        for row, f in zip(values, self.fits):
            if self.kind == "arima":
                parts.append(arima_forecast(f, row, eval_range))
            else:
                parts.append(decomp_forecast(f, eval_range))
        return ForecastSet(eval_range.start, np.vstack([p.values for p in parts]),
                           np.vstack([p.half_widths for p in parts]))
