"""AR(p) prewhitening of the differenced series and estimator discretization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSampleError, DomainError, RankDeficiencyError

__all__ = ["ArFit", "as_series", "fit_ar", "discretize", "filter_differences"]


@dataclass(frozen=True)
class ArFit:
    """Least-squares AR(p) fit.

    ``residuals`` are ``Gamma_hat(L) dY_t`` for ``t = p+2..T`` in the aligned
    (differences-only) case, and the OLS residuals of the levels regression
    otherwise. ``ols_residuals`` always holds the raw regression residuals.
    """

    p: int
    gamma_hat: np.ndarray
    rho_hat: float | None
    intercept: float
    residuals: np.ndarray
    ols_residuals: np.ndarray
    t_len: int
    include_level: bool
    series: np.ndarray = field(repr=False, default=None)
    discretized: bool = False


def as_series(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        y = np.squeeze(y)
        if y.ndim != 1:
            raise DomainError("series must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DomainError("series contains missing or non-finite values")
    return y


def _lags(dy: np.ndarray, p: int) -> np.ndarray:
    # Row j corresponds to t = p + 2 + j (1-based), i.e. dy index p + j.
    n = dy.size - p
    return np.column_stack([dy[p - i : p - i + n] for i in range(1, p + 1)]) if p else np.empty((n, 0))


def filter_differences(y, gamma) -> np.ndarray:
    """Return ``Gamma(L) dY_t`` for ``t = p+2..T`` with ``p = len(gamma)``."""
    y = as_series(y)
    gamma = np.asarray(gamma, dtype=float)
    p = gamma.size
    dy = np.diff(y)
    out = dy[p:].copy()
    if p:
        out -= _lags(dy, p) @ gamma
    return out


def fit_ar(y, p: int, include_level: bool = False) -> ArFit:
    """OLS fit of the AR(p) error dynamics.

    Parameters
    ----------
    y : array_like
        Levels ``Y_1..Y_T``.
    p : int
        Lag order of the difference polynomial.
    include_level : bool
        If True, regress ``Y_t`` on ``(1, Y_{t-1}, dY_{t-1}, ..., dY_{t-p})`` and
        report ``rho_hat``. If False, regress ``dY_t`` on an intercept and its own
        ``p`` lags; residuals are then ``Gamma_hat(L) dY_t`` (intercept not removed).

    Returns
    -------
    ArFit
    """
    y = as_series(y)
    t_len = y.size
    if p < 0:
        raise DomainError("lag order p must be nonnegative")
    if t_len < p + 3:
        raise DegenerateSampleError(f"T = {t_len} is too short for p = {p} (need T >= p + 3)")
    dy = np.diff(y)
    n = t_len - p - 1
    lags = _lags(dy, p)
    if include_level:
        target = y[p + 1 :]
        design = np.column_stack([np.ones(n), y[p:-1], lags])
    else:
        if p == 0:
            resid = dy.copy()
            return ArFit(0, np.empty(0), None, float(dy.mean()), resid, dy - dy.mean(), t_len, False, y)
        target = dy[p:]
        design = np.column_stack([np.ones(n), lags])
    beta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficiencyError(
            f"design matrix has rank {rank} < {design.shape[1]} columns"
        )
    ols_resid = target - design @ beta
    if include_level:
        gamma = beta[2:].copy()
        return ArFit(p, gamma, float(beta[1]), float(beta[0]), ols_resid, ols_resid, t_len, True, y)
    gamma = beta[1:].copy()
    resid = dy[p:] - lags @ gamma
    return ArFit(p, gamma, None, float(beta[0]), resid, ols_resid, t_len, False, y)


def _snap(values: np.ndarray, t_len: int) -> np.ndarray:
    root = math.sqrt(t_len)
    q = values * root
    mag = np.abs(q)
    frac = mag - np.floor(mag)
    k = np.where(np.abs(frac - 0.5) < 1e-9, np.floor(mag), np.round(mag))
    return np.sign(q) * k / root + 0.0


def discretize(fit: ArFit, t_len: int | None = None) -> ArFit:
    """Snap each lag coefficient to the nearest multiple of ``1/sqrt(T)``.

    Exact half-step ties go toward zero. Residuals are recomputed with the
    snapped coefficients; the intercept and ``rho_hat`` are left as estimated.
    """
    if fit.discretized:
        raise DomainError("fit is already discretized")
    t_len = fit.t_len if t_len is None else t_len
    gamma = _snap(fit.gamma_hat, t_len)
    y = fit.series
    if fit.include_level:
        lags = _lags(np.diff(y), fit.p)
        resid = y[fit.p + 1 :] - fit.intercept - fit.rho_hat * y[fit.p : -1] - lags @ gamma
    else:
        resid = filter_differences(y, gamma)
    return replace(fit, gamma_hat=gamma, residuals=resid, discretized=True)
