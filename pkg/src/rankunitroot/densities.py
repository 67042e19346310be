"""Reference densities: score, quantile and standardized Fisher information.

Built-in densities use a fixed internal scale (Gaussian sd 1, Laplace b = 1,
Student t with 3 degrees of freedom). Every statistic built on them is scale
invariant, so only consistency between ``score``, ``quantile`` and ``sigma_g``
matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, special

from .errors import DegenerateSampleError, DomainError, NumericalError

__all__ = [
    "ReferenceDensity",
    "KernelDensityEstimate",
    "GAUSSIAN",
    "LAPLACE",
    "T3",
    "BUILTIN_DENSITIES",
    "get_density",
    "score_at_rank_quantile",
    "rank_scores",
    "signed_rank_scores",
    "cross_moments",
    "fit_kernel_density",
    "kde_bandwidth",
]

QUAD_DELTA = 1e-10


@dataclass(frozen=True)
class ReferenceDensity:
    """A density g packaged for rank statistics.

    Attributes
    ----------
    name : str
        Registry name.
    sigma_g : float
        Standard deviation of g.
    fisher_info_j : float
        Standardized Fisher information for location, ``sigma_g**2 * E[phi_g**2]``.
    score, quantile, cdf, pdf : callable
        Vectorized location score ``-g'/g``, inverse cdf, cdf and density.
    symmetric : bool
        Whether g is symmetric about zero.
    """

    name: str
    sigma_g: float
    fisher_info_j: float
    score: Callable[[np.ndarray], np.ndarray]
    quantile: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    symmetric: bool = True


def _laplace_quantile(u):
    u = np.asarray(u, dtype=float)
    return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))


def _laplace_cdf(x):
    x = np.asarray(x, dtype=float)
    tail = 0.5 * np.exp(-np.abs(x))
    return np.where(x < 0, tail, 1.0 - tail)


GAUSSIAN = ReferenceDensity(
    name="gaussian",
    sigma_g=1.0,
    fisher_info_j=1.0,
    score=lambda x: np.asarray(x, dtype=float),
    quantile=special.ndtri,
    cdf=special.ndtr,
    pdf=lambda x: np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / np.sqrt(2 * np.pi),
)

LAPLACE = ReferenceDensity(
    name="laplace",
    sigma_g=float(np.sqrt(2.0)),
    fisher_info_j=2.0,
    score=lambda x: np.sign(np.asarray(x, dtype=float)),
    quantile=_laplace_quantile,
    cdf=_laplace_cdf,
    pdf=lambda x: 0.5 * np.exp(-np.abs(np.asarray(x, dtype=float))),
)

T3 = ReferenceDensity(
    name="t3",
    sigma_g=float(np.sqrt(3.0)),
    fisher_info_j=2.0,
    score=lambda x: 4.0 * np.asarray(x, dtype=float) / (3.0 + np.asarray(x, dtype=float) ** 2),
    quantile=lambda u: special.stdtrit(3, u),
    cdf=lambda x: special.stdtr(3, x),
    pdf=lambda x: 6.0 * np.sqrt(3.0) / (np.pi * (3.0 + np.asarray(x, dtype=float) ** 2) ** 2),
)

BUILTIN_DENSITIES = {d.name: d for d in (GAUSSIAN, LAPLACE, T3)}


def get_density(name: str) -> ReferenceDensity:
    """Look up a built-in reference density by name."""
    try:
        return BUILTIN_DENSITIES[name.lower()]
    except KeyError:
        valid = ", ".join(sorted(BUILTIN_DENSITIES))
        raise DomainError(f"unknown reference density {name!r}; valid: {valid}") from None


def score_at_rank_quantile(g, i: int, n: int) -> float:
    """Return ``sigma_g * phi_g(G^{-1}(i / n))``.

    Raises
    ------
    DomainError
        If ``i / n`` is not strictly inside (0, 1).
    """
    if n <= 0 or not 0 < i < n:
        raise DomainError(f"i/n = {i}/{n} must lie strictly inside (0, 1)")
    return float(g.sigma_g * g.score(g.quantile(np.array([i / n])))[0])


@lru_cache(maxsize=64)
def _cached_rank_scores(name: str, n: int, denom: int, signed: bool) -> np.ndarray:
    g = BUILTIN_DENSITIES[name]
    out = _rank_scores(g, n, denom, signed)
    out.setflags(write=False)
    return out


def _rank_scores(g, n, denom, signed):
    i = np.arange(1, n + 1, dtype=float)
    u = 0.5 + i / (2.0 * denom) if signed else i / denom
    return g.sigma_g * np.asarray(g.score(g.quantile(u)), dtype=float)


def rank_scores(g, n: int, denom: int | None = None) -> np.ndarray:
    """Scores ``sigma_g * phi_g(G^{-1}(i / denom))`` for ``i = 1..n``.

    ``denom`` defaults to ``n + 1``. Results for built-in densities are cached
    and returned read-only.
    """
    denom = n + 1 if denom is None else denom
    if denom <= n:
        raise DomainError("denom must exceed n so that i/denom < 1")
    if isinstance(g, ReferenceDensity) and BUILTIN_DENSITIES.get(g.name) is g:
        return _cached_rank_scores(g.name, n, denom, False)
    return _rank_scores(g, n, denom, False)


def signed_rank_scores(g, n: int, denom: int | None = None) -> np.ndarray:
    """Scores ``sigma_g * phi_g(G^{-1}(1/2 + i / (2 denom)))`` for ``i = 1..n``."""
    denom = n + 1 if denom is None else denom
    if denom <= n:
        raise DomainError("denom must exceed n")
    if isinstance(g, ReferenceDensity) and BUILTIN_DENSITIES.get(g.name) is g:
        return _cached_rank_scores(g.name, n, denom, True)
    return _rank_scores(g, n, denom, True)


def _quad(fn, lo, hi, points=None):
    val, err, info = integrate.quad(
        fn, lo, hi, points=points, limit=500, epsabs=1e-13, epsrel=1e-11, full_output=True
    )[:3]
    if not np.isfinite(val) or err > 1e-7:
        raise NumericalError(
            f"quadrature did not converge on ({lo}, {hi}): value={val}, error={err}, "
            f"evaluations={info.get('neval')}"
        )
    return val


def cross_moments(f, g, method: str = "quantile") -> tuple[float, float]:
    """Limiting cross moments ``(sigma_eps_phi_g, J_fg)`` of true density f and reference g.

    Parameters
    ----------
    f, g : ReferenceDensity
        True innovation density and reference density.
    method : {"quantile", "density"}
        ``"quantile"`` integrates over u in (delta, 1 - delta) with both quantile
        functions. ``"density"`` substitutes ``u = G(y)`` and integrates over the
        real line against g; both must agree.

    Returns
    -------
    sigma_eps_phi_g : float
    j_fg : float
    """
    if method == "quantile":
        lo, hi = QUAD_DELTA, 1.0 - QUAD_DELTA

        def s_int(u):
            return f.quantile(u) * g.score(g.quantile(u))

        def j_int(u):
            return f.score(f.quantile(u)) * g.score(g.quantile(u))

        s = _quad(s_int, lo, hi, points=[0.5])
        j = _quad(j_int, lo, hi, points=[0.5])
    elif method == "density":

        def s_int(y):
            u = np.clip(g.cdf(y), QUAD_DELTA, 1 - QUAD_DELTA)
            return f.quantile(u) * g.score(y) * g.pdf(y)

        def j_int(y):
            u = np.clip(g.cdf(y), QUAD_DELTA, 1 - QUAD_DELTA)
            return f.score(f.quantile(u)) * g.score(y) * g.pdf(y)

        s = _quad(s_int, -np.inf, 0.0) + _quad(s_int, 0.0, np.inf)
        j = _quad(j_int, -np.inf, 0.0) + _quad(j_int, 0.0, np.inf)
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(g.sigma_g / f.sigma_g * s), float(f.sigma_g * g.sigma_g * j)


def kde_bandwidth(n: int, sigma_hat: float) -> float:
    """Bandwidth rule ``(4 / (3 n))**(1/5) * sigma_hat``."""
    return (4.0 / (3.0 * n)) ** 0.2 * sigma_hat


class KernelDensityEstimate:
    """Gaussian-kernel density estimate exposing the reference-density interface.

    The quantile is found by monotone inversion of the mixture cdf: a tabulated
    cdf brackets each root, then safeguarded Newton steps polish it to 1e-10.
    """

    name = "estimated"
    symmetric = False

    def __init__(self, sample, bandwidth: float):
        sample = np.asarray(sample, dtype=float).ravel()
        if sample.size == 0:
            raise DegenerateSampleError("empty sample")
        if not bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        if np.ptp(sample) == 0:
            raise DegenerateSampleError("all residuals are identical")
        self.sample = np.sort(sample)
        self.bandwidth = float(bandwidth)
        self.sigma_g = float(np.sqrt(self.sample.var() + self.bandwidth**2))
        h = self.bandwidth
        lo, hi = self.sample[0] - 10 * h, self.sample[-1] + 10 * h
        self._grid = np.linspace(lo, hi, max(2049, int(np.ceil((hi - lo) / (h / 16))) + 1))
        self._grid_cdf = self.cdf(self._grid)
        keep = np.concatenate(([True], np.diff(self._grid_cdf) > 0))
        self._inverse_cdf = interpolate.PchipInterpolator(self._grid_cdf[keep], self._grid[keep])
        pdf = self.pdf(self._grid)
        self.total_mass = float(integrate.trapezoid(pdf, self._grid))
        score = self.score(self._grid)
        self.fisher_info_j = float(
            self.sigma_g**2 * integrate.trapezoid(score**2 * pdf, self._grid)
        )

    def _chunks(self, x):
        step = max(1, 4_000_000 // self.sample.size)
        for start in range(0, x.size, step):
            yield slice(start, start + step), (x[start : start + step, None] - self.sample) / self.bandwidth

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for sl, z in self._chunks(flat):
            out[sl] = np.exp(-0.5 * z**2).mean(axis=1)
        return (out / (self.bandwidth * np.sqrt(2 * np.pi))).reshape(x.shape)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for sl, z in self._chunks(flat):
            out[sl] = special.ndtr(z).mean(axis=1)
        return out.reshape(x.shape)

    def score(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for sl, z in self._chunks(flat):
            logk = -0.5 * z**2
            w = np.exp(logk - logk.max(axis=1, keepdims=True))
            out[sl] = (w * z).sum(axis=1) / w.sum(axis=1)
        return (out / self.bandwidth).reshape(x.shape)

    def quantile(self, u, tol: float = 1e-10, max_iter: int = 60):
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        if np.any((flat <= 0) | (flat >= 1)):
            raise DomainError("quantile argument must lie strictly inside (0, 1)")
        grid, gcdf = self._grid, self._grid_cdf
        idx = np.clip(np.searchsorted(gcdf, flat), 1, grid.size - 1)
        lo, hi = grid[idx - 1].copy(), grid[idx].copy()
        # Targets beyond the tabulated range: widen the bracket geometrically.
        outside = (flat < gcdf[0]) | (flat > gcdf[-1])
        span = 10 * self.bandwidth
        while outside.any():
            lo[outside & (flat < gcdf[0])] -= span
            hi[outside & (flat > gcdf[-1])] += span
            span *= 2
            outside = outside & ((self.cdf(lo) > flat) | (self.cdf(hi) < flat))
        x = np.clip(self._inverse_cdf(flat), lo, hi)
        active = np.arange(flat.size)
        for _ in range(max_iter):
            xa = x[active]
            c = self.cdf(xa) - flat[active]
            lo[active] = np.where(c < 0, xa, lo[active])
            hi[active] = np.where(c > 0, xa, hi[active])
            d = self.pdf(xa)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = xa - np.where(d > 0, c / d, np.inf)
            bad = ~((xn > lo[active]) & (xn < hi[active]))
            xn[bad] = 0.5 * (lo[active][bad] + hi[active][bad])
            moved = np.abs(xn - xa) > tol * (1 + np.abs(xa))
            x[active] = xn
            active = active[moved & (hi[active] - lo[active] > tol)]
            if active.size == 0:
                break
        else:
            raise NumericalError("kernel quantile inversion did not converge")
        return x.reshape(u.shape)


def fit_kernel_density(residuals, sigma_hat: float, bandwidth: float | None = None):
    """Gaussian-kernel estimate of the innovation density from residuals.

    The default bandwidth is ``(4 / (3 n))**(1/5) * sigma_hat`` with ``n`` the
    number of residuals.
    """
    residuals = np.asarray(residuals, dtype=float).ravel()
    if residuals.size == 0:
        raise DegenerateSampleError("empty residual vector")
    if not sigma_hat > 0:
        raise DegenerateSampleError("sigma_hat must be positive")
    if bandwidth is None:
        bandwidth = kde_bandwidth(residuals.size, sigma_hat)
    return KernelDensityEstimate(residuals, bandwidth)
