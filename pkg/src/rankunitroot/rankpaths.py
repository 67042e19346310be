"""Ranks of aligned residuals, partial-sum step paths and their integrals.

A path on [0, 1] is stored as a vector of jumps occurring at ``s = t/T`` for
``t = start..T`` plus an optional linear drift ``c * s``. Bridges and the
orthogonalized paths need the drift; everything else is a pure step function.
Integrals are evaluated exactly over the jumps in O(n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import rank_scores, signed_rank_scores
from .errors import DegenerateSampleError, DomainError, IllConditionedError

__all__ = [
    "RankData",
    "StepPath",
    "PartialSumPaths",
    "compute_ranks",
    "build_paths",
    "orthogonalize",
    "stochastic_integral",
    "ORTHO_TOL",
]

ORTHO_TOL = 0.005


@dataclass(frozen=True)
class RankData:
    n: int
    ranks: np.ndarray
    signs: np.ndarray
    abs_ranks: np.ndarray


def _rank(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    r = np.empty(x.size, dtype=np.int64)
    r[order] = np.arange(1, x.size + 1)
    return r


def compute_ranks(residuals) -> RankData:
    """Ranks, signs and ranks of absolute values.

    Ties are broken by position (earlier index gets the lower rank) and zero
    residuals get sign +1.
    """
    x = np.asarray(residuals, dtype=float).ravel()
    if x.size == 0:
        raise DegenerateSampleError("no residuals to rank")
    signs = np.where(x < 0, -1, 1).astype(np.int8)
    return RankData(x.size, _rank(x), signs, _rank(np.abs(x)))


@dataclass(frozen=True)
class StepPath:
    """Right-continuous path ``sum_{start <= t <= sT} jumps + drift * s``.

    ``jumps[j]`` occurs at ``s = (start + j) / t_total``.
    """

    jumps: np.ndarray
    start: int
    t_total: int
    drift: float = 0.0

    def __post_init__(self):
        if self.start + self.jumps.size - 1 != self.t_total:
            raise DomainError("jumps must run from index start to t_total")

    @property
    def levels(self) -> np.ndarray:
        """Step part just after each jump."""
        return np.cumsum(self.jumps)

    @property
    def left_levels(self) -> np.ndarray:
        """Step part just before each jump."""
        c = self.levels
        return np.concatenate(([0.0], c[:-1]))

    def endpoint(self) -> float:
        return float(self.jumps.sum() + self.drift)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.floor(s * self.t_total + 1e-9).astype(np.int64) - self.start + 1
        c = np.concatenate(([0.0], self.levels))
        return c[np.clip(k, 0, self.jumps.size)] + self.drift * s

    def integral(self) -> float:
        """``int_0^1 x(s) ds``."""
        return float(self.left_levels.sum() / self.t_total + 0.5 * self.drift)

    def integral_sq(self) -> float:
        """``int_0^1 x(s)^2 ds``."""
        t_total = self.t_total
        c = self.left_levels
        out = (c @ c) / t_total
        if self.drift:
            # C is constant on [(t-1)/T, t/T): int s ds over it = (2t - 1) / (2 T^2).
            t = np.arange(self.start, t_total + 1, dtype=float)
            out += 2 * self.drift * (c @ (2 * t - 1)) / (2 * t_total**2) + self.drift**2 / 3
        return float(out)

    def scaled(self, factor: float) -> "StepPath":
        return StepPath(self.jumps * factor, self.start, self.t_total, self.drift * factor)

    def combine(self, other: "StepPath", a: float = 1.0, b: float = 1.0) -> "StepPath":
        """``a * self + b * other``."""
        _check_aligned(self, other)
        return StepPath(a * self.jumps + b * other.jumps, self.start, self.t_total,
                        a * self.drift + b * other.drift)


def _check_aligned(x: StepPath, y: StepPath) -> None:
    if x.start != y.start or x.t_total != y.t_total:
        raise DomainError(
            f"paths live on different jump grids: ({x.start}..{x.t_total}) vs ({y.start}..{y.t_total})"
        )


def stochastic_integral(x: StepPath, y: StepPath) -> float:
    """Left-point sum ``int_0^1 x(s-) dy(s)``.

    The jump part contributes ``sum_t x(t/T -) dy_t`` and the drift of ``y``
    contributes ``drift_y * int x ds``.
    """
    _check_aligned(x, y)
    left = x.left_levels
    if x.drift:
        left = left + x.drift * np.arange(x.start, x.t_total + 1) / x.t_total
    out = float(left @ y.jumps)
    if y.drift:
        out += y.drift * x.integral()
    return out


@dataclass(frozen=True)
class PartialSumPaths:
    """Rank-based partial-sum paths and nuisance estimates for one series.

    ``w_phi_g`` and ``sigma_eps_phi_g_signed_hat`` are None when the
    reference density is not symmetric.
    """

    w_eps: StepPath
    b_phi_g: StepPath
    w_phi_g: StepPath | None
    sigma_f_hat: float
    sigma_eps_phi_g_hat: float
    sigma_eps_phi_g_signed_hat: float | None
    t_total: int
    p: int
    ranks: RankData


def build_paths(residuals, g, t_len: int, p: int, level_offset: float | None = None) -> PartialSumPaths:
    """Partial-sum paths of the aligned residuals ``e_t``, ``t = p+2..T``.

    Parameters
    ----------
    residuals : array_like
        ``T - p - 1`` aligned residuals.
    g : reference density
    t_len, p : int
    level_offset : float, optional
        Quantity subtracted from the residuals in the scale estimate, i.e.
        ``Gamma_hat(1)`` times the mean difference. Defaults to the p = 0 value
        ``sum(e) / T``.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    n = t_len - p - 1
    if e.size != n:
        raise DomainError(f"expected T - p - 1 = {n} residuals, got {e.size}")
    if e.size and np.all(e == e[0]):
        raise DegenerateSampleError("all residuals are identical")
    if level_offset is None:
        level_offset = e.sum() / t_len
    sigma_f = float(np.sqrt(np.sum((e - level_offset) ** 2) / n))
    if not sigma_f > 0 or not np.isfinite(sigma_f):
        raise DegenerateSampleError("residual scale estimate is zero")
    rd = compute_ranks(e)
    root = np.sqrt(t_len)
    start = p + 2
    z = e / sigma_f

    table = rank_scores(g, n, denom=n + 1)
    a = table[rd.ranks - 1]
    centre = table.sum() / t_len
    w_eps = StepPath(z / root, start, t_len)
    b_phi = StepPath((a - centre) / root, start, t_len)
    sigma_efg = float(z @ a / n)

    w_phi = None
    sigma_signed = None
    if getattr(g, "symmetric", False):
        stable = signed_rank_scores(g, n, denom=n + 1)
        sa = rd.signs * stable[rd.abs_ranks - 1]
        w_phi = StepPath(sa / root, start, t_len)
        sigma_signed = float(z @ sa / n)
    return PartialSumPaths(w_eps, b_phi, w_phi, sigma_f, sigma_efg, sigma_signed, t_len, p, rd)


def orthogonalize(paths: PartialSumPaths, j_g: float, sigma: float | None = None):
    """Orthogonal complements ``(B_perp, W_perp)`` of the rank paths.

    ``B_perp = k^{-1} [B_phi / sigma - (W_e(s) - s W_e(1))]`` and
    ``W_perp = k^{-1} [W_phi / sigma - W_e]`` with ``k = sqrt(j_g / sigma^2 - 1)``.
    ``sigma`` defaults to the estimated cross moment; W_perp is None for an
    asymmetric reference density.

    Raises
    ------
    IllConditionedError
        If ``sigma <= 0.005`` or ``j_g - sigma^2 <= 0.005``.
    """
    sigma = paths.sigma_eps_phi_g_hat if sigma is None else sigma
    if sigma <= ORTHO_TOL or j_g - sigma**2 <= ORTHO_TOL:
        raise IllConditionedError(
            f"orthogonalization is ill-conditioned at sigma={sigma:.4g}, J_g={j_g:.4g}; "
            "clamp the cross moment or use the AHRT (lambda = 1) form"
        )
    k = np.sqrt(j_g / sigma**2 - 1.0)
    w = paths.w_eps
    bridge = StepPath(w.jumps, w.start, w.t_total, -w.endpoint())
    b_perp = paths.b_phi_g.combine(bridge, 1.0 / (sigma * k), -1.0 / k)
    w_perp = None
    if paths.w_phi_g is not None:
        w_perp = paths.w_phi_g.combine(w, 1.0 / (sigma * k), -1.0 / k)
    return b_perp, w_perp
