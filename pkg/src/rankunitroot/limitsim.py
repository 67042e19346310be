"""Euler simulation of the limit experiment.

Every null-distribution quantity used here is a function of three independent
standard Brownian motions ``Z1 = W_e``, ``Z2`` and ``Z3`` observed on an
``m``-point grid, and in fact only of eight scalar functionals per draw:

    ``int W dW``, ``int W dZ2``, ``int W dZ3``, ``W(1)``, ``Z2(1)``, ``Z3(1)``,
    ``int W ds``, ``int W^2 ds``

(integrals are left-point sums). Storing these once per replication lets a
single simulation serve a whole grid of ``sigma`` values, reference densities
and local alternatives with common random numbers.

Under a local alternative ``h`` with innovation density f, the score process
is ``W_phi_f = W + sqrt(J_f - 1) Z3`` and the drift moves onto ``W`` and ``Z3``.
Powers are computed by re-running the Euler recursion under the alternative
from the same base increments (default), or by reweighting null draws with the
likelihood ratio ``exp(h Delta_f - h^2 J_f int W^2 / 2)``. The second is exact
in expectation but its weights become very dispersed once ``|h| sqrt(J_f)`` is
large. The rejection region is the top ``round(alpha * n)`` null draws.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal
from scipy.special import logsumexp

from .errors import DomainError, ParameterError
from .rng import partition, replication_rng, stream_key

__all__ = [
    "LimitSample",
    "CriticalValueModel",
    "FUNCTIONAL_NAMES",
    "draw_limit_sample",
    "functionals_from_increments",
    "simulate_functionals",
    "simulate_alternative_functionals",
    "ahrt_limit_statistic",
    "critical_value",
    "rule_critical_values",
    "sigma_grid",
    "fit_cv_polynomial",
    "power_envelope",
    "asymptotic_test_power",
    "ers_asymptotic_power",
    "likelihood_log_weight",
    "DEFAULT_M",
]

DEFAULT_M = 2500
FUNCTIONAL_NAMES = ("i_ww", "i_w2", "i_w3", "w1", "z2_1", "z3_1", "int_w", "int_w2")
I_WW, I_W2, I_W3, W1, Z2_1, Z3_1, INT_W, INT_W2 = range(8)
CHUNK = 256


def functionals_from_increments(dz: np.ndarray) -> np.ndarray:
    """Eight functionals from increments of shape ``(..., 3, m)``."""
    dz = np.asarray(dz, dtype=float)
    m = dz.shape[-1]
    w = np.cumsum(dz[..., 0, :], axis=-1)
    left = np.concatenate([np.zeros(w.shape[:-1] + (1,)), w[..., :-1]], axis=-1)
    out = np.empty(dz.shape[:-2] + (8,))
    out[..., I_WW] = np.einsum("...i,...i->...", left, dz[..., 0, :])
    out[..., I_W2] = np.einsum("...i,...i->...", left, dz[..., 1, :])
    out[..., I_W3] = np.einsum("...i,...i->...", left, dz[..., 2, :])
    out[..., W1] = w[..., -1]
    out[..., Z2_1] = dz[..., 1, :].sum(axis=-1)
    out[..., Z3_1] = dz[..., 2, :].sum(axis=-1)
    out[..., INT_W] = left.sum(axis=-1) / m
    out[..., INT_W2] = np.einsum("...i,...i->...", left, left) / m
    return out


def _increments(rng: np.random.Generator, m: int) -> np.ndarray:
    return rng.standard_normal((3, m)) / math.sqrt(m)


@dataclass(frozen=True)
class LimitSample:
    """One Euler draw of ``(W_e, W_perp, W_b)`` and derived functionals.

    Paths have ``m + 1`` entries starting at zero. ``j_f`` sets the envelope
    direction ``W_phi_f = W_e + sqrt(j_f - 1) W_b``.
    """

    w_eps: np.ndarray
    w_perp: np.ndarray
    w_b: np.ndarray
    values: np.ndarray
    j_f: float = 1.0
    functionals: dict = field(init=False)

    def __post_init__(self):
        v = self.values
        a = math.sqrt(self.j_f - 1.0)
        int_w = v[INT_W]
        d_f = v[I_WW] + a * v[I_W3]
        object.__setattr__(self, "functionals", {
            "int_w2": v[INT_W2],
            "int_w_sq": int_w**2,
            "int_w_dw": v[I_WW],
            "int_w_db_perp": v[I_W2] - v[Z2_1] * int_w,
            "int_w_dw_perp": v[I_W2],
            "int_w_db_phi_f": d_f - (v[W1] + a * v[Z3_1]) * int_w,
            "int_w_dw_phi_f": d_f,
            "w1": v[W1],
        })


def draw_limit_sample(m: int, rng: np.random.Generator, j_f: float = 1.0) -> LimitSample:
    """Draw one discretized limit sample on ``m`` grid steps."""
    if m < 1:
        raise DomainError("m must be positive")
    if j_f < 1:
        raise DomainError("j_f must be at least 1")
    dz = _increments(rng, m)
    paths = np.concatenate([np.zeros((3, 1)), np.cumsum(dz, axis=1)], axis=1)
    return LimitSample(paths[0], paths[1], paths[2], functionals_from_increments(dz), j_f)


def _alternative_increments(dz: np.ndarray, h: float, a: float) -> np.ndarray:
    """Euler increments under the local alternative ``h`` with ``W_phi_f = W + a Z3``.

    ``dW = h W ds + dZ1`` and ``dZ3 -> a h W ds + dZ3``; ``Z2`` is unaffected.
    """
    if h == 0.0:
        return dz
    m = dz.shape[-1]
    w = signal.lfilter([1.0], [1.0, -(1.0 + h / m)], dz[..., 0, :], axis=-1)
    left = np.concatenate([np.zeros(w.shape[:-1] + (1,)), w[..., :-1]], axis=-1)
    out = np.empty_like(dz)
    out[..., 0, :] = dz[..., 0, :] + h * left / m
    out[..., 1, :] = dz[..., 1, :]
    out[..., 2, :] = dz[..., 2, :] + a * h * left / m
    return out


def _simulate_chunk(args) -> np.ndarray:
    key, m, lo, hi, hs, a = args
    dz = np.stack([_increments(replication_rng(key, i), m) for i in range(lo, hi)])
    return np.stack([functionals_from_increments(_alternative_increments(dz, h, a)) for h in hs])


def _run_chunks(key, m, n_rep, workers, hs=(0.0,), a=0.0):
    jobs = [(key, m, r.start, r.stop, tuple(hs), a) for r in partition(n_rep, CHUNK)]
    if workers is None or workers <= 1 or len(jobs) == 1:
        parts = [_simulate_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    return np.concatenate(parts, axis=1)


@lru_cache(maxsize=16)
def _cached_functionals(seed: int, m: int, n_rep: int, hs: tuple = (0.0,), a: float = 0.0) -> np.ndarray:
    out = _run_chunks(stream_key(seed, "limit", m), m, n_rep, 1, hs, a)
    out.setflags(write=False)
    return out


def _functionals(m, n_rep, seed, workers, hs, a):
    if n_rep < 1:
        raise ParameterError("n_rep must be positive")
    if m < 1:
        raise ParameterError("m must be positive")
    hs = tuple(float(h) for h in hs)
    if workers is None or workers <= 1:
        return _cached_functionals(int(seed), int(m), int(n_rep), hs, float(a))
    out = _run_chunks(stream_key(seed, "limit", m), m, n_rep, workers, hs, float(a))
    out.setflags(write=False)
    return out


def simulate_functionals(m: int, n_rep: int, seed: int, workers: int = 1) -> np.ndarray:
    """``(n_rep, 8)`` array of null functionals; columns as in ``FUNCTIONAL_NAMES``.

    Replication ``i`` always uses the same substream, so the result does not
    depend on ``workers``. Single-worker results are cached.
    """
    return _functionals(m, n_rep, seed, workers, (0.0,), 0.0)[0]


def simulate_alternative_functionals(m: int, n_rep: int, seed: int, h_grid, j_f: float = 1.0,
                                     workers: int = 1) -> np.ndarray:
    """Functionals under each local alternative in ``h_grid``; shape ``(len(h_grid), n_rep, 8)``.

    The base increments are those of :func:`simulate_functionals` with the same
    seed, so ``h = 0`` reproduces the null draws exactly.
    """
    if j_f < 1:
        raise ParameterError("J_f must be at least 1")
    return _functionals(m, n_rep, seed, workers, tuple(h_grid), math.sqrt(j_f - 1.0))


def _perp_scale(h_bar, sigma, j_g, h_perp):
    if h_perp is not None:
        return h_perp
    if j_g - sigma**2 < 0:
        raise DomainError(f"sigma^2 = {sigma**2:.4g} exceeds J_g = {j_g:.4g}")
    if sigma <= 0:
        raise DomainError("sigma must be positive unless h_perp is supplied")
    return h_bar * math.sqrt(j_g / sigma**2 - 1.0)


def ahrt_limit_statistic(s, h_bar: float, sigma_eps_phi_g: float, j_g: float,
                         lam: float = 1.0, symmetric: bool = False,
                         h_perp: float | None = None, perp: tuple[float, float] = (1.0, 0.0)):
    """Limit statistic ``L(h_bar, lam)``.

    ``s`` is a ``LimitSample`` or an array of functionals (last axis of length
    8). ``h_perp`` is ``h_bar * sqrt(J_g / sigma^2 - 1)``; supply it directly
    to evaluate at ``sigma = 0`` under the ``h_bar = -7 sigma`` rule. ``perp``
    gives ``W_perp`` as a combination of ``(Z2, Z3)`` (null: ``(1, 0)``).
    """
    v = s.values if isinstance(s, LimitSample) else np.asarray(s)
    hp = _perp_scale(h_bar, sigma_eps_phi_g, j_g, h_perp)
    u2, u3 = perp
    i_wp = u2 * v[..., I_W2] + u3 * v[..., I_W3]
    int_w, int_w2 = v[..., INT_W], v[..., INT_W2]
    if symmetric:
        delta = h_bar * v[..., I_WW] + lam * hp * i_wp
        return delta - 0.5 * (h_bar**2 + lam**2 * hp**2) * int_w2
    p1 = u2 * v[..., Z2_1] + u3 * v[..., Z3_1]
    delta = h_bar * v[..., I_WW] + lam * hp * (i_wp - p1 * int_w)
    return delta - 0.5 * h_bar**2 * int_w2 - 0.5 * lam**2 * hp**2 * (int_w2 - int_w**2)


def critical_value(h_bar: float, sigma_eps_phi_g: float, lam: float, j_g: float, alpha: float,
                   n_rep: int = 20000, m: int = DEFAULT_M, seed: int = 0,
                   symmetric: bool = False, h_perp: float | None = None, workers: int = 1) -> float:
    """Empirical ``(1 - alpha)``-quantile of the null limit statistic."""
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    if n_rep < 1000:
        raise ParameterError("n_rep must be at least 1000")
    f = simulate_functionals(m, n_rep, seed, workers)
    stat = ahrt_limit_statistic(f, h_bar, sigma_eps_phi_g, j_g, lam, symmetric, h_perp)
    return float(np.quantile(stat, 1.0 - alpha))


def rule_critical_values(sigmas, j_g: float, alpha: float, symmetric: bool, n_rep: int,
                         m: int, seed: int, workers: int = 1, multiplier: float = -7.0) -> np.ndarray:
    """Critical values on a sigma grid for the ``h_bar = multiplier * sigma`` rule (lam = 1)."""
    f = simulate_functionals(m, n_rep, seed, workers)
    out = []
    for s in np.asarray(sigmas, dtype=float):
        hp = multiplier * math.sqrt(max(j_g - s * s, 0.0))
        stat = ahrt_limit_statistic(f, multiplier * s, s, j_g, 1.0, symmetric, h_perp=hp)
        out.append(np.quantile(stat, 1.0 - alpha))
    return np.array(out)


@dataclass(frozen=True)
class CriticalValueModel:
    """Degree-4 polynomial ``c(sigma)`` for the ``h_bar = -7 sigma`` rule."""

    reference_name: str
    alpha: float
    coefficients: tuple
    domain: tuple
    symmetric: bool = False
    j_g: float = 1.0
    h_bar_rule: str = "-7*sigma"
    max_abs_residual: float | None = None

    def __call__(self, sigma: float) -> float:
        lo, hi = self.domain
        if not lo - 1e-9 <= sigma <= hi + 1e-9:
            raise DomainError(f"sigma = {sigma:.4g} outside polynomial domain [{lo:.4g}, {hi:.4g}]")
        return float(np.polynomial.polynomial.polyval(sigma, self.coefficients))

    def to_text(self) -> str:
        fmt = lambda xs: " ".join(f"{x:.6f}" for x in xs)  # noqa: E731
        lines = [
            f"name: {self.reference_name}",
            f"alpha: {self.alpha:.6f}",
            f"h_bar_rule: {self.h_bar_rule}",
            f"symmetric: {str(self.symmetric).lower()}",
            f"j_g: {self.j_g:.6f}",
            f"domain: {fmt(self.domain)}",
            f"coefficients: {fmt(self.coefficients)}",
        ]
        if self.max_abs_residual is not None:
            lines.append(f"max_abs_residual: {self.max_abs_residual:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CriticalValueModel":
        rec = {}
        for line in text.splitlines():
            if line.strip():
                key, _, val = line.partition(":")
                rec[key.strip()] = val.strip()
        try:
            floats = lambda k: tuple(float(x) for x in rec[k].split())  # noqa: E731
            coefs = floats("coefficients")
            domain = floats("domain")
            if len(coefs) != 5 or len(domain) != 2:
                raise ValueError("expected 5 coefficients and a 2-point domain")
            return cls(
                reference_name=rec["name"],
                alpha=float(rec["alpha"]),
                coefficients=coefs,
                domain=domain,
                symmetric=rec.get("symmetric", "false") == "true",
                j_g=float(rec.get("j_g", "nan")),
                h_bar_rule=rec.get("h_bar_rule", "-7*sigma"),
                max_abs_residual=float(rec["max_abs_residual"]) if "max_abs_residual" in rec else None,
            )
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"malformed critical-value record: {exc}") from None


def sigma_grid(j_g: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ParameterError("grid step must be positive")
    top = math.sqrt(j_g)
    grid = np.arange(0.0, top + 1e-12, step)
    if top - grid[-1] > 1e-9:
        grid = np.append(grid, top)
    return grid


def fit_cv_polynomial(g, alpha: float = 0.05, symmetric: bool = False, grid_step: float = 0.01,
                      n_rep: int = 20000, m: int = DEFAULT_M, seed: int = 0,
                      workers: int = 1) -> CriticalValueModel:
    """OLS degree-4 fit of simulated critical values over ``[0, sqrt(J_g)]``.

    ``g`` is a reference density (only its name and ``fisher_info_j`` are used).
    """
    j_g = float(g.fisher_info_j)
    grid = sigma_grid(j_g, grid_step)
    if grid.size < 5:
        raise ParameterError(f"grid has {grid.size} point(s); a degree-4 fit needs at least 5")
    cvs = rule_critical_values(grid, j_g, alpha, symmetric, n_rep, m, seed, workers)
    coefs = np.polynomial.polynomial.polyfit(grid, cvs, 4)
    resid = cvs - np.polynomial.polynomial.polyval(grid, coefs)
    return CriticalValueModel(
        reference_name=g.name,
        alpha=alpha,
        coefficients=tuple(round(float(c), 6) for c in coefs),
        domain=(0.0, round(math.sqrt(j_g), 6)),
        symmetric=symmetric,
        j_g=j_g,
        max_abs_residual=float(np.abs(resid).max()),
    )


def likelihood_log_weight(f: np.ndarray, h: float, j_f: float) -> np.ndarray:
    """``h Delta_f - h^2 J_f int W^2 / 2`` with ``W_phi_f = W + sqrt(J_f - 1) Z3``."""
    a = math.sqrt(j_f - 1.0)
    delta_f = f[:, I_WW] + a * f[:, I_W3]
    return h * delta_f - 0.5 * h * h * j_f * f[:, INT_W2]


def _reweighted_power(stat: np.ndarray, log_w: np.ndarray, alpha: float) -> float:
    n = stat.size
    k = int(round(alpha * n))
    if k == 0:
        return 0.0
    top = np.argpartition(stat, n - k)[n - k:]
    return float(np.exp(logsumexp(log_w[top]) - math.log(n)))


def _null_cutoff(stat: np.ndarray, alpha: float) -> float:
    """The ``round(alpha n)``-th largest null value; rejecting at ``>=`` gives exact level."""
    n = stat.size
    k = int(round(alpha * n))
    if k == 0:
        return float("inf")
    return float(np.partition(stat, n - k)[n - k])


def _check_alpha_grid(alpha, h_grid, j_f, method="simulate"):
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    if j_f < 1:
        raise ParameterError("J_f must be at least 1")
    if method not in ("simulate", "reweight"):
        raise ParameterError("method must be 'simulate' or 'reweight'")
    h = np.atleast_1d(np.asarray(h_grid, dtype=float))
    if np.any(h > 0):
        raise ParameterError("local alternatives must satisfy h <= 0")
    return h


def _power_curve(stat_fn, j_f, hs, alpha, n_rep, m, seed, workers, method):
    """Power of ``stat_fn`` (functionals, h) -> statistic at each ``h``.

    ``simulate`` draws the processes under each alternative from the null
    increments; ``reweight`` multiplies null indicators by the likelihood ratio.
    """
    null = simulate_functionals(m, n_rep, seed, workers)
    level = round(alpha * n_rep) / n_rep
    out = []
    if method == "reweight":
        for h in hs:
            if h == 0.0:
                out.append(level)
                continue
            out.append(_reweighted_power(stat_fn(null, h), likelihood_log_weight(null, h, j_f), alpha))
        return np.array(out)
    alt = simulate_alternative_functionals(m, n_rep, seed, tuple(hs), j_f, workers)
    for i, h in enumerate(hs):
        if h == 0.0:
            # Every level-alpha test has power alpha at the null.
            out.append(level)
            continue
        cut = _null_cutoff(stat_fn(null, h), alpha)
        out.append(float(np.mean(stat_fn(alt[i], h) >= cut)))
    return np.array(out)


def _envelope_stat(j_f, symmetric):
    a = math.sqrt(j_f - 1.0)

    def stat(f, h):
        delta_f = f[:, I_WW] + a * f[:, I_W3]
        if symmetric:
            return h * delta_f - 0.5 * h * h * j_f * f[:, INT_W2]
        delta = delta_f - a * f[:, Z3_1] * f[:, INT_W]
        info = j_f * f[:, INT_W2] - (j_f - 1.0) * f[:, INT_W] ** 2
        return h * delta - 0.5 * h * h * info

    return stat


def power_envelope(j_f: float, h_grid, alpha: float = 0.05, symmetric: bool = False,
                   n_rep: int = 40000, m: int = DEFAULT_M, seed: int = 0,
                   workers: int = 1, method: str = "simulate") -> np.ndarray:
    """Envelope power at each ``h``: the point-optimal test with ``h_bar = h``.

    Non-symmetric case uses the bridge-invariant statistic
    ``h Delta* - h^2 I* / 2`` with ``Delta* = Delta_f - (W_phi_f(1) - W(1)) int W``
    and ``I* = J_f int W^2 - (J_f - 1)(int W)^2``; the symmetric case uses
    ``h Delta_f - h^2 J_f int W^2 / 2``. Power at ``h = 0`` equals ``alpha``
    up to rounding of ``alpha * n_rep``.
    """
    hs = _check_alpha_grid(alpha, h_grid, j_f, method)
    return _power_curve(_envelope_stat(j_f, symmetric), j_f, hs, alpha, n_rep, m, seed, workers, method)


def _perp_loadings(j_f, j_fg, sigma, j_g, tol=1e-9):
    """Loadings of ``W_perp`` on ``(Z2, Z3)`` when ``W_phi_f = Z1 + a Z3``."""
    a = math.sqrt(j_f - 1.0)
    if a < tol:
        if abs(j_fg - sigma) > 1e-6:
            raise ParameterError("with J_f = 1 the cross moments must satisfy J_fg = sigma")
        c = 0.0
    else:
        c = (j_fg - sigma) / a
    d2 = j_g - sigma**2 - c**2
    if d2 < -1e-8:
        raise ParameterError(
            f"covariance of (W_e, W_phi_f, W_phi_g) is not positive semidefinite (deficit {d2:.3g})"
        )
    d = math.sqrt(max(d2, 0.0))
    scale = math.sqrt(max(j_g - sigma**2, 0.0))
    if scale < tol:
        return 0.0, 0.0
    # Z2 carries the component of W_phi_g orthogonal to W_e and W_phi_f.
    return d / scale, c / scale


def asymptotic_test_power(f_params, j_g: float, lam: float, h_grid, alpha: float = 0.05,
                          symmetric: bool = False, n_rep: int = 40000, m: int = DEFAULT_M,
                          seed: int = 0, h_bar: float | None = None,
                          h_perp: float | None = None, workers: int = 1,
                          method: str = "simulate") -> np.ndarray:
    """Asymptotic power curve of the ``L_g`` test when the innovations have density f.

    ``f_params = (j_f, j_fg, sigma_eps_phi_g)``. The test uses
    ``h_bar = -7 sigma`` unless given; its critical value is the null quantile
    from the same base draws.
    """
    j_f, j_fg, sigma = (float(x) for x in f_params)
    hs = _check_alpha_grid(alpha, h_grid, j_f, method)
    if sigma**2 > j_g + 1e-9:
        raise ParameterError("sigma^2 exceeds J_g")
    u2, u3 = _perp_loadings(j_f, j_fg, sigma, j_g)
    if h_bar is None:
        h_bar = -7.0 * sigma
        if h_perp is None:
            h_perp = -7.0 * math.sqrt(max(j_g - sigma**2, 0.0))

    def stat(f, _h):
        return ahrt_limit_statistic(f, h_bar, sigma, j_g, lam, symmetric, h_perp, perp=(u2, u3))

    return _power_curve(stat, j_f, hs, alpha, n_rep, m, seed, workers, method)


def ers_asymptotic_power(j_f: float, h_grid, alpha: float = 0.05, h_bar: float = -7.0,
                         n_rep: int = 40000, m: int = DEFAULT_M, seed: int = 0,
                         workers: int = 1, method: str = "simulate") -> np.ndarray:
    """Asymptotic power of the ERS point-optimal test (the ``lam = 0`` statistic)."""
    hs = _check_alpha_grid(alpha, h_grid, j_f, method)

    def stat(f, _h):
        return h_bar * f[:, I_WW] - 0.5 * h_bar**2 * f[:, INT_W2]

    return _power_curve(stat, j_f, hs, alpha, n_rep, m, seed, workers, method)
