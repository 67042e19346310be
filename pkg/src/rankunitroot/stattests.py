"""Unit root tests: AHRT (rank and signed rank), HRT, DF-rho and ERS.

All rank tests reject for large values of ``L = h_bar Delta - h_bar^2 I / 2``;
DF-rho and ERS reject for small values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import cvtables
from .densities import (
    BUILTIN_DENSITIES,
    ReferenceDensity,
    fit_kernel_density,
    get_density,
    kde_bandwidth,
    rank_scores,
)
from .errors import ContractViolation, DomainError, IllConditionedError, ParameterError
from .limitsim import DEFAULT_M, critical_value as limit_critical_value
from .prewhiten import as_series, discretize, fit_ar
from .rankpaths import build_paths, compute_ranks, orthogonalize, stochastic_integral
from .rng import partition, replication_rng, stream_key

__all__ = [
    "TestResult",
    "ahrt",
    "ahrt_signed",
    "hrt",
    "jfg_plugin",
    "df_rho",
    "ers_test",
    "ers_statistic",
    "df_rho_statistic",
    "simulated_null_critical_value",
    "SIGMA_FLOOR",
    "DF_RHO_CRITICAL_VALUES",
    "ERS_CRITICAL_VALUES",
]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 0.01
HRT_CEILING_GAP = 0.01
H_BAR_MULTIPLIER = -7.0
DF_RHO_CRITICAL_VALUES = {(100, 0.05): -13.52, (2500, 0.05): -14.05}
ERS_CRITICAL_VALUES = {(100, 0.05): 3.11, (2500, 0.05): 3.26}


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test with the intermediate quantities behind it.

    ``reject_direction`` is ``"upper"`` when the null is rejected for
    ``statistic >= critical_value`` and ``"lower"`` for ``statistic <= critical_value``.
    """

    __test__ = False  # not a pytest class

    test_name: str
    statistic: float
    critical_value: float
    reject: bool
    h_bar: float
    alpha: float
    reject_direction: str
    nuisance: dict = field(default_factory=dict)
    delta_hat: float = float("nan")
    info_hat: float = float("nan")
    cv_source: str = ""
    t_len: int = 0
    p: int = 0
    notes: tuple = ()

    def to_dict(self) -> dict:
        return asdict(self)


def _decide(stat, cv, direction):
    return bool(stat >= cv) if direction == "upper" else bool(stat <= cv)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")


def _resolve(g):
    if isinstance(g, str):
        if g.lower() == "estimated":
            return "estimated"
        return get_density(g)
    return g


def _residual_fit(y, p, theory_mode):
    fit = fit_ar(y, p, include_level=False)
    if theory_mode:
        fit = discretize(fit)
    dy = np.diff(fit.series)
    mean_dy = dy[p:].sum() / fit.t_len
    offset = mean_dy * (1.0 - fit.gamma_hat.sum())
    return fit, offset


def _estimated_reference(y, p, residuals, offset):
    n = residuals.size
    sigma_f = math.sqrt(np.sum((residuals - offset) ** 2) / n)
    levels = fit_ar(y, p, include_level=True)
    return fit_kernel_density(levels.ols_residuals, sigma_f)


def _clamp(sigma, lo, hi, notes):
    if sigma < lo:
        notes.append(f"sigma_eps_phi_g = {sigma:.4g} clamped to {lo:.4g}")
        log.info(notes[-1])
        return lo
    if sigma > hi:
        notes.append(f"sigma_eps_phi_g = {sigma:.4g} clamped to {hi:.4g}")
        log.info(notes[-1])
        return hi
    return sigma


def _h_bar(rule, sigma):
    if rule is None or (isinstance(rule, str) and rule == "auto"):
        return H_BAR_MULTIPLIER * sigma, True
    h = float(rule)
    if not h < 0:
        raise ParameterError("a fixed h_bar must be negative")
    return h, False


def _rank_cv(g, name, symmetric, alpha, h_bar, auto, sigma, lam, cv_mode, cv_model, n_rep, m, seed, notes):
    j_g = g.fisher_info_j
    if cv_mode not in ("poly", "sim"):
        raise ParameterError("cv_mode must be 'poly' or 'sim'")
    if cv_mode == "poly" and auto and lam == 1.0:
        model = cv_model if cv_model is not None else cvtables.lookup(name, symmetric, alpha)
        if model is not None:
            return model(min(sigma, model.domain[1])), "polynomial"
        notes.append("no polynomial for this reference density and level; critical value simulated")
    elif cv_mode == "poly":
        notes.append("polynomial requires h_bar = -7 sigma; critical value simulated")
    h_perp = H_BAR_MULTIPLIER * math.sqrt(max(j_g - sigma**2, 0.0)) if auto else None
    if h_perp is None and sigma**2 >= j_g:
        h_perp = 0.0
    cv = limit_critical_value(h_bar, sigma, lam, j_g, alpha, n_rep, m, seed, symmetric, h_perp)
    return cv, "simulated"


def _prepare(y, g, p, theory_mode):
    y = as_series(y)
    fit, offset = _residual_fit(y, p, theory_mode)
    g = _resolve(g)
    if g == "estimated":
        g = _estimated_reference(y, p, fit.residuals, offset)
    paths = build_paths(fit.residuals, g, fit.t_len, p, level_offset=offset)
    return y, fit, g, paths


def ahrt(y, g="gaussian", p: int = 0, alpha: float = 0.05, h_bar="auto", *, cv_mode: str = "poly",
         theory_mode: bool = False, cv_model=None, n_rep: int = 20000, m: int = DEFAULT_M,
         seed: int = 0) -> TestResult:
    """Approximate hybrid rank test (rank version, ``lam = 1``).

    Parameters
    ----------
    y : array_like
        Levels ``Y_1..Y_T``.
    g : str or reference density
        ``"gaussian"``, ``"laplace"``, ``"t3"``, ``"estimated"`` or a density object.
    p : int
        AR order used to prewhiten the differences.
    h_bar : "auto" or float
        ``"auto"`` uses ``-7 * sigma_eps_phi_g_hat``; a fixed negative value forces
        a simulated critical value.
    cv_mode : {"poly", "sim"}
        Frozen polynomial in ``sigma_eps_phi_g`` or fresh limit simulation with
        ``n_rep``, ``m`` and ``seed``.
    theory_mode : bool
        Snap the AR coefficients to the ``1/sqrt(T)`` grid before ranking.
    """
    _check_alpha(alpha)
    y, fit, g, paths = _prepare(y, g, p, theory_mode)
    j_g = g.fisher_info_j
    notes = []
    raw = paths.sigma_eps_phi_g_hat
    sigma = _clamp(raw, SIGMA_FLOOR, math.sqrt(j_g), notes)
    h, auto = _h_bar(h_bar, sigma)

    w = paths.w_eps
    i_wb = stochastic_integral(w, paths.b_phi_g)
    int_w, int_w2 = w.integral(), w.integral_sq()
    ratio = j_g / sigma**2
    delta = i_wb / sigma + w.endpoint() * int_w
    info = ratio * int_w2 - int_w**2 * (ratio - 1.0)
    stat = h * delta - 0.5 * h * h * info

    cv, source = _rank_cv(g, g.name, False, alpha, h, auto, sigma, 1.0, cv_mode, cv_model,
                          n_rep, m, seed, notes)
    return TestResult(
        test_name=f"ahrt-{g.name}", statistic=float(stat), critical_value=float(cv),
        reject=_decide(stat, cv, "upper"), h_bar=h, alpha=alpha, reject_direction="upper",
        nuisance={"sigma_f": paths.sigma_f_hat, "sigma_eps_phi_g": sigma,
                  "sigma_eps_phi_g_raw": raw, "j_g": j_g},
        delta_hat=float(delta), info_hat=float(info), cv_source=source,
        t_len=fit.t_len, p=p, notes=tuple(notes),
    )


def ahrt_signed(y, g="gaussian", p: int = 0, alpha: float = 0.05, h_bar="auto", *,
                cv_mode: str = "poly", theory_mode: bool = False, cv_model=None,
                n_rep: int = 20000, m: int = DEFAULT_M, seed: int = 0) -> TestResult:
    """Signed-rank AHRT; needs a reference density symmetric about zero.

    The cross moment is estimated with signed-rank scores, matching the path
    that enters the statistic.
    """
    _check_alpha(alpha)
    g0 = _resolve(g)
    if g0 == "estimated" or not getattr(g0, "symmetric", False):
        raise ContractViolation("the signed-rank test requires a symmetric reference density")
    y, fit, g, paths = _prepare(y, g0, p, theory_mode)
    j_g = g.fisher_info_j
    notes = []
    raw = paths.sigma_eps_phi_g_signed_hat
    sigma = _clamp(raw, SIGMA_FLOOR, math.sqrt(j_g), notes)
    h, auto = _h_bar(h_bar, sigma)

    w = paths.w_eps
    delta = stochastic_integral(w, paths.w_phi_g) / sigma
    info = j_g / sigma**2 * w.integral_sq()
    stat = h * delta - 0.5 * h * h * info

    cv, source = _rank_cv(g, g.name, True, alpha, h, auto, sigma, 1.0, cv_mode, cv_model,
                          n_rep, m, seed, notes)
    return TestResult(
        test_name=f"ahrt-signed-{g.name}", statistic=float(stat), critical_value=float(cv),
        reject=_decide(stat, cv, "upper"), h_bar=h, alpha=alpha, reject_direction="upper",
        nuisance={"sigma_f": paths.sigma_f_hat, "sigma_eps_phi_g": sigma,
                  "sigma_eps_phi_g_raw": raw, "j_g": j_g},
        delta_hat=float(delta), info_hat=float(info), cv_source=source,
        t_len=fit.t_len, p=p, notes=tuple(notes),
    )


JFG_BANDWIDTH_SCALE = 0.3


def jfg_plugin(residuals, g, bandwidth_scale: float = JFG_BANDWIDTH_SCALE) -> float:
    """Plug-in estimate of ``J_fg`` from residuals.

    ``(1/n) sum sigma_f_hat phi_fhat(e_t) sigma_g phi_g(G^{-1}(R_t / (n + 1)))`` with
    ``phi_fhat`` the Gaussian-kernel score, clipped to ``+-10 sqrt(J_fhat J_g)``.
    The kernel bandwidth is ``bandwidth_scale`` times the density rule of thumb;
    a score needs less smoothing than a density, and the full rule flattens
    kinks such as the Laplace cusp.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    g = _resolve(g)
    sigma_f = float(np.sqrt(np.mean((e - e.mean()) ** 2))) if e.size else 0.0
    if not bandwidth_scale > 0:
        raise ParameterError("bandwidth_scale must be positive")
    bw = bandwidth_scale * kde_bandwidth(e.size, sigma_f) if e.size else None
    kde = fit_kernel_density(e, sigma_f, bandwidth=bw)
    rd = compute_ranks(e)
    a = rank_scores(g, e.size)[rd.ranks - 1]
    est = float(np.mean(sigma_f * kde.score(e) * a))
    bound = 10.0 * math.sqrt(kde.fisher_info_j * g.fisher_info_j)
    return float(np.clip(est, -bound, bound))


def hrt(y, g="gaussian", p: int = 0, alpha: float = 0.05, h_bar="auto", jfg_hat: float | None = None,
        *, lam: float | None = None, theory_mode: bool = False, n_rep: int = 20000,
        m: int = DEFAULT_M, seed: int = 0) -> TestResult:
    """Hybrid rank test with estimated ``lam = (J_fg s - s^2) / (J_g - s^2)``.

    ``jfg_hat`` defaults to :func:`jfg_plugin` on the aligned residuals.
    ``lam`` overrides the estimate. The critical value is simulated for the
    realized ``(sigma, lam)``.

    Raises
    ------
    IllConditionedError
        When ``J_g - sigma^2`` is too small to orthogonalize; use :func:`ahrt`.
    """
    _check_alpha(alpha)
    y, fit, g, paths = _prepare(y, g, p, theory_mode)
    j_g = g.fisher_info_j
    notes = []
    raw = paths.sigma_eps_phi_g_hat
    sigma = _clamp(raw, SIGMA_FLOOR, math.sqrt(j_g) - HRT_CEILING_GAP, notes)
    h, auto = _h_bar(h_bar, sigma)
    if jfg_hat is None:
        jfg_hat = jfg_plugin(fit.residuals, g)
    lam_hat = (jfg_hat * sigma - sigma**2) / (j_g - sigma**2) if lam is None else float(lam)

    try:
        b_perp, _ = orthogonalize(paths, j_g, sigma)
    except IllConditionedError as exc:
        raise IllConditionedError(f"{exc}; the AHRT avoids this division") from None
    k = math.sqrt(j_g / sigma**2 - 1.0)
    w = paths.w_eps
    int_w, int_w2 = w.integral(), w.integral_sq()
    delta_e = stochastic_integral(w, w)
    delta_p = k * stochastic_integral(w, b_perp)
    delta = delta_e + lam_hat * delta_p
    info = int_w2 + lam_hat**2 * k * k * (int_w2 - int_w**2)
    stat = h * delta - 0.5 * h * h * info

    h_perp = H_BAR_MULTIPLIER * math.sqrt(j_g - sigma**2) if auto else None
    cv = limit_critical_value(h, sigma, lam_hat, j_g, alpha, n_rep, m, seed, False, h_perp)
    return TestResult(
        test_name=f"hrt-{g.name}", statistic=float(stat), critical_value=float(cv),
        reject=_decide(stat, cv, "upper"), h_bar=h, alpha=alpha, reject_direction="upper",
        nuisance={"sigma_f": paths.sigma_f_hat, "sigma_eps_phi_g": sigma,
                  "sigma_eps_phi_g_raw": raw, "j_g": j_g, "j_fg": float(jfg_hat),
                  "lambda": float(lam_hat)},
        delta_hat=float(delta), info_hat=float(info), cv_source="simulated",
        t_len=fit.t_len, p=p, notes=tuple(notes),
    )


def df_rho_statistic(y, p: int = 0) -> tuple[float, object]:
    fit = fit_ar(y, p, include_level=True)
    return fit.t_len * (fit.rho_hat - 1.0), fit


def ers_statistic(y, p: int = 0, h_bar: float = -7.0) -> tuple[float, dict]:
    """Point-optimal statistic ``[S(a) - a S(1)] / omega^2`` with ``a = 1 + h_bar / T``.

    Both sums of squares use the ``beta`` fitted on the quasi-differenced data at ``a``.
    """
    y = as_series(y)
    t_len = y.size
    a_bar = 1.0 + h_bar / t_len

    def quasi(a):
        ya = np.concatenate(([y[0]], y[1:] - a * y[:-1]))
        za = np.concatenate(([1.0], np.full(t_len - 1, 1.0 - a)))
        return ya, za

    ya, za = quasi(a_bar)
    beta = float(za @ ya / (za @ za))
    s_bar = float(np.sum((ya - za * beta) ** 2))
    y1, z1 = quasi(1.0)
    s_one = float(np.sum((y1 - z1 * beta) ** 2))

    fit = fit_ar(y, p, include_level=True)
    denom = (1.0 - fit.gamma_hat.sum()) ** 2
    if denom < 1e-8:
        raise IllConditionedError("estimated AR polynomial has a root near one; long-run variance undefined")
    sigma_e2 = float(np.sum(fit.ols_residuals**2) / t_len)
    omega2 = sigma_e2 / denom
    stat = (s_bar - a_bar * s_one) / omega2
    return stat, {"beta": beta, "omega2": omega2, "s_alpha": s_bar, "s_one": s_one, "a_bar": a_bar}


def _null_chunk(args):
    test, key, t_len, p, h_bar, lo, hi = args
    out = np.empty(hi - lo)
    for j, i in enumerate(range(lo, hi)):
        y = np.cumsum(replication_rng(key, i).standard_normal(t_len))
        out[j] = df_rho_statistic(y, p)[0] if test == "df-rho" else ers_statistic(y, p, h_bar)[0]
    return out


@lru_cache(maxsize=32)
def simulated_null_critical_value(test: str, t_len: int, p: int = 0, alpha: float = 0.05,
                                  n_rep: int = 20000, seed: int = 0, h_bar: float = -7.0) -> float:
    """Lower ``alpha``-quantile of DF-rho or ERS under a Gaussian random walk of length ``t_len``."""
    if test not in ("df-rho", "ers"):
        raise DomainError(f"no null simulator for {test!r}")
    _check_alpha(alpha)
    if n_rep < 1:
        raise ParameterError("n_rep must be positive")
    key = stream_key(seed, "null", test, t_len, p)
    stats = np.concatenate([_null_chunk((test, key, t_len, p, h_bar, r.start, r.stop))
                            for r in partition(n_rep, 1024)])
    return float(np.quantile(stats, alpha))


def df_rho(y, p: int = 0, alpha: float = 0.05, *, n_rep: int = 20000, seed: int = 0) -> TestResult:
    """Dickey-Fuller coefficient test ``T (rho_hat - 1)`` from the ADF levels regression."""
    _check_alpha(alpha)
    stat, fit = df_rho_statistic(y, p)
    cv = DF_RHO_CRITICAL_VALUES.get((fit.t_len, alpha))
    source = "tabulated"
    if cv is None:
        cv, source = simulated_null_critical_value("df-rho", fit.t_len, p, alpha, n_rep, seed), "simulated"
    return TestResult(
        test_name="df-rho", statistic=float(stat), critical_value=float(cv),
        reject=_decide(stat, cv, "lower"), h_bar=float("nan"), alpha=alpha,
        reject_direction="lower", nuisance={"rho_hat": fit.rho_hat}, cv_source=source,
        t_len=fit.t_len, p=p,
    )


def ers_test(y, p: int = 0, alpha: float = 0.05, h_bar: float = -7.0, *, n_rep: int = 20000,
             seed: int = 0) -> TestResult:
    """Point-optimal ERS test with AR(p) long-run variance; rejects for small values."""
    _check_alpha(alpha)
    if not h_bar < 0:
        raise ParameterError("h_bar must be negative")
    y = as_series(y)
    stat, parts = ers_statistic(y, p, h_bar)
    cv = ERS_CRITICAL_VALUES.get((y.size, alpha)) if h_bar == -7.0 else None
    source = "tabulated"
    if cv is None:
        cv = simulated_null_critical_value("ers", y.size, p, alpha, n_rep, seed, h_bar)
        source = "simulated"
    return TestResult(
        test_name="ers", statistic=float(stat), critical_value=float(cv),
        reject=_decide(stat, cv, "lower"), h_bar=h_bar, alpha=alpha, reject_direction="lower",
        nuisance={"omega2": parts["omega2"], "beta": parts["beta"]}, cv_source=source,
        t_len=y.size, p=p,
    )
