import math

import numpy as np
import pytest
from scipy import integrate

from rankunitroot.densities import (
    BUILTIN_DENSITIES,
    GAUSSIAN,
    LAPLACE,
    T3,
    cross_moments,
    fit_kernel_density,
    get_density,
    kde_bandwidth,
    rank_scores,
    score_at_rank_quantile,
    signed_rank_scores,
)
from rankunitroot.errors import DegenerateSampleError, DomainError

BUILTINS = list(BUILTIN_DENSITIES.values())

# Independent oracle: midpoint rule on a 10^6-point u-grid with scipy.stats quantiles.
ORACLE_LAPLACE_GAUSSIAN = (0.981340, 1.128379)
ORACLE_T3_GAUSSIAN = (0.90964, 1.280345)


def test_score_at_rank_quantile_examples():
    assert score_at_rank_quantile(GAUSSIAN, 1, 2) == pytest.approx(0.0, abs=1e-15)
    assert score_at_rank_quantile(LAPLACE, 3, 4) == pytest.approx(math.sqrt(2))
    assert score_at_rank_quantile(T3, 5, 10) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("i,n", [(0, 5), (5, 5), (7, 5), (1, 0)])
def test_score_at_rank_quantile_domain(i, n):
    with pytest.raises(DomainError):
        score_at_rank_quantile(GAUSSIAN, i, n)


def test_t3_riemann_fisher_sum_approaches_two():
    s = rank_scores(T3, 100_000)
    assert abs(np.mean(s**2) - 2.0) <= 0.02


@pytest.mark.parametrize("g", BUILTINS, ids=lambda g: g.name)
def test_riemann_fisher_sum(g):
    s = rank_scores(g, 100_000)
    assert abs(np.mean(s**2) - g.fisher_info_j) <= 0.02


@pytest.mark.parametrize("g", BUILTINS, ids=lambda g: g.name)
def test_score_integrals(g):
    mean = sum(integrate.quad(lambda x: g.score(x) * g.pdf(x), a, b)[0] for a, b in ((-np.inf, 0), (0, np.inf)))
    info = sum(integrate.quad(lambda x: g.score(x) ** 2 * g.pdf(x), a, b)[0] for a, b in ((-np.inf, 0), (0, np.inf)))
    var = sum(integrate.quad(lambda x: x * x * g.pdf(x), a, b)[0] for a, b in ((-np.inf, 0), (0, np.inf)))
    assert abs(mean) < 1e-6
    assert g.sigma_g**2 * info == pytest.approx(g.fisher_info_j, abs=1e-6)
    assert math.sqrt(var) == pytest.approx(g.sigma_g, abs=1e-6)
    assert g.fisher_info_j >= 1.0


@pytest.mark.parametrize("g", BUILTINS, ids=lambda g: g.name)
def test_quantile_cdf_inverse(g):
    u = np.linspace(0.001, 0.999, 199)
    assert np.max(np.abs(g.cdf(g.quantile(u)) - u)) < 1e-8


@pytest.mark.parametrize("g", BUILTINS, ids=lambda g: g.name)
def test_cross_moments_self(g):
    for method in ("quantile", "density"):
        s, j = cross_moments(g, g, method=method)
        assert s == pytest.approx(1.0, abs=1e-6)
        assert j == pytest.approx(g.fisher_info_j, abs=1e-6)


def test_cross_moments_against_grid_oracle():
    s, j = cross_moments(LAPLACE, GAUSSIAN)
    assert s == pytest.approx(ORACLE_LAPLACE_GAUSSIAN[0], abs=1e-4)
    assert j == pytest.approx(2 / math.sqrt(math.pi), abs=1e-8)
    assert j == pytest.approx(ORACLE_LAPLACE_GAUSSIAN[1], abs=1e-5)
    s, j = cross_moments(T3, GAUSSIAN)
    assert s == pytest.approx(ORACLE_T3_GAUSSIAN[0], abs=1e-3)
    assert j == pytest.approx(ORACLE_T3_GAUSSIAN[1], abs=1e-4)


@pytest.mark.parametrize("f", BUILTINS, ids=lambda g: g.name)
@pytest.mark.parametrize("g", BUILTINS, ids=lambda g: g.name)
def test_cross_moments_methods_agree_and_cauchy_schwarz(f, g):
    s1, j1 = cross_moments(f, g, "quantile")
    s2, j2 = cross_moments(f, g, "density")
    assert s1 == pytest.approx(s2, abs=1e-6)
    assert j1 == pytest.approx(j2, abs=1e-6)
    assert s1**2 <= g.fisher_info_j + 1e-9


def test_rank_scores_cached_readonly():
    a = rank_scores(GAUSSIAN, 50)
    assert a is rank_scores(GAUSSIAN, 50)
    assert not a.flags.writeable
    s = signed_rank_scores(LAPLACE, 10)
    assert np.all(s == pytest.approx(math.sqrt(2)))


def test_get_density_unknown():
    with pytest.raises(DomainError, match="gaussian"):
        get_density("cauchy")


def test_bandwidth_rule():
    assert kde_bandwidth(100, 1.0) == pytest.approx((4 / 300) ** 0.2)
    assert kde_bandwidth(100, 1.0) == pytest.approx(0.4217, abs=1e-4)


def test_kde_gaussian_sample(rng):
    x = rng.standard_normal(2500)
    kde = fit_kernel_density(x, x.std())
    assert abs(kde.fisher_info_j - 1.0) <= 0.15
    assert kde.total_mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.isfinite(kde.score(np.linspace(x.min(), x.max(), 101))))
    u = np.linspace(0.001, 0.999, 301)
    assert np.max(np.abs(kde.cdf(kde.quantile(u)) - u)) < 1e-9


def test_kde_extreme_quantiles(rng):
    kde = fit_kernel_density(rng.standard_t(3, 300), 1.0)
    q = kde.quantile(np.array([1e-12, 0.5, 1 - 1e-12]))
    assert q[0] < kde.sample[0] and q[2] > kde.sample[-1]
    assert np.all(np.diff(q) > 0)


def test_kde_degenerate():
    with pytest.raises(DegenerateSampleError):
        fit_kernel_density(np.full(10, 3.0), 1.0)
    with pytest.raises(DegenerateSampleError):
        fit_kernel_density(np.array([]), 1.0)
