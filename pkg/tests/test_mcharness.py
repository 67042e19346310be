import math

import numpy as np
import pytest
from scipy import stats

from rankunitroot.errors import DomainError, ParameterError
from rankunitroot.mcharness import (
    CSV_HEADER,
    INNOVATIONS,
    OUTSIDE_CLASS,
    PRESETS,
    DgpConfig,
    StudyError,
    design_from_config,
    draw_innovations,
    generate,
    iter_study,
    parse_test,
    preset,
    run_study,
    valid_test_labels,
)


def test_rho_from_local_parameter():
    assert DgpConfig(100, h=-7.0).rho == pytest.approx(0.93)
    assert DgpConfig(2500).rho == 1.0


@pytest.mark.parametrize("name", sorted(set(INNOVATIONS) - OUTSIDE_CLASS))
def test_innovations_standardized(name):
    e = draw_innovations(name, np.random.default_rng(0), 200_000)
    assert abs(e.mean()) < 0.02
    assert e.std() == pytest.approx(1.0, abs=0.03 if name != "t3" else 0.1)


def test_skew_normal_skewness():
    e = draw_innovations("skewnormal", np.random.default_rng(1), 400_000)
    assert stats.skew(e) == pytest.approx(0.8145, abs=0.03)


def test_unknown_innovation():
    with pytest.raises(DomainError, match="gaussian"):
        draw_innovations("uniform", np.random.default_rng(0), 5)


def test_random_walk_increments_have_innovation_variance():
    y = generate(DgpConfig(100_000, mu=4.0, innovation="laplace"), np.random.default_rng(2))
    assert np.var(np.diff(y)) == pytest.approx(1.0, abs=0.02)


def test_arma_lag_one_autocorrelation():
    cfg = DgpConfig(100_000, error_model="arma(-0.5, -0.5)")
    assert cfg.error_model == "arma(-0.5,-0.5)"
    dy = np.diff(generate(cfg, np.random.default_rng(3)))
    r1 = np.corrcoef(dy[1:], dy[:-1])[0, 1]
    assert r1 == pytest.approx(-1.25 / 1.75, abs=0.02)


def test_stationary_alternative_recursion():
    cfg = DgpConfig(50, h=-10.0, mu=1.0)
    rng = np.random.default_rng(4)
    y = generate(cfg, rng)
    e = draw_innovations("gaussian", np.random.default_rng(4), 50)
    x = np.zeros(50)
    x[0] = e[0]
    for t in range(1, 50):
        x[t] = cfg.rho * x[t - 1] + e[t]
    np.testing.assert_allclose(y, 1.0 + x, atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(t_len=2), dict(t_len=10, h=1.0), dict(t_len=10, error_model="garch"),
                                    dict(t_len=10, error_model="arma(1.2,0)"),
                                    dict(t_len=10, error_model="arma(0,-1.5)")])
def test_dgp_validation(kwargs):
    with pytest.raises(ParameterError):
        DgpConfig(**kwargs)


def test_parse_test_labels():
    assert parse_test("AHRT-Laplace").label == "ahrt-laplace"
    assert parse_test("ahrt-signed-t3").kind == "ahrt-signed"
    assert "df-rho" in valid_test_labels() and "hrt-gaussian" not in valid_test_labels()
    with pytest.raises(ParameterError, match="ahrt-gaussian"):
        parse_test("pp-test")


def test_empty_study_errors():
    with pytest.raises(StudyError):
        run_study(["ers"], [DgpConfig(50)], n_rep=0, seed=1)
    with pytest.raises(StudyError):
        run_study([], [DgpConfig(50)], n_rep=5, seed=1)
    with pytest.raises(ParameterError):
        run_study(["ers"], [DgpConfig(50)], n_rep=5, seed=None)


def test_study_output_and_common_random_numbers():
    dgps = [DgpConfig(100, innovation="laplace")]
    res = run_study(["ahrt-gaussian", "ers"], dgps, h_grid=[0.0, -7.0], n_rep=60, seed=5, chunk=25)
    assert len(res.cells) == 4
    lines = res.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("ahrt-gaussian,laplace,iid,100,0,60,")
    cell = res.lookup("ers", "laplace", -7.0)
    assert cell.mc_se == pytest.approx(math.sqrt(cell.reject_rate * (1 - cell.reject_rate) / 60))
    # the same seed gives the same draws for a test regardless of which other tests run
    alone = run_study(["ers"], dgps, h_grid=[0.0, -7.0], n_rep=60, seed=5, chunk=25)
    assert alone.lookup("ers", "laplace", -7.0) == cell
    # chunking does not change the answer
    other = run_study(["ers"], dgps, h_grid=[0.0, -7.0], n_rep=60, seed=5, chunk=7)
    assert other.to_csv() == alone.to_csv()


def test_study_workers_identical():
    dgps = [DgpConfig(80, innovation="t3")]
    a = run_study(["ahrt-laplace"], dgps, [0.0], n_rep=40, seed=2, chunk=10, workers=1)
    b = run_study(["ahrt-laplace"], dgps, [0.0], n_rep=40, seed=2, chunk=10, workers=2)
    assert a.to_csv() == b.to_csv()


def test_iter_study_is_lazy():
    gen = iter_study(["df-rho"], [DgpConfig(60), DgpConfig(60, innovation="t3")], [0.0], n_rep=10, seed=0)
    first = next(gen)
    assert first.innovation == "gaussian"
    gen.close()


def test_outside_class_reported():
    res = run_study(["ahrt-gaussian"], [DgpConfig(60, innovation="t1")], [0.0], n_rep=20, seed=3)
    assert res.outside_class == ["t1"]


def test_presets_and_config():
    assert set(PRESETS) >= {"desk", "full-iid", "full-arma"}
    desk = preset("desk")
    tests, dgps, h_grid, opts = design_from_config(desk)
    assert len(tests) * len(dgps) * len(h_grid) == 9
    assert opts["n_rep"] == 2000 and dgps[0].t_len == 100
    assert preset("full-arma")["p"] == 8
    with pytest.raises(ParameterError, match="desk"):
        preset("nope")
    with pytest.raises(ParameterError):
        design_from_config({"tests": ["ers"], "innovations": ["gaussian"], "t_len": 50, "colour": 1})
    with pytest.raises(ParameterError):
        design_from_config({"tests": ["ers"], "innovations": ["gaussian"]})
