"""Data generation and batched size/power studies.

Series follow ``Y_t = mu + X_t``, ``X_t = rho X_{t-1} + v_t`` with
``rho = 1 + h/T``, ``X_0 = 0`` and ARMA errors ``v_t`` started from zero.
Within a study, the innovations of replication ``i`` depend only on
``(seed, innovation, error_model, T, i)``; every test and every ``h`` in the
grid sees the same draws.
"""

from __future__ import annotations

import csv
import io
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np
from scipy import optimize, signal, special

from . import stattests
from .errors import DomainError, ParameterError, RankUnitRootError
from .rng import partition, replication_rng, stream_key

__all__ = [
    "DgpConfig",
    "TestSpec",
    "StudyCell",
    "StudyResult",
    "INNOVATIONS",
    "OUTSIDE_CLASS",
    "generate",
    "draw_innovations",
    "parse_test",
    "run_study",
    "iter_study",
    "preset",
    "PRESETS",
    "StudyError",
]

CSV_HEADER = ("test", "innovation", "error_model", "T", "h", "n_rep", "reject_rate", "mc_se")
FAILURE_CAP = 0.001
SKEWNORMAL_SKEWNESS = 0.8145
SKEW_T4_SKEWNESS = 2.7


class StudyError(RankUnitRootError, RuntimeError):
    """A study could not be completed (empty design or too many failed replications)."""


# ---------------------------------------------------------------- innovations


@lru_cache(maxsize=None)
def _skewnormal_delta(skewness: float) -> float:
    def skew(d):
        m = d * math.sqrt(2 / math.pi)
        return (4 - math.pi) / 2 * m**3 / (1 - m * m) ** 1.5

    return optimize.brentq(lambda d: skew(d) - skewness, 0.0, 1.0 - 1e-12)


@lru_cache(maxsize=None)
def _skew_t_delta(skewness: float, nu: float = 4.0) -> float:
    b = math.sqrt(nu / math.pi) * special.gamma((nu - 1) / 2) / special.gamma(nu / 2)

    def skew(d):
        mu = b * d
        var = nu / (nu - 2) - mu**2
        m3 = mu * (nu * (3 - d * d) / (nu - 3) - 3 * nu / (nu - 2) + 2 * mu**2)
        return m3 / var**1.5

    return optimize.brentq(lambda d: skew(d) - skewness, 0.0, 1.0)


def _skewnormal_raw(rng, n, delta):
    u0, u1 = rng.standard_normal((2, n))
    return delta * np.abs(u0) + math.sqrt(1 - delta * delta) * u1


def _skewnormal(rng, n):
    d = _skewnormal_delta(SKEWNORMAL_SKEWNESS)
    m = d * math.sqrt(2 / math.pi)
    return (_skewnormal_raw(rng, n, d) - m) / math.sqrt(1 - m * m)


def _skew_t4(rng, n):
    nu = 4.0
    d = _skew_t_delta(SKEW_T4_SKEWNESS, nu)
    z = _skewnormal_raw(rng, n, d)
    x = z / np.sqrt(rng.chisquare(nu, n) / nu)
    b = math.sqrt(nu / math.pi) * special.gamma((nu - 1) / 2) / special.gamma(nu / 2)
    mu = b * d
    return (x - mu) / math.sqrt(nu / (nu - 2) - mu**2)


INNOVATIONS: dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "gaussian": lambda rng, n: rng.standard_normal(n),
    "laplace": lambda rng, n: rng.laplace(0.0, 1 / math.sqrt(2), n),
    "t3": lambda rng, n: rng.standard_t(3, n) / math.sqrt(3),
    "t4": lambda rng, n: rng.standard_t(4, n) / math.sqrt(2),
    "t2": lambda rng, n: rng.standard_t(2, n),
    "t1": lambda rng, n: rng.standard_cauchy(n),
    "skewnormal": _skewnormal,
    "skew-t4": _skew_t4,
}
# No finite variance: valid rank tests are not guaranteed their level here.
OUTSIDE_CLASS = frozenset({"t1", "t2"})


def draw_innovations(name: str, rng: np.random.Generator, n: int) -> np.ndarray:
    try:
        return INNOVATIONS[name](rng, n)
    except KeyError:
        raise DomainError(f"unknown innovation {name!r}; valid: {', '.join(sorted(INNOVATIONS))}") from None


# ---------------------------------------------------------------- DGP

_ARMA_RE = re.compile(r"^arma\(\s*([-+0-9.eE]+)\s*[,;]\s*([-+0-9.eE]+)\s*\)$")


def _spectral_radius(coefs) -> float:
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        return 0.0
    comp = np.zeros((c.size, c.size))
    comp[0] = c
    comp[1:, :-1] = np.eye(c.size - 1)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process for one study cell.

    ``error_model`` is ``"iid"``, ``"arma(phi, theta)"`` or ``"custom"`` (then
    ``ar``/``ma`` hold the coefficients of ``v_t = sum ar_i v_{t-i} + e_t + sum ma_j e_{t-j}``).
    """

    t_len: int
    h: float = 0.0
    mu: float = 0.0
    innovation: str = "gaussian"
    error_model: str = "iid"
    ar: tuple = ()
    ma: tuple = ()

    def __post_init__(self):
        if self.t_len < 3:
            raise ParameterError("T must be at least 3")
        if self.h > 0:
            raise ParameterError("h must be nonpositive")
        if self.innovation not in INNOVATIONS:
            raise DomainError(f"unknown innovation {self.innovation!r}; valid: {', '.join(sorted(INNOVATIONS))}")
        model = self.error_model.strip().lower().replace(" ", "")
        if model == "iid":
            if self.ar or self.ma:
                object.__setattr__(self, "error_model", "custom")
        elif (mt := _ARMA_RE.match(model)) is not None:
            object.__setattr__(self, "ar", (float(mt.group(1)),))
            object.__setattr__(self, "ma", (float(mt.group(2)),))
            object.__setattr__(self, "error_model", f"arma({float(mt.group(1)):g},{float(mt.group(2)):g})")
        elif model != "custom":
            raise ParameterError(f"unknown error model {self.error_model!r}")
        object.__setattr__(self, "ar", tuple(float(x) for x in self.ar))
        object.__setattr__(self, "ma", tuple(float(x) for x in self.ma))
        if _spectral_radius(self.ar) >= 1:
            raise ParameterError("AR part is not stationary (companion spectral radius >= 1)")
        if _spectral_radius([-x for x in self.ma]) >= 1:
            raise ParameterError("MA part is not invertible (companion spectral radius >= 1)")

    @property
    def rho(self) -> float:
        return 1.0 + self.h / self.t_len

    @property
    def outside_class(self) -> bool:
        return self.innovation in OUTSIDE_CLASS


def _build_series(cfg: DgpConfig, eps: np.ndarray) -> np.ndarray:
    v = eps
    if cfg.ar or cfg.ma:
        v = signal.lfilter(np.r_[1.0, cfg.ma], np.r_[1.0, -np.asarray(cfg.ar)], eps)
    x = np.cumsum(v) if cfg.h == 0 else signal.lfilter([1.0], [1.0, -cfg.rho], v)
    return cfg.mu + x


def generate(cfg: DgpConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw ``Y_1..Y_T`` for ``cfg`` from ``rng``."""
    return _build_series(cfg, draw_innovations(cfg.innovation, rng, cfg.t_len))


# ---------------------------------------------------------------- tests

_REFS = ("gaussian", "laplace", "t3", "estimated")


@dataclass(frozen=True)
class TestSpec:
    __test__ = False

    kind: str
    reference: str | None = None

    @property
    def label(self) -> str:
        return self.kind if self.reference is None else f"{self.kind}-{self.reference}"


def valid_test_labels() -> list[str]:
    out = [f"ahrt-{r}" for r in _REFS] + [f"ahrt-signed-{r}" for r in _REFS[:3]]
    out += [f"hrt-{r}" for r in _REFS[1:]] + ["ers", "df-rho"]
    return out


def parse_test(label: str) -> TestSpec:
    """Parse ``ahrt-<g>``, ``ahrt-signed-<g>``, ``hrt-<g>``, ``ers`` or ``df-rho``."""
    text = label.strip().lower()
    if text in ("ers", "df-rho"):
        return TestSpec(text)
    for kind in ("ahrt-signed", "ahrt", "hrt"):
        if text.startswith(kind + "-"):
            ref = text[len(kind) + 1:]
            tspec = TestSpec(kind, ref)
            if tspec.label in valid_test_labels():
                return tspec
    raise ParameterError(f"unknown test {label!r}; valid: {', '.join(valid_test_labels())}")


def _run_test(tspec: TestSpec, y, p, alpha, theory_mode, seed) -> bool:
    if tspec.kind == "ahrt":
        return stattests.ahrt(y, tspec.reference, p, alpha, theory_mode=theory_mode, seed=seed).reject
    if tspec.kind == "ahrt-signed":
        return stattests.ahrt_signed(y, tspec.reference, p, alpha, theory_mode=theory_mode, seed=seed).reject
    if tspec.kind == "hrt":
        return stattests.hrt(y, tspec.reference, p, alpha, theory_mode=theory_mode, seed=seed).reject
    if tspec.kind == "ers":
        return stattests.ers_test(y, p, alpha, seed=seed).reject
    return stattests.df_rho(y, p, alpha, seed=seed).reject


# ---------------------------------------------------------------- studies


@dataclass(frozen=True)
class StudyCell:
    test: str
    innovation: str
    error_model: str
    t_len: int
    h: float
    n_rep: int
    reject_rate: float
    mc_se: float
    failures: int = 0

    def row(self) -> list[str]:
        return [self.test, self.innovation, self.error_model, str(self.t_len), f"{self.h:g}",
                str(self.n_rep), f"{self.reject_rate:.6f}", f"{self.mc_se:.6f}"]


@dataclass
class StudyResult:
    cells: list = field(default_factory=list)
    n_rep: int = 0
    runtime: float = 0.0

    @property
    def outside_class(self) -> list[str]:
        return sorted({c.innovation for c in self.cells if c.innovation in OUTSIDE_CLASS})

    def lookup(self, test: str, innovation: str, h: float, t_len: int | None = None,
               error_model: str | None = None) -> StudyCell:
        for c in self.cells:
            if (c.test == test and c.innovation == innovation and c.h == h
                    and (t_len is None or c.t_len == t_len)
                    and (error_model is None or c.error_model == error_model)):
                return c
        raise KeyError((test, innovation, h))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c in self.cells:
            writer.writerow(c.row())
        return buf.getvalue()


def _chunk_counts(args):
    dgp, h_grid, tests, reps, seed, p, alpha, theory_mode, cv_seed = args
    key = stream_key(seed, "mc", dgp.innovation, dgp.error_model, dgp.t_len)
    rejects = np.zeros((len(h_grid), len(tests)), dtype=np.int64)
    fails = np.zeros_like(rejects)
    for i in reps:
        eps = draw_innovations(dgp.innovation, replication_rng(key, i), dgp.t_len)
        for a, h in enumerate(h_grid):
            y = _build_series(replace(dgp, h=h), eps)
            for b, tspec in enumerate(tests):
                try:
                    rejects[a, b] += _run_test(tspec, y, p, alpha, theory_mode, cv_seed)
                except (RankUnitRootError, np.linalg.LinAlgError, FloatingPointError):
                    fails[a, b] += 1
    return rejects, fails


def iter_study(tests, dgps, h_grid=None, n_rep: int = 2000, seed: int | None = None,
               workers: int = 1, p: int = 0, alpha: float = 0.05, theory_mode: bool = False,
               chunk: int = 250, cv_seed: int = 0) -> Iterator[StudyCell]:
    """Yield study cells one DGP at a time (tests vary fastest, then ``h``)."""
    if seed is None:
        raise ParameterError("a seed is required")
    if n_rep <= 0:
        raise StudyError("n_rep must be positive; nothing to simulate")
    specs = [t if isinstance(t, TestSpec) else parse_test(t) for t in tests]
    dgps = list(dgps)
    if not specs or not dgps:
        raise StudyError("a study needs at least one test and one DGP")
    pool = ProcessPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for dgp in dgps:
            hs = [float(h) for h in (h_grid if h_grid is not None else [dgp.h])]
            for h in hs:
                if h > 0:
                    raise ParameterError("h must be nonpositive")
            jobs = [(dgp, hs, specs, r, seed, p, alpha, theory_mode, cv_seed)
                    for r in partition(n_rep, chunk)]
            parts = list(pool.map(_chunk_counts, jobs)) if pool else [_chunk_counts(j) for j in jobs]
            rejects = sum(x[0] for x in parts)
            fails = sum(x[1] for x in parts)
            for a, h in enumerate(hs):
                for b, tspec in enumerate(specs):
                    nf = int(fails[a, b])
                    if nf > FAILURE_CAP * n_rep:
                        raise StudyError(
                            f"{tspec.label} failed in {nf} of {n_rep} replications "
                            f"({dgp.innovation}, {dgp.error_model}, T={dgp.t_len}, h={h:g})"
                        )
                    ok = n_rep - nf
                    rate = rejects[a, b] / ok if ok else float("nan")
                    se = math.sqrt(rate * (1 - rate) / ok) if ok else float("nan")
                    yield StudyCell(tspec.label, dgp.innovation, dgp.error_model, dgp.t_len, h,
                                    ok, float(rate), float(se), nf)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)


def run_study(tests, dgps, h_grid=None, n_rep: int = 2000, seed: int | None = None,
              workers: int = 1, p: int = 0, alpha: float = 0.05, theory_mode: bool = False,
              chunk: int = 250, cv_seed: int = 0) -> StudyResult:
    """Rejection frequencies for every (test, DGP, h) cell.

    Replications that raise a package error are counted as failures and
    excluded; more than 0.1% failures in a cell aborts the study.
    """
    start = time.perf_counter()
    cells = list(iter_study(tests, dgps, h_grid, n_rep, seed, workers, p, alpha, theory_mode,
                            chunk, cv_seed))
    return StudyResult(cells, n_rep, time.perf_counter() - start)


# ---------------------------------------------------------------- presets

_FIG_H = [0.0, -2.5, -5.0, -7.0, -10.0, -12.5, -15.0, -20.0, -25.0, -30.0]
PRESETS = {
    "desk": {
        "tests": ["ahrt-gaussian", "ahrt-laplace", "ahrt-t3"],
        "innovations": ["gaussian", "laplace", "t3"],
        "error_models": ["iid"],
        "t_len": [100],
        "h_grid": [-7.0],
        "n_rep": 2000,
        "p": 0,
    },
    "full-iid": {
        "tests": ["ahrt-gaussian", "ahrt-laplace", "ahrt-t3", "ahrt-estimated", "ers", "df-rho"],
        "innovations": ["gaussian", "laplace", "t3"],
        "error_models": ["iid"],
        "t_len": [100, 2500],
        "h_grid": _FIG_H,
        "n_rep": 20000,
        "p": 0,
    },
    "full-arma": {
        "tests": ["ahrt-gaussian", "ahrt-laplace", "ahrt-t3", "ers", "df-rho"],
        "innovations": ["gaussian", "laplace", "t3"],
        "error_models": ["arma(-0.5,-0.5)"],
        "t_len": [100, 2500],
        "h_grid": _FIG_H,
        "n_rep": 20000,
        "p": 8,
    },
}


def preset(name: str) -> dict:
    try:
        return {k: (list(v) if isinstance(v, list) else v) for k, v in PRESETS[name].items()}
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; valid: {', '.join(sorted(PRESETS))}") from None


def design_from_config(cfg: dict) -> tuple[list, list, list, dict]:
    """Turn a study mapping into ``(tests, dgps, h_grid, options)``."""
    known = {"tests", "innovations", "error_models", "t_len", "h_grid", "n_rep", "p", "alpha",
             "seed", "theory_mode", "mu"}
    extra = set(cfg) - known
    if extra:
        raise ParameterError(f"unknown study keys: {', '.join(sorted(extra))}")
    try:
        tests = [parse_test(t) for t in cfg["tests"]]
        t_lens = cfg["t_len"] if isinstance(cfg["t_len"], list) else [cfg["t_len"]]
        dgps = [DgpConfig(int(t), 0.0, float(cfg.get("mu", 0.0)), inn, em)
                for t in t_lens
                for em in cfg.get("error_models", ["iid"])
                for inn in cfg["innovations"]]
        h_grid = [float(h) for h in cfg.get("h_grid", [0.0])]
    except KeyError as exc:
        raise ParameterError(f"study config lacks {exc.args[0]!r}") from None
    opts = {k: cfg[k] for k in ("n_rep", "p", "alpha", "seed", "theory_mode") if k in cfg}
    return tests, dgps, h_grid, opts
