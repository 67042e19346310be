"""Command-line interface.

Exit codes: 0 null not rejected (or success), 1 null rejected, 2 usage, I/O or
parameter error, 3 degenerate data, 130 interrupted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import limitsim, mcharness, stattests
from .densities import BUILTIN_DENSITIES, cross_moments, get_density
from .errors import (
    ContractViolation,
    DegenerateSampleError,
    DomainError,
    IllConditionedError,
    ParameterError,
    RankDeficiencyError,
    RankUnitRootError,
)

EXIT_ACCEPT, EXIT_REJECT, EXIT_USAGE, EXIT_DEGENERATE, EXIT_INTERRUPT = 0, 1, 2, 3, 130
TESTS = ("ahrt", "ahrt-signed", "hrt", "ers", "df-rho")
REFERENCES = ("gaussian", "laplace", "t3", "estimated")


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def _alpha(text):
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _hbar(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--hbar takes 'auto' or a number") from None


def _h_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


def _require_seed(args, what):
    if args.seed is None:
        raise CliError(f"{what} is randomized; pass --seed for reproducibility")


# ---------------------------------------------------------------- input


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_series(path: str, column: str | None) -> np.ndarray:
    """Read one numeric column from a CSV file; a header row is detected automatically."""
    try:
        raw = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    rows = [r for r in csv.reader(io.StringIO(raw)) if r and any(c.strip() for c in r)]
    if not rows:
        raise CliError(f"{path} contains no data")
    first = [c.strip() for c in rows[0]]
    header = not all(_is_number(c) for c in first if c)
    if column is None:
        idx = 0
    elif header and column in first:
        idx = first.index(column)
    elif column.isdigit() and int(column) < len(first):
        idx = int(column)
    else:
        raise CliError(f"column {column!r} not found in {path}")
    body = rows[1:] if header else rows
    values = []
    for lineno, row in enumerate(body, start=2 if header else 1):
        try:
            values.append(float(row[idx]))
        except (IndexError, ValueError):
            raise CliError(f"{path}, row {lineno}: no numeric value in column {column or idx!r}") from None
    return np.asarray(values)


# ---------------------------------------------------------------- subcommands


def _needs_simulation(args, t_len):
    if args.cv_mode == "sim" or args.test == "hrt" or args.hbar != "auto":
        return True
    if args.test in ("ahrt", "ahrt-signed"):
        return args.reference == "estimated" or args.alpha != 0.05
    table = stattests.DF_RHO_CRITICAL_VALUES if args.test == "df-rho" else stattests.ERS_CRITICAL_VALUES
    return (t_len, args.alpha) not in table


def cmd_test(args) -> int:
    y = read_series(args.input, args.column)
    if _needs_simulation(args, y.size):
        _require_seed(args, "this critical value")
    seed = args.seed if args.seed is not None else 0
    sim = {"n_rep": args.reps or 20000, "seed": seed}
    if args.test in ("ahrt", "ahrt-signed"):
        fn = stattests.ahrt if args.test == "ahrt" else stattests.ahrt_signed
        res = fn(y, args.reference, args.p, args.alpha, args.hbar, cv_mode=args.cv_mode,
                 theory_mode=args.theory_mode, m=args.grid_points, **sim)
    elif args.test == "hrt":
        res = stattests.hrt(y, args.reference, args.p, args.alpha, args.hbar,
                            theory_mode=args.theory_mode, m=args.grid_points, **sim)
    elif args.test == "ers":
        h = -7.0 if args.hbar == "auto" else args.hbar
        res = stattests.ers_test(y, args.p, args.alpha, h, **sim)
    else:
        res = stattests.df_rho(y, args.p, args.alpha, **sim)
    fields = [("test", res.test_name), ("statistic", res.statistic),
              ("critical_value", res.critical_value), ("reject", res.reject),
              ("reject_direction", res.reject_direction), ("h_bar", res.h_bar),
              ("alpha", res.alpha), ("cv_source", res.cv_source), ("T", res.t_len), ("p", res.p)]
    fields += sorted(res.nuisance.items())
    if not math.isnan(res.delta_hat):
        fields += [("delta_hat", res.delta_hat), ("info_hat", res.info_hat)]
    for note in res.notes:
        print(f"note: {note}", file=sys.stderr)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "value"])
    writer.writerows((k, _fmt(v)) for k, v in fields)
    sys.stdout.write("".join(f"{k}: {_fmt(v)}\n" for k, v in fields))
    if args.output:
        _write(args.output, buf.getvalue())
    return EXIT_REJECT if res.reject else EXIT_ACCEPT


def cmd_cv(args) -> int:
    _require_seed(args, "critical-value fitting")
    if not args.grid_step > 0:
        raise CliError("--grid-step must be positive")
    if args.reference not in BUILTIN_DENSITIES:
        raise CliError(f"--reference must be one of {', '.join(BUILTIN_DENSITIES)}")
    model = limitsim.fit_cv_polynomial(get_density(args.reference), args.alpha, args.symmetric,
                                       args.grid_step, args.reps or 20000, args.grid_points,
                                       args.seed, args.workers)
    text = model.to_text()
    if args.output:
        _write(args.output, text)
    sys.stdout.write(text)
    return EXIT_ACCEPT


def cmd_envelope(args) -> int:
    _require_seed(args, "envelope simulation")
    if args.innovation is None and args.jf is None:
        raise CliError("give --innovation (gaussian|laplace|t3) or --jf")
    f = get_density(args.innovation) if args.innovation else None
    j_f = args.jf if args.jf is not None else f.fisher_info_j
    hs = args.h_grid
    common = {"alpha": args.alpha, "n_rep": args.reps or 40000, "m": args.grid_points,
              "seed": args.seed, "workers": args.workers}
    columns = [("h", hs), ("envelope_power",
                           limitsim.power_envelope(j_f, hs, symmetric=args.symmetric, **common))]
    if f is not None and args.reference is not None:
        g = get_density(args.reference)
        sigma, j_fg = cross_moments(f, g)
        lam = 1.0
        curve = limitsim.asymptotic_test_power((j_f, j_fg, sigma), g.fisher_info_j, lam, hs,
                                               symmetric=args.symmetric, **common)
        label = f"ahrt_signed_{g.name}_power" if args.symmetric else f"ahrt_{g.name}_power"
        columns.append((label, curve))
    columns.append(("ers_power", limitsim.ers_asymptotic_power(j_f, hs, **common)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c[0] for c in columns])
    for i in range(len(hs)):
        writer.writerow([f"{hs[i]:g}"] + [f"{c[1][i]:.6f}" for c in columns[1:]])
    _write(args.output, buf.getvalue())
    if args.output not in (None, "-"):
        sys.stdout.write(buf.getvalue())
    return EXIT_ACCEPT


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    try:
        if path.endswith(".json"):
            cfg = json.loads(text)
        else:
            import yaml

            cfg = yaml.safe_load(text)
    except Exception as exc:  # parse errors from either loader
        raise CliError(f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(f"{path} must contain a mapping")
    return cfg


def cmd_mc(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise CliError("give exactly one of --config or --preset")
    cfg = _load_config(args.config) if args.config else mcharness.preset(args.preset)
    tests, dgps, h_grid, opts = mcharness.design_from_config(cfg)
    seed = args.seed if args.seed is not None else opts.get("seed")
    if seed is None:
        raise CliError("Monte-Carlo studies are randomized; pass --seed or set seed in the config")
    n_rep = args.reps or int(opts.get("n_rep", 2000))
    p = args.p if args.p is not None else int(opts.get("p", 0))
    alpha = args.alpha if args.alpha is not None else float(opts.get("alpha", 0.05))
    theory = args.theory_mode or bool(opts.get("theory_mode", False))
    out = sys.stdout if args.output in (None, "-") else None
    handle = out
    if handle is None:
        try:
            handle = open(args.output, "w", newline="")
        except OSError as exc:
            raise CliError(f"cannot write {args.output}: {exc}") from None
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(mcharness.CSV_HEADER)
    start = time.perf_counter()
    total = len(tests) * len(dgps) * len(h_grid)
    done = 0
    flagged = set()
    try:
        for cell in mcharness.iter_study(tests, dgps, h_grid, n_rep, seed, args.workers, p, alpha,
                                         theory):
            writer.writerow(cell.row())
            handle.flush()
            done += 1
            if cell.innovation in mcharness.OUTSIDE_CLASS:
                flagged.add(cell.innovation)
            if not args.quiet:
                print(f"[{done}/{total}] {cell.test} {cell.innovation} T={cell.t_len} h={cell.h:g} "
                      f"rate={cell.reject_rate:.4f}", file=sys.stderr)
    except KeyboardInterrupt:
        print(f"interrupted after {done} of {total} cells; partial results kept", file=sys.stderr)
        return EXIT_INTERRUPT
    finally:
        if out is None:
            handle.close()
    for name in sorted(flagged):
        print(f"note: innovation {name} has no finite variance (outside the valid class)", file=sys.stderr)
    print(f"wall clock: {time.perf_counter() - start:.1f} s", file=sys.stderr)
    return EXIT_ACCEPT


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankunitroot", description="Rank-based unit root tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps_help):
        p.add_argument("--alpha", type=_alpha, default=0.05)
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int, help=reps_help)
        p.add_argument("--grid-points", type=int, default=limitsim.DEFAULT_M,
                       help="Euler grid size for limit simulation")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--output", help="output path ('-' for stdout)")

    t = sub.add_parser("test", help="run a unit root test on a CSV series")
    t.add_argument("--input", required=True, help="CSV file ('-' for stdin)")
    t.add_argument("--column", help="column name or 0-based index (default: first)")
    t.add_argument("--test", choices=TESTS, default="ahrt")
    t.add_argument("--reference", choices=REFERENCES, default="gaussian")
    t.add_argument("--p", type=int, default=0)
    t.add_argument("--hbar", type=_hbar, default="auto")
    t.add_argument("--cv-mode", choices=("poly", "sim"), default="poly")
    t.add_argument("--theory-mode", action="store_true", help="discretize AR estimates")
    common(t, "replications for simulated critical values (default 20000)")
    t.set_defaults(func=cmd_test)

    c = sub.add_parser("cv", help="fit a critical-value polynomial")
    c.add_argument("--reference", default="gaussian")
    c.add_argument("--symmetric", action="store_true")
    c.add_argument("--grid-step", type=float, default=0.01)
    common(c, "replications per grid point (default 20000)")
    c.set_defaults(func=cmd_cv)

    e = sub.add_parser("envelope", help="power envelope and asymptotic power curves")
    e.add_argument("--innovation", choices=tuple(BUILTIN_DENSITIES))
    e.add_argument("--jf", type=float, help="standardized Fisher information of f")
    e.add_argument("--reference", choices=tuple(BUILTIN_DENSITIES),
                   help="overlay the AHRT with this reference density")
    e.add_argument("--symmetric", action="store_true")
    e.add_argument("--h-grid", type=_h_list, default=[0.0, -2.5, -5.0, -7.0, -10.0, -15.0, -20.0, -30.0])
    common(e, "limit replications (default 40000)")
    e.set_defaults(func=cmd_envelope)

    m = sub.add_parser("mc", help="Monte-Carlo size/power study")
    m.add_argument("--config", help="YAML or JSON study description")
    m.add_argument("--preset", choices=tuple(mcharness.PRESETS))
    m.add_argument("--p", type=int)
    m.add_argument("--theory-mode", action="store_true")
    m.add_argument("--quiet", action="store_true")
    m.add_argument("--alpha", type=_alpha)
    m.add_argument("--seed", type=int)
    m.add_argument("--reps", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--output")
    m.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_ACCEPT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DegenerateSampleError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ParameterError, DomainError, ContractViolation, RankDeficiencyError, IllConditionedError,
            RankUnitRootError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    raise SystemExit(main())
