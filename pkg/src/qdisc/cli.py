"""``qdisc`` command line: evaluate, table, simulate, sweep, plot."""
from __future__ import annotations

import argparse
import contextlib
import math
import sys
from dataclasses import dataclass, field

from .core import DiscriminationProblem
from .evaluator import evaluate_schemes, scheme_cost, exact_cost, write_results_csv
from .optimizer import DEFAULT_GRID, build_table, write_table_csv
from .plot import PlotInputError, plot_files
from .schemes import ALL_SCHEMES, COLLECTIVE, LOCAL_SCHEMES, SchemeKind, SchemeSpec
from .simulator import batch_row, run_batch, write_batch_csv

DEFAULT_NU_LIST = "0:0.6:0.02"
DEFAULT_SEED = 20100707


class ConfigError(ValueError):
    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


@dataclass
class RunConfig:
    theta_deg: float = 15.0
    q_plus: float = 0.5
    nu: float = 0.0
    n_max: int = 10
    grid: int = DEFAULT_GRID
    trials: int = 2000
    seed: int = DEFAULT_SEED
    schemes: tuple = ALL_SCHEMES
    nu_list: list = field(default_factory=list)
    out: str = "-"

    def validate(self):
        checks = [
            ("--theta-deg", math.isfinite(self.theta_deg) and 0.0 < self.theta_deg < 45.0,
             "must lie in (0, 45) degrees"),
            ("--q-plus", math.isfinite(self.q_plus) and 0.5 <= self.q_plus <= 1.0,
             "must lie in [0.5, 1]"),
            ("--nu", math.isfinite(self.nu) and 0.0 <= self.nu <= 1.0, "must lie in [0, 1]"),
            ("--n-max", self.n_max >= 1, "must be >= 1"),
            ("--grid", self.grid >= 3, "must be >= 3"),
            ("--trials", self.trials >= 1, "must be >= 1"),
            ("--seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
        ]
        for flag, ok, message in checks:
            if not ok:
                raise ConfigError(flag, f"{message} (got {getattr(self, _attr(flag))!r})")
        for name in self.schemes:
            if name not in ALL_SCHEMES:
                raise ConfigError("--schemes", f"unknown scheme {name!r}; choose from {', '.join(ALL_SCHEMES)}")
        for nu in self.nu_list:
            if not (math.isfinite(nu) and 0.0 <= nu <= 1.0):
                raise ConfigError("--nu-list", f"noise value {nu!r} outside [0, 1]")
        return self

    def problem(self, nu=None):
        return DiscriminationProblem.from_degrees(self.theta_deg, self.q_plus, self.nu if nu is None else nu)


def _attr(flag):
    return flag.lstrip("-").replace("-", "_")


def parse_nu_list(text):
    """Comma list (``0,0.1,0.3``) or inclusive range ``start:stop:step``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range form is start:stop:step")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError("--out", f"cannot open {path}: {exc.strerror}") from None
    with fh:
        yield fh


def cmd_evaluate(cfg):
    prob = cfg.problem()
    rows = evaluate_schemes(prob, range(1, cfg.n_max + 1), cfg.schemes, grid_size=cfg.grid)
    with _open_out(cfg.out) as fh:
        write_results_csv(rows, fh)
    return rows


def cmd_table(cfg):
    table = build_table(cfg.problem(), cfg.n_max, cfg.grid)
    with _open_out(cfg.out) as fh:
        write_table_csv(table, fh)
    return table


def cmd_simulate(cfg):
    if COLLECTIVE in cfg.schemes:
        raise ConfigError("--schemes", "the collective benchmark has no local protocol to simulate")
    prob = cfg.problem()
    table = None
    if SchemeKind.GLOBALLY_OPTIMAL.value in cfg.schemes:
        table = build_table(prob, cfg.n_max, cfg.grid)
    out = []
    for name in cfg.schemes:
        for n in range(1, cfg.n_max + 1):
            if name == SchemeKind.GLOBALLY_OPTIMAL.value:
                spec = SchemeSpec.globally_optimal(table.truncated(n))
            else:
                spec = SchemeSpec(SchemeKind(name), n)
            stats = run_batch(prob, spec, n, cfg.trials, cfg.seed)
            out.append(batch_row(name, n, prob, stats, cfg.seed))
    with _open_out(cfg.out) as fh:
        write_batch_csv(out, fh)
    return out


def _unbiased_minus_local(cfg, nu, n):
    prob = cfg.problem(nu)
    un = scheme_cost(prob, SchemeSpec(SchemeKind.UNBIASED, n)).cost
    loc = exact_cost(prob, SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, n)).cost
    return un - loc


def find_crossing(cfg, nu_lo, nu_hi, n, tol=1e-7):
    """Bisect on nu for the sign change of C_un - C_loc inside [nu_lo, nu_hi]."""
    f_lo = _unbiased_minus_local(cfg, nu_lo, n)
    f_hi = _unbiased_minus_local(cfg, nu_hi, n)
    if f_lo == 0.0:
        return nu_lo
    if f_hi == 0.0:
        return nu_hi
    if (f_lo > 0) == (f_hi > 0):
        return None
    while nu_hi - nu_lo > tol:
        mid = 0.5 * (nu_lo + nu_hi)
        f_mid = _unbiased_minus_local(cfg, mid, n)
        if (f_mid > 0) == (f_lo > 0):
            nu_lo, f_lo = mid, f_mid
        else:
            nu_hi = mid
    return 0.5 * (nu_lo + nu_hi)


def cmd_sweep(cfg, report=None):
    """Exact costs at N = n_max over the noise list, plus the unbiased/local crossing.

    Crossings are printed to ``report`` (a text stream) when given.
    """
    nus = cfg.nu_list or parse_nu_list(DEFAULT_NU_LIST)
    n = cfg.n_max
    rows = []
    for nu in nus:
        rows.extend(evaluate_schemes(cfg.problem(nu), [n], cfg.schemes, grid_size=cfg.grid))
    with _open_out(cfg.out) as fh:
        write_results_csv(rows, fh)
    crossings = []
    ordered = sorted(set(nus))
    diffs = [_unbiased_minus_local(cfg, nu, n) for nu in ordered]
    for (lo, d_lo), (hi, d_hi) in zip(zip(ordered, diffs), zip(ordered[1:], diffs[1:])):
        if d_lo > 0 >= d_hi or d_lo < 0 <= d_hi:
            crossings.append(find_crossing(cfg, lo, hi, n))
    if report is not None:
        if crossings:
            for c in crossings:
                print(f"unbiased/locally-optimal crossing at nu = {c:.6f} (N={n})", file=report)
        else:
            print(f"no unbiased/locally-optimal crossing in the noise list (N={n})", file=report)
    return rows, crossings


def _add_common(p, schemes_default):
    p.add_argument("--theta-deg", type=float, default=15.0, help="state half-angle in degrees (default 15)")
    p.add_argument("--q-plus", type=float, default=0.5, help="prior of psi_+ (default 0.5)")
    p.add_argument("--nu", type=float, default=0.0, help="depolarizing strength (default 0)")
    p.add_argument("--n-max", type=int, default=10, help="largest number of copies (default 10)")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID, help="belief grid size (default 2501)")
    p.add_argument("--schemes", default=",".join(schemes_default),
                   help="comma-separated subset of: " + ", ".join(ALL_SCHEMES))
    p.add_argument("--out", default="-", help="output path (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qdisc",
        description="Multi-copy discrimination of two noisy qubit states with local measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="exact error probabilities for N = 1..n-max")
    _add_common(p, ALL_SCHEMES)

    p = sub.add_parser("table", help="build and export the globally-optimal policy table")
    _add_common(p, ())

    p = sub.add_parser("simulate", help="seeded Monte Carlo batches for N = 1..n-max")
    _add_common(p, LOCAL_SCHEMES)
    p.add_argument("--trials", type=int, default=2000, help="discriminations per point (default 2000)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="64-bit batch seed")

    p = sub.add_parser("sweep", help="exact costs at N = n-max over a list of noise values")
    _add_common(p, ALL_SCHEMES)
    p.add_argument("--nu-list", default=DEFAULT_NU_LIST,
                   help="comma list or start:stop:step (default 0:0.6:0.02)")

    p = sub.add_parser("plot", help="render results/batch CSV files as one SVG figure")
    p.add_argument("csv", nargs="+", help="results or batch CSV files")
    p.add_argument("--out", required=True, help="SVG output path")
    p.add_argument("--title", default="", help="figure title")
    return parser


def _config(args):
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    cfg = RunConfig(
        theta_deg=args.theta_deg, q_plus=args.q_plus, nu=args.nu, n_max=args.n_max,
        grid=args.grid, schemes=schemes, out=args.out,
        trials=getattr(args, "trials", 2000), seed=getattr(args, "seed", DEFAULT_SEED),
    )
    if getattr(args, "nu_list", None) is not None:
        try:
            cfg.nu_list = parse_nu_list(args.nu_list)
        except ValueError as exc:
            raise ConfigError("--nu-list", str(exc)) from None
        if not cfg.nu_list:
            raise ConfigError("--nu-list", "no noise values given")
    return cfg.validate()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plot":
            plot_files(args.csv, args.out, args.title)
            return 0
        cfg = _config(args)
        if args.command == "evaluate":
            if not cfg.schemes:
                raise ConfigError("--schemes", "no schemes selected")
            cmd_evaluate(cfg)
        elif args.command == "table":
            cmd_table(cfg)
        elif args.command == "simulate":
            if not cfg.schemes:
                raise ConfigError("--schemes", "no schemes selected")
            cmd_simulate(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, report=sys.stderr)
    except ConfigError as exc:
        parser.error(str(exc))
    except (PlotInputError, OSError) as exc:
        print(f"qdisc: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
