"""Command-line front end: ``run``, ``compare`` and ``pi-demo``.

Configuration is either command-line flags or line-oriented ``key=value``
files (``#`` starts a comment); flags override file values. Traces are CSV
with the header ``iter,fevals,resnorm,time_s,event``. The time column is
zeroed unless ``--timing`` is given, so repeated runs are byte-identical.

Exit status: 0 converged, 2 stopped without converging (budget, divergence
or breakdown), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .anderson import BACKENDS, AAConfig, aa_solve, aa_tgs_solve
from .errors import AccelError, ConfigError, DegenerateDenominator
from .extrapolation import EpsilonTable, aitken_scalar, restarted_rre_solve
from .linear import cg_solve, chebyshev_solve, tgcr_solve
from .newton import broyden_solve, inexact_newton_solve
from .nltgcr import MODES, NLTGCRConfig, nltgcr_solve
from .problems import (
    BratuSpec,
    adapt_gd_solve,
    atan_partial_sums,
    bratu_initial_guess,
    bratu_residual,
    fcc_init,
    fixed_point_wrap,
    lj_gradient,
    make_linear_problem,
)
from .trace import CONVERGED, CSV_HEADER, ConvergenceTrace, StoppingRule, counted

PROBLEMS = ("bratu", "lj", "atan", "linear")
METHODS = ("gd", "rre", "mpe", "aa", "aatgs", "nltgcr", "cheb", "cg", "tgcr", "broyden1", "broyden2", "newton")
LINEAR_KINDS = ("spd-diag", "nonsymmetric", "contraction-map")
LINEAR_ONLY = ("cheb", "cg", "tgcr")
DENSE_LIMIT = 5000

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    problem: str = "bratu"
    method: str = "aa"
    label: str = ""
    window: int | None = None
    restart: int | None = None
    beta: float = 1.0
    mode: str = "nl"
    backend: str = "qr"
    tau_reg: float = 0.0
    tau_switch: float = 0.01
    mu: float | None = None
    tol: float = 1e-12
    max_fevals: int = 500
    seed: int = 42
    out: str | None = None
    # problem parameters
    nx: int = 100
    lam: float = 0.5
    cells: int = 3
    perturbation: float = 0.01
    z: float = 1.0
    kind: str = "spd-diag"
    n: int = 100
    kappa: float = 100.0

    def validate(self) -> "RunConfig":
        choices = {
            "problem": PROBLEMS,
            "method": METHODS,
            "mode": MODES,
            "backend": BACKENDS,
            "kind": LINEAR_KINDS,
        }
        for name, allowed in choices.items():
            value = getattr(self, name)
            if value not in allowed:
                raise ConfigError(f"field '{name}': unknown value {value!r} (choose from {', '.join(allowed)})")
        for name in ("window", "restart"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"field '{name}': must be at least 1")
        if not self.tol > 0:
            raise ConfigError("field 'tol': must be positive")
        if self.max_fevals < 1:
            raise ConfigError("field 'max_fevals': must be positive")
        if self.method in LINEAR_ONLY and self.problem != "linear":
            raise ConfigError(f"field 'method': {self.method} needs problem=linear")
        if self.method in ("cheb", "cg") and self.kind != "spd-diag":
            raise ConfigError(f"field 'method': {self.method} needs kind=spd-diag")
        return self

    @property
    def name(self) -> str:
        return self.label or self.method


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
NO_VALUE = ("none", "null", "")


def _coerce(key: str, raw: str):
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    optional = "None" in kind
    if optional and raw.lower() in NO_VALUE:
        return None
    base = kind.split("|")[0].strip()
    try:
        if base == "int":
            return int(raw)
        if base == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
    except ValueError:
        raise ConfigError(f"field '{key}': expected {base}, got {raw!r}") from None
    return raw


def _normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into a dict of typed overrides."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = _normalize_key(key)
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        try:
            values[key] = _coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config_text(text, path)


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    merged = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    return RunConfig(**merged).validate()


# Problem and method dispatch


@dataclass
class Setup:
    f: object  # counted residual map
    g: object  # counted fixed-point map sharing f's counter
    x0: np.ndarray
    mu: float
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    eig: np.ndarray | None = None


def make_setup(cfg: RunConfig) -> Setup:
    if cfg.problem == "bratu":
        spec = BratuSpec(cfg.nx, cfg.lam, scaled=True)
        mu = 0.1 if cfg.mu is None else cfg.mu
        f = counted(lambda u: bratu_residual(spec, u))
        return Setup(f, fixed_point_wrap(f, mu), bratu_initial_guess(spec, cfg.seed), mu)
    if cfg.problem == "lj":
        mu = 1e-4 if cfg.mu is None else cfg.mu
        f = counted(lj_gradient)
        x0 = fcc_init(cfg.cells, cfg.perturbation, cfg.seed).ravel()
        return Setup(f, fixed_point_wrap(f, mu), x0, mu)
    if cfg.problem == "atan":
        # tan(x) = z, root atan(z)
        mu = 0.25 if cfg.mu is None else cfg.mu
        f = counted(lambda x: np.tan(x) - cfg.z)
        return Setup(f, fixed_point_wrap(f, mu), np.zeros(1), mu)
    prob = make_linear_problem(cfg.kind, cfg.n, cfg.seed, cfg.kappa)
    if cfg.mu is not None:
        mu = cfg.mu
    elif cfg.kind == "spd-diag":
        mu = 2.0 / (prob.eigenvalues[0] + prob.eigenvalues[-1])
    else:
        mu = 1.0
    A, b = prob.A, prob.b
    f = counted(lambda x: A @ x - b)
    return Setup(f, fixed_point_wrap(f, mu), np.zeros(cfg.n), mu, A, b, prob.eigenvalues)


def solve(cfg: RunConfig) -> ConvergenceTrace:
    """Run one configured solve and return its trace."""
    cfg.validate()
    s = make_setup(cfg)
    stop = StoppingRule(cfg.tol, cfg.max_fevals)
    m = cfg.window
    method = cfg.method
    if method == "gd":
        return adapt_gd_solve(s.f, s.x0, s.mu, stop)
    if method in ("rre", "mpe"):
        return restarted_rre_solve(s.g, s.x0, m or 5, cfg.beta, stop, kind=method)
    if method in ("aa", "aatgs"):
        aa_cfg = AAConfig(m or 5, cfg.restart, cfg.beta, cfg.backend, cfg.tau_reg)
        return (aa_solve if method == "aa" else aa_tgs_solve)(s.g, s.x0, aa_cfg, stop)
    if method == "nltgcr":
        extra = {} if cfg.restart is None else {"restart": cfg.restart}
        nl_cfg = NLTGCRConfig(m or 5, cfg.mode, cfg.tau_switch, **extra)
        return nltgcr_solve(s.f, s.x0, nl_cfg, stop)
    if method == "newton":
        return inexact_newton_solve(s.f, s.x0, m, stop=stop)
    if method in ("broyden1", "broyden2"):
        if s.x0.size > DENSE_LIMIT:
            raise ConfigError(f"field 'method': {method} is dense and n={s.x0.size} exceeds {DENSE_LIMIT}")
        return broyden_solve(s.f, s.x0, int(method[-1]), s.mu, stop)
    if method == "cg":
        return cg_solve(s.A, s.b, s.x0, stop)
    if method == "cheb":
        return chebyshev_solve(s.A, s.b, s.x0, float(s.eig[0]), float(s.eig[-1]), stop)
    trace, _ = tgcr_solve(s.A, s.b, s.x0, m, stop)
    return trace


def exit_code(trace: ConvergenceTrace) -> int:
    return EXIT_OK if trace.status == CONVERGED else EXIT_UNCONVERGED


def _worst(codes: Sequence[int]) -> int:
    rank = {EXIT_OK: 0, EXIT_UNCONVERGED: 1, EXIT_ERROR: 2}
    return max(codes, key=rank.__getitem__, default=EXIT_OK)


# Subcommands


def _add_run_options(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicit flags override a config file
    p.add_argument("--config", metavar="FILE", help="key=value configuration file")
    p.add_argument("--problem", choices=PROBLEMS, default=None)
    p.add_argument("--method", default=None, help="one of: " + ", ".join(METHODS))
    p.add_argument("--window", type=int, default=None, metavar="M")
    p.add_argument("--restart", type=int, default=None, metavar="K")
    p.add_argument("--beta", type=float, default=None, metavar="B")
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--backend", choices=BACKENDS, default=None)
    p.add_argument("--tau-reg", dest="tau_reg", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--tol", type=float, default=None, metavar="T")
    p.add_argument("--max-fevals", dest="max_fevals", type=int, default=None, metavar="N")
    p.add_argument("--seed", type=int, default=None, metavar="S")
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--kind", choices=LINEAR_KINDS, default=None)
    p.add_argument("--n", type=int, default=None)


RUN_KEYS = ("problem", "method", "window", "restart", "beta", "mode", "backend", "tau_reg", "mu",
            "tol", "max_fevals", "seed", "out", "nx", "kind", "n")


def cmd_run(args) -> int:
    file_values = load_config(args.config) if args.config else {}
    cfg = build_config(file_values, {k: getattr(args, k) for k in RUN_KEYS})
    trace = solve(cfg)
    text = trace.to_csv(timing=args.timing)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    last = trace.records[-1]
    print(f"{trace.method}: {trace.status} resnorm={last.resnorm:.3e} fevals={last.fevals}", file=sys.stderr)
    return exit_code(trace)


BRATU_PRESET = (
    {"method": "gd", "label": "adaptGD"},
    {"method": "rre", "window": 3, "label": "RRE(3)"},
    {"method": "rre", "window": 5, "label": "RRE(5)"},
    {"method": "aa", "window": 5, "restart": 10, "label": "AA(5,10)"},
    {"method": "aatgs", "window": 5, "label": "AA-TGS(5)"},
)
PRESETS = {
    "bratu": [{"problem": "bratu", "max_fevals": 500, **row} for row in BRATU_PRESET],
    "lj": [{"problem": "lj", "max_fevals": 300, **row} for row in BRATU_PRESET],
}


def unique_labels(labels: Sequence[str]) -> list[str]:
    """Suffix repeated labels with ``#2``, ``#3``, ..."""
    seen: dict[str, int] = {}
    out = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        out.append(label if seen[label] == 1 else f"{label}#{seen[label]}")
    return out


@dataclass
class Row:
    label: str
    trace: ConvergenceTrace | None
    wall: float
    error: str = ""

    @property
    def code(self) -> int:
        return EXIT_ERROR if self.trace is None else exit_code(self.trace)


def _run_row(label: str, cfg: RunConfig) -> Row:
    t0 = time.perf_counter()
    try:
        trace = solve(cfg)
    except (ConfigError, AccelError, ValueError, FloatingPointError) as exc:
        return Row(label, None, time.perf_counter() - t0, str(exc))
    return Row(label, trace, time.perf_counter() - t0)


def compare(configs: Sequence[RunConfig], jobs: int = 1) -> list[Row]:
    labels = unique_labels([c.name for c in configs])
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(_run_row, labels, configs))


def format_table(rows: Sequence[Row], timing: bool = False) -> str:
    lines = [f"{'label':<16} {'status':<10} {'resnorm':>12} {'reduction':>12} {'fevals':>7} {'wall_s':>9}"]
    for r in rows:
        wall = f"{r.wall:9.3f}" if timing else f"{0.0:9.3f}"
        if r.trace is None:
            lines.append(f"{r.label:<16} {'error':<10} {'-':>12} {'-':>12} {'-':>7} {wall}  {r.error}")
            continue
        last = r.trace.records[-1]
        lines.append(
            f"{r.label:<16} {r.trace.status:<10} {last.resnorm:12.4e} {r.trace.reduction():12.4e} "
            f"{last.fevals:7d} {wall}"
        )
    return "\n".join(lines) + "\n"


def combined_csv(rows: Sequence[Row], timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("label",) + CSV_HEADER)
    for r in rows:
        if r.trace is None:
            continue
        for rec in r.trace.records:
            t = rec.time_s if timing else 0.0
            writer.writerow([r.label, rec.iter, rec.fevals, repr(float(rec.resnorm)), f"{t:.6f}", rec.event])
    return buf.getvalue()


def cmd_compare(args) -> int:
    base = {}
    for item in args.set or []:
        base.update(parse_config_text(item, "--set"))
    row_values = [dict(v) for v in PRESETS[args.preset]] if args.preset else []
    row_values += [load_config(path) for path in args.configs]
    configs = []
    for values in row_values:
        try:
            configs.append(build_config({**values, **base}, {}))
        except (ConfigError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
    rows = compare(configs, args.jobs)
    sys.stdout.write(format_table(rows, args.timing))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(combined_csv(rows, args.timing))
    return _worst([r.code for r in rows])


def pi_table(n: int = 30, z: float = 1.0, max_order: int = 6) -> list[dict]:
    """Errors of raw partial sums, Aitken, iterated Aitken and epsilon columns by step."""
    target = math.atan(z)
    xs = atan_partial_sums(n, z)
    table = EpsilonTable(2 * max_order)
    aitken: list[float] = []
    rows = []

    def safe(fn, *a):
        try:
            return fn(*a)
        except DegenerateDenominator:
            return None

    for j, x in enumerate(xs):
        table.push(float(x))
        a1 = safe(aitken_scalar, *xs[j - 2 : j + 1]) if j >= 2 else None
        if a1 is not None:
            aitken.append(a1)
        a2 = safe(aitken_scalar, *aitken[-3:]) if len(aitken) >= 3 else None
        row = {"step": j, "raw": abs(x - target), "aitken": None, "aitken2": None}
        row["aitken"] = None if a1 is None else abs(a1 - target)
        row["aitken2"] = None if a2 is None else abs(a2 - target)
        for k in range(1, max_order + 1):
            e = table.column(2 * k)
            row[f"eps{k}"] = None if e is None else abs(e - target)
        rows.append(row)
    return rows


def format_pi_table(rows: list[dict]) -> str:
    cols = list(rows[0])
    out = io.StringIO()
    out.write(" ".join(f"{c:>10}" for c in cols) + "\n")
    for row in rows:
        cells = [f"{row['step']:>10d}"]
        cells += [f"{'-':>10}" if row[c] is None else f"{row[c]:10.3e}" for c in cols[1:]]
        out.write(" ".join(cells) + "\n")
    return out.getvalue()


def cmd_pi_demo(args) -> int:
    sys.stdout.write(format_pi_table(pi_table(args.n, args.z, args.max_order)))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is reserved for unconverged runs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpaccel", description="Fixed-point acceleration experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solve and write its CSV trace")
    _add_run_options(run)
    run.add_argument("--timing", action="store_true", help="record wall time (breaks byte-reproducibility)")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several configurations and tabulate them")
    cmp_.add_argument("configs", nargs="*", metavar="FILE", help="key=value configuration files, one per row")
    cmp_.add_argument("--preset", choices=sorted(PRESETS), help="the five-method comparison on bratu or lj")
    cmp_.add_argument("--set", action="append", metavar="KEY=VALUE", help="override applied to every row")
    cmp_.add_argument("--jobs", type=int, default=1)
    cmp_.add_argument("--out", metavar="PATH", help="combined CSV with a leading label column")
    cmp_.add_argument("--timing", action="store_true")
    cmp_.set_defaults(func=cmd_compare)

    pi = sub.add_parser("pi-demo", help="extrapolating the arctangent series")
    pi.add_argument("--n", type=int, default=30)
    pi.add_argument("--z", type=float, default=1.0)
    pi.add_argument("--max-order", dest="max_order", type=int, default=6)
    pi.set_defaults(func=cmd_pi_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AccelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
