"""Command line front end.

    ambistop roots  CONFIG
    ambistop psi    CONFIG [-o CSV]
    ambistop solve  CONFIG [-o CSV] [--x0 X] [--points N]
    ambistop crash  CONFIG [-o CSV] [--points N]
    ambistop oracle FIXTURE [--seed S] [--paths N]
    ambistop verify [--tol ID=VALUE ...] [--only ID ...]

Config values can be overridden with ``--set key=value``.  Errors are printed
as one line ``error code=<exit code> type=<name>: <message>`` on stderr.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 failed check.
"""
from __future__ import annotations

import argparse
import io
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__, acceptance, oracle
from .bm_harmonic import BMFamily
from .crash import solve_crash
from .errors import AmbistopError, ParseError, ValidationError
from .majorant import MajorantSolver, default_range
from .model import AmbiguityProblem, CrashProblem, load_config
from .ode_harmonic import ODEFamily, default_truncation

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
CSV_SCHEMA = "ambistop-csv/1"
SEED_ENV = "AMBISTOP_SEED"
DEFAULT_SEED = 12345
COMMANDS = ("roots", "psi", "solve", "crash", "oracle", "verify")


def fmt(x: float) -> str:
    return f"{float(x):.12g}"


@dataclass
class CommandSpec:
    command: str
    config_path: str | None = None
    output_path: str | None = None
    overrides: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)


def _parse_pairs(pairs, what: str) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ParseError(f"{what} must look like key=value, got {item!r}")
        try:
            out[key.strip()] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ParseError(f"cannot parse {what} value {value!r}: {exc}") from None
    return out


def _read_config(request: CommandSpec):
    try:
        with open(request.config_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {request.config_path}: {exc.strerror}") from None
    return load_config(text, request.overrides)


def _write_csv(request: CommandSpec, header: list[str], rows, out) -> None:
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} command={request.command} version={__version__}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    if request.output_path:
        with open(request.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())


def _intervals(intervals) -> str:
    return " u ".join(f"[{fmt(lo)}, {fmt(hi)}]" for lo, hi in intervals) or "empty"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_roots(request: CommandSpec, out) -> int:
    problem = _read_config(request).problem
    if not isinstance(problem, AmbiguityProblem):
        raise ValidationError("roots needs an ambiguity problem")
    try:
        fam = BMFamily.for_problem(problem)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    e = fam.exponents
    coords = "log" if fam.log_coords else "state"
    for name in ("alpha1", "alpha2", "beta1", "beta2"):
        out.write(f"{name}={fmt(getattr(e, name))}\n")
    out.write(f"coordinates={coords}\n")
    return EXIT_OK


def cmd_psi(request: CommandSpec, out) -> int:
    config = _read_config(request)
    problem = config.problem
    if not isinstance(problem, AmbiguityProblem):
        raise ValidationError("psi needs an ambiguity problem")
    s = config.solver
    lo, hi = default_range(problem.diffusion)
    x_min = s.x_min if s.x_min is not None else lo
    x_max = s.x_max if s.x_max is not None else hi
    fam = ODEFamily(problem, default_truncation(problem.diffusion, x_min, x_max), grid_n=max(s.grid_n, 64))
    t = fam.tables
    xs = t[0].grid
    header = ["x", "log_psi_inc_plus", "log_psi_dec_plus", "log_psi_inc_minus", "log_psi_dec_minus"]
    rows = zip(xs, *(tab.log_value(xs) for tab in t))
    _write_csv(request, header, rows, out)
    return EXIT_OK


def cmd_solve(request: CommandSpec, out) -> int:
    config = _read_config(request)
    problem = config.problem
    if not isinstance(problem, AmbiguityProblem):
        raise ValidationError("solve needs an ambiguity problem; use crash")
    solver = MajorantSolver(problem, config.solver)
    n = request.options.get("points") or 201
    grid = np.geomspace(solver.grid[0], solver.grid[-1], n) if solver._log_c else np.linspace(solver.grid[0], solver.grid[-1], n)
    x0 = request.options.get("x0")
    if x0 is None:
        x0 = 1.0 if problem.diffusion.family == "GeometricBM" else 0.0
    sol = solver.solve(grid, worst_case_at=(x0,))
    pt = solver.value_at(x0)
    stop = np.asarray(sol.in_stopping_set, dtype=int)
    rows = zip(sol.grid, sol.g, sol.v, sol.c_star, sol.lambda_star, map(str, stop))
    _write_csv(request, ["x", "g", "v", "c_star", "lambda_star", "stop"], rows, out)
    summary = sys.stderr if request.output_path is None else out
    summary.write(f"x0={fmt(x0)} v={fmt(pt.v)} c_star={fmt(pt.c_star)} lambda_star={fmt(pt.lambda_star)}\n")
    summary.write(f"stopping_set={_intervals(sol.stopping_set)}\n")
    summary.write(f"worst_case_prior={sol.worst_case[float(x0)].describe()}\n")
    return EXIT_OK


def cmd_crash(request: CommandSpec, out) -> int:
    config = _read_config(request)
    problem = config.problem
    if not isinstance(problem, CrashProblem):
        raise ValidationError("crash needs problem.kind: crash")
    sol = solve_crash(problem, config.solver)
    summary = sys.stderr if request.output_path is None else out
    for name, value in (("gamma", sol.gamma_exp), ("x_star", sol.x_star), ("d", sol.d_coef), ("x_prime", sol.x_prime)):
        summary.write(f"{name}={fmt(value)}\n")
    n = request.options.get("points") or 201
    upper = 2.0 * (sol.x_star / problem.crash_factor if math.isfinite(sol.x_star) else 2.0 * sol.x_prime)
    xs = np.linspace(upper / n, upper, n)
    rows = zip(xs, problem.reward(xs), sol.g_hat(xs), sol.value(xs))
    _write_csv(request, ["x", "g", "g_hat", "value"], rows, out)
    return EXIT_OK


def _oracle_bm1(seed: int, n_paths: int):
    problem, _, pt, _, b, _ = acceptance.straddle_solution()
    tree = oracle.robust_snell(oracle.make_tree(problem.diffusion, problem.r, 0.0, 1e-3, -3.0, 3.0), problem).value
    mc = oracle.mc_under_prior(problem, acceptance.merge_point(pt.c_star, problem.kappa), oracle.ExitRule(-b, b), n_paths, seed, 0.0)
    return pt.v, tree, mc


def _oracle_gbm1(seed: int, n_paths: int):
    problem = acceptance.fix_gbm1()
    sol = solve_crash(problem)
    tree = oracle.crash_dynkin_tree(oracle.make_tree(problem.diffusion, problem.r, 1.0, 2.5e-3, 0.01, 50.0), problem).value
    mc = oracle.mc_crash(problem, sol.x_prime, sol.x_star, sol.x_prime, 1.0, n_paths, seed)
    return sol.value(1.0), tree, mc


FIXTURES = {"FIX-BM1": _oracle_bm1, "FIX-GBM1": _oracle_gbm1}


def cmd_oracle(request: CommandSpec, out) -> int:
    name = request.options["fixture"]
    if name not in FIXTURES:
        raise ValidationError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    seed, n_paths = request.options["seed"], request.options.get("paths") or 20000
    analytic, tree, mc = FIXTURES[name](seed, n_paths)
    tree_ok = abs(tree - analytic) <= 0.01 * abs(analytic)
    mc_ok = abs(mc.mean - analytic) <= 3.0 * mc.std_error + 0.01 * abs(analytic)
    out.write(f"fixture={name} seed={seed} paths={n_paths}\n")
    out.write(f"analytic={fmt(analytic)}\n")
    out.write(f"tree={fmt(tree)} {'pass' if tree_ok else 'fail'} (rel tol 0.01)\n")
    out.write(f"mc={fmt(mc.mean)} se={fmt(mc.std_error)} {'pass' if mc_ok else 'fail'} (3 SE + 1%)\n")
    return EXIT_OK if tree_ok and mc_ok else EXIT_VERIFY


def cmd_verify(request: CommandSpec, out) -> int:
    raw = request.options.get("tol") or {}
    tolerances = {}
    for key, value in raw.items():
        try:
            cid = int(key)
        except ValueError:
            raise ParseError(f"tolerance key must be a criterion number, got {key!r}") from None
        if cid not in acceptance.CHECKS:
            raise ParseError(f"no criterion {cid}")
        try:
            tolerances[cid] = float(value)
        except (TypeError, ValueError):
            raise ParseError(f"tolerance for criterion {cid} must be numeric") from None
    ids = request.options.get("only") or sorted(acceptance.CHECKS)
    failed = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", oracle.HorizonWarning)
        for cid in ids:
            if cid not in acceptance.CHECKS:
                raise ParseError(f"no criterion {cid}")
            res = acceptance.run_check(cid, tolerances)
            out.write(res.line() + "\n")
            out.flush()
            failed += not res.passed
    out.write(f"{len(ids) - failed}/{len(ids)} criteria passed\n")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


HANDLERS = {
    "roots": cmd_roots,
    "psi": cmd_psi,
    "solve": cmd_solve,
    "crash": cmd_crash,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ambistop", description="Robust optimal stopping under drift ambiguity.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name: str, help_: str, output: bool = True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="YAML config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if output:
            sp.add_argument("-o", "--output", help="CSV output path (default: stdout)")
        return sp

    with_config("roots", "exponents of the closed-form harmonic functions", output=False)
    with_config("psi", "tabulated fundamental solutions")
    sp = with_config("solve", "value function, merge points and stopping set")
    sp.add_argument("--x0", type=float, help="start point for the summary (default 0, or 1 for GBM)")
    sp.add_argument("--points", type=int, help="number of CSV rows (default 201)")
    sp = with_config("crash", "crash model thresholds and value")
    sp.add_argument("--points", type=int, help="number of CSV rows (default 201)")

    sp = sub.add_parser("oracle", help="compare a fixture against the lattice and Monte Carlo")
    sp.add_argument("fixture", help=", ".join(FIXTURES))
    sp.add_argument("--seed", type=int, help=f"Monte Carlo seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    sp.add_argument("--paths", type=int, help="Monte Carlo paths (default 20000)")

    sp = sub.add_parser("verify", help="run the acceptance checks")
    sp.add_argument("--tol", action="append", metavar="ID=VALUE", help="override a criterion's tolerance")
    sp.add_argument("--only", type=int, nargs="+", metavar="ID", help="run only these criteria")
    return p


def spec_from_args(args: argparse.Namespace) -> CommandSpec:
    request = CommandSpec(args.command)
    if hasattr(args, "config"):
        request.config_path = args.config
        request.overrides = _parse_pairs(args.set, "--set")
        request.output_path = getattr(args, "output", None)
    for key in ("x0", "points", "paths", "only"):
        if getattr(args, key, None) is not None:
            request.options[key] = getattr(args, key)
    if args.command == "oracle":
        request.options["fixture"] = args.fixture
        request.options["seed"] = args.seed if args.seed is not None else _default_seed()
    if args.command == "verify":
        request.options["tol"] = _parse_pairs(args.tol, "--tol")
    return request


def run(request: CommandSpec, out=None) -> int:
    return HANDLERS[request.command](request, out or sys.stdout)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(spec_from_args(args))
    except AmbistopError as exc:
        code, name, msg = exc.exit_code, type(exc).__name__, str(exc)
    except (ValueError, ArithmeticError) as exc:
        code, name, msg = EXIT_NUMERIC, type(exc).__name__, str(exc)
    msg = " ".join(msg.split())
    sys.stderr.write(f"error code={code} type={name}: {msg}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
