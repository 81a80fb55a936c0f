"""Command-line front end: ``voight {inpaint,compare,sweep,stability-audit,make-fixtures}``.

Every flag may also be given in a flat ``key = value`` config file passed
with ``--config``; flags on the command line win.  Keys use the long flag
name without the leading dashes (``max-iter = 500``; underscores are
accepted too).

Exit codes: 0 success/converged, 1 error, 2 diverged, 3 max-iter.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import stability as stab
from .diffusivity import DiffusivityKind, DiffusivitySpec
from .fixtures import make_fixtures
from .grid import UpwindMode
from .imageio import DEFAULT_BAND, InitMode, PGMError, MaskError, load_mask, read_pgm, write_pgm
from .metrics import Status, summarize_sweep
from .solver import SolverParams, run_to_steady

log = logging.getLogger("voight")

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED, EXIT_MAX_ITER = 0, 1, 2, 3
STATUS_EXIT = {Status.CONVERGED: EXIT_OK, Status.DIVERGED: EXIT_DIVERGED, Status.MAX_ITER: EXIT_MAX_ITER}


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    """Float that also accepts fractions such as ``1/3``."""
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def parse_list(text: str) -> list[float]:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return [parse_number(t) for t in items]


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file (``#`` starts a comment)."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-").lstrip("-")] = value
    return out


# ---------------------------------------------------------------------------
# argument parser
# ---------------------------------------------------------------------------

def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--nu", type=parse_number, default=2.0, help="viscosity (default 2)")
    g.add_argument("--alpha", type=parse_number, default=0.0, help="Voight length; 0 is plain NSE (default 0)")
    g.add_argument("--dt", type=parse_number, default=0.001, help="time step (default 0.001)")
    g.add_argument("--tol", type=parse_number, default=1e-4, help="steady-state tolerance (default 1e-4)")
    g.add_argument("--max-iter", type=int, default=10000, help="iteration cap (default 10000)")
    g.add_argument("--g", choices=[k.value for k in DiffusivityKind], default="rational2",
                   help="diffusivity function (default rational2)")
    g.add_argument("--k", type=parse_number, default=5.0, help="diffusivity parameter (default 5)")
    g.add_argument("--squared-argument", action="store_true", help="feed |grad w|^2 to g")
    g.add_argument("--band", type=int, default=DEFAULT_BAND, help="known band width in pixels (default 3)")
    g.add_argument("--init", choices=[m.value for m in InitMode], default="mean-of-band",
                   help="initial fill of the hole (default mean-of-band)")
    g.add_argument("--upwind", choices=[m.value for m in UpwindMode], default="paper-exact",
                   help="advection differencing (default paper-exact)")
    g.add_argument("--linear-solver", choices=["cg", "direct", "dense"], default="cg",
                   help="solver for the per-step system (default cg)")
    g.add_argument("--linear-tol", type=parse_number, default=1e-8, help="linear relative residual (default 1e-8)")
    g.add_argument("--linear-max-iter", type=int, default=2000, help="linear iteration cap (default 2000)")
    g.add_argument("--poisson-every", type=int, default=1, help="re-solve the Poisson problem every N steps")
    g.add_argument("--psnr-scope", choices=["image", "region"], default="image",
                   help="pixels entering PSNR (default image)")
    g.add_argument("--timing", action="store_true", help="include wall-clock time in reports")


def _io_flags(p: argparse.ArgumentParser, reference_required: bool = False) -> None:
    p.add_argument("--image", required=True, help="damaged input image (PGM)")
    p.add_argument("--mask", required=True, help="mask PGM, >= 128 marks pixels to inpaint")
    p.add_argument("--reference", required=reference_required, help="undamaged image for PSNR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voight", description="Fluid-dynamics image inpainting (NSE/NSV).")
    parser.add_argument("--config", help="flat key = value file with flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inpaint", help="inpaint one image")
    _io_flags(p)
    _solver_flags(p)
    p.add_argument("--out", required=True, help="output PGM")
    p.add_argument("--report", help="JSON report path (default: stdout)")

    for name, text in (("compare", "NSE against NSV over alpha x dt"), ("sweep", "grid over alpha x dt x nu")):
        p = sub.add_parser(name, help=text)
        _io_flags(p, reference_required=(name == "compare"))
        _solver_flags(p)
        p.add_argument("--alphas", type=parse_list, default=[0.0, 1 / 3, 2 / 3, 1.0, 4 / 3],
                       help="comma-separated alpha values, fractions allowed (default 0,1/3,2/3,1,4/3)")
        p.add_argument("--dts", type=parse_list, default=[0.001, 0.0001], help="comma-separated time steps")
        if name == "sweep":
            p.add_argument("--nus", type=parse_list, help="comma-separated viscosities (default: --nu)")
        p.add_argument("--csv", help="CSV output path (default: stdout)")
        p.add_argument("--report", help="JSON file with every run report")

    p = sub.add_parser("stability-audit", help="check step-size conditions and audit energy bounds")
    p.add_argument("--scheme", choices=["all"] + [s.value for s in stab.Scheme], default="all")
    p.add_argument("--nu", type=parse_number, default=2.0)
    p.add_argument("--alpha", type=parse_number, default=0.5)
    p.add_argument("--delta", type=parse_number, default=0.5)
    p.add_argument("--k", type=parse_number, help="time step (default: largest certified k per scheme)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--n", type=int, default=16, help="grid points per side (default 16)")
    p.add_argument("--L", type=parse_number, default=1.0, help="box is [0, 2 pi L]^2 (default 1)")
    p.add_argument("--initial", choices=["taylor-green", "random"], default="taylor-green")
    p.add_argument("--amplitude", type=parse_number, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d0", type=parse_number, help="Poincare constant (default L)")
    p.add_argument("--d1", type=parse_number, default=1.0)
    p.add_argument("--d2", type=parse_number, help="default d0")
    p.add_argument("--report", help="JSON output path (default: stdout)")
    p.add_argument("--csv", help="CSV of per-step norms")

    p = sub.add_parser("make-fixtures", help="write the synthetic stripe fixtures")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--outdir", default="fixtures")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((t for t in rest if t in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = read_config(known.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[command]
    actions = {a.option_strings[0].lstrip("-"): a for a in subparser._actions if a.option_strings}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise ConfigError(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"invalid value {raw!r} for {key}") from exc
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"invalid value {raw!r} for {key}")
        defaults[action.dest] = value
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def params_from_args(args, **override) -> SolverParams:
    fields = dict(
        nu=args.nu, alpha=args.alpha, dt=args.dt, tol=args.tol, max_iter=args.max_iter,
        diffusivity=DiffusivitySpec(args.g, args.k, args.squared_argument),
        upwind_mode=args.upwind, init_mode=args.init, linear_solver=args.linear_solver,
        linear_tol=args.linear_tol, linear_max_iter=args.linear_max_iter, poisson_every=args.poisson_every,
    )
    fields.update(override)
    return SolverParams(**fields)


def _load_inputs(args):
    host = read_pgm(args.image)
    region = load_mask(args.mask, host, args.band)
    reference = read_pgm(args.reference) if args.reference else None
    if reference is not None and reference.pixels.shape != host.pixels.shape:
        raise MaskError("reference image size differs from the input image")
    return host, region, reference


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_inpaint(args) -> int:
    host, region, reference = _load_inputs(args)
    params = params_from_args(args)
    out, report = run_to_steady(host, region, params, reference, args.psnr_scope)
    write_pgm(out, args.out)
    _emit(report.to_json(args.timing), args.report)
    log.info("%s after %d iterations", report.status.value, report.iterations)
    return STATUS_EXIT[report.status]


def _run_cell(job):
    args, overrides = job
    host, region, reference = _load_inputs(args)
    _, report = run_to_steady(host, region, params_from_args(args, **overrides), reference, args.psnr_scope)
    return report


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("VOIGHT_THREADS")
    try:
        limit = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"VOIGHT_THREADS must be an integer, got {cap!r}")
    return max(1, min(limit, n_jobs))


def _run_grid(args, cells: list[dict]) -> list:
    jobs = [(args, c) for c in cells]
    workers = _workers(len(jobs))
    if workers == 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


def _write_sweep(args, reports) -> None:
    text = summarize_sweep(reports)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.report:
        order = sorted(reports, key=lambda r: (r.params["dt"], r.params["alpha"], r.params["nu"]))
        Path(args.report).write_text(json.dumps({"runs": [r.to_dict(args.timing) for r in order]}, indent=2))


def cmd_compare(args) -> int:
    alphas = sorted(set([0.0] + list(args.alphas)))
    _load_inputs(args)  # fail fast before spawning workers
    cells = [{"alpha": a, "dt": dt} for dt in args.dts for a in alphas]
    _write_sweep(args, _run_grid(args, cells))
    return EXIT_OK


def cmd_sweep(args) -> int:
    _load_inputs(args)
    nus = args.nus or [args.nu]
    cells = [{"alpha": a, "dt": dt, "nu": nu} for dt, a, nu in itertools.product(args.dts, args.alphas, nus)]
    _write_sweep(args, _run_grid(args, cells))
    return EXIT_OK


def cmd_stability_audit(args) -> int:
    if not 0.0 < args.delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {args.delta}")
    if args.nu <= 0 or args.alpha < 0 or args.steps < 1 or args.n < 3 or args.L <= 0:
        raise ConfigError("nu, L must be positive, alpha non-negative, steps >= 1, n >= 3")
    box = stab.PeriodicBox(args.n, args.L)
    if args.initial == "taylor-green":
        u0 = stab.taylor_green(box, args.amplitude)
    else:
        u0 = stab.random_solenoidal(box, np.random.default_rng(args.seed), args.amplitude)
    schemes = list(stab.Scheme) if args.scheme == "all" else [stab.Scheme(args.scheme)]
    common = dict(steps=args.steps, nu=args.nu, alpha=args.alpha, delta=args.delta,
                  d0=args.d0, d1=args.d1, d2=args.d2)
    results, rows = [], []
    ok = True
    for scheme in schemes:
        k = args.k
        if k is None:
            probe = stab.audit_inputs(box, u0, k=1.0, **{**common, "steps": 1})
            k = stab.MAX_K[scheme](probe)
            if not k > 0:
                results.append({"scheme": scheme.value, "outcome": "no certified step size exists"})
                continue
        inputs = stab.audit_inputs(box, u0, k=k, **common)
        trace = stab.run_energy_audit(scheme, inputs, args.steps, u0, box)
        ok = ok and trace.passed
        results.append(trace.to_dict())
        rows.extend((scheme.value,) + r for r in trace.rows())
        log.info("%s: %s", scheme.value, trace.outcome)
    _emit(json.dumps({"audits": results, "passed": ok}, indent=2), args.report)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["scheme"] + stab.TRACE_COLUMNS)
            w.writerows(rows)
    return EXIT_OK if ok else EXIT_ERROR


def cmd_make_fixtures(args) -> int:
    for name, path in make_fixtures(args.seed, args.outdir).items():
        print(f"{name}\t{path}")
    return EXIT_OK


COMMANDS = {
    "inpaint": cmd_inpaint,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "stability-audit": cmd_stability_audit,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except ConfigError as exc:
        print(f"voight: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, PGMError, MaskError, ConfigError, ValueError) as exc:
        print(f"voight: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
