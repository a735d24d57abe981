"""Command-line front end.

Subcommands: context, solve, analyze, iterate, sharpness, report.
Exit codes: 0 ok, 2 validation, 3 numerics, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .distribution import (
    Diverged,
    DivergedIntegralError,
    distribution_function,
    height_grid,
    layer_cake_norm,
    lebesgue_norm,
)
from .exponents import ContextError, Regime, validate_context
from .iteration import (
    critical_bound,
    default_beta_grid,
    iterate_critical,
    iterate_subcritical,
    iteration_csv,
    sandwich,
    subcritical_exponent,
)
from .profiles import CSVFormatError, PowerLawAffine, Sampled, metadata_block
from .quadrature import QuadratureConfig, QuadratureError
from .radial import p_laplacian_residual, power_source_solution, solve_radial
from .sharpness import ExampleError, exponent_sweep, verify_example_pde

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4
NORM_GAP_BOUND = 1e-4
REPORT_FILES = ("context.json", "residual.json", "norms.csv", "summary.json", "verdict.json")


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class ExperimentConfig:
    n: int = 3
    p: float = 2.0
    q: float = 1.2
    source: dict = field(default_factory=lambda: {"constant": 1.0})
    quadrature: dict = field(default_factory=lambda: asdict(QuadratureConfig()))
    r_nodes: int = 512
    beta_nodes: int = 200
    height_nodes: int = 2048
    output_dir: str = "out"
    seed: int = 0
    residual_bound: float = 1e-6
    r_exps: list = field(default_factory=lambda: [1.0, 2.0, 5.0])
    K: int | None = None
    epsilon: float = 1.0
    r_grid: list = field(default_factory=lambda: [5.0, 6.0, 6.5, 6.9, 7.0, 7.5])

    def validate(self):
        for name in ("r_nodes", "beta_nodes", "height_nodes"):
            if getattr(self, name) < 64:
                raise CLIError(EXIT_VALIDATION, f"{name}={getattr(self, name)} must be >= 64")
        if len(self.source) != 1 or next(iter(self.source)) not in ("power", "constant", "file"):
            raise CLIError(EXIT_VALIDATION, f"source must be one of power/constant/file, got {self.source}")
        try:
            QuadratureConfig(**self.quadrature)
        except (TypeError, ValueError) as exc:
            raise CLIError(EXIT_VALIDATION, f"quadrature: {exc}") from None

    def as_metadata(self) -> dict:
        return {"config": asdict(self), "version": __version__}


# -- config assembly ------------------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CLIError(EXIT_IO, f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise CLIError(EXIT_VALIDATION, f"config is not valid JSON: {exc}") from None
        ctx = data.pop("context", None)
        if ctx:
            data.update({k: ctx[k] for k in ("n", "p", "q") if k in ctx})
        grids = data.pop("grids", None)
        if grids:
            data.update(grids)
        unknown = set(data) - set(asdict(cfg))
        if unknown:
            raise CLIError(EXIT_VALIDATION, f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **data)
    overrides = {}
    for key in ("n", "p", "q", "r_nodes", "beta_nodes", "height_nodes", "output_dir", "seed", "residual_bound", "K", "epsilon"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "source_constant", None) is not None:
        overrides["source"] = {"constant": args.source_constant}
    if getattr(args, "source_power", None) is not None:
        overrides["source"] = {"power": list(args.source_power)}
    if getattr(args, "source_file", None) is not None:
        overrides["source"] = {"file": args.source_file}
    if getattr(args, "r_exps", None):
        overrides["r_exps"] = list(args.r_exps)
    if getattr(args, "r_grid", None):
        overrides["r_grid"] = list(args.r_grid)
    if getattr(args, "origin_cutoff", None) is not None:
        overrides["quadrature"] = {**cfg.quadrature, "origin_cutoff": args.origin_cutoff}
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _context(cfg: ExperimentConfig):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return validate_context(cfg.n, cfg.p, cfg.q)
    except ContextError as exc:
        raise CLIError(EXIT_VALIDATION, str(exc)) from None


def _source(cfg: ExperimentConfig):
    kind, val = next(iter(cfg.source.items()))
    if kind == "constant":
        return PowerLawAffine.constant(float(val))
    if kind == "power":
        coeff, expo = val
        return PowerLawAffine(float(coeff), float(expo))
    try:
        text = Path(val).read_text()
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read source file: {exc}") from None
    try:
        return Sampled.from_csv(text)
    except CSVFormatError as exc:
        raise CLIError(EXIT_IO, f"{val}: {exc}") from None


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _csv(header, rows, metadata) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    buf.write(metadata_block(metadata))
    return buf.getvalue()


# -- subcommands ----------------------------------------------------------------

def cmd_context(args) -> int:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ctx = validate_context(args.n, args.p, args.q)
    except ContextError as exc:
        raise CLIError(EXIT_VALIDATION, str(exc)) from None
    text = _json({k: _num(v) if isinstance(v, float) else v for k, v in ctx.to_dict().items()})
    sys.stdout.write(text)
    if getattr(args, "output_dir", None):
        _write(Path(args.output_dir) / "context.json", text)
    return EXIT_OK


def _solve(cfg: ExperimentConfig):
    ctx = _context(cfg)
    f = _source(cfg)
    qcfg = QuadratureConfig(**cfg.quadrature)
    try:
        u = solve_radial(f, ctx, qcfg, cfg.r_nodes)
    except (QuadratureError, FloatingPointError) as exc:
        raise CLIError(EXIT_NUMERICS, f"solver failed: {exc}") from None
    return ctx, f, u, qcfg


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    ctx, f, u, qcfg = _solve(cfg)
    out = Path(cfg.output_dir)
    meta = cfg.as_metadata()
    _write(out / "solution.csv", u.to_csv(meta))
    radii = u.radii[(u.radii >= 10 * u.grid_min) & (u.radii <= 0.99)]
    residual = p_laplacian_residual(u, f, ctx, radii, qcfg)
    report = {"residual": residual, "residual_bound": cfg.residual_bound, "nodes": int(u.radii.size)}
    exact = power_source_solution(f, ctx) if isinstance(f, PowerLawAffine) else None
    if exact is not None:
        sel = (u.radii >= 0.01) & (u.radii <= 0.99)
        ref = exact(u.radii[sel])
        report["gap"] = float(np.max(np.abs(u.values[sel] - ref) / np.maximum(np.abs(ref), np.finfo(float).tiny)))
        report["closed_form"] = json.loads(exact.to_json())
    report["ok"] = bool(residual <= cfg.residual_bound)
    _write(out / "residual.json", _json(report))
    return EXIT_OK if report["ok"] else EXIT_NUMERICS


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    ctx, f, u, qcfg = _solve(cfg)
    out = Path(cfg.output_dir)
    meta = cfg.as_metadata()
    heights = height_grid(u, cfg.height_nodes)
    curve = distribution_function(u, heights, ctx)
    _write(out / "distribution.csv", curve.to_csv(meta))
    rows, ok = [], True
    for r in cfg.r_exps:
        direct = lebesgue_norm(u, r, ctx, qcfg)
        try:
            cake = layer_cake_norm(curve, r)
        except DivergedIntegralError:
            cake = None
        if isinstance(direct, Diverged):
            status = "diverged" if cake is None else "inconsistent"
            rows.append((float(r), None, cake, None, status))
            ok &= cake is None
            continue
        if cake is None:
            rows.append((float(r), direct, None, None, "inconsistent"))
            ok = False
            continue
        gap = abs(cake - direct) / abs(direct) if direct else abs(cake)
        status = "ok" if gap <= NORM_GAP_BOUND else "gap"
        ok &= status == "ok"
        rows.append((float(r), direct, cake, gap, status))
    _write(out / "norms.csv", _csv(["r_exp", "direct", "layer_cake", "relative_gap", "status"], rows, meta))
    return EXIT_OK if ok else EXIT_NUMERICS


def cmd_iterate(args) -> int:
    cfg = _load_config(args)
    ctx = _context(cfg)
    out = Path(cfg.output_dir)
    meta = cfg.as_metadata()
    grid = default_beta_grid(cfg.beta_nodes)
    if ctx.regime is Regime.SUBCRITICAL:
        state = iterate_subcritical(ctx, grid, cfg.K if cfg.K is not None else 30)
        rep = sandwich(state)
        violations = rep.violations
        extra = {
            "infimum_above_half": rep.infimum_above_half,
            "half_above_closed_form": rep.half_above_closed_form,
            "half_above_halving_bound": rep.half_above_halving_bound,
            "worst_closed_form_ratio": rep.worst_closed_form_ratio,
            "closed_form_exponent_K": subcritical_exponent(ctx, state.K),
        }
    elif ctx.regime is Regime.CRITICAL:
        state = iterate_critical(ctx, grid, cfg.K if cfg.K is not None else 50)
        violations = 0
        for k in range(1, state.K + 1):
            bound = np.log(critical_bound(ctx, grid, k))
            violations += int(np.sum(state.log_lambda[k] > bound + 1e-12 * np.maximum(1, np.abs(bound))))
        extra = {}
    else:
        raise CLIError(EXIT_VALIDATION, "no iteration scheme for q > n/p")
    for k in range(state.K + 1):
        _write(out / f"iteration_k{k:02d}.csv", iteration_csv(state, k, meta))
    summary = {
        "regime": ctx.regime.value,
        "exponents": {k: _num(v) if isinstance(v, float) else v for k, v in ctx.to_dict().items()},
        "K": state.K,
        "sandwich_violations": violations,
        **extra,
    }
    _write(out / "summary.json", _json(summary))
    return EXIT_OK if violations == 0 else EXIT_NUMERICS


def cmd_sharpness(args) -> int:
    cfg = _load_config(args)
    ctx = _context(cfg)
    out = Path(cfg.output_dir)
    meta = cfg.as_metadata()
    qcfg = QuadratureConfig(**cfg.quadrature)
    try:
        sweep = exponent_sweep(ctx, cfg.epsilon, cfg.r_grid, qcfg)
    except ExampleError as exc:
        raise CLIError(EXIT_VALIDATION, str(exc)) from None
    check = verify_example_pde(sweep.example, cfg=qcfg)
    rows = [(row.r_exp, row.growth.value, "finite" if row.finite else "divergent", row.norm) for row in sweep.rows]
    _write(out / "sweep.csv", _csv(["r_exp", "growth", "status", "norm"], rows, meta))
    verdict = {
        "threshold": sweep.example.threshold,
        "sharp_exponent": ctx.sharp_exponent,
        "epsilon": cfg.epsilon,
        "empirical_cutoff": sweep.empirical_cutoff,
        "resolution": _num(sweep.resolution),
        "cutoff_within_resolution": sweep.cutoff_ok,
        "residual_max": check.residual,
        "solver_gap": check.solver_gap,
    }
    _write(out / "verdict.json", _json(verdict))
    return EXIT_OK if sweep.cutoff_ok and check.residual <= cfg.residual_bound else EXIT_NUMERICS


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    report = {"config": asdict(cfg)}
    for name in REPORT_FILES:
        path = out / name
        if not path.exists():
            continue
        try:
            text = path.read_text()
        except OSError as exc:
            raise CLIError(EXIT_IO, f"cannot read {path}: {exc}") from None
        if name.endswith(".json"):
            report[name] = json.loads(text)
        else:
            body = [line for line in text.splitlines() if not line.startswith("#")]
            report[name] = list(csv.DictReader(body))
    _write(out / "report.json", _json(report))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, *, source=True):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("-n", type=int)
    p.add_argument("-p", type=float)
    p.add_argument("-q", type=float)
    p.add_argument("-o", "--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--origin-cutoff", type=float)
    if source:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--source-constant", type=float)
        g.add_argument("--source-power", type=float, nargs=2, metavar=("COEFF", "EXPONENT"))
        g.add_argument("--source-file")
        p.add_argument("--r-nodes", dest="r_nodes", type=int)
        p.add_argument("--residual-bound", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppoisson", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("context", help="validate (n, p, q) and print derived exponents")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-p", type=float, required=True)
    p.add_argument("-q", type=float, required=True)
    p.add_argument("-o", "--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_context)

    p = sub.add_parser("solve", help="radial solution and residual")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("analyze", help="distribution function and norm table")
    _add_common(p)
    p.add_argument("--height-nodes", dest="height_nodes", type=int)
    p.add_argument("--r-exps", dest="r_exps", type=float, nargs="+")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("iterate", help="level-set recursion with closed-form comparisons")
    _add_common(p, source=False)
    p.add_argument("--beta-nodes", dest="beta_nodes", type=int)
    p.add_argument("-K", type=int)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("sharpness", help="exponent sweep over the sharpness example")
    _add_common(p, source=False)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r-grid", dest="r_grid", type=float, nargs="+")
    p.add_argument("--residual-bound", type=float)
    p.set_defaults(func=cmd_sharpness)

    p = sub.add_parser("report", help="collect prior outputs into report.json")
    _add_common(p, source=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_VALIDATION
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QuadratureError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
