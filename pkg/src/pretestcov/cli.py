"""Command-line front end: deterministic scenario runs emitting CSV.

Subcommands
-----------
exact       conditional coverage of the known-variance interval for one x
curve       coverage curve over a lambda grid (CRN-coupled)
min         minimum coverage over lambda, with the test size 1 - min_cp
sweep       minimum coverage as a function of rho or psi
efficiency  brute-force vs control-variate variance and timing comparison

Configuration precedence: command-line flags override a plain-text config
file (``key = value`` lines) which overrides built-in defaults (the usual
demonstration scenario: CS, rho 0.3, N 100, T 3, psi 1/3, alpha =
alpha_tilde = 0.05, unbiased estimators, M 20000).

Every CSV embeds a ``#``-prefixed manifest block sufficient to reproduce it
byte-for-byte: rerunning the same subcommand with ``--config <emitted.csv>``
regenerates identical rows.  Volatile information (wall times, version) goes
to a ``<out>.manifest.txt`` sidecar instead.  Exit codes: 0 success, 2
configuration error, 3 numerical or degenerate failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DegenerateDesignError,
    InadmissibleParameterError,
    MleConvergenceError,
    PretestCovError,
    UnsupportedStructureError,
)
from .estimators import xstats
from .exact import conditional_coverage_known
from .mc import base_noise, crn_grid, measure_efficiency
from .model import (
    CorrStructure,
    ModelConfig,
    VarianceEstimator,
    generate_panel,
    var_xbar_cs,
)
from .study import GridSpec, min_coverage_over_tau, sweep_psi, sweep_rho

_DEFAULTS = {
    "structure": "cs",
    "rho": 0.3,
    "psi": 1.0 / 3.0,
    "tau": None,
    "lambda": None,
    "n": 100,
    "t": 3,
    "alpha": 0.05,
    "alpha_tilde": 0.05,
    "estimator": "unbiased",
    "m": 20000,
    "seed": 1,
    "threads": 1,
    "grid": None,
    "grid_unit": "lambda",
    "method": "auto",
    "sweep": None,
    "structures": "cs,ar1",
    "x_file": None,
}

_FLOAT_KEYS = {"rho", "psi", "tau", "lambda", "alpha", "alpha_tilde"}
_INT_KEYS = {"n", "t", "m", "seed", "threads"}
_MANIFEST_ORDER = [
    "command",
    "structure",
    "rho",
    "psi",
    "tau",
    "lambda",
    "n",
    "t",
    "alpha",
    "alpha_tilde",
    "estimator",
    "m",
    "seed",
    "threads",
    "grid",
    "grid_unit",
    "method",
    "sweep",
    "structures",
    "x_file",
]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _INT_KEYS:
        return int(raw)
    return raw


def _read_config_file(path: str) -> dict:
    """Parse key = value lines; a previously emitted CSV works directly
    (its manifest comments are read, data rows are ignored)."""
    settings = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line in lines:
        line = line.strip()
        if line.startswith("#"):
            line = line.lstrip("#").strip()
        if "=" not in line:
            continue
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key in ("command", "manifest") or key.startswith("info"):
            continue
        if key == "out":
            continue
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown config key '{key}' in {path}")
        try:
            settings[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for '{key}' in {path}: {exc}") from exc
    return settings


def _parse_grid(spec: str) -> np.ndarray:
    try:
        start, stop, count = spec.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError as exc:
        raise ConfigError(f"--grid must be start:stop:count, got '{spec}'") from exc
    if count < 1:
        raise ConfigError(f"grid count must be >= 1, got {count}")
    return np.linspace(start, stop, count)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pretestcov",
        description="Coverage of panel-data confidence intervals after a Hausman pretest.",
    )
    parser.add_argument("--version", action="version", version=f"pretestcov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain-text key=value file (or an emitted CSV)")
    common.add_argument("--structure", choices=["cs", "ar1"])
    common.add_argument("--rho", type=float)
    common.add_argument("--psi", type=float)
    point = common.add_mutually_exclusive_group()
    point.add_argument("--tau", type=float)
    point.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--n", type=int)
    common.add_argument("--t", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--alpha-tilde", dest="alpha_tilde", type=float)
    common.add_argument(
        "--estimator",
        choices=["known", "unbiased", "mle", "wooldridge0", "wooldridge2"],
    )
    common.add_argument("--m", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--grid", help="start:stop:count")
    common.add_argument("--out", help="output CSV path (default: stdout)")

    p_exact = sub.add_parser(
        "exact", parents=[common], help="exact conditional coverage for one covariate draw"
    )
    p_exact.add_argument("--x-file", dest="x_file", help="CSV of N rows x T covariate values")
    p_exact.add_argument("--grid-unit", dest="grid_unit", choices=["lambda", "tau"])

    p_curve = sub.add_parser("curve", parents=[common], help="coverage curve over lambda")
    p_curve.add_argument("--method", choices=["auto", "cv", "brute"])

    p_min = sub.add_parser("min", parents=[common], help="minimum coverage over lambda")
    p_min.add_argument("--method", choices=["auto", "cv", "brute"])

    p_sweep = sub.add_parser("sweep", parents=[common], help="min coverage vs rho or psi")
    p_sweep.add_argument("--sweep", choices=["rho", "psi"], required=True)
    p_sweep.add_argument("--structures", help="comma list of structures, e.g. cs,ar1")

    sub.add_parser(
        "efficiency", parents=[common], help="brute-force vs control-variate comparison"
    )
    return parser


def _assemble(args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config))
    flag_map = {
        "structure": "structure",
        "rho": "rho",
        "psi": "psi",
        "tau": "tau",
        "lam": "lambda",
        "n": "n",
        "t": "t",
        "alpha": "alpha",
        "alpha_tilde": "alpha_tilde",
        "estimator": "estimator",
        "m": "m",
        "seed": "seed",
        "threads": "threads",
        "grid": "grid",
        "grid_unit": "grid_unit",
        "method": "method",
        "sweep": "sweep",
        "structures": "structures",
        "x_file": "x_file",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            settings[key] = value
            if key == "tau":
                settings["lambda"] = None
            if key == "lambda":
                settings["tau"] = None
    if settings["tau"] is not None and settings["lambda"] is not None:
        raise ConfigError("specify tau or lambda, not both")
    settings["command"] = args.command
    settings["out"] = getattr(args, "out", None)
    return settings


def _build_model_config(settings: dict) -> ModelConfig:
    structure = CorrStructure(settings["structure"])
    estimator = VarianceEstimator(settings["estimator"])
    try:
        config = ModelConfig(
            n=settings["n"],
            t=settings["t"],
            structure=structure,
            rho=settings["rho"],
            tau=0.0,
            psi=settings["psi"],
            alpha=settings["alpha"],
            alpha_tilde=settings["alpha_tilde"],
            estimator=estimator,
        )
        if settings["lambda"] is not None:
            config = config.with_lambda(settings["lambda"])
        elif settings["tau"] is not None:
            config = config.with_tau(settings["tau"])
    except InadmissibleParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def _validate_lambda_grid(lams, n: int):
    root_n = np.sqrt(n)
    for lam in lams:
        if not abs(lam) < root_n:
            raise ConfigError(
                f"grid value lambda={lam:g} outside (-sqrt(N), sqrt(N)) for N={n}"
            )


def _manifest(settings: dict) -> list[tuple[str, str]]:
    items = []
    for key in _MANIFEST_ORDER:
        value = settings.get(key)
        if value is None:
            continue
        items.append((key, _fmt(value)))
    return items


def _write_csv(out_path, manifest, header, rows):
    lines = [f"# pretestcov-manifest v1"]
    lines += [f"# {key} = {value}" for key, value in manifest]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_sidecar(out_path, manifest, stage_times):
    if not out_path:
        return
    lines = [f"# pretestcov {__version__} run manifest"]
    lines += [f"{key} = {value}" for key, value in manifest]
    lines += [f"info.version = {__version__}"]
    lines += [f"info.wall_time_s.{stage} = {_fmt(seconds)}" for stage, seconds in stage_times]
    with open(f"{out_path}.manifest.txt", "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_x_file(path: str) -> np.ndarray:
    try:
        x = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read covariate file {path}: {exc}") from exc
    return x


def _cmd_exact(settings: dict, config: ModelConfig):
    if config.structure is not CorrStructure.COMPOUND_SYMMETRY:
        raise ConfigError("exact conditional coverage is available for --structure cs only")
    grid_spec = settings["grid"] or "0:8:33"
    grid = _parse_grid(grid_spec)
    settings["grid"] = grid_spec
    unit = settings["grid_unit"]
    if unit == "lambda":
        _validate_lambda_grid(grid, config.n)
        taus = grid / np.sqrt(config.n)
    else:
        for tau in grid:
            if not abs(tau) < 1:
                raise ConfigError(f"grid value tau={tau:g} outside (-1, 1)")
        taus = grid

    if settings["x_file"]:
        x = _load_x_file(settings["x_file"])
        if x.shape[1] != config.t:
            raise ConfigError(
                f"covariate file has T={x.shape[1]} columns, config expects T={config.t}"
            )
    else:
        draw = generate_panel(config, base_noise(config.n, config.t, settings["seed"], 0))
        x = draw.x
    xs = xstats(x, var_xbar=var_xbar_cs(config.rho, config.sigma_x, x.shape[1]))
    rows = [
        (float(g), conditional_coverage_known(
            xs, config.psi, float(tau), config.alpha, config.alpha_tilde, x.shape[1]
        ))
        for g, tau in zip(grid, taus)
    ]
    return [unit, "conditional_cp"], rows


def _cmd_curve(settings: dict, config: ModelConfig):
    grid_spec = settings["grid"] or "0:8:33"
    grid = _parse_grid(grid_spec)
    settings["grid"] = grid_spec
    _validate_lambda_grid(grid, config.n)
    method = settings["method"]
    if method == "cv" and config.structure is CorrStructure.AR1:
        raise ConfigError("the control-variate method requires --structure cs")
    estimates = crn_grid(
        config, grid, settings["m"], settings["seed"], method, threads=settings["threads"]
    )
    rows = [
        (lam, est.value, est.std_error, est.method.value) for lam, est in estimates
    ]
    return ["lambda", "cp", "se", "method"], rows


def _cmd_min(settings: dict, config: ModelConfig):
    method = settings["method"]
    if method == "cv" and config.structure is CorrStructure.AR1:
        raise ConfigError("the control-variate method requires --structure cs")
    if settings["grid"]:
        grid = _parse_grid(settings["grid"])
        if grid[0] != 0.0:
            raise ConfigError("the minimization grid must start at 0 (evenness in tau)")
        if len(grid) < 2 or grid[-1] <= 0.0:
            raise ConfigError("the minimization grid needs at least 2 points and a positive end")
        _validate_lambda_grid(grid, config.n)
        spec = GridSpec(points=len(grid), lambda_max=float(grid[-1]))
    else:
        spec = GridSpec()
        settings["grid"] = f"0:{_fmt(spec.resolve_max(config.n))}:{spec.points}"
    result = min_coverage_over_tau(
        config, settings["m"], settings["seed"], spec, method, threads=settings["threads"]
    )
    rows = [
        (
            result.min_cp,
            result.argmin_lambda,
            result.test_size,
            lam,
            est.value,
            est.std_error,
            est.method.value,
        )
        for lam, est in zip(result.grid, result.estimates)
    ]
    header = ["min_cp", "argmin_lambda", "test_size", "lambda", "cp", "se", "method"]
    return header, rows


def _cmd_sweep(settings: dict, config: ModelConfig):
    sweep_kind = settings["sweep"]
    structures = []
    for token in settings["structures"].split(","):
        token = token.strip()
        if not token:
            continue
        try:
            structures.append(CorrStructure(token))
        except ValueError as exc:
            raise ConfigError(f"unknown structure '{token}'") from exc
    if not structures:
        raise ConfigError("no structures selected")
    default_grid = "0:0.6:4" if sweep_kind == "rho" else "0.1:0.7:4"
    grid_spec = settings["grid"] or default_grid
    grid = _parse_grid(grid_spec)
    settings["grid"] = grid_spec
    sweep_fn = sweep_rho if sweep_kind == "rho" else sweep_psi
    cells = sweep_fn(
        config, grid, structures, settings["m"], settings["seed"], threads=settings["threads"]
    )
    rows = []
    for cell in cells:
        if cell.skipped:
            print(
                f"pretestcov: skipped {cell.structure.value} {sweep_kind}={cell.value:g}: "
                f"{cell.reason}",
                file=sys.stderr,
            )
            rows.append((cell.structure.value, cell.value, float("nan"), float("nan"),
                         float("nan"), 1))
            continue
        res = cell.result
        argmin_est = res.estimates[res.grid.index(res.argmin_lambda)]
        rows.append(
            (
                cell.structure.value,
                cell.value,
                res.min_cp,
                argmin_est.std_error,
                res.argmin_lambda,
                0,
            )
        )
    header = ["structure", "sweep_value", "min_cp", "se", "argmin_lambda", "skipped"]
    return header, rows


def _cmd_efficiency(settings: dict, config: ModelConfig):
    report = measure_efficiency(
        config, settings["m"], settings["seed"], threads=settings["threads"]
    )
    rows = [
        (
            report.variance_brute,
            report.variance_cv,
            report.time_brute_s,
            report.time_cv_s,
            report.efficiency,
        )
    ]
    return ["var_brute", "var_cv", "time_brute", "time_cv", "efficiency"], rows


_COMMANDS = {
    "exact": _cmd_exact,
    "curve": _cmd_curve,
    "min": _cmd_min,
    "sweep": _cmd_sweep,
    "efficiency": _cmd_efficiency,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _assemble(args)
        if settings["m"] < 1:
            raise ConfigError(f"M must be >= 1, got {settings['m']}")
        if settings["threads"] < 1:
            raise ConfigError(f"threads must be >= 1, got {settings['threads']}")
        config = _build_model_config(settings)
        start = time.perf_counter()
        header, rows = _COMMANDS[settings["command"]](settings, config)
        elapsed = time.perf_counter() - start
        manifest = _manifest(settings)
        _write_csv(settings["out"], manifest, header, rows)
        _write_sidecar(settings["out"], manifest, [("compute", elapsed)])
        return 0
    except ConfigError as exc:
        print(f"pretestcov: configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"pretestcov: configuration error: {exc}", file=sys.stderr)
        return 2
    except (
        InadmissibleParameterError,
        DegenerateDesignError,
        UnsupportedStructureError,
        MleConvergenceError,
    ) as exc:
        print(f"pretestcov: numerical failure: {exc}", file=sys.stderr)
        return 3
    except PretestCovError as exc:
        print(f"pretestcov: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
