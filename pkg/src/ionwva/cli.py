"""Command-line entry point: ``ionwva run | validate | list-scenarios``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import hilbert, measurement, reconstruction, theory
from .config import SCENARIOS, SCHEMA_VERSION, ExperimentConfig, derived_quantities, load_config
from .errors import ConfigurationError, WVAError
from .scenarios import run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
DEFAULT_SEED = 0
SEED_ENV = "WVA_SEED"

# fields that only steer execution; kept out of manifest.json so that it is
# byte-identical across worker counts and output locations
_EXECUTION_FIELDS = {"workers", "output_dir"}


def version_string() -> str:
    try:
        return "v" + metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "v0+unknown"


def resolve_seed(cli_seed, cfg: ExperimentConfig) -> tuple[int, str]:
    """Seed and its source: --seed > config > $WVA_SEED > built-in default."""
    if cli_seed is not None:
        return int(cli_seed), "cli"
    if cfg.seed is not None:
        return int(cfg.seed), "config"
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            value = int(env)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV}: expected a non-negative integer, got {env!r}") from None
        if value < 0:
            raise ConfigurationError(f"{SEED_ENV}: expected a non-negative integer, got {env!r}")
        return value, "env"
    return DEFAULT_SEED, "default"


def field_provenance(model, prefix: str = "") -> dict:
    """Dotted field path -> "config" (set in the file) or "default"."""
    out = {}
    for name in type(model).model_fields:
        path = prefix + name
        value = getattr(model, name)
        explicit = name in model.model_fields_set
        if hasattr(type(value), "model_fields"):
            nested = field_provenance(value, path + ".")
            out.update(nested if explicit else {k: "default" for k in nested})
        else:
            out[path] = "config" if explicit else "default"
    return out


def builtin_tolerances() -> dict:
    return {
        "hilbert.GUARD_TOL": hilbert.GUARD_TOL,
        "hilbert.GUARD_LEVELS": hilbert.GUARD_LEVELS,
        "hilbert.NORM_TOL": hilbert.NORM_TOL,
        "measurement.IMPOSSIBLE_TOL": measurement.IMPOSSIBLE_TOL,
        "theory.SINGULAR_TOL": theory.SINGULAR_TOL,
        "theory.WEAK_REGIME_LIMIT": theory.WEAK_REGIME_LIMIT,
        "reconstruction.FISHER_FLOOR": reconstruction.FISHER_FLOOR,
        "reconstruction.LINEAR_REGIME": reconstruction.LINEAR_REGIME,
        "reconstruction.STENCIL": reconstruction.STENCIL,
        "reconstruction.DEFAULT_P2_KS": [float(k) for k in reconstruction.DEFAULT_P2_KS],
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _resolved(cfg: ExperimentConfig, seed: int) -> dict:
    data = cfg.model_dump(mode="json")
    data["seed"] = seed
    for name in _EXECUTION_FIELDS:
        data.pop(name, None)
    return data


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    update = {}
    if getattr(args, "exact_only", False):
        update["exact_only"] = True
    if getattr(args, "out_dir", None):
        update["output_dir"] = args.out_dir
    if getattr(args, "workers", None):
        if args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        update["workers"] = args.workers
    return cfg.model_copy(update=update) if update else cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    seed, seed_source = resolve_seed(args.seed, cfg)
    out = Path(cfg.output_dir)
    start = time.perf_counter()
    try:
        result = run_scenario(cfg, seed, out)
    except ConfigurationError as exc:
        raise ConfigurationError(f"scenario {cfg.scenario}: {exc}") from exc
    except (WVAError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: scenario {cfg.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - start

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "version": version_string(),
        "scenario": cfg.scenario,
        "seed": seed,
        "seed_source": seed_source,
        "config": _resolved(cfg, seed),
        "provenance": {
            "fields": field_provenance(cfg),
            "tolerances": builtin_tolerances(),
            "tolerance_source": "built-in",
        },
        "derived": derived_quantities(cfg),
        "results": result.summary,
        "outputs": sorted(result.files),
    }
    (out / "manifest.json").write_text(dump_json(manifest))
    (out / "timing.json").write_text(dump_json({"wall_time_s": wall, "workers": cfg.workers, "output_dir": str(out)}))
    print(f"{cfg.scenario}: wrote {len(result.files) + 1} files to {out} in {wall:.2f} s")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    seed, seed_source = resolve_seed(args.seed, cfg)
    try:
        derived = derived_quantities(cfg)
    except (WVAError, ArithmeticError) as exc:
        print(f"error: scenario {cfg.scenario}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report = {
        "config": _resolved(cfg, seed),
        "seed_source": seed_source,
        "derived": derived,
    }
    sys.stdout.write(dump_json(report))
    return EXIT_OK


def cmd_list(args) -> int:
    width = max(len(n) for n in SCENARIOS)
    for name, desc in SCENARIOS.items():
        print(f"{name:<{width}}  {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionwva", description="Weak-value amplification simulator for a trapped-ion pointer.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, help=f"RNG seed (overrides config and ${SEED_ENV})")
    common.add_argument("--out-dir", help="output directory (overrides config output_dir)")
    common.add_argument("--exact-only", action="store_true", help="skip Monte Carlo sampling")
    common.add_argument("--workers", type=int, help="worker processes for sweep points")

    p_run = sub.add_parser("run", parents=[common], help="run a scenario and write CSV curves plus manifest.json")
    p_run.set_defaults(func=cmd_run)
    p_val = sub.add_parser("validate", parents=[common], help="print resolved config and derived quantities")
    p_val.set_defaults(func=cmd_validate)
    p_list = sub.add_parser("list-scenarios", help="list available scenarios")
    p_list.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", None) is not None and args.seed < 0:
            raise ConfigurationError("--seed must be non-negative")
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
