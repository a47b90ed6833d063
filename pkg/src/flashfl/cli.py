"""Command-line entry point.

    flashfl --config run.ini --mode fedsim --seed 3 --out runs/a
    flashfl --manifest runs/a/manifest.json --out runs/b

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, flag_name, iter_keys, parse_config
from .exceptions import ConfigError
from .experiment import run_fedsim, run_regret_experiment, write_fedsim_csv

logger = logging.getLogger("flashfl")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flashfl", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", type=Path, help="INI file with [section] key = value entries")
    parser.add_argument("--manifest", type=Path, help="replay the configuration stored in a run manifest")
    parser.add_argument("-v", "--verbose", action="store_true")
    for section, key, typ in iter_keys():
        parser.add_argument(flag_name(section, key), dest=f"{section}__{key}", default=None,
                            metavar=typ.upper(), help=f"{section}.{key}")
    return parser


def _overrides(args) -> dict:
    out = {}
    for dest, value in vars(args).items():
        if "__" in dest and value is not None:
            section, key = dest.split("__", 1)
            out[(section, key)] = value
    return out


def load(args) -> ExperimentConfig:
    overrides = _overrides(args)
    if args.manifest is not None:
        with open(args.manifest) as fh:
            raw = json.load(fh)["config"]
        base = {(s, k): v for s, values in raw.items() for k, v in values.items()}
        base.update(overrides)
        return parse_config(None, base)
    return parse_config(args.config, overrides)


def manifest(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "mode": cfg.experiment.mode,
        "seed": cfg.experiment.seed,
        "version": __version__,
        "python": sys.version.split()[0],
    }


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.experiment.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest(cfg), fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    metrics = out / "metrics.csv"
    if cfg.experiment.mode == "regret":
        trace = run_regret_experiment(cfg)
        with open(metrics, "w", newline="") as fh:
            trace.write_csv(fh)
        n = len(trace.cumulative)
        final = float(trace.cumulative[-1]) if n else 0.0
        print(f"strategy={cfg.experiment.strategy} rounds={n} cumulative_regret={final:.6g}")
        return 0
    result = run_fedsim(cfg)
    with open(metrics, "w", newline="") as fh:
        write_fedsim_csv(result.records, fh)
    print(f"best_accuracy={result.best_acc:.4f} round={result.best_round} "
          f"simulated_seconds={result.total_time:.6g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        logger.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
