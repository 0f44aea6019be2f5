"""Command-line runner: ``otocsim run <config>`` and ``otocsim list``."""
from __future__ import annotations

import argparse
import copy
import os
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_info, threadpool_limits

from . import __version__
from .errors import ConfigError, NumericalError
from .experiments import EXPERIMENTS
from .io import Section, load_config, preset_names, write_manifest

THREADS_ENV = "OTOCSIM_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def list_experiments() -> list[dict]:
    return [{"name": e.name, "reproduces": e.reproduces, "required": list(e.required),
             "artifacts": list(e.artifacts)} for e in EXPERIMENTS.values()]


def _threads(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, "must be >= 1")
    return n


def effective_threads(requested: int | None) -> int | None:
    """Clamp to the size the BLAS pools were started with.

    OpenBLAS allocates per-thread buffers at load time and can crash if asked
    for more threads afterwards.
    """
    if requested is None:
        return None
    started = [p["num_threads"] for p in threadpool_info()]
    return min([requested, *started])


def prepare(source: str, out_dir: str | None = None, seed: int | None = None):
    """Load and fully validate a config; nothing is written."""
    cfg = load_config(source)
    if seed is not None:
        cfg["seed"] = seed
    name = cfg.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}; see 'otocsim list'")
    exp = EXPERIMENTS[name]
    root = Section(cfg, "")
    if exp.needs_seed and cfg.get("seed") is None:
        raise ConfigError("seed", f"{name} samples random initial conditions and needs a seed")
    if "seed" in cfg and cfg["seed"] is not None:
        root.get("seed", int)
    args = exp.parse(root)
    out = out_dir or root.sub("output", required=False).get("dir", str, f"out/{name}")
    return cfg, exp, args, Path(out)


def run(source: str, out_dir: str | None = None, seed: int | None = None,
        threads: int | None = None) -> dict:
    cfg, exp, args, out = prepare(source, out_dir, seed)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    used = effective_threads(threads)
    try:
        with threadpool_limits(limits=used):
            files = exp.execute(args, out)
    except NumericalError as exc:
        raise NumericalError(f"{exp.name}: {exc}") from exc
    echo = copy.deepcopy(cfg)
    echo.setdefault("output", {})
    if isinstance(echo["output"], dict):
        echo["output"]["dir"] = str(out)
    return write_manifest(out, echo, files, time.perf_counter() - start, __version__, threads, used)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otocsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a YAML config or a preset name")
    r.add_argument("config")
    r.add_argument("--out-dir")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int, help=f"BLAS/LAPACK threads (default: ${THREADS_ENV})")
    sub.add_parser("list", help="list experiments and bundled presets")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for e in list_experiments():
            print(f"{e['name']:<20} {e['reproduces']}")
            print(f"{'':<20} required: {', '.join(e['required'])}")
            print(f"{'':<20} artifacts: {', '.join(e['artifacts'])}")
        print("\npresets: " + ", ".join(preset_names()))
        return EXIT_OK
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        manifest = run(args.config, args.out_dir, args.seed, _threads(args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {len(manifest['files'])} files + manifest.json to {manifest['config']['output']['dir']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
