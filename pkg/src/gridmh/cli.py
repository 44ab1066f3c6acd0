"""Command-line interface: ``gridmh {grid,precompute,run,study}``."""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import pipeline as pl
from .chains import Target
from .config import CHAIN_KINDS, ESTIMATORS, STUDIES, bundled_config, load_config, observed_stats, parse_config
from .errors import ConfigError, GridMHError, PrecompFileError
from .precompute import file_checksum, grid_only, load, save
from .studies import run_study

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


def _read_config(args):
    path = args.config
    if path is None:
        raise ConfigError("--config is required")
    cfg = load_config(path) if os.path.exists(path) else parse_config(bundled_config(path))
    overrides = {}
    if args.seed is not None:
        overrides["experiment__seed"] = args.seed
    if args.out is not None:
        overrides["experiment__out"] = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        overrides["experiment__threads"] = args.threads
    for key, section in (("chain", "chain__kind"), ("estimator", "chain__estimator"),
                         ("iters", "chain__iters"), ("chains", "chain__chains")):
        value = getattr(args, key, None)
        if value is not None:
            if key in ("iters", "chains") and value < 1:
                raise ConfigError(f"--{key} must be >= 1")
            overrides[section] = value
    return cfg.with_overrides(**overrides) if overrides else cfg


def _out_dir(cfg):
    out = cfg.get("experiment", "out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_grid(cfg, args):
    out = _out_dir(cfg)
    y = observed_stats(cfg) if cfg.get("grid", "type") == "adaptive" else None
    grid, _ = pl.make_grid(cfg, y)
    path = os.path.join(out, "grid.txt")
    save(grid_only(cfg.model, grid, cfg.seed), path)
    mode = " ".join(f"{v:.6g}" for v in grid.mode)
    print(f"M = {len(grid)}  eps = {grid.step:g}  mode = [{mode}]")
    print(f"wrote {path}")


def cmd_precompute(cfg, args):
    out = _out_dir(cfg)
    grid_path = args.grid or os.path.join(out, "grid.txt")
    data = load(grid_path)
    if data.model != cfg.model:
        raise ConfigError(f"grid file is for {data.model.describe()}, config says {cfg.model.describe()}")
    t0 = time.perf_counter()
    pc = pl.make_precomp(cfg, data.grid)
    secs = time.perf_counter() - t0
    path = os.path.join(out, "precomp.txt")
    save(pc, path)
    print(f"M = {pc.M}  n = {pc.n}  statistic rows = {pc.M * pc.n}  wall time = {secs:.2f} s")
    print(f"wrote {path}  checksum {file_checksum(path)}")


def cmd_run(cfg, args):
    out = _out_dir(cfg)
    kind = cfg.get("chain", "kind")
    precomp, grid, pc_path = None, None, args.precomp
    if pc_path is None and kind in ("precomp", "abc"):
        pc_path = os.path.join(out, "precomp.txt")
    if pc_path is not None:
        precomp = load(pc_path)
        if precomp.model != cfg.model:
            raise ConfigError(
                f"pre-computed data are for {precomp.model.describe()}, config says {cfg.model.describe()}")
        grid = precomp.grid
    y = observed_stats(cfg)
    target = Target(cfg.model, y, cfg.prior)
    proposal = pl.make_proposal(cfg, grid)
    init = pl.chain_init(cfg, grid)
    t0 = time.perf_counter()
    traces = pl.run_chains(cfg, kind, target, proposal, precomp, init=init)
    secs = time.perf_counter() - t0
    files = []
    for i, tr in enumerate(traces):
        path = os.path.join(out, f"chain_{i:03d}.csv")
        tr.to_csv(path)
        files.append(os.path.basename(path))
    manifest = {
        "command": "run",
        "seed": cfg.seed,
        "chain": kind,
        "estimator": cfg.get("chain", "estimator") if kind == "precomp" else None,
        "iters": cfg.get("chain", "iters"),
        "chains": len(traces),
        "threads": cfg.get("experiment", "threads"),
        "config": cfg.text,
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "precomp": pc_path,
        "precomp_checksum": file_checksum(pc_path) if pc_path else None,
        "acceptance_rate": [tr.acceptance_rate for tr in traces],
        "out_of_support": [tr.counters["out_of_support"] for tr in traces],
        "wall_time_s": secs,
        "traces": files,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    rate = float(np.mean(manifest["acceptance_rate"]))
    print(f"{len(traces)} chain(s) x {cfg.get('chain', 'iters')} iterations  "
          f"acceptance = {rate:.3f}  wall time = {secs:.2f} s")


def cmd_study(cfg, args):
    name = args.name or cfg.get("study", "name")
    if not name:
        raise ConfigError(f"no study named; choose one of {', '.join(STUDIES)}")
    if name not in STUDIES:
        raise ConfigError(f"unknown study {name!r}")
    res = run_study(cfg, name, _out_dir(cfg))
    for path in res.files:
        print(f"wrote {path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="gridmh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file, or the name of a bundled config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        return p

    common(sub.add_parser("grid", help="find the mode and build the grid"))
    p = common(sub.add_parser("precompute", help="simulate statistics at every grid point"))
    p.add_argument("--grid", help="grid file (default: <out>/grid.txt)")
    p = common(sub.add_parser("run", help="run chains"))
    p.add_argument("--precomp", help="pre-computed data file (default: <out>/precomp.txt)")
    p.add_argument("--chain", choices=CHAIN_KINDS)
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--iters", type=int)
    p.add_argument("--chains", type=int)
    p = common(sub.add_parser("study", help="run a named experiment"))
    p.add_argument("--name", choices=STUDIES)
    return parser


COMMANDS = {"grid": cmd_grid, "precompute": cmd_precompute, "run": cmd_run, "study": cmd_study}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        cfg = _read_config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, PrecompFileError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GridMHError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
