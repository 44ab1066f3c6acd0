"""Glue from an ExperimentConfig to grids, pre-computed data and chains."""

import math

import numpy as np
from scipy.special import logit

from . import chains as ch
from .config import _floats, observed_stats
from .diagnostics import replicate_seed
from .errors import ConfigError
from .grid import Grid, build_grid, estimate_hessian, find_mode
from .precompute import run_precompute

# stream tags under the experiment seed
GRID_STREAM = 6
CHAIN_STREAM = 8


def stream(seed, tag):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, tag)))


def auto_init(model, y_stats):
    """Crude starting point for the mode search, from the observed statistics."""
    y = np.atleast_1d(y_stats)
    theta = np.zeros(model.dims)
    if model.kind == "toy_gaussian":
        theta[0] = 1.0 / max(-2.0 * y[0], 1e-6)
    elif model.kind == "erdos_renyi" or model.kind.startswith("ergm"):
        density = min(max(y[0] / model.n_sites, 1e-3), 1 - 1e-3)
        theta[0] = logit(density)
    return theta


def make_grid(cfg, y_stats=None):
    """Grid described by ``[grid]``; returns (grid, mode_result or None)."""
    g = cfg["grid"]
    if g["type"] == "regular":
        return Grid.regular_1d(g["start"], g["stop"], g["eps"]), None
    model, prior = cfg.model, cfg.prior
    if y_stats is None:
        y_stats = observed_stats(cfg)
    rng = stream(cfg.seed, GRID_STREAM)
    init = auto_init(model, y_stats) if g["mode_init"] == "auto" else np.array(_floats(g["mode_init"]))
    mode = find_mode(model, y_stats, prior, init, g["mode_steps"], rng, N=g["N"], sweeps=g["sweeps"])
    H = estimate_hessian(model, mode.average, prior, max(g["N"], 2) * 4, rng, g["sweeps"])
    grid = build_grid(model, y_stats, prior, mode.average, H, g["m"], g["eps"], g["N"],
                      g["max_steps"], rng, g["sweeps"])
    return grid, mode


def make_precomp(cfg, grid, seed=None, threads=None):
    p = cfg["precompute"]
    return run_precompute(cfg.model, grid, p["n"], p["sweeps"], cfg.seed if seed is None else seed,
                          cfg.get("experiment", "threads") if threads is None else threads)


def make_proposal(cfg, grid=None):
    kind, scale = cfg.get("proposal", "kind"), cfg.get("proposal", "scale")
    d = cfg.model.dims
    if scale.startswith("grid"):
        cells = _floats(scale[4:]) or (1.0,)
        if grid is None:
            raise ConfigError("a 'grid' proposal scale needs a grid or pre-computed data")
        return ch.grid_random_walk(grid, cells[0])
    vals = np.array(_floats(scale))
    if kind == "log_scale":
        return ch.LogScale(float(vals[0]))
    if vals.size == d * d and d > 1:
        return ch.RandomWalk(vals.reshape(d, d))
    return ch.RandomWalk(np.broadcast_to(vals, (d,)).copy())


def chain_init(cfg, grid=None):
    text = cfg.get("chain", "init")
    if text == "prior":
        return None
    if text == "mode":
        if grid is None:
            raise ConfigError("chain init 'mode' needs a grid")
        return np.array(grid.mode)
    return np.array(_floats(text))


def sampler(cfg, kind, target, proposal, precomp=None, estimator=None, iters=None, init=None):
    """A function ``(index, rng) -> ChainTrace`` for one chain of the requested kind."""
    c = cfg["chain"]
    iters = c["iters"] if iters is None else iters
    estimator = c["estimator"] if estimator is None else estimator
    if kind in ("precomp", "abc") and precomp is None:
        raise ConfigError(f"chain kind {kind!r} needs pre-computed data")

    def run(index, rng):
        if kind == "mh":
            return ch.mh_exact(target, proposal, init, iters, rng)
        if kind == "exchange":
            return ch.exchange(target, proposal, init, iters, c["sweeps"], rng)
        if kind == "noisy":
            return ch.noisy_mh(target, proposal, init, iters, c["n_aux"], c["sweeps"], rng)
        if kind == "precomp":
            return ch.precomp_metropolis(target, proposal, precomp, estimator, init, iters, rng,
                                         c["average_axis_orders"])
        if kind == "abc":
            return ch.abc_mcmc_precomp(target, proposal, precomp, c["tolerance"], init, iters, rng)
        raise ConfigError(f"unknown chain kind {kind!r}")

    return run


def run_chains(cfg, kind, target, proposal, precomp=None, estimator=None, iters=None, chains=None,
               init=None, seed=None, threads=None):
    seed = cfg.seed if seed is None else seed
    chains = cfg.get("chain", "chains") if chains is None else chains
    threads = cfg.get("experiment", "threads") if threads is None else threads
    run = sampler(cfg, kind, target, proposal, precomp, estimator, iters, init)
    return ch.run_ensemble(run, chains, seed, threads)


def study_seed(cfg, label):
    """Per-component seed inside a study, derived from the experiment seed."""
    return replicate_seed(cfg.seed, sum(ord(c) * 31**i for i, c in enumerate(label)) % 2**31,
                          CHAIN_STREAM)


def posterior_summary(x, burn_in=0):
    """Mean, variance and Monte Carlo standard error (ESS-based) per coordinate."""
    from .diagnostics import ess

    x = np.asarray(x, dtype=float)[burn_in:]
    if x.ndim == 1:
        x = x[:, None]
    out = []
    for k in range(x.shape[1]):
        e = ess(x[:, k])
        var = float(x[:, k].var(ddof=1))
        out.append({"mean": float(x[:, k].mean()), "var": var, "ess": e,
                    "se": math.sqrt(var / e) if e > 0 else math.nan})
    return out
