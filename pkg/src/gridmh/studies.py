"""End-to-end desk-scale experiments, each writing CSV reports to an output directory."""

from dataclasses import dataclass, field
import math
import os
import time

import numpy as np
from scipy import integrate

from . import chains as ch
from . import diagnostics as dg
from . import pipeline as pl
from .chains import Target
from .config import observed_stats
from .errors import ConfigError, IntractableModelError
from .models import exact_log_z, has_exact_log_z
from .precompute import run_precompute, save

TABLE1_PAIRS = ((1.01, 2.06), (3.02, 0.55), (0.12, 0.94))


@dataclass
class StudyResult:
    name: str
    summary: dict
    files: list = field(default_factory=list)


def _study(cfg, key, default):
    """Study parameter, falling back to ``default`` unless set in the config."""
    return cfg.get("study", key) if cfg.is_set("study", key) else default


def _rows_csv(path, rows):
    header = list(rows[0].keys())
    dg._write_csv(path, header, [[r[k] for k in header] for r in rows])


# ------------------------------------------------------------ estimator studies


def table1(cfg, out):
    model = cfg.model
    grid, _ = pl.make_grid(cfg)
    n = _study(cfg, "n", cfg.get("precompute", "n"))
    pairs = _study(cfg, "pairs", TABLE1_PAIRS)
    reps = cfg.get("study", "replicates")

    def factory(s):
        return run_precompute(model, grid, n, cfg.get("precompute", "sweeps"), s)

    reports = dg.moment_table(factory, ["fp", "dp", "op"], pairs, reps, cfg.seed,
                              cfg.get("experiment", "threads"))
    long_path = os.path.join(out, "table1_long.csv")
    dg.write_reports(long_path, reports)
    # wide layout: one row per estimator, bias and variance per pair
    rows = []
    for kind, short in (("full_path", "FP"), ("direct_path", "DP"), ("one_pivot", "OP")):
        row = {"estimator": short}
        for a, b in pairs:
            r = next(x for x in reports if x.kind == kind and x.theta == (a,) and x.theta_prime == (b,))
            row[f"bias({a},{b})"] = r.bias
            row[f"var({a},{b})"] = r.variance
        rows.append(row)
    wide_path = os.path.join(out, "table1.csv")
    _rows_csv(wide_path, rows)
    return StudyResult("table1", {"reports": reports, "table": rows}, [wide_path, long_path])


def example1(cfg, out):
    p = _study(cfg, "p", 5)
    theta = _study(cfg, "theta", (0.0,))[0]
    h = _study(cfg, "h_values", tuple(np.linspace(1.0, 3.0, 9)))
    n = _study(cfg, "n", 10)
    reps = cfg.get("study", "replicates")
    fit_from = cfg.get("study", "fit_from")
    growth = dg.variance_growth_study(p, theta, h, n, reps, cfg.seed,
                                      None if math.isnan(fit_from) else fit_from)
    check_h = cfg.get("study", "check_h")
    check = dg.variance_growth_study(p, theta, [check_h], n, reps, cfg.seed + 1)
    path = os.path.join(out, "example1.csv")
    growth.to_csv(path)
    check_path = os.path.join(out, "example1_check.csv")
    check.to_csv(check_path)
    z = (check.variance[0] - check.exact[0]) / check.variance_se[0]
    summary = {"slope": growth.slope, "rate": growth.meta["rate"], "growth": growth, "check": check,
               "check_z": float(z)}
    return StudyResult("example1", summary, [path, check_path])


def prop1(cfg, out):
    model = cfg.model
    theta = _study(cfg, "theta", (1.0,))
    h = _study(cfg, "h_values", tuple(np.linspace(0.02, 0.2, 10)))
    n = _study(cfg, "n", 10)
    rep = dg.local_variance_study(model, theta, h, n, cfg.get("study", "replicates"), cfg.seed)
    path = os.path.join(out, "prop1.csv")
    rep.to_csv(path)
    return StudyResult("prop1", {"slope": rep.slope, "report": rep}, [path])


def prop2(cfg, out):
    theta = _study(cfg, "theta", (1.01,))
    theta_prime = _study(cfg, "theta_prime", (2.06,))
    eps = _study(cfg, "eps_values", (0.4, 0.2, 0.1))
    n = _study(cfg, "n", 10)
    cmp = dg.fp_vs_dp_study(cfg.model, theta, theta_prime, eps, n, cfg.get("study", "replicates"),
                            cfg.seed, cfg.get("precompute", "sweeps"), cfg.get("experiment", "threads"))
    path = os.path.join(out, "prop2.csv")
    cmp.to_csv(path)
    return StudyResult("prop2", {"comparison": cmp, "fp_beats_dp": cmp.fp_beats_dp_at_finest,
                                 "fp_nonincreasing": cmp.fp_nonincreasing()}, [path])


# ------------------------------------------------------------ chain studies


def posterior_density(model, y_stats, prior, lo, hi, points=4001):
    """Normalised posterior density of a tractable 1-d model on [lo, hi], with its CDF."""
    if not has_exact_log_z(model) or model.dims != 1:
        raise IntractableModelError("a closed-form reference needs a tractable 1-d model")
    xs = np.linspace(lo, hi, points)
    logd = np.array([float(x * y_stats[0]) + prior.logpdf([x]) - exact_log_z(model, [x])
                     if np.isfinite(prior.logpdf([x])) else -np.inf for x in xs])
    dens = np.exp(logd - logd[np.isfinite(logd)].max())
    cdf = integrate.cumulative_trapezoid(dens, xs, initial=0.0)
    total = cdf[-1]

    def pdf(x):
        return float(np.interp(x, xs, dens / total, left=0.0, right=0.0))

    return pdf, xs, cdf / total


def tv_toy(cfg, out):
    """TV of exchange and OP/DP/FP pre-computing ensembles to the exact posterior."""
    model, prior = cfg.model, cfg.prior
    y = observed_stats(cfg)
    grid, _ = pl.make_grid(cfg)
    n = _study(cfg, "n", cfg.get("precompute", "n"))
    chains = cfg.get("study", "chains")
    iters = cfg.get("study", "iters")
    threads = cfg.get("experiment", "threads")
    proposal = pl.make_proposal(cfg, grid)
    target = Target(model, y, prior)
    lo, hi = grid.points.min() - grid.step / 2, grid.points.max() + grid.step / 2
    pdf, xs, cdf = posterior_density(model, y, prior, max(lo, 1e-9) if model.kind == "toy_gaussian" else lo, hi)
    tail = 0.5 * (1 - dg.TV_MASS)
    span = (float(np.interp(tail, cdf, xs)), float(np.interp(1 - tail, cdf, xs)))
    bins = cfg.get("study", "bins")
    curves, files, seconds = {}, [], {}
    # every chain draws its own pre-computation and starts from the prior on the grid's support
    support = run_precompute(model, grid, 0).in_support
    # exchange shares the truncated parameter space, so all four chains target one posterior
    truncated = target.with_support(support)
    for label in ("exchange", "op", "dp", "fp"):
        seed = pl.study_seed(cfg, label)
        t0 = time.perf_counter()

        def one(i, rng, label=label):
            if label == "exchange":
                init = ch.initial_state(truncated, rng, support)
                return ch.exchange(truncated, proposal, init, iters, cfg.get("chain", "sweeps"), rng)
            pc = run_precompute(model, grid, n, cfg.get("precompute", "sweeps"),
                                dg.replicate_seed(seed, i, 9))
            return ch.precomp_metropolis(target, proposal, pc, label, None, iters, rng)

        traces = ch.run_ensemble(one, chains, seed, threads)
        seconds[label] = time.perf_counter() - t0
        curve = dg.tv_occupation(traces, pdf, bins=bins, span=span)
        curves[label] = curve
        path = os.path.join(out, f"tv_{label}.csv")
        curve.to_csv(path)
        files.append(path)
    rows = [{"iter": i, **{k: float(c.tv[i]) for k, c in curves.items()}} for i in range(iters + 1)]
    path = os.path.join(out, "tv_toy.csv")
    _rows_csv(path, rows)
    files.append(path)
    final = {k: float(c.tv[-1]) for k, c in curves.items()}
    return StudyResult("tv_toy", {"curves": curves, "final": final, "seconds": seconds, "span": span},
                       [path] + files)


def _posterior_runs(cfg, out, name, runs, reference_label):
    """Run labelled samplers and tabulate posterior moments, ESS and ESS per second."""
    burn = cfg.get("study", "burn_in")
    rows, traces = [], {}
    for label, make in runs:
        t0 = time.perf_counter()
        trace = make(np.random.default_rng(np.random.SeedSequence(pl.study_seed(cfg, label))))
        secs = time.perf_counter() - t0
        traces[label] = trace
        summ = pl.posterior_summary(trace.states[1:], burn)
        row = {"sampler": label, "iterations": trace.iterations, "seconds": secs,
               "acceptance": trace.acceptance_rate}
        for k, s in enumerate(summ):
            row[f"mean_{k + 1}"] = s["mean"]
            row[f"var_{k + 1}"] = s["var"]
            row[f"se_{k + 1}"] = s["se"]
            row[f"ess_{k + 1}"] = s["ess"]
            row[f"ess_per_s_{k + 1}"] = s["ess"] / secs if secs > 0 else math.nan
            lo, hi = np.quantile(trace.states[1 + burn:, k], [0.05, 0.95])
            row[f"q05_{k + 1}"] = float(lo)
            row[f"q95_{k + 1}"] = float(hi)
        rows.append(row)
        trace.to_csv(os.path.join(out, f"{name}_{label}_trace.csv"))
    path = os.path.join(out, f"{name}.csv")
    _rows_csv(path, rows)
    summary = {"rows": {r["sampler"]: r for r in rows}, "traces": traces, "reference": reference_label}
    return StudyResult(name, summary, [path])


def _grid_and_precomp(cfg, out, y):
    t0 = time.perf_counter()
    grid, mode = pl.make_grid(cfg, y)
    pc = pl.make_precomp(cfg, grid)
    secs = time.perf_counter() - t0
    save(pc, os.path.join(out, "precomp.txt"))
    return grid, pc, secs


def ising_desk(cfg, out):
    """Exchange versus FP/DP pre-computing and pre-computed ABC on a synthetic lattice."""
    y = observed_stats(cfg)
    model, prior = cfg.model, cfg.prior
    grid, pc, pre_secs = _grid_and_precomp(cfg, out, y)
    target = Target(model, y, prior)
    proposal = pl.make_proposal(cfg, grid)
    init = np.array(grid.mode)
    iters = cfg.get("chain", "iters")
    ref_iters = cfg.get("study", "reference_iters")
    sweeps = cfg.get("chain", "sweeps")
    runs = [
        ("exchange", lambda rng: ch.exchange(target, proposal, init, ref_iters, sweeps, rng)),
        ("fp", lambda rng: ch.precomp_metropolis(target, proposal, pc, "fp", init, iters, rng)),
        ("dp", lambda rng: ch.precomp_metropolis(target, proposal, pc, "dp", init, iters, rng)),
    ]
    if model.dims == 1:
        runs.append(("abc", lambda rng: ch.abc_mcmc_precomp(target, proposal, pc,
                                                            cfg.get("chain", "tolerance"), init, iters, rng)))
    res = _posterior_runs(cfg, out, "ising_desk", runs, "exchange")
    res.summary.update({"y_stats": y, "grid_points": len(grid), "precompute_seconds": pre_secs})
    return res


def karate(cfg, out):
    """Posterior means for the karate ERGM: exchange reference against FP and DP."""
    y = observed_stats(cfg)
    model, prior = cfg.model, cfg.prior
    grid, pc, pre_secs = _grid_and_precomp(cfg, out, y)
    target = Target(model, y, prior)
    proposal = pl.make_proposal(cfg, grid)
    init = np.array(grid.mode)
    iters = cfg.get("chain", "iters")
    ref_iters = cfg.get("study", "reference_iters")
    sweeps = cfg.get("chain", "sweeps")
    runs = [
        ("exchange", lambda rng: ch.exchange(target, proposal, init, ref_iters, sweeps, rng)),
        ("fp", lambda rng: ch.precomp_metropolis(target, proposal, pc, "fp", init, iters, rng)),
        ("dp", lambda rng: ch.precomp_metropolis(target, proposal, pc, "dp", init, iters, rng)),
    ]
    res = _posterior_runs(cfg, out, "karate", runs, "exchange")
    res.summary.update({"y_stats": y, "grid_points": len(grid), "precompute_seconds": pre_secs,
                        "mode": np.array(grid.mode)})
    return res


STUDY_FUNCS = {
    "table1": table1,
    "example1": example1,
    "prop1": prop1,
    "prop2": prop2,
    "tv_toy": tv_toy,
    "ising_desk": ising_desk,
    "karate": karate,
}


def run_study(cfg, name=None, out=None):
    name = name or cfg.get("study", "name")
    if name not in STUDY_FUNCS:
        raise ConfigError(f"unknown study {name!r}")
    out = out or cfg.get("experiment", "out")
    os.makedirs(out, exist_ok=True)
    return STUDY_FUNCS[name](cfg, out)

