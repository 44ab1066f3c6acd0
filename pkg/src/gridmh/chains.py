"""Metropolis-type samplers for doubly intractable posteriors.

All samplers share one random-number consumption order per iteration:
proposal, then a single uniform, then any auxiliary simulation.  That makes
traces reproducible and lets different samplers be compared draw for draw.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import math
import time

import numpy as np

from .errors import (
    ChainError,
    GridMHError,
    IntractableModelError,
    UnsupportedDimensionError,
)
from .estimators import canonical_kind
from .models import exact_log_z, has_exact_log_z, sample_aux_stats
from .precompute import nearest_grid_point


@dataclass(frozen=True)
class Box:
    """Axis-aligned support box."""

    lower: tuple
    upper: tuple

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= np.asarray(self.lower)) and np.all(theta <= np.asarray(self.upper)))


@dataclass(frozen=True)
class Target:
    """Posterior pi(theta | y) proportional to q_theta(y) p(theta) / Z(theta).

    ``support`` is an optional predicate; outside it the prior is treated as
    zero.
    """

    model: object
    y_stats: np.ndarray
    prior: object
    support: object = None

    def __post_init__(self):
        object.__setattr__(self, "y_stats", np.atleast_1d(np.asarray(self.y_stats, dtype=float)))

    def log_prior(self, theta):
        if self.support is not None and not self.support(theta):
            return -math.inf
        return self.prior.logpdf(theta)

    def log_q(self, theta):
        return float(np.dot(theta, self.y_stats))

    def with_support(self, support):
        return Target(self.model, self.y_stats, self.prior, support)


@dataclass(frozen=True)
class RandomWalk:
    """Gaussian random walk; ``scale`` is per coordinate or a covariance matrix."""

    scale: object

    def propose(self, theta, rng):
        scale = np.asarray(self.scale, dtype=float)
        z = rng.standard_normal(theta.size)
        if scale.ndim == 2:
            step = np.linalg.cholesky(scale) @ z
        else:
            step = scale * z
        return theta + step, 0.0


@dataclass(frozen=True)
class LogScale:
    """Multiplicative proposal theta' = theta * exp(sigma * z), z ~ N(0, I)."""

    sigma: float

    def propose(self, theta, rng):
        z = rng.standard_normal(theta.size)
        prop = theta * np.exp(self.sigma * z)
        # h(theta | theta') / h(theta' | theta) = prod theta' / theta
        return prop, float(np.sum(np.log(prop) - np.log(theta)))


def grid_random_walk(grid, cells=1.0):
    """Random walk whose covariance is ``cells`` grid cells in every eigen-direction."""
    B = grid.basis * cells
    return RandomWalk(B @ B.T)


@dataclass
class ChainTrace:
    states: np.ndarray
    accepted: np.ndarray
    log_anchors: np.ndarray
    counters: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def iterations(self):
        return len(self.accepted)

    @property
    def acceptance_rate(self):
        return float(self.accepted.mean()) if len(self.accepted) else float("nan")

    @property
    def cached_anchor(self):
        return math.exp(self.log_anchors[-1]) if np.isfinite(self.log_anchors[-1]) else float("nan")

    def to_csv(self, path):
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + [f"theta_{k + 1}" for k in range(d)] + ["accepted", "anchor"])
            for i, row in enumerate(self.states):
                acc = int(self.accepted[i - 1]) if i > 0 else 0
                la = self.log_anchors[i]
                anchor = repr(math.exp(la)) if np.isfinite(la) and la < 709 else ("inf" if la >= 709 else "nan")
                w.writerow([i] + [repr(float(v)) for v in row] + [acc, anchor])


class _Recorder:
    def __init__(self, theta, iters):
        self.states = np.empty((iters + 1, theta.size))
        self.states[0] = theta
        self.accepted = np.zeros(iters, dtype=bool)
        self.log_anchors = np.full(iters + 1, np.nan)
        self.counters = {"out_of_support": 0, "estimator_calls": 0}
        self.start = time.perf_counter()

    def finish(self):
        return ChainTrace(self.states, self.accepted, self.log_anchors, self.counters,
                          time.perf_counter() - self.start)


def _accept(log_a, u):
    return log_a >= 0 or u < math.exp(log_a)


def initial_state(target, rng, support=None, max_tries=10_000):
    """Draw from the prior, restricted to the support, by rejection."""
    d = target.model.dims
    for _ in range(max_tries):
        theta = np.atleast_1d(target.prior.sample(rng, d)).astype(float)
        if np.isfinite(target.log_prior(theta)) and (support is None or support(theta)):
            return theta
    raise GridMHError("could not draw an initial state inside the support")


def _start(target, init, rng, support=None):
    if init is None:
        return initial_state(target, rng, support)
    theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    if theta.size != target.model.dims:
        raise ValueError("initial state has the wrong dimension")
    return theta


def _metropolis(target, proposal, init, iters, rng, log_z_ratio, support=None):
    """Shared loop for chains whose Z-ratio needs no auxiliary state."""
    rng = np.random.default_rng(rng)
    theta = _start(target, init, rng, support)
    lp = target.log_prior(theta)
    rec = _Recorder(theta, iters)
    for t in range(iters):
        prop, log_h = proposal.propose(theta, rng)
        u = rng.random()
        lp_prop = target.log_prior(prop)
        if not np.isfinite(lp_prop) or (support is not None and not support(prop)):
            rec.counters["out_of_support"] += 1
        else:
            rec.counters["estimator_calls"] += 1
            log_a = target.log_q(prop) - target.log_q(theta) + lp_prop - lp + log_h
            log_a += log_z_ratio(theta, prop)
            if _accept(log_a, u):
                theta, lp = prop, lp_prop
                rec.accepted[t] = True
        rec.states[t + 1] = theta
    return rec.finish()


def mh_exact(target, proposal, init, iters, rng):
    """Metropolis-Hastings with the exact ratio Z(theta) / Z(theta')."""
    model = target.model
    if not has_exact_log_z(model):
        raise IntractableModelError(f"{model.describe()} has no exact normalizing constant")
    return _metropolis(target, proposal, init, iters, rng,
                       lambda a, b: exact_log_z(model, a) - exact_log_z(model, b))


def noisy_mh(target, proposal, init, iters, n_aux, sweeps=None, rng=None):
    """Noisy Metropolis-Hastings: Z(theta)/Z(theta') from ``n_aux`` draws at theta'.

    With ``n_aux = 1`` this is the exchange algorithm.
    """
    if n_aux < 1:
        raise ValueError("n_aux must be >= 1")
    rng = np.random.default_rng(rng)
    theta = _start(target, init, rng)
    lp = target.log_prior(theta)
    rec = _Recorder(theta, iters)
    model = target.model
    log_n = math.log(n_aux)
    for t in range(iters):
        prop, log_h = proposal.propose(theta, rng)
        u = rng.random()
        lp_prop = target.log_prior(prop)
        if not np.isfinite(lp_prop):
            rec.counters["out_of_support"] += 1
        else:
            sims = sample_aux_stats(model, prop, n_aux, sweeps, rng)
            rec.counters["estimator_calls"] += 1
            x = sims @ (theta - prop)
            top = x.max()
            log_rho = top + math.log(np.exp(x - top).sum()) - log_n
            log_a = target.log_q(prop) - target.log_q(theta) + lp_prop - lp + log_h + log_rho
            if _accept(log_a, u):
                theta, lp = prop, lp_prop
                rec.accepted[t] = True
        rec.states[t + 1] = theta
    return rec.finish()


def exchange(target, proposal, init, iters, sweeps=None, rng=None):
    """Exchange algorithm: one auxiliary draw at the proposed parameter."""
    return noisy_mh(target, proposal, init, iters, 1, sweeps, rng)


def precomp_metropolis(target, proposal, precomp, estimator_kind, init, iters, rng,
                       average_axis_orders=False):
    """Pre-computing Metropolis: every Z ratio estimated from stored grid statistics.

    ``estimator_kind`` is ``"op"``, ``"dp"``, ``"fp"`` (or their long names),
    or ``"exact"`` to plug in the exact ratio for tractable models.  The
    anchored ratio of the current state at its nearest grid point is cached
    and only replaced when a proposal is accepted.  Proposals outside the
    target's support (by default the grid hull widened by half a cell) are
    rejected without touching the estimators.
    """
    if precomp.model != target.model:
        raise ValueError("pre-computed data were simulated from a different model")
    exact = estimator_kind == "exact"
    if exact:
        if not has_exact_log_z(target.model):
            raise IntractableModelError("exact ratio requested for an intractable model")
    else:
        kind = canonical_kind(estimator_kind)
    if target.support is None:
        target = target.with_support(precomp.in_support)
    rng = np.random.default_rng(rng)
    est = precomp.estimator
    theta = _start(target, init, rng)
    lp = target.log_prior(theta)
    try:
        idx = nearest_grid_point(precomp, theta)
        log_anchor = est.log_anchor(theta, idx)
    except GridMHError as exc:
        raise ChainError(0, exc) from exc
    rec = _Recorder(theta, iters)
    rec.log_anchors[0] = log_anchor
    model = target.model
    for t in range(iters):
        prop, log_h = proposal.propose(theta, rng)
        u = rng.random()
        lp_prop = target.log_prior(prop)
        if not np.isfinite(lp_prop):
            rec.counters["out_of_support"] += 1
        else:
            try:
                idx_prop = nearest_grid_point(precomp, prop)
                log_anchor_prop = est.log_anchor(prop, idx_prop)
                if exact:
                    log_rho = exact_log_z(model, theta) - exact_log_z(model, prop)
                elif kind == "one_pivot":
                    log_rho = est.one_pivot(theta, prop).log_value
                else:
                    log_rho = est.combine(kind, idx, idx_prop, log_anchor, log_anchor_prop,
                                          average_axis_orders).log_value
            except GridMHError as exc:
                raise ChainError(t + 1, exc) from exc
            rec.counters["estimator_calls"] += 1
            log_a = target.log_q(prop) - target.log_q(theta) + lp_prop - lp + log_h + log_rho
            if _accept(log_a, u):
                theta, lp, idx, log_anchor = prop, lp_prop, idx_prop, log_anchor_prop
                rec.accepted[t] = True
        rec.states[t + 1] = theta
        rec.log_anchors[t + 1] = log_anchor
    return rec.finish()


def abc_moments(precomp):
    """Grid knots with the per-point sample mean and variance of the statistic."""
    if precomp.grid.dims != 1:
        raise UnsupportedDimensionError("ABC interpolation is defined for one-parameter models only")
    knots = precomp.grid.points[:, 0]
    order = np.argsort(knots)
    block = precomp.stats[order, :, 0]
    ddof = 1 if precomp.n > 1 else 0
    return knots[order], block.mean(axis=1), block.var(axis=1, ddof=ddof)


def abc_mcmc_precomp(target, proposal, precomp, tolerance, init, iters, rng):
    """MCMC-ABC where the simulated statistic is N(mu(theta), sigma^2(theta)).

    mu and sigma^2 are piecewise-linear interpolations of the stored
    statistics' per-point mean and variance, held constant beyond the end
    knots.  A proposal is accepted with probability
    min(1, prior ratio * proposal ratio) when |s' - s(y)| < tolerance.
    """
    knots, means, variances = abc_moments(precomp)
    if target.support is None:
        target = target.with_support(precomp.in_support)
    rng = np.random.default_rng(rng)
    theta = _start(target, init, rng)
    lp = target.log_prior(theta)
    rec = _Recorder(theta, iters)
    s_obs = float(target.y_stats[0])
    for t in range(iters):
        prop, log_h = proposal.propose(theta, rng)
        u = rng.random()
        lp_prop = target.log_prior(prop)
        if not np.isfinite(lp_prop):
            rec.counters["out_of_support"] += 1
        else:
            mu = np.interp(prop[0], knots, means)
            var = np.interp(prop[0], knots, variances)
            s_sim = mu + math.sqrt(var) * rng.standard_normal()
            rec.counters["estimator_calls"] += 1
            if abs(s_sim - s_obs) < tolerance and _accept(lp_prop - lp + log_h, u):
                theta, lp = prop, lp_prop
                rec.accepted[t] = True
        rec.states[t + 1] = theta
    return rec.finish()


def chain_rng(seed, index):
    """Stream for chain ``index`` of an ensemble."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index), 1)))


def run_ensemble(run_one, n_chains, seed, threads=1):
    """Run ``run_one(index, rng)`` for every chain with a stream derived from (seed, index)."""
    def job(i):
        return run_one(i, chain_rng(seed, i))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, range(n_chains)))
    return [job(i) for i in range(n_chains)]
