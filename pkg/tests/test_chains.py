import math

import numpy as np
import pytest
from scipy import integrate

from gridmh.chains import (
    Box,
    LogScale,
    RandomWalk,
    Target,
    abc_mcmc_precomp,
    abc_moments,
    chain_rng,
    exchange,
    mh_exact,
    noisy_mh,
    precomp_metropolis,
    run_ensemble,
)
from gridmh.diagnostics import ess, tv_occupation
from gridmh.errors import (
    ChainError,
    IntractableModelError,
    NonFiniteEstimateError,
    UnsupportedDimensionError,
)
from gridmh.grid import Grid
from gridmh.models import GrfModel, exact_log_z, sample_aux_stats
from gridmh.precompute import PrecompData, run_precompute
from gridmh.priors import GammaPrior, UniformPrior

TOY = GrfModel.toy()
ER4 = GrfModel.erdos_renyi(4)
GAMMA = GammaPrior(1.0, 1.0)
TOY_TARGET = Target(TOY, [-2.0], GAMMA)
# posterior of y = 2 under Gamma(1, 1) is Gamma(3/2, rate 3)
TOY_MEAN, TOY_VAR = 0.5, 1.0 / 6.0


def mean_within(trace, mean, burn=1000, k=3.0):
    x = trace.states[burn:, 0]
    se = math.sqrt(x.var(ddof=1) / ess(x))
    return abs(x.mean() - mean) < k * se


class DiscretePrior:
    """Prior with mass only on a few points, for the matrix oracle."""

    def __init__(self, log_w):
        self.log_w = dict(log_w)

    def logpdf(self, theta):
        return self.log_w.get(round(float(theta[0]), 9), -math.inf)


class PickOther:
    def __init__(self, points):
        self.points = points

    def propose(self, theta, rng):
        others = [p for p in self.points if p != theta[0]]
        return np.array([others[rng.integers(len(others))]]), 0.0


def test_degenerate_proposal_always_accepts():
    stay = RandomWalk(0.0)
    for run in (lambda r: mh_exact(TOY_TARGET, stay, [0.7], 50, r),
                lambda r: exchange(TOY_TARGET, stay, [0.7], 50, rng=r)):
        tr = run(np.random.default_rng(0))
        assert tr.accepted.all()
        assert np.all(tr.states == 0.7)
        assert len(tr.states) == tr.iterations + 1 == 51


@pytest.mark.invariant
def test_three_point_matrix_oracle():
    pts = [-0.5, 0.4, 1.2]
    prior = DiscretePrior({p: lw for p, lw in zip(pts, (0.0, -0.3, 0.2))})
    target = Target(ER4, [2.0], prior)
    logpi = np.array([prior.logpdf([p]) + 2.0 * p - exact_log_z(ER4, [p]) for p in pts])
    pi = np.exp(logpi - logpi.max())
    pi /= pi.sum()
    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            if i != j:
                P[i, j] = 0.5 * min(1.0, pi[j] / pi[i])
        P[i, i] = 1.0 - P[i].sum()
    assert np.allclose(pi @ P, pi, atol=1e-14)

    tr = mh_exact(target, PickOther(pts), [pts[0]], 60_000, np.random.default_rng(1))
    idx = np.array([pts.index(round(v, 9)) for v in tr.states[:, 0]])
    counts = np.zeros((3, 3))
    np.add.at(counts, (idx[:-1], idx[1:]), 1)
    emp = counts / counts.sum(axis=1, keepdims=True)
    assert np.allclose(emp, P, atol=0.02)
    occ = np.bincount(idx, minlength=3) / idx.size
    assert np.allclose(occ, pi, atol=0.02)


def test_log_scale_density_ratio():
    theta = np.array([0.8, 2.0])
    prop, log_h = LogScale(0.5).propose(theta, np.random.default_rng(2))
    assert log_h == pytest.approx(np.log(prop / theta).sum(), abs=1e-12)


@pytest.mark.invariant
def test_log_scale_reversibility_on_known_target():
    tr = mh_exact(TOY_TARGET, LogScale(0.5), [0.5], 100_000, np.random.default_rng(3))
    x = tr.states[1000:, 0]
    se = math.sqrt(x.var(ddof=1) / ess(x))
    assert abs(x.mean() - TOY_MEAN) < 2.5 * se
    assert x.var() == pytest.approx(TOY_VAR, rel=0.08)


def test_noisy_with_one_draw_is_exchange():
    a = noisy_mh(TOY_TARGET, LogScale(0.5), [0.6], 500, 1, rng=np.random.default_rng(4))
    b = exchange(TOY_TARGET, LogScale(0.5), [0.6], 500, rng=np.random.default_rng(4))
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.accepted, b.accepted)


def test_noisy_many_draws_recovers_toy_posterior():
    tr = noisy_mh(TOY_TARGET, LogScale(0.5), [0.5], 20_000, 100, rng=np.random.default_rng(5))
    assert mean_within(tr, TOY_MEAN, k=2.5)


def test_ratio_variance_shrinks_like_one_over_n_aux():
    theta, prop = np.array([1.0]), np.array([1.5])
    rng = np.random.default_rng(6)
    sizes = np.array([1, 4, 16, 64])
    variances = []
    for n_aux in sizes:
        sims = sample_aux_stats(TOY, prop, 4000 * n_aux, rng=rng).reshape(4000, n_aux, 1)
        variances.append(np.exp(sims[..., 0] * (theta - prop)[0]).mean(axis=1).var())
    slope = np.polyfit(np.log(sizes), np.log(variances), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.15)


def test_exchange_on_tractable_graph_matches_quadrature():
    target = Target(ER4, [2.0], UniformPrior())
    tr = exchange(target, RandomWalk(1.0), [0.0], 100_000, rng=np.random.default_rng(7))

    def pdf(t):
        return math.exp(2.0 * t - exact_log_z(ER4, [t]))

    x = tr.states[1000:, 0]
    lo, hi = np.quantile(x, [0.0005, 0.9995])
    tv = tv_occupation(x[:, None], pdf, bins=50, span=(lo, hi)).tv[0]
    assert tv < 0.05


@pytest.mark.invariant
def test_exchange_agrees_with_exact_mh_across_runs():
    means = {"mh": [], "ex": []}
    for r in range(10):
        rng = np.random.default_rng(100 + r)
        means["mh"].append(mh_exact(TOY_TARGET, LogScale(0.5), [0.5], 4000, rng).states[500:, 0].mean())
        rng = np.random.default_rng(200 + r)
        means["ex"].append(exchange(TOY_TARGET, LogScale(0.5), [0.5], 4000, rng=rng).states[500:, 0].mean())
    a, b = np.array(means["mh"]), np.array(means["ex"])
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) < 2.5 * se


def test_intractable_model_refused():
    target = Target(GrfModel.ergm(34), [78.0, 45.0], UniformPrior())
    with pytest.raises(IntractableModelError):
        mh_exact(target, RandomWalk(0.1), [0.0, 0.0], 10, np.random.default_rng(0))


def test_exact_hook_reproduces_mh_exact():
    target = Target(TOY, [-2.0], GAMMA, Box((0.1,), (10.0,)))
    pc = run_precompute(TOY, Grid.regular_1d(0.1, 10, 0.1), 5, seed=8)
    a = precomp_metropolis(target, LogScale(0.5), pc, "exact", [0.5], 2000, np.random.default_rng(9))
    b = mh_exact(target, LogScale(0.5), [0.5], 2000, np.random.default_rng(9))
    assert np.array_equal(a.states, b.states)


@pytest.mark.invariant
def test_rejection_keeps_cached_anchor():
    pc = run_precompute(TOY, Grid.regular_1d(0.1, 10, 0.1), 10, seed=10)
    for kind in ("op", "dp", "fp"):
        tr = precomp_metropolis(TOY_TARGET, LogScale(0.5), pc, kind, [0.5], 2000, np.random.default_rng(11))
        rejected = ~tr.accepted
        assert rejected.any() and tr.accepted.any()
        assert np.array_equal(tr.log_anchors[1:][rejected], tr.log_anchors[:-1][rejected])
        assert np.isfinite(tr.log_anchors).all()
        assert 0.1 < tr.acceptance_rate < 0.95


def test_out_of_support_proposals_are_counted():
    pc = run_precompute(TOY, Grid.regular_1d(0.3, 0.8, 0.1), 10, seed=12)
    tr = precomp_metropolis(TOY_TARGET, LogScale(1.0), pc, "fp", [0.5], 500, np.random.default_rng(13))
    assert tr.counters["out_of_support"] > 0
    assert tr.counters["out_of_support"] + tr.counters["estimator_calls"] == 500
    assert np.all((tr.states >= 0.25) & (tr.states <= 0.85))


def test_estimator_failure_reports_iteration(monkeypatch):
    pc = run_precompute(TOY, Grid.regular_1d(0.1, 10, 0.1), 5, seed=14)
    est = pc.estimator
    real = est.log_anchor
    calls = []

    def flaky(theta, idx):
        calls.append(idx)
        if len(calls) == 4:
            raise NonFiniteEstimateError("boom")
        return real(theta, idx)

    monkeypatch.setattr(est, "log_anchor", flaky)
    with pytest.raises(ChainError) as info:
        precomp_metropolis(TOY_TARGET, LogScale(0.1), pc, "fp", [0.5], 50, np.random.default_rng(0))
    assert info.value.iteration == 3
    assert isinstance(info.value.cause, NonFiniteEstimateError)


def test_model_mismatch_refused():
    pc = run_precompute(ER4, Grid.regular_1d(-1, 1, 0.5), 2, seed=0)
    with pytest.raises(ValueError):
        precomp_metropolis(TOY_TARGET, LogScale(0.5), pc, "fp", [0.5], 5, np.random.default_rng(0))


def test_abc_knots_match_sample_moments():
    pc = run_precompute(TOY, Grid.regular_1d(0.1, 2.0, 0.1), 10, seed=15)
    knots, mu, var = abc_moments(pc)
    i = 7
    block = pc.stats[pc.grid.index_of((i,)), :, 0]
    assert np.interp(knots[i], knots, mu) == block.mean()
    assert np.interp(knots[i], knots, var) == pytest.approx(block.var(ddof=1), rel=1e-12)


def test_abc_with_huge_tolerance_samples_the_prior():
    pc = run_precompute(TOY, Grid.regular_1d(0.1, 30, 0.1), 5, seed=16)
    target = Target(TOY, [-2.0], GAMMA, Box((0.0,), (math.inf,)))
    tr = abc_mcmc_precomp(target, LogScale(0.8), pc, 1e12, [1.0], 40_000, np.random.default_rng(17))
    assert mean_within(tr, 1.0, k=2.5)


def test_abc_rejects_two_parameter_models():
    grid = Grid(np.zeros(2), np.eye(2), np.ones(2), 0.1, [(0, 0), (1, 0)])
    pc = run_precompute(GrfModel.autologistic(2, 2), grid, 2, sweeps=1, seed=0)
    target = Target(pc.model, [1.0, 1.0], UniformPrior())
    with pytest.raises(UnsupportedDimensionError):
        abc_mcmc_precomp(target, RandomWalk(0.1), pc, 1.0, [0.0, 0.0], 5, np.random.default_rng(0))


@pytest.mark.invariant
def test_ensemble_streams_independent_of_thread_count():
    def run(i, rng):
        return exchange(TOY_TARGET, LogScale(0.5), None, 30, rng=rng)

    one = run_ensemble(run, 6, seed=3, threads=1)
    many = run_ensemble(run, 6, seed=3, threads=3)
    for a, b in zip(one, many):
        assert np.array_equal(a.states, b.states)
    assert not np.array_equal(one[0].states, one[1].states)
    assert chain_rng(3, 2).random() == chain_rng(3, 2).random()


def test_trace_csv(tmp_path):
    tr = exchange(TOY_TARGET, LogScale(0.5), [0.5], 20, rng=np.random.default_rng(0))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,theta_1,accepted,anchor"
    assert len(lines) == 22
    assert float(lines[-1].split(",")[1]) == tr.states[-1, 0]


def test_posterior_integrates():
    z = integrate.quad(lambda t: math.exp(2.0 * t - exact_log_z(ER4, [t])), -30, 30)[0]
    assert math.isfinite(z) and z > 0
