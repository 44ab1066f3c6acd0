import math

import numpy as np
import pytest
from scipy import stats

from gridmh.diagnostics import (
    TvCurve,
    central_span,
    erdos_renyi_exact_variance,
    ess,
    estimator_moments,
    fp_vs_dp_study,
    line_grid,
    local_variance_study,
    moment_table,
    replicate_seed,
    tv_occupation,
    variance_growth_study,
)
from gridmh.errors import IntractableModelError
from gridmh.estimators import estimate
from gridmh.grid import Grid
from gridmh.models import GrfModel
from gridmh.precompute import run_precompute

TOY = GrfModel.toy()
TOY_GRID = Grid.regular_1d(0.1, 10, 0.1)


def toy_factory(seed):
    return run_precompute(TOY, TOY_GRID, 10, seed=seed)


@pytest.mark.invariant
def test_tv_iid_from_reference_is_small():
    dist = stats.norm()
    x = dist.rvs(size=100_000, random_state=np.random.default_rng(0))
    curve = tv_occupation(x[:, None], dist.pdf, bins=50, span=central_span(dist))
    assert curve.tv[0] <= 0.02
    assert curve.bin_count == 50


def test_tv_disjoint_is_one():
    x = np.full((500, 3), 50.0)
    curve = tv_occupation(x, stats.norm().pdf, bins=50, span=(-3, 3))
    assert np.all(curve.tv == 1.0)


def test_tv_identical_ensembles_is_zero():
    x = np.random.default_rng(1).gamma(2.0, size=2000)
    assert tv_occupation(x[:, None], x, bins=50).tv[0] == 0.0


@pytest.mark.invariant
def test_tv_bounds_and_empty_ensemble():
    rng = np.random.default_rng(2)
    x = rng.normal(0.5, 2.0, size=(300, 20))
    curve = tv_occupation(x, stats.norm().pdf, span=(-3, 3))
    assert np.all((curve.tv >= 0) & (curve.tv <= 1))
    with pytest.raises(ValueError):
        tv_occupation([], stats.norm().pdf, span=(-3, 3))


def test_tv_csv_declares_bins(tmp_path):
    curve = TvCurve(np.array([0.5, 0.25]), np.linspace(0, 1, 51))
    path = tmp_path / "tv.csv"
    curve.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# bins 50 range")
    assert lines[1] == "iter,tv" and len(lines) == 4


@pytest.mark.invariant
def test_ess_iid():
    x = np.random.default_rng(3).standard_normal(10_000)
    assert 0.9 <= ess(x) / x.size <= 1.1


def test_ess_constant_and_short():
    assert ess(np.full(50, 3.0)) == 1.0
    with pytest.raises(ValueError):
        ess(np.arange(9.0))


def test_ess_ar1():
    rng = np.random.default_rng(4)
    n, rho = 100_000, 0.5
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    assert ess(x) == pytest.approx(n / 3, rel=0.1)


@pytest.mark.invariant
def test_ess_never_exceeds_length():
    x = np.tile([1.0, -1.0], 500) + 1e-3 * np.random.default_rng(5).standard_normal(1000)
    assert ess(x) <= x.size


def test_moments_at_identical_parameters_are_zero():
    for kind in ("op", "dp", "fp"):
        r = estimator_moments(toy_factory, kind, [1.3], [1.3], 100, seed=1)
        assert r.bias == 0.0 and r.variance == 0.0 and r.truth == 1.0


def test_moments_validation():
    with pytest.raises(ValueError):
        estimator_moments(toy_factory, "fp", [1.0], [2.0], 99)
    ergm = GrfModel.ergm(34)
    grid = Grid(np.zeros(2), np.eye(2), np.ones(2), 0.1, [(0, 0)])
    with pytest.raises(IntractableModelError):
        moment_table(lambda s: run_precompute(ergm, grid, 2, sweeps=1, seed=s), ["fp"],
                     [([0.0, 0.0], [0.1, 0.0])], 100)


def test_one_pivot_far_worse_than_full_path_at_wide_pair():
    reports = moment_table(toy_factory, ["op", "fp"], [([0.12], [0.94])], 2000, seed=2)
    op, fp = reports
    assert op.variance >= 10 * fp.variance


def test_replicate_seeds_are_distinct():
    seeds = {replicate_seed(7, r) for r in range(50)}
    assert len(seeds) == 50


def test_exact_variance_formula():
    assert erdos_renyi_exact_variance(5, 0.0, 0.0, 10) == 0.0
    # direct enumeration over the binomial edge count
    p, theta, h, n = 4, 0.3, 0.7, 3
    k = np.arange(7)
    w = stats.binom(6, 1 / (1 + math.exp(-theta))).pmf(k)
    var = (np.sum(w * np.exp(2 * h * k)) - np.sum(w * np.exp(h * k)) ** 2) / n
    assert erdos_renyi_exact_variance(p, theta, h, n) == pytest.approx(var, rel=1e-12)


@pytest.mark.invariant
def test_growth_study_matches_exact_pointwise():
    rep = variance_growth_study(4, 0.0, [0.25, 0.5, 0.75], 10, 5000, seed=3)
    assert np.all(np.abs(rep.variance - rep.exact) < 3 * rep.variance_se)
    with pytest.raises(ValueError):
        variance_growth_study(7, 0.0, [1.0], 10, 10)


def test_local_study_excludes_zero():
    rep = local_variance_study(TOY, [1.0], [0.0, 0.05, 0.1, 0.2], 10, 2000, seed=4)
    assert rep.variance[0] == 0.0 and not rep.fit_mask[0]
    assert rep.fit_mask[1:].all()


def test_local_study_graph_model_small_steps():
    rep = local_variance_study(GrfModel.erdos_renyi(4), [0.0], np.linspace(0.002, 0.02, 6), 10, 4000, seed=5)
    assert rep.slope == pytest.approx(2.0, abs=0.3)


def test_line_grid_spans_interval_and_stays_positive_for_toy():
    g = line_grid(TOY, 1.01, 2.06, 0.4)
    pts = g.points[:, 0]
    assert pts.min() > 0 and pts.min() <= 1.01 and pts.max() >= 2.06
    g2 = line_grid(GrfModel.erdos_renyi(4), -0.3, 0.3, 0.1)
    assert g2.points[:, 0].min() < -0.3


def test_path_collapse_when_grid_is_coarse():
    pc = run_precompute(TOY, line_grid(TOY, 1.01, 1.2, 2.0), 10, seed=6)
    vals = {k: estimate(pc, k, [1.01], [1.2]).log_value for k in ("op", "dp", "fp")}
    assert vals["op"] == pytest.approx(vals["dp"], abs=1e-12)
    assert vals["fp"] == pytest.approx(vals["dp"], abs=1e-12)


def test_full_path_improves_with_refinement():
    cmp = fp_vs_dp_study(TOY, [1.01], [2.06], [0.4, 0.2, 0.1], 10, 1000, seed=7)
    assert cmp.fp_beats_dp_at_finest
    assert cmp.fp_nonincreasing()
    dp = cmp.dp_variance
    # direct path does not benefit from a finer grid
    assert dp.min() > 0.25 * dp.max()
