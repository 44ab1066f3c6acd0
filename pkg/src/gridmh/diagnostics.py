"""Chain and estimator diagnostics: ensemble TV, ESS and estimator variance studies."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import math

import numpy as np
from scipy import integrate
from scipy.special import expit

from .errors import IntractableModelError
from .estimators import canonical_kind
from .grid import Grid
from .models import GrfModel, exact_log_z, has_exact_log_z, sample_aux_stats

TV_BINS = 50
TV_MASS = 0.999


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def replicate_seed(seed, r, stream=2):
    """Integer seed for replicate ``r``, derived from ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(r), stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------- TV


@dataclass(frozen=True)
class TvCurve:
    tv: np.ndarray
    edges: np.ndarray

    @property
    def bin_range(self):
        return float(self.edges[0]), float(self.edges[-1])

    @property
    def bin_count(self):
        return len(self.edges) - 1

    def to_csv(self, path):
        lo, hi = self.bin_range
        with open(path, "w", newline="") as fh:
            fh.write(f"# bins {self.bin_count} range {lo!r} {hi!r}\n")
            w = csv.writer(fh)
            w.writerow(["iter", "tv"])
            for i, v in enumerate(self.tv):
                w.writerow([i, repr(float(v))])


def central_span(dist, mass=TV_MASS):
    """Interval holding the central ``mass`` of a frozen scipy distribution."""
    tail = 0.5 * (1.0 - mass)
    return float(dist.ppf(tail)), float(dist.ppf(1.0 - tail))


def _ensemble_matrix(traces, coordinate):
    if len(traces) == 0:
        raise ValueError("empty ensemble")
    if isinstance(traces, np.ndarray):
        arr = np.asarray(traces, dtype=float)
        return arr[:, :, coordinate] if arr.ndim == 3 else arr
    lengths = {len(t.states) for t in traces}
    if len(lengths) != 1:
        raise ValueError("all traces must have the same length")
    return np.stack([t.states[:, coordinate] for t in traces])


def _reference_masses(reference, edges):
    if callable(reference):
        masses = np.array([integrate.quad(reference, a, b, limit=200, epsabs=1e-10, epsrel=1e-6)[0]
                           for a, b in zip(edges[:-1], edges[1:])])
    else:
        sample = np.asarray(reference, dtype=float).ravel()
        masses = np.histogram(sample, bins=edges)[0].astype(float)
    total = masses.sum()
    if not total > 0:
        raise ValueError("reference has no mass over the bin range")
    return masses / total


def tv_occupation(traces, reference, bins=TV_BINS, span=None, coordinate=0):
    """Total variation between the cross-chain histogram at each iteration and a reference.

    ``traces`` is a list of ChainTrace or an array shaped (chains, iterations).
    ``reference`` is a density (integrated per bin by quadrature) or a sample.
    The reference is normalised over the bin range; chain mass falling
    outside the range counts fully towards the distance.
    """
    X = _ensemble_matrix(traces, coordinate)
    if span is None:
        if callable(reference):
            raise ValueError("a bin span is required for a density reference")
        sample = np.asarray(reference, dtype=float).ravel()
        span = (float(sample.min()), float(sample.max()))
    lo, hi = span
    if not hi > lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, int(bins) + 1)
    ref = _reference_masses(reference, edges)
    chains = X.shape[0]
    tv = np.empty(X.shape[1])
    for i in range(X.shape[1]):
        counts = np.histogram(X[:, i], bins=edges)[0] / chains
        outside = 1.0 - counts.sum()
        tv[i] = 0.5 * (np.abs(counts - ref).sum() + max(outside, 0.0))
    return TvCurve(np.clip(tv, 0.0, 1.0), edges)


# ---------------------------------------------------------------- ESS


def autocovariance(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    f = np.fft.rfft(x - x.mean(), n=2 * n)
    return np.fft.irfft(f * np.conj(f))[:n] / n


def ess(values):
    """Effective sample size with Geyer's initial positive sequence truncation.

    A constant sequence returns 1.0.  The result never exceeds the length.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("ess needs at least 10 values")
    acov = autocovariance(x)
    if not acov[0] > 0:
        return 1.0
    rho = acov / acov[0]
    # pair sums Gamma_k = rho_2k + rho_2k+1, kept while positive
    total = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += 2.0 * pair
    tau = max(total, 1.0 / n)
    return float(min(n / tau, n))


# ---------------------------------------------------------------- estimator moments


@dataclass(frozen=True)
class MomentReport:
    kind: str
    theta: tuple
    theta_prime: tuple
    replicates: int
    truth: float
    bias: float
    variance: float
    bias_se: float
    variance_se: float

    HEADER = ("estimator", "theta", "theta_prime", "replicates", "truth", "bias", "variance",
              "bias_se", "variance_se")

    def row(self):
        fmt = lambda t: " ".join(repr(float(v)) for v in t)  # noqa: E731
        return [self.kind, fmt(self.theta), fmt(self.theta_prime), self.replicates,
                self.truth, self.bias, self.variance, self.bias_se, self.variance_se]


def write_reports(path, reports):
    _write_csv(path, MomentReport.HEADER, [r.row() for r in reports])


def variance_se(values):
    """Standard error of the sample variance from the fourth central moment."""
    x = np.asarray(values, dtype=float)
    r = x.size
    c = x - x.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return float(math.sqrt(max(m4 - m2 * m2 * (r - 3) / (r - 1), 0.0) / r))


def _moments(kind, theta, theta_prime, truth, values):
    values = np.asarray(values, dtype=float)
    r = values.size
    var = float(values.var(ddof=1))
    return MomentReport(kind, tuple(np.atleast_1d(theta).tolist()),
                        tuple(np.atleast_1d(theta_prime).tolist()), r, truth,
                        float(values.mean() - truth), var, math.sqrt(var / r), variance_se(values))


def moment_table(precomp_factory, kinds, pairs, replicates, seed=0, threads=1):
    """Bias and variance of several estimators at several (theta, theta') pairs.

    Every replicate builds one PrecompData via ``precomp_factory(int_seed)``
    and evaluates all kinds and pairs on it.  Bias is taken against the
    exact ratio Z(theta) / Z(theta').
    """
    if replicates < 2:
        raise ValueError("replicates must be >= 2")
    kinds = [canonical_kind(k) for k in kinds]
    pairs = [(np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float)))
             for a, b in pairs]

    def one(r):
        est = precomp_factory(replicate_seed(seed, r)).estimator
        return [[est.estimate(k, a, b).value for (a, b) in pairs] for k in kinds]

    first = precomp_factory(replicate_seed(seed, 0))
    model = first.model
    if not has_exact_log_z(model):
        raise IntractableModelError(f"{model.describe()} has no exact normalizing constant")
    values = np.array(_map(one, range(replicates), threads))  # (R, kinds, pairs)
    reports = []
    for p, (a, b) in enumerate(pairs):
        truth = math.exp(exact_log_z(model, a) - exact_log_z(model, b))
        for k, kind in enumerate(kinds):
            reports.append(_moments(kind, a, b, truth, values[:, k, p]))
    return reports


def estimator_moments(precomp_factory, kind, theta, theta_prime, replicates, seed=0, threads=1):
    """MomentReport for one estimator at one pair, over fresh pre-computations."""
    if replicates < 100:
        raise ValueError("replicates must be >= 100")
    return moment_table(precomp_factory, [kind], [(theta, theta_prime)], replicates, seed, threads)[0]


# ---------------------------------------------------------------- variance rate studies


@dataclass(frozen=True)
class SlopeReport:
    h: np.ndarray
    n: int
    replicates: int
    variance: np.ndarray
    variance_se: np.ndarray
    exact: np.ndarray
    slope: float
    fit_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        rows = [[h, v, s, e, int(f)] for h, v, s, e, f in
                zip(self.h, self.variance, self.variance_se, self.exact, self.fit_mask)]
        _write_csv(path, ["h", "variance", "variance_se", "exact_variance", "in_fit"], rows)


def erdos_renyi_exact_variance(p, theta, h, n):
    """Exact variance of (1/n) sum exp(h s(X)), X ~ Erdos-Renyi(theta) on p nodes."""
    pbar = p * (p - 1) // 2
    log_second = pbar * (np.logaddexp(0.0, 2 * h + theta) - np.logaddexp(0.0, theta))
    log_first_sq = 2 * pbar * (np.logaddexp(0.0, theta + h) - np.logaddexp(0.0, theta))
    return np.exp(log_second) * -np.expm1(log_first_sq - log_second) / n


def variance_growth_study(p, theta, h_values, n, replicates, seed=0, fit_from=None):
    """Monte Carlo variance of the one-step ratio estimator on an Erdos-Renyi graph.

    Fits the slope of log(n v_n) against h over the h values at or above
    ``fit_from`` (default: the upper half of the supplied values).
    """
    if p > 6:
        raise ValueError("p must be <= 6")
    model = GrfModel.erdos_renyi(p)
    h = np.asarray(h_values, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, 3)))
    var = np.empty(h.size)
    se = np.empty(h.size)
    for i, hv in enumerate(h):
        s = sample_aux_stats(model, [theta], n * replicates, rng=rng)[:, 0].reshape(replicates, n)
        est = np.exp(hv * s).mean(axis=1)
        var[i] = est.var(ddof=1)
        se[i] = variance_se(est)
    exact = erdos_renyi_exact_variance(p, theta, h, n)
    if fit_from is None:
        fit_from = np.median(h)
    mask = (h >= fit_from) & (var > 0)
    slope = float(np.polyfit(h[mask], np.log(n * var[mask]), 1)[0]) if mask.sum() >= 2 else float("nan")
    pbar = p * (p - 1) // 2
    meta = {"pbar": pbar, "rate": 2 * pbar,
            "nu": float(expit(theta) ** pbar * (1 - expit(theta) ** pbar))}
    return SlopeReport(h, n, replicates, var, se, exact, slope, mask, meta)


def local_variance_study(model, theta, h_values, n, replicates, seed=0, direction=None):
    """Variance of the ratio estimator at (theta, theta + h u) as h shrinks.

    The estimator averages q_theta(x) / q_theta'(x) over n draws from
    theta'.  Returns the log-log slope of variance against h; h = 0 is
    reported but left out of the fit.
    """
    if not has_exact_log_z(model):
        raise IntractableModelError(f"{model.describe()} has no exact normalizing constant")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u = np.zeros(theta.size) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        u[0] = 1.0
    u = u / np.linalg.norm(u)
    h = np.asarray(h_values, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, 4)))
    var = np.empty(h.size)
    se = np.empty(h.size)
    for i, hv in enumerate(h):
        prime = theta + hv * u
        s = sample_aux_stats(model, prime, n * replicates, rng=rng).reshape(replicates, n, theta.size)
        est = np.exp(s @ (theta - prime)).mean(axis=1)
        var[i] = est.var(ddof=1) if hv != 0 else 0.0
        se[i] = variance_se(est) if hv != 0 else 0.0
    mask = (h > 0) & (var > 0)
    slope = float(np.polyfit(np.log(h[mask]), np.log(var[mask]), 1)[0]) if mask.sum() >= 2 else float("nan")
    return SlopeReport(h, n, replicates, var, se, np.full(h.size, np.nan), slope, mask)


# ---------------------------------------------------------------- full path versus direct path


def line_grid(model, lo, hi, eps, pad=2):
    """1-d grid on the lattice eps * k covering [lo, hi] with ``pad`` extra points each side."""
    k0 = int(math.floor(lo / eps)) - pad
    k1 = int(math.ceil(hi / eps)) + pad
    ks = np.arange(k0, k1 + 1)
    if model.kind == "toy_gaussian":
        ks = ks[ks * eps > 0]
    return Grid(np.zeros(1), np.eye(1), np.ones(1), eps, ks[:, None])


@dataclass(frozen=True)
class PathComparison:
    eps: np.ndarray
    fp: list
    dp: list

    @property
    def fp_variance(self):
        return np.array([r.variance for r in self.fp])

    @property
    def dp_variance(self):
        return np.array([r.variance for r in self.dp])

    @property
    def fp_beats_dp_at_finest(self):
        i = int(np.argmin(self.eps))
        return bool(self.fp[i].variance <= self.dp[i].variance)

    def fp_nonincreasing(self, tolerance_se=2.0):
        """True if var(FP) does not grow as eps shrinks, up to ``tolerance_se`` standard errors."""
        order = np.argsort(-self.eps)
        v = self.fp_variance[order]
        s = np.array([r.variance_se for r in self.fp])[order]
        return bool(np.all(v[1:] <= v[:-1] + tolerance_se * np.hypot(s[1:], s[:-1])))

    def to_csv(self, path):
        rows = [[e, f.variance, f.variance_se, d.variance, d.variance_se, f.bias, d.bias]
                for e, f, d in zip(self.eps, self.fp, self.dp)]
        _write_csv(path, ["eps", "fp_variance", "fp_variance_se", "dp_variance", "dp_variance_se",
                          "fp_bias", "dp_bias"], rows)


def fp_vs_dp_study(model, theta, theta_prime, eps_values, n, replicates, seed=0, sweeps=None,
                   threads=1):
    """Variance of the full and direct path estimators on refined 1-d grids."""
    from .precompute import run_precompute

    if model.dims != 1:
        raise ValueError("fp_vs_dp_study uses 1-d grids")
    lo, hi = sorted((float(np.ravel(theta)[0]), float(np.ravel(theta_prime)[0])))
    eps = np.asarray(eps_values, dtype=float)
    fp, dp = [], []
    for e in eps:
        grid = line_grid(model, lo, hi, e)

        def factory(s, grid=grid):
            return run_precompute(model, grid, n, sweeps=sweeps, seed=s)

        reports = moment_table(factory, ["fp", "dp"], [(theta, theta_prime)], replicates, seed, threads)
        fp.append(reports[0])
        dp.append(reports[1])
    return PathComparison(eps, fp, dp)
