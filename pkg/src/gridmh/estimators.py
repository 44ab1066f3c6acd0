"""Estimators of Z(theta) / Z(theta') built only from stored grid statistics.

All three share the form Psi / Phi:

* one pivot   -- both factors importance-sampled from a single grid point;
* direct path -- theta -> nearest point, one jump to the point nearest
  theta', then theta';
* full path   -- the same, but the jump is replaced by a chain of unit steps
  between adjacent grid points, each link estimated from the statistics of
  the link's far end.

Everything is computed in log space.
"""

from collections import deque
from dataclasses import dataclass
from itertools import permutations
import math

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import DisconnectedGridError, NonFiniteEstimateError

KINDS = ("one_pivot", "direct_path", "full_path")
SHORT_NAMES = {"op": "one_pivot", "dp": "direct_path", "fp": "full_path"}


def canonical_kind(kind):
    kind = SHORT_NAMES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown estimator {kind!r}")
    return kind


@dataclass(frozen=True)
class GridPath:
    indices: tuple

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class RatioEstimate:
    log_value: float
    kind: str
    path_len: int

    def __post_init__(self):
        if not math.isfinite(self.log_value):
            raise NonFiniteEstimateError(f"{self.kind} estimate is not finite")

    @property
    def value(self):
        if self.log_value > 709.0:
            raise NonFiniteEstimateError(f"{self.kind} estimate overflows a double")
        return math.exp(self.log_value)


def _neighbors(grid, idx):
    z = grid.coords[idx]
    for axis in range(grid.dims):
        for sign in (1, -1):
            nz = z.copy()
            nz[axis] += sign
            j = grid.index_of(nz)
            if j is not None:
                yield j


def _bfs_path(grid, start, goal):
    prev = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            break
        for nxt in _neighbors(grid, cur):
            if nxt not in prev:
                prev[nxt] = cur
                queue.append(nxt)
    if goal not in prev:
        raise DisconnectedGridError(f"no path between grid points {start} and {goal}")
    path = [goal]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def build_path(grid, from_index, to_index, axis_order=None):
    """Staircase of adjacent grid points from ``from_index`` to ``to_index``.

    Axes are walked in ``axis_order`` (default ascending), one unit step at a
    time.  If the staircase would cross a missing point, the shortest path
    through existing points is used instead.
    """
    M = len(grid)
    if not (0 <= from_index < M and 0 <= to_index < M):
        raise IndexError("grid index out of range")
    order = range(grid.dims) if axis_order is None else axis_order
    z = grid.coords[from_index].copy()
    target = grid.coords[to_index]
    path = [from_index]
    for axis in order:
        sign = 1 if target[axis] > z[axis] else -1
        while z[axis] != target[axis]:
            z[axis] += sign
            idx = grid.index_of(z)
            if idx is None:
                return GridPath(tuple(_bfs_path(grid, from_index, to_index)))
            path.append(idx)
    return GridPath(tuple(path))


class RatioEstimator:
    """Estimators bound to one PrecompData, with memoized grid links.

    ``links[b, j, 0]`` is log Z(b + e_j) / Z(b) and ``links[b, j, 1]`` is
    log Z(b - e_j) / Z(b), both estimated from grid point b's statistics.
    The table is filled once, on first use.
    """

    def __init__(self, precomp):
        if precomp.n < 1:
            raise ValueError("estimators need at least one stored draw per grid point")
        self.precomp = precomp
        self.grid = precomp.grid
        self._stats = precomp.stats
        self._links = None
        self._path_cache = {}
        self._jump_cache = {}

    @property
    def links(self):
        if self._links is None:
            self._links = self._build_links()
        return self._links

    def _build_links(self):
        grid, stats = self.grid, self._stats
        M, d = len(grid), grid.dims
        out = np.full((M, d, 2), np.nan)
        log_n = math.log(self.precomp.n)
        for axis in range(d):
            for s, sign in enumerate((1, -1)):
                shifted = grid.coords.copy()
                shifted[:, axis] += sign
                nbr = np.array([grid.index_of(z) if grid.index_of(z) is not None else -1
                                for z in shifted])
                has = nbr >= 0
                if not has.any():
                    continue
                delta = grid.points[nbr[has]] - grid.points[has]
                x = np.einsum("bkd,bd->bk", stats[has], delta)
                out[has, axis, s] = logsumexp(x, axis=1) - log_n
        if not np.all(np.isfinite(out[~np.isnan(out)])):
            raise NonFiniteEstimateError("a grid link estimate is not finite")
        return out

    def log_anchor(self, theta, idx):
        """log of (1/n) sum_k exp((theta - point_idx) . s_k) over point idx's draws."""
        delta = np.ascontiguousarray(np.atleast_1d(theta) - self.grid.points[idx], dtype=float)
        val = kernels.log_mean_exp_dot(self._stats[idx], delta)
        if not math.isfinite(val):
            raise NonFiniteEstimateError(f"anchored ratio at grid point {idx} is not finite")
        return val

    def path_log_links(self, path):
        """Sum of log link estimates along ``path`` (each from the link's far end)."""
        idx = np.asarray(path.indices)
        if idx.size < 2:
            return 0.0
        diff = self.grid.coords[idx[:-1]] - self.grid.coords[idx[1:]]
        axis = np.argmax(diff != 0, axis=1)
        side = (diff[np.arange(len(axis)), axis] < 0).astype(int)
        return float(self.links[idx[1:], axis, side].sum())

    def _chain_log(self, i, j, axis_order):
        key = (i, j, axis_order)
        hit = self._path_cache.get(key)
        if hit is None:
            path = build_path(self.grid, i, j, axis_order)
            hit = (self.path_log_links(path), len(path))
            self._path_cache[key] = hit
        return hit

    def _orders(self, average):
        d = self.grid.dims
        if average and d > 1:
            return list(permutations(range(d)))
        return [None]

    def full_path_links(self, i, j, average=False):
        """log of the link product from grid point i to j, averaged over axis orders if asked."""
        vals = []
        length = 1
        for order in self._orders(average):
            v, length = self._chain_log(i, j, None if order is None else tuple(order))
            vals.append(v)
        if len(vals) == 1:
            return vals[0], length
        return float(logsumexp(vals) - math.log(len(vals))), length

    def direct_jump(self, i, j):
        """log Z(point_i) / Z(point_j) from point j's statistics."""
        key = (i, j)
        hit = self._jump_cache.get(key)
        if hit is None:
            hit = self.log_anchor(self.grid.points[i], j)
            self._jump_cache[key] = hit
        return hit

    def nearest(self, theta):
        from .precompute import nearest_grid_point

        return nearest_grid_point(self.grid, theta)

    def one_pivot(self, theta, theta_prime):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
        pivot = self.nearest(0.5 * (theta + theta_prime))
        log_psi = self.log_anchor(theta, pivot)
        log_phi = self.log_anchor(theta_prime, pivot)
        return RatioEstimate(log_psi - log_phi, "one_pivot", 1)

    def combine(self, kind, i, j, log_anchor_i, log_anchor_j, average=False):
        """Path estimators from precomputed anchors.

        ``log_anchor_i`` is the anchored ratio of theta at its nearest point i,
        ``log_anchor_j`` that of theta' at its nearest point j.
        """
        if kind == "direct_path":
            return RatioEstimate(log_anchor_i + self.direct_jump(i, j) - log_anchor_j, kind, 2)
        if kind == "full_path":
            links, length = self.full_path_links(i, j, average)
            return RatioEstimate(log_anchor_i + links - log_anchor_j, kind, length)
        raise ValueError(f"{kind} is not a path estimator")

    def estimate(self, kind, theta, theta_prime, average=False):
        kind = canonical_kind(kind)
        if kind == "one_pivot":
            return self.one_pivot(theta, theta_prime)
        i, j = self.nearest(theta), self.nearest(theta_prime)
        return self.combine(kind, i, j, self.log_anchor(theta, i), self.log_anchor(theta_prime, j),
                            average)


def anchored_ratio(precomp, theta, grid_index):
    """Importance-sampling estimate of Z(theta) / Z(grid point)."""
    return RatioEstimate(precomp.estimator.log_anchor(theta, grid_index), "anchored", 1).value


def one_pivot(precomp, theta, theta_prime):
    return precomp.estimator.one_pivot(theta, theta_prime)


def direct_path(precomp, theta, theta_prime):
    return precomp.estimator.estimate("direct_path", theta, theta_prime)


def full_path(precomp, theta, theta_prime, average_axis_orders=False):
    return precomp.estimator.estimate("full_path", theta, theta_prime, average_axis_orders)


def estimate(precomp, kind, theta, theta_prime, average_axis_orders=False):
    return precomp.estimator.estimate(kind, theta, theta_prime, average_axis_orders)
