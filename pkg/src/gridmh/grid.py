"""Posterior-adapted parameter grids.

The grid is laid out in the eigenbasis of the inverse posterior curvature at
the mode: point ``z`` (an integer vector) sits at
``mode + step * V @ diag(sqrt(eigvals)) @ z``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DivergenceError
from .models import sample_aux_stats

EIGEN_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Grid:
    mode: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    step: float
    coords: np.ndarray
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mode = np.atleast_1d(np.asarray(self.mode, dtype=float))
        d = mode.size
        V = np.asarray(self.eigvecs, dtype=float).reshape(d, d)
        lam = np.atleast_1d(np.asarray(self.eigvals, dtype=float))
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, d)
        if lam.shape != (d,) or np.any(lam <= 0):
            raise ValueError("eigenvalues must be d positive numbers")
        if not np.allclose(V.T @ V, np.eye(d), atol=1e-9):
            raise ValueError("eigenvector matrix must be orthonormal")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if len(coords) == 0:
            raise ValueError("a grid needs at least one point")
        if len({tuple(z) for z in coords}) != len(coords):
            raise ValueError("duplicate eigen-coordinates")
        points = mode + coords @ self.basis_of(V, lam, self.step).T
        for name, arr in (("mode", mode), ("eigvecs", V), ("eigvals", lam),
                          ("coords", coords), ("points", points)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "_index", {tuple(int(v) for v in z): i for i, z in enumerate(coords)})

    @staticmethod
    def basis_of(V, lam, step):
        return step * V * np.sqrt(lam)

    @property
    def basis(self):
        """Matrix mapping integer eigen-coordinates to parameter offsets."""
        return self.basis_of(self.eigvecs, self.eigvals, self.step)

    @property
    def dims(self):
        return self.mode.size

    def __len__(self):
        return len(self.coords)

    def index_of(self, z):
        return self._index.get(tuple(int(v) for v in z))

    def theta_of(self, z):
        return self.mode + self.basis @ np.asarray(z, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.step == other.step
            and np.array_equal(self.mode, other.mode)
            and np.array_equal(self.eigvecs, other.eigvecs)
            and np.array_equal(self.eigvals, other.eigvals)
            and np.array_equal(self.coords, other.coords)
        )

    __hash__ = None

    @classmethod
    def regular_1d(cls, start, stop, step):
        """Evenly spaced 1-d grid ``start, start + step, ...`` up to ``stop``."""
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return cls(np.array([start]), np.eye(1), np.ones(1), step, np.arange(count)[:, None])


def _sorted_coords(coords):
    coords = np.array(sorted(coords), dtype=np.int64)
    return coords.reshape(len(coords), -1)


def estimate_gradient(model, y_stats, theta, prior, N, rng, sweeps=None):
    """Monte Carlo gradient of the log posterior: s(y) - mean s(X) + grad log p."""
    if N < 1:
        raise ValueError("N must be >= 1")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    sims = sample_aux_stats(model, theta, N, sweeps, rng)
    return np.asarray(y_stats, dtype=float) - sims.mean(axis=0) + prior.grad(theta)


def estimate_hessian(model, theta, prior, N, rng, sweeps=None):
    """Monte Carlo Hessian of the log posterior, ``-cov(s(X)) + hess log p``.

    The covariance enters with a negative sign: for exp(theta . s) families
    the log-likelihood Hessian is minus the covariance of the statistics.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    sims = sample_aux_stats(model, theta, N, sweeps, rng)
    cov = np.atleast_2d(np.cov(sims, rowvar=False, ddof=1))
    H = -cov + prior.hess(theta)
    return 0.5 * (H + H.T)


def curvature_eigensystem(hessian, floor=EIGEN_FLOOR):
    """Eigenvectors and eigenvalues of the inverse of ``-hessian``.

    Curvature eigenvalues below ``floor`` times the largest are clamped before
    inversion.  Eigenvector signs are fixed so the largest-magnitude entry of
    each column is positive, which makes the result independent of the
    solver's arbitrary sign choice.
    """
    C = -np.atleast_2d(np.asarray(hessian, dtype=float))
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    top = max(float(w.max()), 0.0)
    if top <= 0:
        top = 1.0
    w = np.maximum(w, floor * top)
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    return V, 1.0 / w


@dataclass(frozen=True)
class ModeResult:
    final: np.ndarray
    average: np.ndarray
    steps: int


def find_mode(model, y_stats, prior, init, steps, rng, N=50, a0=None, t0=10.0,
              max_step=3.0, bound=1e4, sweeps=None, precondition=True):
    """Robbins-Monro search for the posterior mode.

    Iterates ``theta += a_t * D @ G(theta)`` with ``a_t = a0 / (t + t0)``,
    where ``G`` is :func:`estimate_gradient` and ``D`` is the inverse
    curvature estimated once at ``init`` (identity when ``precondition`` is
    False).  Each step is shortened to at most ``max_step`` in the metric of
    that curvature and halved while it would leave the prior's support.
    Returns the final iterate and the average over the second half.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(rng)
    theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    d = theta.size
    y_stats = np.asarray(y_stats, dtype=float)
    if precondition:
        V, lam = curvature_eigensystem(estimate_hessian(model, theta, prior, max(N, 2), rng, sweeps))
        D = (V * lam) @ V.T
        metric = (V / lam) @ V.T
        a0 = t0 if a0 is None else a0
    else:
        D = np.eye(d)
        metric = np.eye(d)
        a0 = 0.01 / max(1.0, float(np.abs(y_stats).max())) if a0 is None else a0
    tail_start = steps // 2
    tail_sum = np.zeros(d)
    for t in range(steps):
        g = estimate_gradient(model, y_stats, theta, prior, N, rng, sweeps)
        delta = (a0 / (t + t0)) * (D @ g)
        length = math.sqrt(max(float(delta @ metric @ delta), 0.0))
        if length > max_step:
            delta *= max_step / length
        for _ in range(60):
            if np.isfinite(prior.logpdf(theta + delta)):
                break
            delta = 0.5 * delta
        else:
            delta = np.zeros(d)
        theta = theta + delta
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > bound:
            raise DivergenceError(f"Robbins-Monro iterate left the ball of radius {bound} at step {t}")
        if t >= tail_start:
            tail_sum += theta
    return ModeResult(theta, tail_sum / (steps - tail_start), steps)


def extend_grid(mode, eigvecs, eigvals, eps, m, max_steps, gradient, in_support=None):
    """Grow a grid from ``mode`` along each eigen-direction.

    For axis i = 1..d, every point already in the grid starts a ray in the +
    and then the - direction; the ray keeps adding points while successive
    gradient evaluations differ by more than ``m`` in Euclidean norm, for at
    most ``max_steps`` points, and stops early if ``in_support`` rejects the
    next point.  ``gradient`` maps a parameter vector to a gradient vector.
    """
    mode = np.atleast_1d(np.asarray(mode, dtype=float))
    d = mode.size
    B = Grid.basis_of(np.asarray(eigvecs, dtype=float).reshape(d, d),
                      np.atleast_1d(np.asarray(eigvals, dtype=float)), eps)
    grid = {(0,) * d}
    for axis in range(d):
        for start in sorted(grid):
            for sign in (1, -1):
                z = np.array(start)
                g_prev = gradient(mode + B @ z)
                for _ in range(max_steps):
                    z_next = z.copy()
                    z_next[axis] += sign
                    theta_next = mode + B @ z_next
                    if in_support is not None and not in_support(theta_next):
                        break
                    g_next = gradient(theta_next)
                    if np.linalg.norm(g_next - g_prev) <= m:
                        break
                    grid.add(tuple(int(v) for v in z_next))
                    z, g_prev = z_next, g_next
    return Grid(mode, eigvecs, eigvals, eps, _sorted_coords(grid))


def build_grid(model, y_stats, prior, mode, hessian, m, eps, N, max_steps, rng, sweeps=None,
               gradient=None):
    """Eigenbasis-aligned grid around ``mode`` using the gradient-plateau stopping rule.

    ``gradient`` overrides the Monte Carlo gradient (each call otherwise
    draws ``N`` fresh auxiliary samples).
    """
    if not (m > 0 and eps > 0):
        raise ValueError("m and eps must be positive")
    rng = np.random.default_rng(rng)
    V, lam = curvature_eigensystem(hessian)
    if gradient is None:
        def gradient(theta):
            return estimate_gradient(model, y_stats, theta, prior, N, rng, sweeps)

    def in_support(theta):
        return np.isfinite(prior.logpdf(theta))

    return extend_grid(mode, V, lam, eps, m, max_steps, gradient, in_support)
