"""Offline simulation of sufficient statistics on a grid, plus storage.

Only statistics are kept: ``stats[m]`` is an ``(n, d)`` block of s(X) for
draws X at grid point m.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import os

import numpy as np

from .errors import (
    PrecompChecksumError,
    PrecompCorruptError,
    PrecompTruncatedError,
    PrecompVersionError,
)
from .grid import Grid
from .models import GrfModel, sample_aux_stats

MAGIC = "gridmh-precomp"
VERSION = 1
_TIE_TOL = 1e-9


def point_rng(seed, index):
    """Random stream for grid point ``index``, independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass(frozen=True, eq=False)
class PrecompData:
    model: GrfModel
    grid: Grid
    n: int
    stats: np.ndarray
    seed: int = 0
    sweeps: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        stats = np.asarray(self.stats, dtype=float)
        M, d = len(self.grid), self.grid.dims
        if d != self.model.dims:
            raise ValueError("grid dimension does not match the model")
        stats = stats.reshape(M, self.n, d)
        if not np.all(np.isfinite(stats)):
            raise ValueError("stored statistics must be finite")
        stats = np.ascontiguousarray(stats)
        stats.setflags(write=False)
        object.__setattr__(self, "stats", stats)

    def __eq__(self, other):
        if not isinstance(other, PrecompData):
            return NotImplemented
        return (
            self.model == other.model
            and self.grid == other.grid
            and self.n == other.n
            and self.seed == other.seed
            and self.sweeps == other.sweeps
            and np.array_equal(self.stats, other.stats)
        )

    __hash__ = None

    @property
    def M(self):
        return len(self.grid)

    @cached_property
    def coord_bounds(self):
        """Support box in eigen-coordinates: grid hull widened by half a cell."""
        c = self.grid.coords
        return c.min(axis=0) - 0.5, c.max(axis=0) + 0.5

    @cached_property
    def _to_coords(self):
        g = self.grid
        return g.eigvecs.T / np.sqrt(g.eigvals)[:, None] / g.step

    def in_support(self, theta):
        lo, hi = self.coord_bounds
        u = self._to_coords @ (np.atleast_1d(theta) - self.grid.mode)
        return bool(np.all(u >= lo) and np.all(u <= hi))

    @cached_property
    def estimator(self):
        from .estimators import RatioEstimator

        return RatioEstimator(self)


def run_precompute(model, grid, n, sweeps=None, seed=0, threads=1):
    """Simulate ``n`` auxiliary draws at every grid point and keep their statistics.

    Grid point m always uses the stream ``point_rng(seed, m)``, so the result
    does not depend on ``threads``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")

    def work(m):
        if n == 0:
            return np.empty((0, model.dims))
        return sample_aux_stats(model, grid.points[m], n, sweeps, point_rng(seed, m))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(work, range(len(grid))))
    else:
        blocks = [work(m) for m in range(len(grid))]
    stats = np.stack(blocks) if blocks else np.empty((0, n, model.dims))
    return PrecompData(model, grid, n, stats, seed=seed, sweeps=sweeps)


def eigen_coords(grid, theta):
    """Real eigen-coordinates u with theta = mode + step * V sqrt(Lambda) u."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return (grid.eigvecs.T @ (theta - grid.mode)) / np.sqrt(grid.eigvals) / grid.step


def nearest_grid_point(data, theta):
    """Index of the grid point closest to ``theta`` in eigen-coordinates.

    Accepts a :class:`PrecompData` or a bare :class:`Grid`.  Exact ties go to
    the lowest grid index.
    """
    grid = data.grid if isinstance(data, PrecompData) else data
    u = eigen_coords(grid, theta)
    z = np.rint(u)
    frac = np.abs(u - np.floor(u) - 0.5)
    if np.all(frac > _TIE_TOL):
        idx = grid.index_of(z)
        if idx is not None:
            return idx
    dist = np.sum((grid.coords - u) ** 2, axis=1)
    best = dist.min()
    return int(np.flatnonzero(dist <= best + _TIE_TOL)[0])


def _fmt(x):
    return repr(float(x))


def _payload_lines(data):
    g = data.grid
    d = g.dims
    lines = [
        f"{MAGIC} v{VERSION}",
        f"model {data.model.describe()}",
        f"seed {data.seed}",
        f"sweeps {'default' if data.sweeps is None else data.sweeps}",
        f"d {d}",
        f"eps {_fmt(g.step)}",
        f"M {len(g)}",
        f"n {data.n}",
        " ".join(_fmt(v) for v in g.mode),
    ]
    lines += [" ".join(_fmt(v) for v in row) for row in g.eigvecs]
    lines.append(" ".join(_fmt(v) for v in g.eigvals))
    for m in range(len(g)):
        z = " ".join(str(int(v)) for v in g.coords[m])
        th = " ".join(_fmt(v) for v in g.points[m])
        lines.append(f"point {m} {z} {th}")
        lines += [" ".join(_fmt(v) for v in row) for row in data.stats[m]]
    return lines


def _checksum(text):
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def dumps(data):
    body = "\n".join(_payload_lines(data)) + "\n"
    return body + f"checksum {_checksum(body)}\n"


def save(data, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(dumps(data))
    os.replace(tmp, path)


def file_checksum(path):
    with open(path) as fh:
        for line in fh:
            if line.startswith("checksum "):
                return line.split()[1]
    raise PrecompTruncatedError(f"{path}: no checksum line")


def loads(text):
    lines = text.split("\n")
    if not lines or not lines[0].startswith(MAGIC + " "):
        raise PrecompCorruptError("not a pre-computed data file")
    if lines[0] != f"{MAGIC} v{VERSION}":
        raise PrecompVersionError(f"unsupported file version {lines[0].split()[-1]!r}")
    if lines[-1] == "":
        lines = lines[:-1]
    if not lines[-1].startswith("checksum "):
        raise PrecompTruncatedError("file ends before the checksum line")
    body = "\n".join(lines[:-1]) + "\n"
    if _checksum(body) != lines[-1].split()[1]:
        raise PrecompChecksumError("checksum mismatch")
    try:
        return _parse(lines[:-1])
    except (ValueError, IndexError, KeyError) as exc:
        raise PrecompCorruptError(f"malformed file: {exc}") from None


def _parse(lines):
    header = {}
    for key, line in zip(("model", "seed", "sweeps", "d", "eps", "M", "n"), lines[1:8]):
        name, _, value = line.partition(" ")
        if name != key:
            raise PrecompCorruptError(f"expected header field {key!r}, found {name!r}")
        header[key] = value
    d, M, n = int(header["d"]), int(header["M"]), int(header["n"])
    model = GrfModel.parse(header["model"])
    expected = 8 + 1 + d + 1 + M * (n + 1)
    if len(lines) != expected:
        raise PrecompCorruptError(
            f"header promises M={M}, n={n} ({expected} lines) but the body has {len(lines)}"
        )

    def reals(line, count):
        vals = [float(v) for v in line.split()]
        if len(vals) != count:
            raise PrecompCorruptError(f"expected {count} numbers in {line!r}")
        return vals

    pos = 8
    mode = reals(lines[pos], d)
    V = [reals(lines[pos + 1 + i], d) for i in range(d)]
    lam = reals(lines[pos + 1 + d], d)
    pos += d + 2
    coords = np.empty((M, d), dtype=np.int64)
    thetas = np.empty((M, d))
    stats = np.empty((M, n, d))
    for m in range(M):
        tag = lines[pos].split()
        if tag[0] != "point" or int(tag[1]) != m or len(tag) != 2 + 2 * d:
            raise PrecompCorruptError(f"bad point line {lines[pos]!r}")
        coords[m] = [int(v) for v in tag[2:2 + d]]
        thetas[m] = [float(v) for v in tag[2 + d:]]
        for k in range(n):
            stats[m, k] = reals(lines[pos + 1 + k], d)
        pos += n + 1
    grid = Grid(np.array(mode), np.array(V), np.array(lam), float(header["eps"]), coords)
    if not np.allclose(grid.points, thetas, rtol=0.0, atol=1e-9):
        raise PrecompCorruptError("stored grid coordinates disagree with the eigen-coordinates")
    sweeps = None if header["sweeps"] == "default" else int(header["sweeps"])
    return PrecompData(model, grid, n, stats, seed=int(header["seed"]), sweeps=sweeps)


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def grid_only(model, grid, seed=0):
    """A PrecompData with n = 0, used to persist a bare grid."""
    return PrecompData(model, grid, 0, np.empty((len(grid), 0, grid.dims)), seed=seed)
