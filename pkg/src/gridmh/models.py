"""Gibbs random field families.

Each family has the form f(y | theta) = exp(theta . s(y)) / Z(theta).  States
are plain numpy arrays: a 0/1 adjacency matrix for graphs, a +/-1 array for
lattices, and a float for the Gaussian toy model.
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from itertools import combinations
import math

import numpy as np
from scipy.special import expit, logsumexp

from . import kernels
from .errors import (
    DimensionMismatchError,
    IntractableModelError,
    InvalidParameterError,
    InvalidStateError,
)

KINDS = (
    "erdos_renyi",
    "ising",
    "autologistic",
    "ergm_edges_triangles",
    "ergm_edges_twostars",
    "toy_gaussian",
)
GRAPH_KINDS = ("erdos_renyi", "ergm_edges_triangles", "ergm_edges_twostars")
LATTICE_KINDS = ("ising", "autologistic")

DEFAULT_SWEEPS = 5
MAX_ENUMERATION_BITS = 20


@dataclass(frozen=True)
class GrfModel:
    """A likelihood family plus its extent.

    ``size`` is the node count for graph kinds, ``(height, width)`` for lattice
    kinds and ``None`` for the toy model.
    """

    kind: str
    size: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in GRAPH_KINDS:
            p = int(self.size)
            if p < 2:
                raise ValueError("graph models need at least 2 nodes")
            object.__setattr__(self, "size", p)
        elif self.kind in LATTICE_KINDS:
            h, w = (int(v) for v in self.size)
            if h < 1 or w < 1:
                raise ValueError("lattice sides must be positive")
            object.__setattr__(self, "size", (h, w))
        else:
            object.__setattr__(self, "size", None)

    @classmethod
    def toy(cls):
        return cls("toy_gaussian")

    @classmethod
    def erdos_renyi(cls, p):
        return cls("erdos_renyi", p)

    @classmethod
    def ising(cls, height, width):
        return cls("ising", (height, width))

    @classmethod
    def autologistic(cls, height, width):
        return cls("autologistic", (height, width))

    @classmethod
    def ergm(cls, p, second="triangles"):
        return cls(f"ergm_edges_{second}", p)

    @property
    def dims(self):
        return 2 if self.kind in ("autologistic",) or self.kind.startswith("ergm") else 1

    @property
    def n_sites(self):
        """Number of binary variables (dyads or lattice sites); 0 for the toy."""
        if self.kind in GRAPH_KINDS:
            return self.size * (self.size - 1) // 2
        if self.kind in LATTICE_KINDS:
            return self.size[0] * self.size[1]
        return 0

    def describe(self):
        if self.kind in LATTICE_KINDS:
            return f"{self.kind} {self.size[0]} {self.size[1]}"
        if self.kind in GRAPH_KINDS:
            return f"{self.kind} {self.size}"
        return self.kind

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`describe`."""
        parts = text.split()
        if not parts:
            raise ValueError("empty model description")
        kind, rest = parts[0], [int(v) for v in parts[1:]]
        if kind in LATTICE_KINDS:
            return cls(kind, tuple(rest))
        if kind in GRAPH_KINDS:
            return cls(kind, rest[0])
        return cls(kind)


def _theta(model, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (model.dims,):
        raise DimensionMismatchError(
            f"{model.kind} expects a parameter of length {model.dims}, got {theta.shape}"
        )
    return theta


def _check_state(model, state):
    if model.kind == "toy_gaussian":
        arr = np.asarray(state, dtype=float)
        if arr.shape not in ((), (1,)) or not np.isfinite(arr).all():
            raise InvalidStateError("toy state must be a finite scalar")
        return float(arr.reshape(()))
    arr = np.asarray(state)
    if model.kind in GRAPH_KINDS:
        p = model.size
        if arr.shape != (p, p):
            raise InvalidStateError(f"expected a {p}x{p} adjacency matrix, got {arr.shape}")
        if np.any(np.diag(arr) != 0) or np.any(arr != arr.T) or np.any((arr != 0) & (arr != 1)):
            raise InvalidStateError("adjacency must be symmetric 0/1 with empty diagonal")
        return arr.astype(np.int64)
    if arr.shape != model.size:
        raise InvalidStateError(f"expected a {model.size} lattice, got {arr.shape}")
    if np.any((arr != 1) & (arr != -1)):
        raise InvalidStateError("spins must be -1 or +1")
    return arr.astype(np.int64)


def _lattice_pairs(spins):
    return float((spins[1:, :] * spins[:-1, :]).sum() + (spins[:, 1:] * spins[:, :-1]).sum())


def suff_stats(model, state):
    """Sufficient statistics s(y) as a float vector of length ``model.dims``."""
    y = _check_state(model, state)
    kind = model.kind
    if kind == "toy_gaussian":
        return np.array([-0.5 * y * y])
    if kind == "ising":
        return np.array([_lattice_pairs(y)])
    if kind == "autologistic":
        return np.array([float(y.sum()), _lattice_pairs(y)])
    edges = float(np.triu(y, 1).sum())
    if kind == "erdos_renyi":
        return np.array([edges])
    if kind == "ergm_edges_triangles":
        tri = float(np.trace(y @ y @ y)) / 6.0
        return np.array([edges, tri])
    deg = y.sum(axis=1)
    return np.array([edges, float((deg * (deg - 1) // 2).sum())])


def log_q(model, theta, stats):
    """Unnormalized log density theta . s(y)."""
    theta = _theta(model, theta)
    stats = np.atleast_1d(np.asarray(stats, dtype=float))
    if stats.shape != theta.shape:
        raise DimensionMismatchError("statistic and parameter lengths differ")
    return float(theta @ stats)


@lru_cache(maxsize=16)
def _enumerated_stats(model):
    """Distinct statistic vectors over the whole state space with multiplicities."""
    nbits = model.n_sites
    codes = np.arange(2**nbits, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(nbits)) & 1).astype(np.int64)
    if model.kind in LATTICE_KINDS:
        h, w = model.size
        spins = (2 * bits - 1).reshape(-1, h, w)
        pairs = (spins[:, 1:, :] * spins[:, :-1, :]).sum(axis=(1, 2)) + (
            spins[:, :, 1:] * spins[:, :, :-1]
        ).sum(axis=(1, 2))
        cols = [pairs] if model.kind == "ising" else [spins.sum(axis=(1, 2)), pairs]
    else:
        p = model.size
        dyads = {pair: k for k, pair in enumerate(combinations(range(p), 2))}
        cols = [bits.sum(axis=1)]
        if model.kind == "ergm_edges_triangles":
            tri = np.zeros(len(codes), dtype=np.int64)
            for a, b, c in combinations(range(p), 3):
                tri += bits[:, dyads[a, b]] * bits[:, dyads[a, c]] * bits[:, dyads[b, c]]
            cols.append(tri)
        elif model.kind == "ergm_edges_twostars":
            deg = np.zeros((len(codes), p), dtype=np.int64)
            for (a, b), k in dyads.items():
                deg[:, a] += bits[:, k]
                deg[:, b] += bits[:, k]
            cols.append((deg * (deg - 1) // 2).sum(axis=1))
    stats = np.stack(cols, axis=1).astype(float)
    uniq, counts = np.unique(stats, axis=0, return_counts=True)
    return uniq, counts


def enumerable(model):
    return model.kind != "toy_gaussian" and model.n_sites <= MAX_ENUMERATION_BITS


def exact_log_z(model, theta, method="auto"):
    """Exact log normalizing constant.

    ``method`` is ``"closed"`` (Erdos-Renyi and toy only), ``"enumerate"``
    (state spaces of at most 2**20 configurations) or ``"auto"``, which
    prefers the closed form.  Raises :class:`IntractableModelError` when
    neither route applies.
    """
    theta = _theta(model, theta)
    closed = model.kind in ("erdos_renyi", "toy_gaussian")
    if method == "auto":
        method = "closed" if closed else "enumerate"
    if method == "closed":
        if not closed:
            raise IntractableModelError(f"no closed-form Z for {model.kind}")
        if model.kind == "toy_gaussian":
            if theta[0] <= 0:
                raise InvalidParameterError("toy precision must be positive")
            return 0.5 * math.log(2 * math.pi / theta[0])
        return model.n_sites * float(np.logaddexp(0.0, theta[0]))
    if method == "enumerate":
        if not enumerable(model):
            raise IntractableModelError(
                f"{model.describe()} has more than 2**{MAX_ENUMERATION_BITS} states"
            )
        uniq, counts = _enumerated_stats(model)
        return float(logsumexp(uniq @ theta, b=counts))
    raise ValueError(f"unknown method {method!r}")


def has_exact_log_z(model):
    return model.kind in ("erdos_renyi", "toy_gaussian") or enumerable(model)


def _toy_scale(theta):
    if theta[0] <= 0:
        raise InvalidParameterError("toy precision must be positive")
    return 1.0 / math.sqrt(theta[0])


def sample_aux(model, theta, sweeps=None, rng=None):
    """One (approximate) draw from f(. | theta).

    Toy and Erdos-Renyi draws are exact.  Lattice and ERGM draws come from
    ``sweeps`` systematic-scan single-site Gibbs sweeps.  Lattices start from
    uniformly random spins; ERGMs start from independent dyads with the
    edge-only probability expit(theta_edges), since a half-full random graph
    traps the triangle and two-star samplers in the dense mode.
    """
    theta = _theta(model, theta)
    rng = np.random.default_rng(rng)
    sweeps = DEFAULT_SWEEPS if sweeps is None else int(sweeps)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    kind = model.kind
    if kind == "toy_gaussian":
        return float(rng.normal(0.0, _toy_scale(theta)))
    if kind in LATTICE_KINDS:
        h, w = model.size
        spins = np.where(rng.random((h, w)) < 0.5, 1, -1).astype(np.int8)
        field, coupling = (0.0, theta[0]) if kind == "ising" else (theta[0], theta[1])
        kernels.gibbs_lattice(spins, field, coupling, rng.random((sweeps, h * w)))
        return spins
    p = model.size
    iu = np.triu_indices(p, 1)
    adj = np.zeros((p, p), dtype=np.uint8)
    adj[iu] = rng.random(len(iu[0])) < expit(theta[0])
    adj |= adj.T
    if kind != "erdos_renyi":
        kernels.gibbs_ergm(
            adj, theta[0], theta[1], kind == "ergm_edges_twostars",
            rng.random((sweeps, len(iu[0]))),
        )
    return adj


def sample_aux_stats(model, theta, n, sweeps=None, rng=None):
    """Statistics of ``n`` independent auxiliary draws, shape (n, d)."""
    theta = _theta(model, theta)
    rng = np.random.default_rng(rng)
    if model.kind == "toy_gaussian":
        x = rng.normal(0.0, _toy_scale(theta), size=n)
        return (-0.5 * x * x)[:, None]
    if model.kind == "erdos_renyi":
        draws = rng.random((n, model.n_sites)) < expit(theta[0])
        return draws.sum(axis=1, dtype=float)[:, None]
    out = np.empty((n, model.dims))
    for k in range(n):
        out[k] = suff_stats(model, sample_aux(model, theta, sweeps, rng))
    return out


def load_karate():
    """Adjacency matrix of the bundled 34-node karate club network."""
    text = resources.files("gridmh").joinpath("data/karate.txt").read_text()
    return read_edge_list(text.splitlines(), 34)


def read_edge_list(lines, p):
    """Build an adjacency matrix from "i j" lines with 1-based node ids."""
    adj = np.zeros((p, p), dtype=np.uint8)
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        i, j = (int(v) - 1 for v in line.split())
        if i == j or not (0 <= i < p and 0 <= j < p):
            raise InvalidStateError(f"bad edge {line!r}")
        adj[i, j] = adj[j, i] = 1
    return adj
