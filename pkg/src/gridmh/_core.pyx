# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: single-site Gibbs sweeps and log-mean-exp reductions.

Every sampler here consumes a caller-supplied array of uniforms, one per site
(or dyad) per sweep, so the pure-Python twin in ``_fallback`` reproduces the
same trajectory from the same random stream.
"""

from libc.math cimport exp, log, INFINITY

import numpy as np


def gibbs_lattice(signed char[:, ::1] spins, double field, double coupling,
                  const double[:, ::1] uniforms):
    """Systematic-scan Gibbs sweeps on a free-boundary +/-1 lattice, in place."""
    cdef Py_ssize_t h = spins.shape[0], w = spins.shape[1]
    cdef Py_ssize_t sweeps = uniforms.shape[0]
    cdef Py_ssize_t t, r, c, k
    cdef int nb
    cdef double delta, p
    if uniforms.shape[1] != h * w:
        raise ValueError("need one uniform per site per sweep")
    with nogil:
        for t in range(sweeps):
            k = 0
            for r in range(h):
                for c in range(w):
                    nb = 0
                    if r > 0:
                        nb = nb + spins[r - 1, c]
                    if r < h - 1:
                        nb = nb + spins[r + 1, c]
                    if c > 0:
                        nb = nb + spins[r, c - 1]
                    if c < w - 1:
                        nb = nb + spins[r, c + 1]
                    delta = 2.0 * field + 2.0 * coupling * nb
                    p = 1.0 / (1.0 + exp(-delta))
                    if uniforms[t, k] < p:
                        spins[r, c] = 1
                    else:
                        spins[r, c] = -1
                    k = k + 1


def gibbs_ergm(unsigned char[:, ::1] adj, double theta_edges, double theta_second,
               int twostars, const double[:, ::1] uniforms):
    """Systematic-scan Gibbs sweeps over the dyads (i < j) of an undirected graph.

    The second statistic is the triangle count, or the two-star count when
    ``twostars`` is nonzero.
    """
    cdef Py_ssize_t p = adj.shape[0]
    cdef Py_ssize_t sweeps = uniforms.shape[0]
    cdef Py_ssize_t t, i, j, k, idx
    cdef long change
    cdef double prob
    cdef long[::1] deg = np.zeros(p, dtype=np.int_)
    if uniforms.shape[1] != p * (p - 1) // 2:
        raise ValueError("need one uniform per dyad per sweep")
    with nogil:
        for i in range(p):
            for j in range(p):
                deg[i] += adj[i, j]
        for t in range(sweeps):
            idx = 0
            for i in range(p):
                for j in range(i + 1, p):
                    if twostars:
                        change = deg[i] + deg[j] - 2 * adj[i, j]
                    else:
                        change = 0
                        for k in range(p):
                            change += adj[i, k] & adj[j, k]
                    prob = 1.0 / (1.0 + exp(-(theta_edges + theta_second * change)))
                    if uniforms[t, idx] < prob:
                        if adj[i, j] == 0:
                            adj[i, j] = 1
                            adj[j, i] = 1
                            deg[i] += 1
                            deg[j] += 1
                    else:
                        if adj[i, j] == 1:
                            adj[i, j] = 0
                            adj[j, i] = 0
                            deg[i] -= 1
                            deg[j] -= 1
                    idx = idx + 1


def log_mean_exp_dot(const double[:, ::1] stats, const double[::1] delta):
    """log((1/n) sum_k exp(delta . stats[k])), stable against overflow."""
    cdef Py_ssize_t n = stats.shape[0], d = stats.shape[1]
    cdef Py_ssize_t k, j
    cdef double top = -INFINITY, acc = 0.0, x
    if delta.shape[0] != d:
        raise ValueError("dimension mismatch")
    if n == 0:
        raise ValueError("no stored statistics")
    with nogil:
        for k in range(n):
            x = 0.0
            for j in range(d):
                x = x + delta[j] * stats[k, j]
            if x > top:
                top = x
        if top != INFINITY and top != -INFINITY and top == top:
            for k in range(n):
                x = 0.0
                for j in range(d):
                    x = x + delta[j] * stats[k, j]
                acc = acc + exp(x - top)
    if top == INFINITY or top == -INFINITY or top != top:
        return top
    return top + log(acc) - log(<double>n)
