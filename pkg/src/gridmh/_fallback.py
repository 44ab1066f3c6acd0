"""Pure-Python versions of the compiled kernels in ``_core.pyx``.

Same signatures, same uniform consumption order, so a trajectory produced
here matches the compiled one for the same random stream.
"""

import math

import numpy as np


def gibbs_lattice(spins, field, coupling, uniforms):
    h, w = spins.shape
    if uniforms.shape[1] != h * w:
        raise ValueError("need one uniform per site per sweep")
    for t in range(uniforms.shape[0]):
        row_u = uniforms[t]
        k = 0
        for r in range(h):
            for c in range(w):
                nb = 0
                if r > 0:
                    nb += spins[r - 1, c]
                if r < h - 1:
                    nb += spins[r + 1, c]
                if c > 0:
                    nb += spins[r, c - 1]
                if c < w - 1:
                    nb += spins[r, c + 1]
                delta = 2.0 * field + 2.0 * coupling * int(nb)
                p = 1.0 / (1.0 + math.exp(-delta))
                spins[r, c] = 1 if row_u[k] < p else -1
                k += 1


def gibbs_ergm(adj, theta_edges, theta_second, twostars, uniforms):
    p = adj.shape[0]
    if uniforms.shape[1] != p * (p - 1) // 2:
        raise ValueError("need one uniform per dyad per sweep")
    rows = [list(map(int, adj[i])) for i in range(p)]
    deg = [sum(r) for r in rows]
    for t in range(uniforms.shape[0]):
        row_u = uniforms[t]
        idx = 0
        for i in range(p):
            ri = rows[i]
            for j in range(i + 1, p):
                rj = rows[j]
                if twostars:
                    change = deg[i] + deg[j] - 2 * ri[j]
                else:
                    change = sum(a & b for a, b in zip(ri, rj))
                prob = 1.0 / (1.0 + math.exp(-(theta_edges + theta_second * change)))
                if row_u[idx] < prob:
                    if ri[j] == 0:
                        ri[j] = rj[i] = 1
                        deg[i] += 1
                        deg[j] += 1
                else:
                    if ri[j] == 1:
                        ri[j] = rj[i] = 0
                        deg[i] -= 1
                        deg[j] -= 1
                idx += 1
    adj[:, :] = np.array(rows, dtype=adj.dtype)


def log_mean_exp_dot(stats, delta):
    if delta.shape[0] != stats.shape[1]:
        raise ValueError("dimension mismatch")
    if stats.shape[0] == 0:
        raise ValueError("no stored statistics")
    x = stats @ delta
    top = x.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(x - top).sum()) - math.log(stats.shape[0]))
