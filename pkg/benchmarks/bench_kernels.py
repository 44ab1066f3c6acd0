"""Time the compiled kernels against their pure-Python twins.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py --repeat 3

Each kernel is run on identical inputs by both backends; the outputs are
checked for equality before timings are reported.
"""

import argparse
import timeit

import numpy as np

from gridmh import _fallback

try:
    from gridmh import _core
except ImportError:  # extension not built
    _core = None


def lattice_case(size, sweeps, rng):
    spins = np.where(rng.random((size, size)) < 0.5, 1, -1).astype(np.int8)
    return spins, rng.random((sweeps, size * size))


def ergm_case(nodes, sweeps, rng):
    adj = np.zeros((nodes, nodes), dtype=np.uint8)
    return adj, rng.random((sweeps, nodes * (nodes - 1) // 2))


def cases(args):
    rng = np.random.default_rng(args.seed)
    spins, u_lat = lattice_case(args.lattice, args.sweeps, rng)
    adj, u_ergm = ergm_case(args.nodes, args.sweeps, rng)
    stats = rng.normal(size=(args.draws, 2)) * 10
    delta = np.array([0.05, -0.03])

    def lattice(mod):
        s = spins.copy()
        mod.gibbs_lattice(s, 0.0, 0.35, u_lat)
        return s

    def ergm(mod):
        a = adj.copy()
        mod.gibbs_ergm(a, -2.0, 0.4, False, u_ergm)
        return a

    def lme(mod):
        return mod.log_mean_exp_dot(stats, delta)

    return {
        f"gibbs_lattice {args.lattice}x{args.lattice}, {args.sweeps} sweeps": lattice,
        f"gibbs_ergm {args.nodes} nodes, {args.sweeps} sweeps": ergm,
        f"log_mean_exp_dot {args.draws} draws": lme,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lattice", type=int, default=20)
    ap.add_argument("--nodes", type=int, default=34)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--draws", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not available; build it with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':<42}{'python (s)':>12}{'cython (s)':>12}{'speed-up':>10}")
    for name, fn in cases(args).items():
        if not np.allclose(fn(_fallback), fn(_core)):
            raise SystemExit(f"{name}: backends disagree")
        slow = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        fast = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        print(f"{name:<42}{slow:>12.4f}{fast:>12.5f}{slow / fast:>9.0f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
