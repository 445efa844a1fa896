"""Time the numba kernels against their numpy twins.

Usage::

    python benchmarks/bench_kernels.py [--draws 100000] [--repeat 5]

Both implementations are called directly, so one process covers both
backends. Compilation happens in a warm-up call that is not timed.
"""

import argparse
import timeit

import numpy as np

from apenv import _kernels as K
from apenv.special import hyp0f1_table


def cases(n, rng):
    m0, p = 28, 40
    null_ratio = rng.exponential(size=(m0, p, n)).astype(np.float32)
    alt_mix = rng.exponential(size=(p, n)) * 3
    forced = np.full((p, n), -1, dtype=np.int8)
    lam = rng.exponential(size=m0) * (rng.random(m0) < 0.5)
    rows = np.arange(p, dtype=np.int64)
    block = (null_ratio, lam, alt_mix, forced, rows)

    w = rng.dirichlet(np.ones(m0))
    mix = (null_ratio, w, rows)

    tab = hyp0f1_table(2.5)
    qs, qt = rng.chisquare(5, n) * 3, rng.chisquare(5, n) * 3
    qst = rng.uniform(-1, 1, n) * np.sqrt(qs * qt)
    c, d = rng.normal(size=20), rng.normal(size=20)
    lam_iv = rng.uniform(0, 150, 20)
    iv = (qs, qst, qt, c, d, lam_iv, tab.step, tab.values, tab.derivs, tab.tail_coef, tab.lgamma_b, tab.b)
    return {
        "reject_counts": block,
        "reject_stats": block,
        "mix_dense": mix,
        "iv_log_ratios": iv,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if K.numba is None:
        raise SystemExit("numba is not available (or APENV_DISABLE_NUMBA is set); nothing to compare")

    rng = np.random.default_rng(0)
    print(f"draws={args.draws} repeat={args.repeat} threads={K.numba.get_num_threads()}")
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, a in cases(args.draws, rng).items():
        f_np = getattr(K, f"_{name}_np")
        f_nb = getattr(K, f"_{name}_nb")
        f_nb(*a)
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{t_np:>12.1f}{t_nb:>12.1f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
