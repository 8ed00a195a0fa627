"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--paths N]

Both backends run the same inputs; the script also checks that their results
are identical.
"""
import argparse
import time

import numpy as np

from ambistop import kernels, oracle
from ambistop.model import AmbiguityProblem, RewardFunction, arithmetic_bm, merge_point


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--paths", type=int, default=20000)
    args = ap.parse_args()

    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels not built; nothing to compare")
        return

    p = AmbiguityProblem(arithmetic_bm(0.0, 1.0), 1.0, 4.0, RewardFunction("Straddle"))
    tree = oracle.make_tree(p.diffusion, p.r, 0.0, 1e-3, -3.0, 3.0)
    rule = oracle.ExitRule(-0.3527, 0.3527)
    prior = merge_point(0.0, 1.0)

    cases = {
        f"lattice ({tree.nodes.size} nodes, {tree.n_steps} steps)": lambda b: oracle.robust_snell(tree, p, backend=b).values,
        f"monte carlo ({args.paths} paths, dt=1e-4)": lambda b: oracle.mc_under_prior(p, prior, rule, args.paths, 1, 0.0, backend=b),
    }
    print(f"{'case':<45} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}  identical")
    for name, fn in cases.items():
        tp, op = best_of(lambda: fn("python"), args.repeat)
        tc, oc = best_of(lambda: fn("cython"), args.repeat)
        same = bool(np.array_equal(op, oc)) if isinstance(op, np.ndarray) else op == oc
        print(f"{name:<45} {tp:>11.4f} {tc:>11.4f} {tp / tc:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
