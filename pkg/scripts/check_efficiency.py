"""Measured evaluation efficiency against the closed-form predictions.

    python scripts/check_efficiency.py --topology cascade:4 --generations 200

Each scheme runs for a fixed number of generations with no early stop, so
the pipeline reaches steady state and the measured evaluations per time
unit can be compared with the formulas.
"""

import argparse
import time

from ncga.engine import GAConfig, run, theoretical_efficiency
from ncga.netgraph import build_named, longest_path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--topology", default="cascade:4")
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--k", type=int, default=None, help="pipeline depth (default 2l)")
    ap.add_argument("--generations", type=int, default=200)
    ap.add_argument("--algorithms", default="BCDE")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    net = build_named(args.topology)
    l = longest_path(net)
    print(f"{args.topology}: l={l}, N={args.N}, generations={args.generations}")
    print(f"{'alg':>3} {'k':>3} {'measured':>10} {'formula':>10} {'rel.err':>8} {'wall':>7}")
    for alg in args.algorithms:
        t0 = time.perf_counter()
        st = run(alg, net, GAConfig(N=args.N, k=args.k, seed=args.seed, max_generations=args.generations))
        expect = float(theoretical_efficiency(alg, args.N, l, st.k, g=args.generations))
        err = (st.eff_v - expect) / expect
        print(f"{alg:>3} {st.k:>3} {st.eff_v:10.3f} {expect:10.3f} {100 * err:7.2f}% {time.perf_counter() - t0:6.1f}s")


if __name__ == "__main__":
    main()
