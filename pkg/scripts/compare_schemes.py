"""Run the network-G comparison and print the summary table.

    python scripts/compare_schemes.py --reps 10 --out results/network_g

Uses scripts/network_g.spec as the base configuration; command-line flags
override repetitions, seed, output directory and worker count.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ncga.bench import ExperimentSpec, run_experiment
from ncga.genome import fitness_str

HERE = Path(__file__).resolve().parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--spec", default=str(HERE / "network_g.spec"))
    ap.add_argument("--reps", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args()

    path = Path(args.spec)
    spec = ExperimentSpec.parse(path.read_text(), base_dir=path.parent)
    if args.reps is not None:
        spec = replace(spec, repetitions=args.reps)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.out is not None:
        spec = replace(spec, out=Path(args.out))
    if args.jobs is not None:
        spec = replace(spec, jobs=args.jobs)

    def progress(row):
        print(f"{row.algorithm:>4} rep {row.repetition:2d}: time {row.elapsed_time_units:6d}  "
              f"evals {row.evaluations:8d}  eff_v {row.eff_v:7.2f}  best {fitness_str(row.best_fitness)}  "
              f"[{row.wall_seconds:.0f}s]", flush=True)

    res = run_experiment(spec, progress)
    print()
    print(res.files["summary.csv"], end="")
    print()
    print(res.files["tradeoff.csv"], end="")
    if spec.out is not None:
        print(f"\nwrote {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
