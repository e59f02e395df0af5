"""Experiment runner: spec files, repeated runs, statistics and CSV output.

A spec file is plain ``key=value`` lines::

    topology=cascade:4          # builtin selector, or a path to a topology file
    algorithms=B,C,D:10,D:1,E   # D:<f> sets the migration frequency
    N=200
    k=auto                      # auto = 2l
    reps=10
    seed=7
    out=results/network_g

Any :class:`~ncga.engine.GAConfig` field may be given globally (``mutation_rate=0.02``)
or for one algorithm label (``D10.mutation_rate=0.02``). Output files are
byte-stable for a fixed spec: rows are sorted, floats carry six fractional
digits and lines end in LF. Wall-clock seconds go to a separate
``timing.csv`` so the result files stay reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .engine import ALGORITHMS, GAConfig, RunStats, greedy_sweep, run
from .genome import INFEASIBLE, Genotype, fitness_str
from .netgraph import (Network, NetworkError, TopologyParseError, block_layout, build_named,
                       emit_topology, load_topology, oracle_feasible)

__all__ = [
    "AlgorithmSpec",
    "ExperimentSpec",
    "ResultRow",
    "SpecError",
    "emit_tradeoff",
    "main",
    "paired_t_test",
    "run_experiment",
    "summarize",
]

P_FLOOR = 1e-12

EXIT_OK, EXIT_SPEC, EXIT_ENGINE = 0, 2, 3


class SpecError(ValueError):
    """The experiment spec is malformed."""


# -- spec -------------------------------------------------------------------------

_INT_FIELDS = {"N", "f", "tournament_size", "q", "max_generations", "target_fitness"}
_FLOAT_FIELDS = {"crossover_probability", "mixing_ratio", "mutation_rate"}


@dataclass(frozen=True)
class AlgorithmSpec:
    label: str
    algorithm: str
    config: GAConfig


@dataclass(frozen=True)
class ExperimentSpec:
    topology: str
    algorithms: tuple[AlgorithmSpec, ...]
    repetitions: int = 1
    seed: int = 0
    out: Path | None = None
    trace: bool = False
    sweep: bool = True
    jobs: int = 1

    def network(self) -> Network:
        path = Path(self.topology)
        if path.is_file():
            return load_topology(path.read_text())
        return build_named(self.topology)

    @classmethod
    def parse(cls, text: str, base_dir: Path | None = None) -> "ExperimentSpec":
        kv: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecError(f"line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in kv:
                raise SpecError(f"line {lineno}: duplicate key {key!r}")
            kv[key] = value
        return cls.from_dict(kv, base_dir)

    @classmethod
    def from_dict(cls, kv: dict[str, str], base_dir: Path | None = None) -> "ExperimentSpec":
        kv = dict(kv)
        try:
            topology = kv.pop("topology")
            alg_list = kv.pop("algorithms")
        except KeyError as exc:
            raise SpecError(f"missing required key {exc.args[0]!r}") from None
        if base_dir is not None and not Path(topology).is_absolute() and (base_dir / topology).is_file():
            topology = str(base_dir / topology)
        reps = _as_int("reps", kv.pop("reps", "1"))
        if reps < 1:
            raise SpecError("reps must be >= 1")
        seed = _as_int("seed", kv.pop("seed", "0"))
        out = kv.pop("out", None)
        out_path = None if out is None else Path(out)
        if out_path is not None and base_dir is not None and not out_path.is_absolute():
            out_path = base_dir / out_path
        trace = _as_bool("trace", kv.pop("trace", "false"))
        sweep = _as_bool("sweep", kv.pop("sweep", "true"))
        jobs = _as_int("jobs", kv.pop("jobs", "1"))
        if jobs < 1:
            raise SpecError("jobs must be >= 1")

        overrides: dict[str, dict[str, str]] = {}
        base: dict[str, str] = {}
        for key, value in kv.items():
            if "." in key:
                label, fname = key.split(".", 1)
                overrides.setdefault(label, {})[fname] = value
            else:
                base[key] = value

        algs = []
        for token in (t.strip() for t in alg_list.split(",")):
            if not token:
                continue
            name, _, arg = token.partition(":")
            name = name.upper()
            if name not in ALGORITHMS:
                raise SpecError(f"unknown algorithm {name!r}; expected one of {','.join(ALGORITHMS)}")
            fields = dict(base)
            label = name
            if arg:
                if name != "D":
                    raise SpecError(f"only D takes a parameter, got {token!r}")
                fields["f"] = arg
                label = f"D{arg}"
            elif name == "D" and "f" not in fields:
                raise SpecError("algorithm D needs a migration frequency (D:<f> or f=<n>)")
            fields.update(overrides.get(label, {}))
            cfg = _make_config(fields, seed, trace)
            algs.append(AlgorithmSpec(label, name, cfg))
        if not algs:
            raise SpecError("no algorithms given")
        labels = [a.label for a in algs]
        if len(set(labels)) != len(labels):
            raise SpecError(f"duplicate algorithm labels in {labels}")
        unknown = set(overrides) - set(labels)
        if unknown:
            raise SpecError(f"overrides for unlisted algorithms: {sorted(unknown)}")
        return cls(topology, tuple(algs), reps, seed, out_path, trace, sweep, jobs)


def _as_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise SpecError(f"{key} must be an integer, got {value!r}") from None


def _as_bool(key: str, value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise SpecError(f"{key} must be a boolean, got {value!r}")


def _make_config(fields: dict[str, str], seed: int, trace: bool) -> GAConfig:
    kwargs: dict = {"seed": seed, "trace": trace}
    known = {f.name for f in dataclasses.fields(GAConfig)}
    for key, value in fields.items():
        if key == "k":
            kwargs["k"] = None if value.lower() == "auto" else _as_int(key, value)
        elif key in _INT_FIELDS:
            kwargs[key] = None if value.lower() in ("auto", "none") else _as_int(key, value)
        elif key in _FLOAT_FIELDS:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise SpecError(f"{key} must be a number, got {value!r}") from None
        elif key in known:
            raise SpecError(f"{key} cannot be set from a spec file")
        else:
            raise SpecError(f"unknown key {key!r}")
    kwargs.setdefault("target_fitness", 0)
    try:
        cfg = GAConfig(**kwargs)
        cfg.check()
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    return cfg


def repetition_seed(master_seed: int, repetition: int) -> int:
    """Seed shared by every algorithm in one repetition (common random numbers)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(2, int(repetition)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- rows -------------------------------------------------------------------------

@dataclass
class ResultRow:
    algorithm: str
    repetition: int
    seed: int
    elapsed_time_units: int
    evaluations: int
    eff_v: float
    eff_t: float | None
    generations: int
    converged: bool
    best_fitness: int
    post_sweep_fitness: int
    best_genotype: str = ""
    wall_seconds: float = field(default=0.0, compare=False)
    trace: list[str] = field(default_factory=list, compare=False, repr=False)

    HEADER = ("algorithm,repetition,seed,elapsed_time_units,evaluations,eff_v,eff_t,"
              "generations,converged,best_fitness,post_sweep_fitness,best_genotype")

    def to_csv(self) -> str:
        return ",".join([
            self.algorithm, str(self.repetition), str(self.seed), str(self.elapsed_time_units),
            str(self.evaluations), _fmt(self.eff_v), _fmt(self.eff_t), str(self.generations),
            "1" if self.converged else "0", fitness_str(self.best_fitness),
            fitness_str(self.post_sweep_fitness), self.best_genotype,
        ])


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return f"{x:.6f}"


def _fmt_p(p: float | None) -> str:
    if p is None:
        return "-"
    if p < P_FLOOR:
        return "<1e-12"
    return f"{p:.6f}"


def _post_sweep(net: Network, st: RunStats) -> tuple[int, str]:
    if st.best_genotype is None or st.best_fitness >= INFEASIBLE:
        return INFEASIBLE, ""
    layout = block_layout(net)
    g = Genotype.from_states(layout, st.best_genotype)
    if st.best_fitness == 0 or not oracle_feasible(net, g.states, layout):
        return st.best_fitness, g.to_text()
    swept = greedy_sweep(net, g, layout)
    return sum(1 for s in swept.states if s == -1), g.to_text()


def _run_one(args: tuple[Network, str, str, GAConfig, int, bool]) -> ResultRow:
    net, label, algorithm, cfg, rep, sweep = args
    t0 = time.perf_counter()
    st = run(algorithm, net, cfg)
    post, gtext = _post_sweep(net, st) if sweep else (st.best_fitness, "")
    return ResultRow(
        algorithm=label, repetition=rep, seed=cfg.seed,
        elapsed_time_units=st.elapsed_time_units, evaluations=st.total_evaluations,
        eff_v=st.eff_v, eff_t=None, generations=st.generations, converged=st.converged,
        best_fitness=st.best_fitness, post_sweep_fitness=post, best_genotype=gtext,
        wall_seconds=time.perf_counter() - t0, trace=st.trace,
    )


def _sort_key(row: ResultRow, order: dict[str, int]):
    return (order.get(row.algorithm, len(order)), row.algorithm, row.repetition)


def _fill_eff_t(rows: list[ResultRow]) -> None:
    b_time = {r.repetition: r.elapsed_time_units for r in rows if r.algorithm == "B"}
    for r in rows:
        bt = b_time.get(r.repetition)
        r.eff_t = bt / r.elapsed_time_units if bt is not None and r.elapsed_time_units else None


# -- statistics -------------------------------------------------------------------

def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value on ``a - b``.

    All-zero differences give 1. Constant nonzero differences have zero
    variance, and the limit p = 0 is returned.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    n = len(a)
    if n < 2:
        raise ValueError("a paired t-test needs at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df=n - 1)))


@dataclass
class SummaryRow:
    algorithm: str
    n: int
    median_time: float
    mean_time: float
    median_evals: float
    mean_evals: float
    mean_eff_v: float
    mean_eff_t: float | None
    converged: int
    p_time: float | None = None
    p_evals: float | None = None


def summarize(rows: Sequence[ResultRow], order: Sequence[str] | None = None) -> tuple[list[SummaryRow], bool]:
    """Per-algorithm medians and means plus next-best paired p-values.

    For each column the algorithms are ranked by mean (smaller is better) and
    each one is compared with the next best, i.e. the one ranked right before
    it. The best one has no comparator. p-values are only computed when every algorithm has at
    least two repetitions sharing the same repetition indices.
    """
    by_alg: dict[str, list[ResultRow]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append(r)
    labels = list(order) if order is not None else sorted(by_alg)
    labels = [a for a in labels if a in by_alg]
    out = {}
    for a in labels:
        rs = sorted(by_alg[a], key=lambda r: r.repetition)
        times = [r.elapsed_time_units for r in rs]
        evals = [r.evaluations for r in rs]
        effs_t = [r.eff_t for r in rs if r.eff_t is not None]
        out[a] = SummaryRow(
            algorithm=a, n=len(rs),
            median_time=float(statistics.median(times)), mean_time=float(np.mean(times)),
            median_evals=float(statistics.median(evals)), mean_evals=float(np.mean(evals)),
            mean_eff_v=float(np.mean([r.eff_v for r in rs])),
            mean_eff_t=float(np.mean(effs_t)) if len(effs_t) == len(rs) else None,
            converged=sum(r.converged for r in rs),
        )
    reps = {a: [r.repetition for r in sorted(by_alg[a], key=lambda r: r.repetition)] for a in labels}
    paired = len(labels) > 1 and all(len(v) >= 2 and v == reps[labels[0]] for v in reps.values())
    if paired:
        for col, attr in (("time", "elapsed_time_units"), ("evals", "evaluations")):
            vals = {a: [getattr(r, attr) for r in sorted(by_alg[a], key=lambda r: r.repetition)] for a in labels}
            ranked = sorted(labels, key=lambda a: (np.mean(vals[a]), labels.index(a)))
            for better, a in zip(ranked, ranked[1:]):
                setattr(out[a], f"p_{col}", paired_t_test(vals[a], vals[better]))
    return [out[a] for a in labels], paired


def emit_summary(summary: list[SummaryRow], with_p: bool) -> str:
    head = ["algorithm", "n", "converged", "median_time", "mean_time", "median_evals", "mean_evals",
            "mean_eff_v", "mean_eff_t"]
    if with_p:
        head += ["p_time", "p_evals"]
    lines = [",".join(head)]
    for s in summary:
        cells = [s.algorithm, str(s.n), str(s.converged), _fmt(s.median_time), _fmt(s.mean_time),
                 _fmt(s.median_evals), _fmt(s.mean_evals), _fmt(s.mean_eff_v), _fmt(s.mean_eff_t)]
        if with_p:
            cells += [_fmt_p(s.p_time), _fmt_p(s.p_evals)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_tradeoff(rows: Sequence[ResultRow], order: Sequence[str] | None = None) -> str:
    """CSV of (mean evaluations, mean eff_v, mean time) per algorithm."""
    if not rows:
        raise ValueError("no rows to summarize")
    by_alg: dict[str, list[ResultRow]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append(r)
    labels = [a for a in (order or sorted(by_alg)) if a in by_alg]
    lines = ["algorithm,mean_evals,mean_eff,mean_time"]
    for a in labels:
        rs = by_alg[a]
        lines.append(",".join([a, _fmt(np.mean([r.evaluations for r in rs])),
                               _fmt(np.mean([r.eff_v for r in rs])),
                               _fmt(np.mean([r.elapsed_time_units for r in rs]))]))
    return "\n".join(lines) + "\n"


def emit_results(rows: Sequence[ResultRow]) -> str:
    return "\n".join([ResultRow.HEADER] + [r.to_csv() for r in rows]) + "\n"


# -- experiment ---------------------------------------------------------------------

@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    summary: list[SummaryRow]
    has_p_values: bool
    files: dict[str, str]


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def run_experiment(spec: ExperimentSpec, progress=None) -> ExperimentResult:
    """Run every (algorithm, repetition) pair and write the CSV files.

    If a run raises, the rows finished so far are written to
    ``results.partial.csv`` before the error propagates.
    """
    net = spec.network()
    order = {a.label: i for i, a in enumerate(spec.algorithms)}
    jobs = []
    for rep in range(spec.repetitions):
        seed = repetition_seed(spec.seed, rep)
        for a in spec.algorithms:
            jobs.append((net, a.label, a.algorithm, replace(a.config, seed=seed), rep, spec.sweep))

    rows: list[ResultRow] = []
    try:
        if spec.jobs > 1:
            with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
                for row in pool.map(_run_one, jobs):
                    rows.append(row)
                    if progress:
                        progress(row)
        else:
            for job in jobs:
                row = _run_one(job)
                rows.append(row)
                if progress:
                    progress(row)
    except Exception:
        rows.sort(key=lambda r: _sort_key(r, order))
        _write(spec.out, "results.partial.csv", emit_results(rows))
        raise

    rows.sort(key=lambda r: _sort_key(r, order))
    _fill_eff_t(rows)
    labels = [a.label for a in spec.algorithms]
    summary, with_p = summarize(rows, labels)
    files = {
        "results.csv": emit_results(rows),
        "summary.csv": emit_summary(summary, with_p),
        "tradeoff.csv": emit_tradeoff(rows, labels),
    }
    if spec.trace:
        for r in rows:
            files[f"traces/{r.algorithm}_{r.repetition}.txt"] = "".join(line + "\n" for line in r.trace)
    for name, text in files.items():
        _write(spec.out, name, text)
    timing = "algorithm,repetition,wall_seconds\n" + "".join(
        f"{r.algorithm},{r.repetition},{r.wall_seconds:.3f}\n" for r in rows)
    _write(spec.out, "timing.csv", timing)
    return ExperimentResult(rows, summary, with_p, files)


# -- CLI --------------------------------------------------------------------------

def _cmd_run(args) -> int:
    path = Path(args.spec)
    try:
        spec = ExperimentSpec.parse(path.read_text(), base_dir=path.parent)
        if args.out:
            spec = replace(spec, out=Path(args.out))
        spec.network()
    except (OSError, SpecError, NetworkError, TopologyParseError, ValueError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC

    def progress(row: ResultRow) -> None:
        if not args.quiet:
            print(f"{row.algorithm} rep={row.repetition} time={row.elapsed_time_units} "
                  f"evals={row.evaluations} best={fitness_str(row.best_fitness)} "
                  f"({row.wall_seconds:.1f}s)", file=sys.stderr, flush=True)

    try:
        result = run_experiment(spec, progress)
    except Exception as exc:  # engine failures map to their own exit code
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    sys.stdout.write(result.files["summary.csv"])
    return EXIT_OK


def _cmd_topo_emit(args) -> int:
    try:
        net = build_named(args.name)
    except ValueError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    sys.stdout.write(emit_topology(net))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        topo = Path(args.topology)
        net = load_topology(topo.read_text()) if topo.is_file() else build_named(args.topology)
        layout = block_layout(net)
        g = Genotype.parse(layout, args.genotype)
    except (OSError, ValueError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        out = greedy_sweep(net, g, layout)
    except ValueError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    coded = sum(1 for s in out.states if s == -1)
    print(out.to_text())
    print(f"coding_links={coded}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncga", description="Distributed GA for minimum-coding network coding.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("--spec", required=True)
    r.add_argument("--out", help="override the spec's output directory")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    t = sub.add_parser("topo", help="topology utilities")
    tsub = t.add_subparsers(dest="topo_command", required=True)
    e = tsub.add_parser("emit", help="print a builtin topology as a topology file")
    e.add_argument("--name", required=True)
    e.set_defaults(func=_cmd_topo_emit)

    s = sub.add_parser("sweep", help="greedy-sweep a genotype")
    s.add_argument("--topology", required=True, help="topology file or builtin selector")
    s.add_argument("--genotype", required=True, help='block string such as "11|10|01"')
    s.set_defaults(func=_cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SPEC if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
