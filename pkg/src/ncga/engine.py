"""GA control loops for the centralized, distributed and pipelined variants.

=====  ==========================================================
``A``  centralized generational GA (no clock; time is synthetic)
``B``  genotype-distributed, one batch in flight
``C``  k batches in flight, flushed and merged every generation
``D``  k subpopulations in flight, age-mixed migration every f gens
``E``  one population of kN, just-in-time steady-state replacement
=====  ==========================================================

All variants share selection, coordination and block-wise variation; they
differ only in how batches are scheduled on the :class:`~ncga.protocol.Pipeline`
and how returning batches are merged back into the population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .galois import make_stream
from .genome import (CODED, INFEASIBLE, NONE, Genotype, coding_link_count, crossover_arrays,
                     mutate_array, random_population)
from .netgraph import BlockLayout, Network, block_layout, longest_path, oracle_feasible
from .protocol import EVAL_STREAM, Pipeline, ProtocolPlan, centralized_evaluate

__all__ = [
    "ALGORITHMS",
    "CoordinationVector",
    "GAConfig",
    "RunStats",
    "build_coordination_vector",
    "greedy_sweep",
    "run",
    "run_A",
    "run_B",
    "run_C",
    "run_D",
    "run_E",
    "theoretical_efficiency",
    "tournament_select",
]

GA_STREAM = 0
ALGORITHMS = ("A", "B", "C", "D", "E")


@dataclass(frozen=True)
class GAConfig:
    N: int = 200
    k: int | None = None  # None -> 2l
    f: int = 10
    tournament_size: int | None = None  # None -> half the pool selected from
    crossover_probability: float = 0.8
    mixing_ratio: float = 0.8
    mutation_rate: float = 0.015
    q: int = 256
    max_generations: int = 1000
    target_fitness: int | None = None
    seed: int = 0
    record_occupancy: bool = False
    trace: bool = False

    def depth(self, l: int) -> int:
        k = 2 * l if self.k is None else self.k
        if not 1 <= k <= 2 * l:
            raise ValueError(f"pipeline depth k={k} must lie in [1, 2l={2 * l}]")
        return k

    def check(self) -> None:
        if self.N < 2 or self.N % 2:
            raise ValueError("N must be an even number >= 2")
        if self.f < 1:
            raise ValueError("migration frequency f must be >= 1")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        for name in ("crossover_probability", "mixing_ratio", "mutation_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")


@dataclass
class RunStats:
    algorithm: str
    N: int
    k: int
    l: int
    elapsed_time_units: int = 0
    total_evaluations: int = 0
    generations: int = 0
    trajectory: list[tuple[int, int]] = field(default_factory=list)
    target_time: int | None = None
    best_fitness: int = INFEASIBLE
    best_genotype: np.ndarray | None = None
    synthetic_time: bool = False
    occupancy: list[tuple[int, int, int]] = field(default_factory=list)
    migration_age_gaps: list[int] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)

    @property
    def eff_v(self) -> float:
        return self.total_evaluations / self.elapsed_time_units if self.elapsed_time_units else 0.0

    @property
    def converged(self) -> bool:
        return self.target_time is not None

    def _occupy(self, t: int, before: int, after: int) -> None:
        # one sample per time: in flight after completions, then after launches
        if self.occupancy and self.occupancy[-1][0] == t:
            self.occupancy[-1] = (t, self.occupancy[-1][1], after)
        else:
            self.occupancy.append((t, before, after))

    def _observe(self, pop: np.ndarray, fit: np.ndarray) -> None:
        i = int(np.argmin(fit))
        if fit[i] < self.best_fitness:
            self.best_fitness = int(fit[i])
            self.best_genotype = pop[i].copy()


# -- selection and coordination --------------------------------------------------

def _min_rank_cdf(pop_size: int, tsize: int) -> np.ndarray:
    # P(best rank among tsize distinct uniform draws <= r)
    r = np.arange(1, pop_size + 1)
    n = pop_size - r
    with np.errstate(invalid="ignore"):
        log_surv = (gammaln(n + 1) - gammaln(n - tsize + 1)) - (gammaln(pop_size + 1) - gammaln(pop_size - tsize + 1))
    surv = np.where(n >= tsize, np.exp(log_surv), 0.0)
    cdf = 1.0 - surv
    cdf[-1] = 1.0
    return cdf


def tournament_select(fitness, count: int, tournament_size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``count`` tournament winners.

    Each tournament draws ``tournament_size`` distinct individuals uniformly
    and keeps the best (lowest fitness, then lowest index). Sampling goes
    through the exact distribution of the winner's rank instead of drawing
    the contestants, so large tournaments cost O(log P) each.
    """
    fit = np.asarray(fitness)
    pop_size = len(fit)
    if pop_size == 0:
        raise ValueError("cannot select from an empty population")
    if not 1 <= tournament_size <= pop_size:
        raise ValueError(f"tournament size {tournament_size} must lie in [1, {pop_size}]")
    order = np.lexsort((np.arange(pop_size), fit))
    cdf = _min_rank_cdf(pop_size, tournament_size)
    ranks = np.searchsorted(cdf, rng.random(count), side="right")
    return order[np.minimum(ranks, pop_size - 1)]


@dataclass(frozen=True)
class CoordinationVector:
    """Selected chromosome indices, paired, with one crossover bit per pair."""

    pairs: np.ndarray
    crossover: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        return self.pairs.reshape(-1)


def build_coordination_vector(selected, crossover_probability: float,
                              rng: np.random.Generator) -> CoordinationVector:
    sel = np.asarray(selected, dtype=np.int64)
    if len(sel) % 2:
        raise ValueError("need an even number of selected chromosomes to pair them")
    pairs = sel[rng.permutation(len(sel))].reshape(-1, 2)
    flags = rng.random(len(pairs)) < crossover_probability
    return CoordinationVector(pairs, flags)


def apply_coordination(pop: np.ndarray, cv: CoordinationVector, ks, cfg: GAConfig,
                       rng: np.random.Generator) -> np.ndarray:
    """What every merging node does locally with its slice of the population."""
    a = pop[cv.pairs[:, 0]]
    b = pop[cv.pairs[:, 1]]
    ca, cb = crossover_arrays(a, b, cfg.mixing_ratio, rng)
    flags = cv.crossover[:, None]
    ca = np.where(flags, ca, a)
    cb = np.where(flags, cb, b)
    children = np.stack([ca, cb], axis=1).reshape(-1, pop.shape[1])
    return mutate_array(children, ks, cfg.mutation_rate, rng)


def _breed(pop: np.ndarray, fit: np.ndarray, count: int, cfg: GAConfig, ks,
           rng: np.random.Generator) -> np.ndarray:
    tsize = cfg.tournament_size or max(1, len(fit) // 2)
    tsize = min(tsize, len(fit))
    selected = tournament_select(fit, count, tsize, rng)
    cv = build_coordination_vector(selected, cfg.crossover_probability, rng)
    return apply_coordination(pop, cv, ks, cfg, rng)


def _initial_batch(layout: BlockLayout, n: int, rng: np.random.Generator) -> np.ndarray:
    pop = random_population(layout, n, rng)
    pop[0, :] = CODED
    return pop


# -- control loops ---------------------------------------------------------------

class _Setup:
    def __init__(self, net: Network, cfg: GAConfig, algorithm: str, k: int | None = None):
        cfg.check()
        self.net = net
        self.cfg = cfg
        self.layout = block_layout(net)
        self.ks = np.asarray(self.layout.ks, dtype=np.int64)
        self.l = longest_path(net)
        self.k = cfg.depth(self.l) if k is None else k
        self.rng = make_stream(cfg.seed, GA_STREAM)
        self.plan = ProtocolPlan(net, self.layout, cfg.q)
        self.stats = RunStats(algorithm, cfg.N, self.k, self.l)

    def pipeline(self) -> Pipeline:
        return Pipeline(self.net, self.layout, self.cfg.q, seed=self.cfg.seed,
                        trace=self.cfg.trace, plan=self.plan)

    def hit_target(self, fit: np.ndarray) -> bool:
        t = self.cfg.target_fitness
        return t is not None and int(fit.min()) <= t

    def finish(self, pipe: Pipeline | None = None) -> RunStats:
        if pipe is not None and pipe.trace is not None:
            self.stats.trace = pipe.trace_lines()
        return self.stats


def run_A(net: Network, cfg: GAConfig) -> RunStats:
    """Centralized generational GA. Elapsed time is generations x 2l."""
    s = _Setup(net, cfg, "A", k=1)
    st = s.stats
    st.synthetic_time = True
    pop = _initial_batch(s.layout, cfg.N, s.rng)
    for gen in range(cfg.max_generations):
        fit = centralized_evaluate(net, s.layout, pop, cfg.q, rng=make_stream(cfg.seed, EVAL_STREAM, gen), plan=s.plan)
        st.generations = gen + 1
        st.total_evaluations += cfg.N
        st.elapsed_time_units = 2 * s.l * (gen + 1)
        st._observe(pop, fit)
        st.trajectory.append((st.elapsed_time_units, int(fit.min())))
        if s.hit_target(fit):
            st.target_time = st.elapsed_time_units
            break
        if gen + 1 < cfg.max_generations:
            pop = _breed(pop, fit, cfg.N, cfg, s.ks, s.rng)
    return s.finish()


def _run_generational(s: _Setup) -> RunStats:
    cfg, st, k, n = s.cfg, s.stats, s.k, s.cfg.N
    pipe = s.pipeline()
    pop = np.concatenate([_initial_batch(s.layout, n, s.rng) for _ in range(k)])
    gen = 0
    while True:
        start = pipe.now
        for j in range(k):
            pipe.advance_to(start + j)
            pipe.launch(pop[j * n:(j + 1) * n], tag=j)
            if cfg.record_occupancy:
                st._occupy(pipe.now, pipe.in_flight - 1, pipe.in_flight)
        returned: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        while len(returned) < k:
            results = pipe.advance()
            for res in results:
                returned[res.tag] = (res.genotypes, res.fitness)
                st.total_evaluations += n
                st._observe(res.genotypes, res.fitness)
                if s.hit_target(res.fitness) and st.target_time is None:
                    st.target_time = pipe.now
            if cfg.record_occupancy:
                st._occupy(pipe.now, pipe.in_flight, pipe.in_flight)
            if st.target_time is not None:
                break
        st.elapsed_time_units = pipe.now
        if st.target_time is not None:
            st.generations = gen + 1
            st.trajectory.append((pipe.now, st.best_fitness))
            break
        pop = np.concatenate([returned[j][0] for j in range(k)])
        fit = np.concatenate([returned[j][1] for j in range(k)])
        gen += 1
        st.generations = gen
        st.trajectory.append((pipe.now, int(fit.min())))
        if gen >= cfg.max_generations:
            break
        pop = _breed(pop, fit, k * n, cfg, s.ks, s.rng)
    return s.finish(pipe)


def run_B(net: Network, cfg: GAConfig) -> RunStats:
    """Genotype-distributed GA: one batch of N per 2l time units."""
    return _run_generational(_Setup(net, cfg, "B", k=1))


def run_C(net: Network, cfg: GAConfig) -> RunStats:
    """k pipelined batches treated as one population of kN; flush each generation."""
    return _run_generational(_Setup(net, cfg, "C"))


def _replace_worst(pool: np.ndarray, fit: np.ndarray, donors: list[tuple[np.ndarray, int]]) -> None:
    if not donors:
        return
    # worst = highest fitness; ties go to the lowest index first
    order = np.lexsort((np.arange(len(fit)), -fit))
    for slot, (g, f) in zip(order[:len(donors)], donors):
        pool[slot] = g
        fit[slot] = f


def run_D(net: Network, cfg: GAConfig) -> RunStats:
    """k temporally distributed subpopulations with age-mixed migration."""
    s = _Setup(net, cfg, "D")
    st, k, n = s.stats, s.k, cfg.N
    if k - 1 >= n:
        raise ValueError("migration needs k-1 < N")
    pipe = s.pipeline()
    latest: list[tuple[np.ndarray, np.ndarray, int] | None] = [None] * k
    gens = [0] * k
    for j in range(k):
        pipe.advance_to(j)
        pipe.launch(_initial_batch(s.layout, n, s.rng), tag=j)
        if cfg.record_occupancy:
            st._occupy(j, j, j + 1)
    while pipe.in_flight:
        results = pipe.advance()
        launched = 0
        for res in results:
            j = res.tag
            latest[j] = (res.genotypes, res.fitness, gens[j])
            gens[j] += 1
            st.total_evaluations += n
            st._observe(res.genotypes, res.fitness)
            if s.hit_target(res.fitness):
                st.target_time = pipe.now
                break
            if gens[j] >= cfg.max_generations:
                continue
            pool, fit = res.genotypes.copy(), res.fitness.copy()
            if k > 1 and gens[j] % cfg.f == 0:
                donors = []
                for i in range(k):
                    if i == j or latest[i] is None:
                        continue
                    g_i, f_i, age_i = latest[i]
                    b = int(np.argmin(f_i))
                    donors.append((g_i[b], f_i[b]))
                    st.migration_age_gaps.append(abs(age_i - latest[j][2]))
                _replace_worst(pool, fit, donors)
            pipe.launch(_breed(pool, fit, n, cfg, s.ks, s.rng), tag=j)
            launched += 1
        st.elapsed_time_units = pipe.now
        st.generations = max(gens)
        best_now = min(int(x[1].min()) for x in latest if x is not None)
        st.trajectory.append((pipe.now, best_now))
        if cfg.record_occupancy:
            st._occupy(pipe.now, pipe.in_flight - launched, pipe.in_flight)
        if st.target_time is not None:
            break
    return s.finish(pipe)


def run_E(net: Network, cfg: GAConfig) -> RunStats:
    """Single population of kN updated just-in-time as each batch returns."""
    s = _Setup(net, cfg, "E")
    st, k, n = s.stats, s.k, cfg.N
    cap = k * n
    pipe = s.pipeline()
    pool = np.empty((0, len(s.layout)), dtype=np.int8)
    fit = np.empty(0, dtype=np.int64)
    gens = [0] * k
    for j in range(k):
        pipe.advance_to(j)
        pipe.launch(_initial_batch(s.layout, n, s.rng), tag=j)
        if cfg.record_occupancy:
            st._occupy(j, j, j + 1)
    while pipe.in_flight:
        results = pipe.advance()
        launched = 0
        for res in results:
            j = res.tag
            gens[j] += 1
            st.total_evaluations += n
            st._observe(res.genotypes, res.fitness)
            # offspring go in front so that, under the stable sort, they win
            # fitness ties against older individuals and the population can
            # drift across plateaus
            pool = np.concatenate([res.genotypes, pool])
            fit = np.concatenate([res.fitness, fit])
            if len(fit) > cap:
                keep = np.sort(np.argsort(fit, kind="stable")[:cap])
                pool, fit = pool[keep], fit[keep]
            if s.hit_target(res.fitness):
                st.target_time = pipe.now
                break
            if gens[j] >= cfg.max_generations:
                continue
            pipe.launch(_breed(pool, fit, n, cfg, s.ks, s.rng), tag=j)
            launched += 1
        st.elapsed_time_units = pipe.now
        st.generations = max(gens)
        st.trajectory.append((pipe.now, int(fit.min())))
        if cfg.record_occupancy:
            st._occupy(pipe.now, pipe.in_flight - launched, pipe.in_flight)
        if st.target_time is not None:
            break
    return s.finish(pipe)


_RUNNERS = {"A": run_A, "B": run_B, "C": run_C, "D": run_D, "E": run_E}


def run(algorithm: str, net: Network, cfg: GAConfig) -> RunStats:
    try:
        runner = _RUNNERS[algorithm.upper()]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}") from None
    return runner(net, cfg)


# -- post-processing and theory ------------------------------------------------------

def greedy_sweep(net: Network, g, layout: BlockLayout | None = None) -> Genotype:
    """Demote link states block by block while the oracle keeps saying feasible.

    A CODED block tries each single input in order, then NONE; a single-input
    block tries NONE. Passes repeat until nothing changes, so the result is a
    fixed point of the sweep.
    """
    layout = block_layout(net) if layout is None else layout
    if not isinstance(g, Genotype):
        g = Genotype.from_states(layout, g)
    g.check_layout(layout)
    if not oracle_feasible(net, g.states, layout):
        raise ValueError("greedy sweep needs a feasible genotype")
    states = list(g.states)
    changed = True
    while changed:
        changed = False
        for b, blk in enumerate(layout.blocks):
            cur = states[b]
            if cur == CODED:
                candidates = list(range(blk.k)) + [NONE]
            elif cur >= 0:
                candidates = [NONE]
            else:
                continue
            for cand in candidates:
                states[b] = cand
                if oracle_feasible(net, states, layout):
                    changed = True
                    break
                states[b] = cur
    return Genotype.from_states(layout, states)


def theoretical_efficiency(alg: str, N: int, l: int, k: int | None = None,
                           g: int | None = None) -> Fraction:
    """Fitness evaluations per time unit predicted for each scheduling scheme."""
    alg = alg.upper()
    if alg == "B":
        return Fraction(N, 2 * l)
    if k is None:
        raise ValueError(f"algorithm {alg} needs the pipeline depth k")
    if alg == "C":
        return Fraction(k * N, 2 * l + k - 1)
    if alg == "D":
        if g is None:
            raise ValueError("algorithm D needs the generation count g")
        return Fraction(g * k * N, (g + 1) * 2 * l + k - 1)
    if alg == "E":
        return Fraction(k * N, 2 * l)
    raise ValueError(f"no efficiency formula for algorithm {alg!r}")
