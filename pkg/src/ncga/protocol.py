"""Discrete-event simulation of the distributed fitness evaluation.

Each batch of N chromosomes travels forward from the source as pilot-vector
packets, is rank-tested at the sinks, and returns as fitness vectors summed
on the way back. Every link traversal takes one time unit in either
direction, and a node fires only after all of its inputs for that batch have
arrived (incoming links going forward, outgoing links coming back), so a
batch launched at ``t`` completes at ``t + 2l`` on an idle or pipelined
network alike.

All per-chromosome work is vectorized across the batch. The random field
elements a batch consumes are drawn once at launch and sliced per node, so
results do not depend on event-processing order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .galois import GaloisField, get_field, make_stream
from .genome import CODED, INFEASIBLE, Genotype, fitness_add
from .netgraph import BlockLayout, Network, block_layout

__all__ = [
    "EvalResult",
    "Pipeline",
    "ProtocolPlan",
    "SlotCollision",
    "backward_aggregate",
    "centralized_evaluate",
    "count_field_multiplications",
    "evaluate_batch",
    "merging_combine",
    "sink_feasibility",
    "source_fitness",
]

EVAL_STREAM = 1
FWD, BWD = 0, 1


class SlotCollision(RuntimeError):
    """Two batches were scheduled onto the same link slot."""


@dataclass
class EvalResult:
    batch_id: int
    launch_time: int
    completion_time: int
    fitness: np.ndarray
    genotypes: np.ndarray
    tag: Any = None

    @property
    def lag(self) -> int:
        return self.completion_time - self.launch_time


# -- per-node math (shared by the clocked and centralized paths) -------------

def _combine(gf: GaloisField, states: np.ndarray, inputs: Sequence[np.ndarray],
             coefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Random linear combination of the active inputs for one outgoing link.

    Returns the output vectors ``(N, R)`` and the number of field
    multiplications spent per chromosome.
    """
    n, r = inputs[0].shape
    out = np.zeros((n, r), dtype=gf.dtype)
    n_active = np.zeros(n, dtype=np.int64)
    coded = states == CODED
    for j, w in enumerate(inputs):
        act = coded | (states == j)
        if not act.any():
            continue
        c = np.where(act, coefs[:, j], 0).astype(gf.dtype)
        out = gf.add(out, gf.mul(c[:, None], w))
        n_active += act
    return out, n_active * r


def merging_combine(inputs: Sequence[Sequence[int]], state: int, gf: GaloisField | int = 256,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Combine one chromosome's input pilot vectors according to a block state.

    ``state`` is CODED, NONE, or an input index. Each active input is scaled
    by a fresh nonzero random field element; with no active input the result
    is the zero vector.
    """
    gf = get_field(gf) if isinstance(gf, int) else gf
    rng = np.random.default_rng() if rng is None else rng
    k = len(inputs)
    if k < 1:
        raise ValueError("a block needs at least one input")
    if not (state in (CODED, -2) or 0 <= state < k):
        raise ValueError(f"state {state} does not fit a block with {k} inputs")
    arrs = [np.asarray(w, dtype=gf.dtype).reshape(1, -1) for w in inputs]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError("input pilot vectors differ in length")
    coefs = gf.rand_nonzero(rng, (1, k))
    out, _ = _combine(gf, np.array([state]), arrs, coefs)
    return out[0]


def sink_feasibility(received: Sequence[Sequence[int]], rate: int, gf: GaloisField | int = 256) -> bool:
    """True iff the received pilot vectors span the full rate-R space."""
    gf = get_field(gf) if isinstance(gf, int) else gf
    if len(received) < rate:
        return False
    return gf.rank(received) == rate


def _sink_mask(gf: GaloisField, inputs: Sequence[np.ndarray], rate: int) -> np.ndarray:
    if len(inputs) < rate:
        return np.zeros(inputs[0].shape[0] if inputs else 0, dtype=bool)
    return gf.batch_rank(np.stack(inputs, axis=1)) == rate


def backward_aggregate(children_msgs: Sequence[np.ndarray], own_coding_counts,
                       parent_links: Sequence[int], feasible=None) -> dict[int, np.ndarray]:
    """Fitness vectors a node sends to its parents.

    The node's own coding-link counts (plus zero/infinity per chromosome when
    the node is a sink) are added to every child message. The full vector goes
    to the parent on the lowest-id incoming link; the others get zeros.
    """
    own = np.asarray(own_coding_counts, dtype=np.int64)
    vec = own.copy()
    if feasible is not None:
        vec = fitness_add(vec, np.where(np.asarray(feasible, dtype=bool), 0, INFEASIBLE))
    for msg in children_msgs:
        if msg is None:
            raise RuntimeError("missing child fitness vector")
        vec = fitness_add(vec, msg)
    if not parent_links:
        raise ValueError("node has no parents to report to")
    designated = min(parent_links)
    zeros = np.zeros_like(vec)
    return {e: (vec if e == designated else zeros) for e in parent_links}


def source_fitness(msgs: Sequence[np.ndarray]) -> np.ndarray:
    total = np.zeros_like(np.asarray(msgs[0], dtype=np.int64))
    for m in msgs:
        total = fitness_add(total, m)
    return total


# -- static plan ----------------------------------------------------------------

class ProtocolPlan:
    """Per-node wiring and random-draw offsets for one (network, field)."""

    def __init__(self, net: Network, layout: BlockLayout | None = None, gf: GaloisField | int = 256):
        self.net = net
        self.layout = block_layout(net) if layout is None else layout
        self.gf = get_field(gf) if isinstance(gf, int) else gf
        self.rate = net.rate
        nodes = net.nodes
        self.index = {v: i for i, v in enumerate(nodes)}
        self.nodes = nodes
        self.source = self.index[net.source]
        self.is_sink = [v in set(net.sinks) for v in nodes]
        self.in_links = [tuple(sorted(net.in_links[v])) for v in nodes]
        self.out_links = [tuple(sorted(net.out_links[v])) for v in nodes]
        n_links = len(net.links)
        self.head = [self.index[l.head] for l in net.links]
        self.tail = [self.index[l.tail] for l in net.links]
        self.in_pos = [0] * n_links
        self.out_pos = [0] * n_links
        for i in range(len(nodes)):
            for p, e in enumerate(self.in_links[i]):
                self.in_pos[e] = p
            for p, e in enumerate(self.out_links[i]):
                self.out_pos[e] = p
        self.designated = [min(ins) if ins else -1 for ins in self.in_links]

        # random columns: source pilots first, then one column per block input
        blk_of = self.layout.block_of_link
        self.pilot_cols = len(self.out_links[self.source]) * self.rate
        self.node_blocks: list[list[tuple[int, int, int]] | None] = [None] * len(nodes)
        self.coded_cols: list[np.ndarray | None] = [None] * len(nodes)
        col = 0
        for i, v in enumerate(nodes):
            if v not in net.merging_nodes:
                continue
            entries = []
            for e in self.out_links[i]:
                b = blk_of[e]
                k = self.layout.blocks[b].k
                entries.append((b, col, k))
                col += k
            self.node_blocks[i] = entries
            self.coded_cols[i] = np.array([b for b, _, _ in entries], dtype=np.int64)
        self.coef_cols = col
        # coefficient column -> (block, input position) and node -> coded-count column
        self.col_block = np.array([b for e in self.node_blocks if e for b, _, k in e for _ in range(k)],
                                  dtype=np.int64)
        self.col_input = np.array([j for e in self.node_blocks if e for _, _, k in e for j in range(k)],
                                  dtype=np.int64)
        merging = [i for i, e in enumerate(self.node_blocks) if e]
        self.count_col = {i: c for c, i in enumerate(merging)}
        member = np.zeros((len(self.layout), len(merging)), dtype=np.float32)
        for c, i in enumerate(merging):
            member[self.coded_cols[i], c] = 1
        self._member = member
        self.fwd_need = [len(x) for x in self.in_links]
        self.bwd_need = [len(x) for x in self.out_links]
        self.topo = [self.index[v] for v in net.topo_order]
        self._arange = {k: np.arange(k) for k in set(self.layout.ks)}

    def draw(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Source pilot vectors (uniform) and combination scalars (nonzero)."""
        pilots = self.gf.rand(rng, (n, self.pilot_cols))
        coefs = self.gf.rand_nonzero(rng, (n, self.coef_cols))
        return pilots, coefs

    def source_outputs(self, pilots: np.ndarray) -> list[np.ndarray]:
        r = self.rate
        return [pilots[:, p * r:(p + 1) * r] for p in range(len(self.out_links[self.source]))]

    def mask(self, pop: np.ndarray, coefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Zero the scalars of inactive inputs; also count multiplications.

        Returns the masked scalars and the number of field multiplications
        each chromosome costs (one per active input and pilot component).
        """
        states = pop[:, self.col_block]
        active = (states == CODED) | (states == self.col_input)
        masked = np.where(active, coefs, 0).astype(self.gf.dtype, copy=False)
        return masked, active.sum(axis=1) * self.rate

    def coded_counts(self, pop: np.ndarray) -> np.ndarray:
        """CODED blocks per chromosome at each merging node, shape (n, merging nodes)."""
        # float matmul goes through BLAS; the counts are small exact integers
        return ((pop == CODED).astype(np.float32) @ self._member).astype(np.int64)

    def node_outputs(self, i: int, inputs: list[np.ndarray], masked: np.ndarray) -> list[np.ndarray]:
        entries = self.node_blocks[i]
        if entries is None:
            return [inputs[0]] * len(self.out_links[i])
        # all blocks of a node share its inputs and sit in adjacent columns
        nb = len(entries)
        k = entries[0][2]
        col0 = entries[0][1]
        c = masked[:, col0:col0 + nb * k].reshape(-1, nb, k)
        w = np.stack(inputs, axis=1)
        out = self.gf.dot(c, w[:, None, :, :])
        return [out[:, b] for b in range(nb)]


def _as_population(genotypes, layout: BlockLayout) -> np.ndarray:
    if isinstance(genotypes, np.ndarray):
        pop = genotypes
    else:
        rows = []
        for g in genotypes:
            if isinstance(g, Genotype):
                g.check_layout(layout)
                rows.append(g.states)
            else:
                rows.append(tuple(g))
        pop = np.asarray(rows, dtype=np.int8).reshape(len(rows), len(layout))
    if pop.ndim != 2 or pop.shape[1] != len(layout):
        raise ValueError("genotypes do not match the block layout")
    return pop


# -- centralized path -------------------------------------------------------------

def _forward(plan: ProtocolPlan, pop: np.ndarray, rng: np.random.Generator):
    n = pop.shape[0]
    pilots, coefs = plan.draw(n, rng)
    masked, mults = plan.mask(pop, coefs)
    inbox: list[list] = [[None] * len(x) for x in plan.in_links]
    feasible = np.ones(n, dtype=bool)
    for i in plan.topo:
        if i == plan.source:
            outs = plan.source_outputs(pilots)
        else:
            ins = inbox[i]
            if plan.is_sink[i]:
                feasible &= _sink_mask(plan.gf, ins, plan.rate)
            outs = plan.node_outputs(i, ins, masked) if plan.out_links[i] else []
        for e, out in zip(plan.out_links[i], outs):
            inbox[plan.head[e]][plan.in_pos[e]] = out
    return feasible, mults


def centralized_evaluate(net: Network, layout: BlockLayout | None, genotypes, q: int | GaloisField = 256,
                         rng: np.random.Generator | None = None, plan: ProtocolPlan | None = None) -> np.ndarray:
    """Fitness of each genotype with the same random codes but no clock."""
    plan = ProtocolPlan(net, layout, q) if plan is None else plan
    pop = _as_population(genotypes, plan.layout)
    rng = np.random.default_rng() if rng is None else rng
    feasible, _ = _forward(plan, pop, rng)
    counts = (pop == CODED).sum(axis=1).astype(np.int64)
    return np.where(feasible, counts, INFEASIBLE)


def count_field_multiplications(net: Network, layout: BlockLayout | None = None, rate: int | None = None,
                                genotype=None, q: int = 256, seed: int = 0) -> int:
    """Field multiplications spent forwarding one chromosome (all-ones by default)."""
    if rate is not None and rate != net.rate:
        net = net.with_rate(rate)
    plan = ProtocolPlan(net, layout, q)
    if genotype is None:
        pop = np.full((1, len(plan.layout)), CODED, dtype=np.int8)
    else:
        pop = _as_population([genotype], plan.layout)
    _, mults = _forward(plan, pop, np.random.default_rng(seed))
    return int(mults[0])


# -- clocked pipeline ---------------------------------------------------------------

class _Batch:
    __slots__ = ("id", "launch", "pop", "coefs", "counts", "fwd_in", "fwd_pending", "bwd_in",
                 "bwd_pending", "feasible", "zeros", "tag")

    def __init__(self, plan: ProtocolPlan, batch_id: int, launch: int, pop: np.ndarray,
                 coefs: np.ndarray, tag):
        self.id = batch_id
        self.launch = launch
        self.pop = pop
        self.coefs, _ = plan.mask(pop, coefs)
        self.counts = plan.coded_counts(pop)
        self.tag = tag
        self.fwd_in = [[None] * n for n in plan.fwd_need]
        self.fwd_pending = list(plan.fwd_need)
        self.bwd_in = [[None] * n for n in plan.bwd_need]
        self.bwd_pending = list(plan.bwd_need)
        self.feasible: dict[int, np.ndarray] = {}
        self.zeros = np.zeros(pop.shape[0], dtype=np.int64)


class Pipeline:
    """Event-driven evaluator holding any number of batches in flight.

    ``launch`` starts a batch at the current time; ``advance`` runs the clock
    to the next time at which batches complete at the source and returns
    their results. Events are ordered by (time, node index, phase, batch).
    """

    def __init__(self, net: Network, layout: BlockLayout | None = None, q: int | GaloisField = 256,
                 seed: int = 0, trace: bool = False, plan: ProtocolPlan | None = None):
        self.plan = ProtocolPlan(net, layout, q) if plan is None else plan
        self.seed = seed
        self.now = 0
        self.next_batch_id = 0
        self._events: list[tuple[int, int, int, int]] = []
        self._batches: dict[int, _Batch] = {}
        self._last_fire = [[-1] * len(self.plan.nodes), [-1] * len(self.plan.nodes)]
        self._done: list[EvalResult] = []
        self.trace: list[tuple[int, int, str, int]] | None = [] if trace else None

    @property
    def in_flight(self) -> int:
        return len(self._batches)

    def batch_rng(self, batch_id: int) -> np.random.Generator:
        return make_stream(self.seed, EVAL_STREAM, batch_id)

    def launch(self, genotypes, tag=None, rng: np.random.Generator | None = None) -> int:
        plan = self.plan
        pop = _as_population(genotypes, plan.layout)
        bid = self.next_batch_id
        self.next_batch_id += 1
        rng = self.batch_rng(bid) if rng is None else rng
        pilots, coefs = plan.draw(pop.shape[0], rng)
        batch = _Batch(plan, bid, self.now, pop, coefs, tag)
        self._batches[bid] = batch
        self._fire_forward(batch, plan.source, self.now, plan.source_outputs(pilots))
        return bid

    def advance(self) -> list[EvalResult]:
        """Process events up to the next completion time; [] when idle."""
        events = self._events
        while events:
            t = events[0][0]
            while events and events[0][0] == t:
                _, i, phase, bid = heapq.heappop(events)
                batch = self._batches[bid]
                if phase == FWD:
                    self._fire_forward(batch, i, t, None)
                else:
                    self._fire_backward(batch, i, t)
            self.now = t
            if self._done:
                done, self._done = sorted(self._done, key=lambda r: r.batch_id), []
                return done
        return []

    def advance_to(self, t: int) -> None:
        """Process every event before time ``t`` and set the clock to ``t``.

        Used to place launches on consecutive slots; no batch may complete
        in the skipped interval.
        """
        if t < self.now:
            raise ValueError("clock cannot move backwards")
        events = self._events
        while events and events[0][0] < t:
            te, i, phase, bid = heapq.heappop(events)
            batch = self._batches[bid]
            if phase == FWD:
                self._fire_forward(batch, i, te, None)
            else:
                self._fire_backward(batch, i, te)
        if self._done:
            raise RuntimeError("a batch completed while the clock was being skipped forward")
        self.now = t

    def run_until_idle(self) -> list[EvalResult]:
        out = []
        while self._events:
            out.extend(self.advance())
        return out

    def trace_lines(self) -> list[str]:
        if self.trace is None:
            return []
        return [f"{t} {e} {d} {b}" for t, e, d, b in sorted(self.trace, key=lambda x: (x[0], x[2] != "F", x[1], x[3]))]

    def _check_slot(self, phase: int, i: int, t: int) -> None:
        last = self._last_fire[phase]
        if last[i] >= t:
            raise SlotCollision(f"node {self.plan.nodes[i]!r} fired twice at time {t}")
        last[i] = t

    def _fire_forward(self, batch: _Batch, i: int, t: int, outs) -> None:
        plan = self.plan
        self._check_slot(FWD, i, t)
        if outs is None:
            ins = batch.fwd_in[i]
            batch.fwd_in[i] = None
            if plan.is_sink[i]:
                batch.feasible[i] = _sink_mask(plan.gf, ins, plan.rate)
            outs = plan.node_outputs(i, ins, batch.coefs) if plan.out_links[i] else []
        trace = self.trace
        for e, out in zip(plan.out_links[i], outs):
            h = plan.head[e]
            batch.fwd_in[h][plan.in_pos[e]] = out
            batch.fwd_pending[h] -= 1
            if batch.fwd_pending[h] == 0:
                heapq.heappush(self._events, (t + 1, h, FWD, batch.id))
            if trace is not None:
                trace.append((t + 1, e, "F", batch.id))
        if not plan.out_links[i]:
            self._fire_backward(batch, i, t)

    def _fire_backward(self, batch: _Batch, i: int, t: int) -> None:
        plan = self.plan
        self._check_slot(BWD, i, t)
        c = plan.count_col.get(i)
        vec = batch.counts[:, c].copy() if c is not None else np.zeros(batch.pop.shape[0], dtype=np.int64)
        feasible = batch.feasible.get(i)
        if feasible is not None:
            vec[~feasible] = INFEASIBLE
        for msg in batch.bwd_in[i]:
            if msg is not batch.zeros:
                vec += msg
        np.minimum(vec, INFEASIBLE, out=vec)
        batch.bwd_in[i] = None
        if i == plan.source:
            del self._batches[batch.id]
            self._done.append(EvalResult(batch.id, batch.launch, t, vec, batch.pop, batch.tag))
            return
        trace = self.trace
        designated = plan.designated[i]
        for e in plan.in_links[i]:
            u = plan.tail[e]
            batch.bwd_in[u][plan.out_pos[e]] = vec if e == designated else batch.zeros
            batch.bwd_pending[u] -= 1
            if batch.bwd_pending[u] == 0:
                heapq.heappush(self._events, (t + 1, u, BWD, batch.id))
            if trace is not None:
                trace.append((t + 1, e, "B", batch.id))


def evaluate_batch(net: Network, layout: BlockLayout | None, genotypes, q: int = 256, launch_time: int = 0,
                   pipeline: Pipeline | None = None, rng: np.random.Generator | None = None) -> EvalResult:
    """Evaluate one batch on an otherwise idle clock starting at ``launch_time``."""
    if pipeline is None:
        pipeline = Pipeline(net, layout, q)
    if launch_time < pipeline.now:
        raise ValueError("cannot launch in the past")
    pipeline.now = launch_time
    bid = pipeline.launch(genotypes, rng=rng)
    while True:
        for res in pipeline.advance():
            if res.batch_id == bid:
                return res
        if not pipeline._events:
            raise RuntimeError("batch never completed")
