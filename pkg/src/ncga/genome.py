"""Block-structured genotypes and the block-wise genetic operators.

A block of length k takes one of k+2 canonical states, stored as a small
integer so whole populations fit in one ``int8`` array:

* ``CODED`` (-1): the all-ones string, every input is combined;
* ``i >= 0``: the one-hot string forwarding input ``i`` only;
* ``NONE`` (-2): the all-zeros string, nothing is sent.

Populations are arrays of shape ``(pop_size, n_blocks)``. :class:`Genotype`
wraps a single row together with its layout fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .netgraph import BlockLayout, BlockSpec

CODED = -1
NONE = -2

# Saturating fitness: finite counts stay far below this, and every sum is
# clamped to it, so INFEASIBLE absorbs addition.
INFEASIBLE = 1 << 40

STATE_DTYPE = np.int8


def active_inputs(block: BlockSpec, state: int) -> set[int]:
    """Incoming link ids whose data reaches ``block.out_link``."""
    if state == CODED:
        return set(block.inputs)
    if state == NONE:
        return set()
    return {block.inputs[state]}


def fitness_add(a, b):
    return np.minimum(np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64), INFEASIBLE)


def fitness_str(f) -> str:
    return "inf" if int(f) >= INFEASIBLE else str(int(f))


def state_to_bits(state: int, k: int) -> str:
    if state == CODED:
        return "1" * k
    if state == NONE:
        return "0" * k
    return "".join("1" if i == state else "0" for i in range(k))


def bits_to_state(bits: str) -> int:
    """Parse a block bit string; two or more ones canonicalize to CODED."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"bad block string {bits!r}")
    ones = bits.count("1")
    if ones == 0:
        return NONE
    if ones == 1:
        return bits.index("1")
    return CODED


@dataclass(frozen=True)
class Genotype:
    states: tuple[int, ...]
    fingerprint: str
    ks: tuple[int, ...]

    @classmethod
    def from_states(cls, layout: BlockLayout, states: Sequence[int]) -> "Genotype":
        states = tuple(int(s) for s in states)
        if len(states) != len(layout):
            raise ValueError(f"expected {len(layout)} blocks, got {len(states)}")
        for s, k in zip(states, layout.ks):
            if not (s in (CODED, NONE) or 0 <= s < k):
                raise ValueError(f"state {s} invalid for a block of length {k}")
        return cls(states, layout.fingerprint, layout.ks)

    @classmethod
    def parse(cls, layout: BlockLayout, text: str) -> "Genotype":
        """Inverse of :meth:`to_text`, e.g. ``"11|10|00"``."""
        parts = [] if text.strip() == "" else text.strip().split("|")
        if len(parts) != len(layout):
            raise ValueError(f"expected {len(layout)} blocks, got {len(parts)}")
        for p, k in zip(parts, layout.ks):
            if len(p) != k:
                raise ValueError(f"block {p!r} should have length {k}")
        return cls.from_states(layout, [bits_to_state(p) for p in parts])

    def to_text(self) -> str:
        return "|".join(state_to_bits(s, k) for s, k in zip(self.states, self.ks))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.states, dtype=STATE_DTYPE)

    def check_layout(self, layout: BlockLayout) -> None:
        if self.fingerprint != layout.fingerprint:
            raise ValueError("genotype belongs to a different block layout")

    def __len__(self) -> int:
        return len(self.states)

    def __str__(self) -> str:
        return self.to_text()


def random_population(layout: BlockLayout, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` genotypes, every block uniform over its k+2 states."""
    ks = np.asarray(layout.ks, dtype=np.int64)
    draws = np.floor(rng.random((size, len(ks))) * (ks + 2)).astype(np.int64)
    return _index_to_state(draws, ks)


def random_genotype(layout: BlockLayout, rng: np.random.Generator) -> Genotype:
    return Genotype.from_states(layout, random_population(layout, 1, rng)[0])


def all_ones_genotype(layout: BlockLayout) -> Genotype:
    return Genotype.from_states(layout, [CODED] * len(layout))


def coding_link_count(g) -> int | np.ndarray:
    """Number of CODED blocks; vectorized over the last axis for arrays."""
    if isinstance(g, Genotype):
        return sum(1 for s in g.states if s == CODED)
    return (np.asarray(g) == CODED).sum(axis=-1)


def _state_to_index(states: np.ndarray, ks: np.ndarray) -> np.ndarray:
    # canonical index: inputs 0..k-1, then CODED = k, NONE = k+1
    s = states.astype(np.int64)
    return np.where(s == CODED, ks, np.where(s == NONE, ks + 1, s))


def _index_to_state(idx: np.ndarray, ks: np.ndarray) -> np.ndarray:
    out = np.where(idx == ks, CODED, np.where(idx == ks + 1, NONE, idx))
    return out.astype(STATE_DTYPE)


def crossover_arrays(a: np.ndarray, b: np.ndarray, mixing_ratio: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Swap each block position independently with probability ``mixing_ratio``.

    Works on single genotypes or on stacks of pairs (leading axes match).
    """
    swap = rng.random(a.shape) < mixing_ratio
    return np.where(swap, b, a).astype(STATE_DTYPE), np.where(swap, a, b).astype(STATE_DTYPE)


def mutate_array(pop: np.ndarray, ks: Sequence[int], mutation_rate: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Each block mutates with ``mutation_rate`` to one of its k+1 other states."""
    ks = np.asarray(ks, dtype=np.int64)
    fire = rng.random(pop.shape) < mutation_rate
    if not fire.any():
        return pop.copy()
    cur = _state_to_index(pop, ks)
    kk = np.broadcast_to(ks, pop.shape)
    draw = np.floor(rng.random(pop.shape) * (kk + 1)).astype(np.int64)
    new = np.where(draw >= cur, draw + 1, draw)
    return np.where(fire, _index_to_state(new, ks), pop).astype(STATE_DTYPE)


def blockwise_crossover(a: Genotype, b: Genotype, mixing_ratio: float,
                        rng: np.random.Generator) -> tuple[Genotype, Genotype]:
    if a.fingerprint != b.fingerprint:
        raise ValueError("cannot cross genotypes from different layouts")
    ca, cb = crossover_arrays(a.to_array(), b.to_array(), mixing_ratio, rng)
    return (Genotype(tuple(int(s) for s in ca), a.fingerprint, a.ks),
            Genotype(tuple(int(s) for s in cb), b.fingerprint, b.ks))


def blockwise_mutation(g: Genotype, mutation_rate: float, rng: np.random.Generator) -> Genotype:
    out = mutate_array(g.to_array(), g.ks, mutation_rate, rng)
    return Genotype(tuple(int(s) for s in out), g.fingerprint, g.ks)
