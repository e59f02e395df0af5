"""Finite-field arithmetic for pilot vectors.

Supports prime fields GF(p) and binary extension fields GF(2^m) with
q <= 2^16. Every operation accepts Python ints or numpy integer arrays and
works element-wise, so a whole batch of chromosomes can be combined in one
call.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

# Reduction polynomials for GF(2^m), bit i = coefficient of x^i.
# m = 8 uses x^8 + x^4 + x^3 + x + 1.
REDUCTION_POLYS = {
    1: 0x3,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x89,
    8: 0x11B,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
}

MAX_ORDER = 1 << 16


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def poly_mul(a: int, b: int, poly: int, m: int) -> int:
    """Carry-less multiply of two GF(2^m) elements followed by reduction.

    This is the slow reference path; the table-driven :meth:`GaloisField.mul`
    must agree with it.
    """
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return result


class GaloisField:
    """The finite field with ``q`` elements.

    Elements are represented by the integers ``0 .. q-1``. For ``q = 2^m``
    the integer's bits are polynomial coefficients and addition is XOR.
    """

    def __init__(self, q: int = 256, poly: int | None = None):
        if q < 2 or q > MAX_ORDER:
            raise ValueError(f"field order must be in [2, {MAX_ORDER}], got {q}")
        self.q = q
        if q & (q - 1) == 0:
            self.characteristic = 2
            self.degree = q.bit_length() - 1
            self.poly = REDUCTION_POLYS[self.degree] if poly is None else poly
        elif _is_prime(q):
            self.characteristic = q
            self.degree = 1
            self.poly = None
        else:
            raise ValueError(f"{q} is neither prime nor a power of two")
        self.dtype = np.uint8 if q <= 256 else np.uint16 if q <= 65536 else np.uint32
        self._build_tables()

    def _build_tables(self) -> None:
        q = self.q
        if self.characteristic != 2:
            elems = np.arange(q, dtype=np.int64)
            inv = np.zeros(q, dtype=np.int64)
            inv[1:] = [pow(int(a), q - 2, q) for a in elems[1:]]
            self._inv = inv.astype(self.dtype)
            self._mul_table = None
            if q <= 256:
                self._mul_table = ((elems[:, None] * elems[None, :]) % q).astype(self.dtype)
            return

        # Find a generator of the multiplicative group by brute force; one of
        # order q-1 exists iff the reduction polynomial is irreducible.
        gen = None
        for cand in range(2, q) if q > 2 else [1]:
            exp = [1]
            x = 1
            for _ in range(q - 2):
                x = poly_mul(x, cand, self.poly, self.degree)
                if x <= 1:
                    break
                exp.append(x)
            if len(exp) == q - 1 and len(set(exp)) == q - 1:
                gen = cand
                break
        if gen is None:
            raise ValueError(f"polynomial {self.poly:#x} is not irreducible over GF(2)")
        self.generator = gen
        exp_arr = np.array(exp * 2, dtype=np.int64)
        log_arr = np.zeros(q, dtype=np.int64)
        log_arr[exp_arr[: q - 1]] = np.arange(q - 1)
        self._exp = exp_arr
        self._log = log_arr
        inv = np.zeros(q, dtype=np.int64)
        inv[1:] = exp_arr[(q - 1 - log_arr[1:]) % (q - 1)]
        self._inv = inv.astype(self.dtype)
        self._mul_table = None
        if q <= 256:
            a = np.arange(q)
            la = log_arr[a]
            table = exp_arr[la[:, None] + la[None, :]]
            table[0, :] = 0
            table[:, 0] = 0
            self._mul_table = table.astype(self.dtype)

    def __repr__(self) -> str:
        return f"GaloisField(q={self.q})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GaloisField) and (self.q, self.poly) == (other.q, other.poly)

    def __hash__(self) -> int:
        return hash((self.q, self.poly))

    # -- element-wise arithmetic ------------------------------------------

    def add(self, a, b):
        if self.characteristic == 2:
            return np.bitwise_xor(a, b)
        s = (np.asarray(a, dtype=np.int64) + b) % self.q
        return self._cast(s, a, b)

    def neg(self, a):
        if self.characteristic == 2:
            return a
        return self._cast((self.q - np.asarray(a, dtype=np.int64)) % self.q, a)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        if self._mul_table is not None:
            return self._cast(self._mul_table[a, b], a, b)
        if self.characteristic != 2:
            return self._cast((np.asarray(a, dtype=np.int64) * b) % self.q, a, b)
        a_arr = np.asarray(a, dtype=np.int64)
        b_arr = np.asarray(b, dtype=np.int64)
        out = self._exp[self._log[a_arr] + self._log[b_arr]]
        out = np.where((a_arr == 0) | (b_arr == 0), 0, out)
        return self._cast(out, a, b)

    def inv(self, a):
        if np.any(np.asarray(a) == 0):
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return self._cast(self._inv[a], a)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def _cast(self, value, *operands):
        if all(isinstance(op, (int, np.integer)) for op in operands):
            return int(value)
        return np.asarray(value).astype(self.dtype, copy=False)

    # -- random elements ---------------------------------------------------

    def rand(self, rng: np.random.Generator, size=None):
        """Uniform element(s) over all ``q`` values, zero included."""
        if size is None:
            return int(rng.integers(0, self.q))
        return rng.integers(0, self.q, size=size, dtype=self.dtype)

    def rand_nonzero(self, rng: np.random.Generator, size=None):
        if size is None:
            return int(rng.integers(1, self.q))
        return rng.integers(1, self.q, size=size, dtype=self.dtype)

    def dot(self, coefs: np.ndarray, vectors: np.ndarray) -> np.ndarray:
        """sum_j coefs[..., j] * vectors[..., j, :] over the field."""
        if self._mul_table is not None and self.characteristic == 2:
            t = self._mul_table
            out = t[coefs[..., 0, None], vectors[..., 0, :]]
            for j in range(1, coefs.shape[-1]):
                out ^= t[coefs[..., j, None], vectors[..., j, :]]
            return out
        out = self.mul(coefs[..., 0, None], vectors[..., 0, :])
        for j in range(1, coefs.shape[-1]):
            out = self.add(out, self.mul(coefs[..., j, None], vectors[..., j, :]))
        return out

    # -- linear algebra ----------------------------------------------------

    def batch_rank(self, mats: np.ndarray) -> np.ndarray:
        """Rank of each matrix in a stack of shape ``(batch, rows, cols)``.

        Gaussian elimination column by column; the pivot for a column is the
        lowest-index unused row with a nonzero entry there.
        """
        m = np.array(mats, dtype=self.dtype, copy=True)
        if m.ndim != 3:
            raise ValueError("expected a (batch, rows, cols) array")
        batch, rows, cols = m.shape
        rank = np.zeros(batch, dtype=np.int64)
        if rows == 0 or cols == 0 or batch == 0:
            return rank
        if rows == 2 and cols == 2:
            det = self.sub(self.mul(m[:, 0, 0], m[:, 1, 1]), self.mul(m[:, 0, 1], m[:, 1, 0]))
            nonzero = m.reshape(batch, 4).any(axis=1)
            return np.where(det != 0, 2, nonzero.astype(np.int64))
        used = np.zeros((batch, rows), dtype=bool)
        idx = np.arange(batch)
        for c in range(cols):
            cand = (m[:, :, c] != 0) & ~used
            has = cand.any(axis=1)
            if not has.any():
                continue
            piv = np.argmax(cand, axis=1)
            sel = idx[has]
            prow = piv[has]
            used[sel, prow] = True
            rank[sel] += 1
            pivot_rows = m[sel, prow, :]
            scale = self.inv(pivot_rows[:, c])
            pivot_rows = self.mul(scale[:, None], pivot_rows)
            factors = m[sel, :, c].copy()
            factors[np.arange(len(sel)), prow] = 0
            sub = self.mul(factors[:, :, None], pivot_rows[:, None, :])
            m[sel] = self.sub(m[sel], sub)
        return rank

    def rank(self, vectors: Sequence[Sequence[int]]) -> int:
        """Rank over this field of a list of equal-length vectors."""
        vecs = [list(v) for v in vectors]
        if not vecs:
            return 0
        width = len(vecs[0])
        if any(len(v) != width for v in vecs):
            raise ValueError("vectors must all have the same length")
        arr = np.asarray(vecs, dtype=np.int64).reshape(1, len(vecs), width)
        return int(self.batch_rank(arr)[0])


@lru_cache(maxsize=None)
def get_field(q: int = 256) -> GaloisField:
    """Shared field instance; table construction is done once per order."""
    return GaloisField(q)


def make_stream(master_seed: int, *stream_id: int) -> np.random.Generator:
    """Independent generator keyed by a master seed and an integer path."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.PCG64(ss))
