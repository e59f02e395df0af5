import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncga.galois import GaloisField, get_field, make_stream, poly_mul

GF256 = get_field(256)
elem = st.integers(0, 255)
nonzero = st.integers(1, 255)


def _rank_reference(rows, p):
    """Textbook elimination over a prime field with Python ints."""
    m = [list(r) for r in rows]
    rank, col = 0, 0
    ncols = len(m[0]) if m else 0
    while rank < len(m) and col < ncols:
        piv = next((i for i in range(rank, len(m)) if m[i][col] % p), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = pow(m[rank][col], p - 2, p)
        m[rank] = [x * inv % p for x in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][col]:
                f = m[i][col]
                m[i] = [(a - f * b) % p for a, b in zip(m[i], m[rank])]
        rank += 1
        col += 1
    return rank


def test_known_products():
    # x * x^7 = x^8 = x^4 + x^3 + x + 1 under 0x11B
    assert GF256.mul(0x02, 0x80) == 0x1B
    assert GF256.mul(0x53, 0xCA) == 0x01
    assert GF256.inv(0x53) == 0xCA
    assert GF256.add(0x57, 0x83) == 0xD4
    assert GF256.mul(0x57, 0x83) == 0xC1


def test_mul_table_matches_reference():
    a = np.arange(256)
    table = GF256.mul(a[:, None], a[None, :])
    ref = np.array([[poly_mul(int(x), int(y), 0x11B, 8) for y in range(256)] for x in range(0, 256, 17)])
    assert np.array_equal(table[::17], ref)


@pytest.mark.parametrize("q", [2, 4, 16, 256, 1024, 3, 7, 251])
def test_inverses(q):
    gf = GaloisField(q)
    a = np.arange(1, q)
    assert np.all(gf.mul(a, gf.inv(a)) == 1)


def test_zero_has_no_inverse():
    with pytest.raises(ZeroDivisionError):
        GF256.inv(0)
    with pytest.raises(ZeroDivisionError):
        GF256.div(np.array([1, 2]), np.array([1, 0]))


@pytest.mark.parametrize("q", [0, 1, 6, 12, 1 << 17])
def test_bad_orders(q):
    with pytest.raises(ValueError):
        GaloisField(q)


def test_reducible_polynomial_rejected():
    with pytest.raises(ValueError):
        GaloisField(256, poly=0x100)


@given(elem, elem, elem)
def test_field_axioms(a, b, c):
    gf = GF256
    assert gf.mul(a, b) == gf.mul(b, a)
    assert gf.mul(a, gf.mul(b, c)) == gf.mul(gf.mul(a, b), c)
    assert gf.mul(a, gf.add(b, c)) == gf.add(gf.mul(a, b), gf.mul(a, c))
    assert gf.add(a, a) == 0
    assert gf.mul(a, 1) == a


@given(elem, nonzero)
def test_division_roundtrip(a, b):
    assert GF256.mul(GF256.div(a, b), b) == a


def test_large_field_uses_logs():
    gf = GaloisField(1 << 12)
    rng = np.random.default_rng(0)
    a = gf.rand(rng, 500)
    b = gf.rand(rng, 500)
    ref = np.array([poly_mul(int(x), int(y), gf.poly, 12) for x, y in zip(a, b)])
    assert np.array_equal(gf.mul(a, b), ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 7, 251]))
def test_batch_rank_matches_reference_prime(rows, cols, seed, p):
    gf = get_field(p)
    rng = np.random.default_rng(seed)
    mats = rng.integers(0, p, size=(8, rows, cols))
    # sprinkle in low-rank matrices
    mats[::3, -1, :] = mats[::3, 0, :]
    got = gf.batch_rank(mats)
    for m, r in zip(mats, got):
        assert r == _rank_reference(m.tolist(), p)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_batch_rank_gf256_invariants(rows, cols, seed):
    rng = np.random.default_rng(seed)
    mats = GF256.rand(rng, (16, rows, cols))
    r = GF256.batch_rank(mats)
    assert np.all(r <= min(rows, cols))
    # rank is unchanged by transposition and by scaling a row with a nonzero element
    assert np.array_equal(r, GF256.batch_rank(np.swapaxes(mats, 1, 2)))
    scaled = mats.copy()
    scaled[:, 0, :] = GF256.mul(scaled[:, 0, :], 0x1D)
    assert np.array_equal(r, GF256.batch_rank(scaled))


def test_two_by_two_fast_path_agrees_with_elimination():
    rng = np.random.default_rng(1)
    mats = GF256.rand(rng, (4000, 2, 2))
    mats[:50] = 0
    mats[50:100, 1] = GF256.mul(mats[50:100, 0], 7)
    fast = GF256.batch_rank(mats)
    # padding a zero column forces the general elimination path
    slow = GF256.batch_rank(np.concatenate([mats, np.zeros((4000, 2, 1), np.uint8)], axis=2))
    assert np.array_equal(fast, slow)
    assert np.all(fast[:50] == 0) and np.all(fast[50:100] <= 1)


def test_rank_helper():
    assert GF256.rank([[1, 0], [0, 1]]) == 2
    assert GF256.rank([[3, 5], [GF256.mul(3, 9), GF256.mul(5, 9)]]) == 1
    assert GF256.rank([[0, 0, 0]]) == 0
    assert GF256.rank([]) == 0
    with pytest.raises(ValueError):
        GF256.rank([[1, 2], [1]])


def test_dot_matches_mul_add():
    rng = np.random.default_rng(3)
    for gf in (GF256, get_field(7), GaloisField(1024)):
        c = gf.rand(rng, (5, 3))
        v = gf.rand(rng, (5, 3, 4))
        ref = np.zeros((5, 4), dtype=np.int64)
        for j in range(3):
            ref = gf.add(ref, gf.mul(c[:, j, None], v[:, j]))
        assert np.array_equal(gf.dot(c, v), ref)


def test_random_draws():
    rng = np.random.default_rng(0)
    x = GF256.rand(rng, 100_000)
    assert x.dtype == np.uint8 and x.min() == 0 and x.max() == 255
    y = GF256.rand_nonzero(rng, 10_000)
    assert y.min() >= 1


def test_streams_are_reproducible_and_distinct():
    a = make_stream(5, 1, 2).integers(0, 1 << 30, 4)
    b = make_stream(5, 1, 2).integers(0, 1 << 30, 4)
    c = make_stream(5, 1, 3).integers(0, 1 << 30, 4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
