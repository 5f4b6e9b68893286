import json
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmlc.lattice import (
    BudgetExceededError,
    LinearCode,
    NestedPair,
    ProductLattice,
    cf_frontend,
    decompose,
    is_member,
    mod_lattice,
    nested_codebook,
    quantize_nn,
    rank_mod_p,
    sample_dither,
    second_moment_mc,
)


def worked_example() -> ProductLattice:
    codes = (LinearCode(2, [[1], [1]]), LinearCode(3, [[1], [2]]))
    return ProductLattice((2, 3), codes)


SMALL_LATTICES = {
    "Z1": lambda: ProductLattice.integer_lattice(1),
    "Z3-scaled": lambda: ProductLattice.integer_lattice(3, 2.5),
    "F2xF3-N2": worked_example,
    "F5-N2": lambda: ProductLattice((5,), (LinearCode(5, [[1], [2]]),), 1.7),
    "F2xF3-N3": lambda: ProductLattice((2, 3), (LinearCode(2, [[1], [1], [0]]), LinearCode(3, [[1, 0], [0, 1], [2, 2]]))),
    "F3xF5-N4": lambda: ProductLattice(
        (3, 5), (LinearCode(3, [[1], [2], [0], [1]]), LinearCode(5, [[1, 0], [0, 1], [1, 1], [2, 3]])), 0.8
    ),
    "F7-N4-trivial": lambda: ProductLattice((7,), (LinearCode.trivial(7, 4),)),
}


def brute_force_nearest(lat: ProductLattice, y: np.ndarray, reach: int = 2) -> np.ndarray:
    """Exhaustive search over coset representatives and nearby translates."""
    reps = lat.scale_points(lat.coset_reps)
    g = lat.gamma
    base = g * np.floor(y / g)
    shifts = np.array(list(product(range(-reach, reach + 1), repeat=lat.N)), dtype=float) * g
    cands = (base[None, None, :] + shifts[:, None, :] + reps[None, :, :]).reshape(-1, lat.N)
    d = np.sum((cands - y) ** 2, axis=1)
    return cands[np.argmin(d)], d.min()


# --- worked example -----------------------------------------------------------


def test_worked_example_encode_and_decompose():
    lat = worked_example()
    x1 = lat.encode([[1], [1]])
    x2 = lat.encode([[0], [2]])
    assert x1.tolist() == [1, 5]
    assert x2.tolist() == [2, 4]
    y = 3 * x1 + 4 * x2
    assert y.tolist() == [11, 31]
    words, zeta = lat.decompose(y)
    assert [w.tolist() for w in words] == [[1, 1], [2, 1]]
    assert zeta.tolist() == [1, 5]
    assert is_member(lat, y)
    assert not is_member(lat, [1, 0])


def test_idempotents():
    assert worked_example().idempotents.tolist() == [3, 4]


def test_volume():
    lat = worked_example()
    assert lat.volume == pytest.approx(1 / 6)
    assert lat.with_gamma(2.0).volume == pytest.approx(4 / 6)
    assert ProductLattice.integer_lattice(3, 2.0).volume == pytest.approx(8.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        worked_example().is_member([1, 2, 3])
    with pytest.raises(ValueError):
        ProductLattice((2, 2), (LinearCode(2, [[1]]), LinearCode(2, [[1]])))
    with pytest.raises(ValueError):
        LinearCode(3, [[1, 2], [2, 4]])  # rank 1 over F_3


def test_rank_mod_p():
    assert rank_mod_p(np.array([[1, 2], [2, 4]]), 3) == 1
    assert rank_mod_p(np.array([[1, 2], [2, 4]]), 5) == 1
    assert rank_mod_p(np.array([[1, 2], [3, 4]]), 2) == 1
    assert rank_mod_p(np.array([[1, 2], [3, 4]]), 5) == 2


def test_codebook_budget():
    code = LinearCode.identity(2, 21)
    with pytest.raises(BudgetExceededError):
        code.codewords()


def test_json_roundtrip():
    lat = SMALL_LATTICES["F3xF5-N4"]()
    back = ProductLattice.from_json(lat.to_json(seed=3))
    assert back.primes == lat.primes and back.gamma == lat.gamma
    assert all(np.array_equal(a.G, b.G) for a, b in zip(back.codes, lat.codes))
    assert json.loads(lat.to_json(seed=3))["seed"] == 3


# --- membership and decomposition ---------------------------------------------


@pytest.mark.parametrize("name", ["F2xF3-N2", "F2xF3-N3", "F3xF5-N4"])
def test_closure(name):
    lat = SMALL_LATTICES[name]()
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = lat.encode([rng.integers(0, p, c.m) for p, c in zip(lat.primes, lat.codes)]) + lat.q * rng.integers(-3, 4, lat.N)
        b = lat.encode([rng.integers(0, p, c.m) for p, c in zip(lat.primes, lat.codes)]) + lat.q * rng.integers(-3, 4, lat.N)
        u, v = rng.integers(-5, 6, 2)
        assert lat.is_member(u * a + v * b)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-200, 200), min_size=3, max_size=3))
def test_decompose_roundtrip(y):
    lat = SMALL_LATTICES["F2xF3-N3"]()
    words, zeta = decompose(lat, y)
    assert np.array_equal(lat.label_map(words) + lat.q * zeta, np.array(y))
    assert all(np.all((0 <= w) & (w < p)) for w, p in zip(words, lat.primes))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=2), st.lists(st.integers(-4, 4), min_size=2, max_size=2))
def test_decompose_recovers_codewords(msg, carry):
    lat = worked_example()
    m1, m2 = msg[0] % 2, msg[1] % 3
    x = lat.encode([[m1], [m2]]) + lat.q * np.array(carry)
    words, zeta = lat.decompose(x)
    assert words[0].tolist() == lat.codes[0].encode([m1]).tolist()
    assert words[1].tolist() == lat.codes[1].encode([m2]).tolist()
    assert zeta.tolist() == [c + (v // 6) for c, v in zip(carry, lat.encode([[m1], [m2]]))]


# --- quantizer ------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(SMALL_LATTICES))
def test_quantizer_matches_brute_force(name):
    lat = SMALL_LATTICES[name]()
    rng = np.random.default_rng(5)
    ys = rng.normal(scale=3.0 * lat.gamma, size=(100, lat.N))
    got = quantize_nn(lat, ys)
    for y, x in zip(ys, got):
        want, dmin = brute_force_nearest(lat, y)
        assert np.sum((y - x) ** 2) == pytest.approx(dmin, abs=1e-12)
        lat_int = np.round(x * lat.q / lat.gamma).astype(np.int64)
        assert lat.is_member(lat_int)


@pytest.mark.parametrize("name", ["Z1", "F2xF3-N2", "F5-N2"])
def test_mod_lattice_idempotent(name):
    lat = SMALL_LATTICES[name]()
    y = np.random.default_rng(1).normal(size=(50, lat.N)) * 4
    r = mod_lattice(lat, y)
    assert np.allclose(mod_lattice(lat, r), r)
    assert np.allclose(quantize_nn(lat, r), 0.0)


# --- second moment --------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 4])
def test_second_moment_integer_lattice(N):
    m = second_moment_mc(ProductLattice.integer_lattice(N), 200_000, seed=N)
    assert abs(m.G - 1 / 12) < 4 * m.stderr
    assert m.G >= 1 / (2 * math.pi * math.e)


def test_second_moment_threads_identical():
    lat = worked_example()
    a = second_moment_mc(lat, 100_000, seed=9, block=4096, threads=1)
    b = second_moment_mc(lat, 100_000, seed=9, block=4096, threads=8)
    assert a == b


def test_second_moment_scale_invariant():
    lat = worked_example()
    a = second_moment_mc(lat, 100_000, seed=2)
    b = second_moment_mc(lat.with_gamma(3.0), 100_000, seed=2)
    assert b.G == pytest.approx(a.G, rel=1e-9)
    assert b.sigma2 == pytest.approx(9 * a.sigma2, rel=1e-9)


# --- nested codes ----------------------------------------------------------------


def test_nested_codebook_worked_example():
    empty = np.zeros((2, 0), dtype=np.int64)
    pair = NestedPair((2, 3), (empty, empty), ([[1], [1]], [[1], [2]]))
    book = nested_codebook(pair)
    assert len(book) == 6
    assert pair.design_rate() == pytest.approx(0.5 * math.log2(6))
    # distinct cosets of the coarse lattice, all inside its Voronoi region
    assert np.allclose(pair.coarse.mod_lattice(book), book)
    keys = {tuple(np.round(b * 6).astype(int) % 6) for b in book}
    assert len(keys) == 6


def test_nested_rate_formula():
    pair = NestedPair((3,), ([[1], [0], [0]],), ([[0, 0], [1, 0], [0, 1]],))
    assert pair.design_rate() == pytest.approx(2 / 3 * math.log2(3))
    assert pair.coarse.volume / pair.fine.volume == pytest.approx(9)


def test_cf_frontend_recovers_combination():
    """Noiseless: (y + a1 u1 + a2 u2) mod coarse equals a1 t1 + a2 t2 mod coarse."""
    empty = np.zeros((2, 0), dtype=np.int64)
    pair = NestedPair((2, 3), (empty, empty), ([[1], [1]], [[1], [2]]))
    coarse = pair.coarse
    book = nested_codebook(pair)
    rng = np.random.default_rng(4)
    for _ in range(20):
        t1, t2 = book[rng.integers(6)], book[rng.integers(6)]
        u1, u2 = sample_dither(coarse, rng), sample_dither(coarse, rng)
        x1, x2 = coarse.mod_lattice(t1 - u1), coarse.mod_lattice(t2 - u2)
        a = (2, 3)
        y = a[0] * x1 + a[1] * x2
        got = cf_frontend(y, 1.0, (u1, u2), a, coarse)
        want = coarse.mod_lattice(a[0] * t1 + a[1] * t2)
        assert np.allclose(coarse.mod_lattice(got - want), 0.0, atol=1e-9)
