"""Product-construction lattices over the integers.

L linear codes over distinct prime fields F_{p_l} are glued coordinatewise by
the CRT ring isomorphism F_{p_1} x ... x F_{p_L} -> Z/qZ, q = prod p_l, and
tiled by qZ^N.  The scaled lattice is gamma/q * (M(C^1, ..., C^L) + qZ^N).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np

from .algebra import INTEGERS, RingElement, is_rational_prime
from .constellation import crt_idempotents

CODEBOOK_BUDGET = 10**6
NESTED_BUDGET = 10**5


class BudgetExceededError(RuntimeError):
    """An enumeration would exceed its configured size guard."""


def rank_mod_p(M: np.ndarray, p: int) -> int:
    """Rank of an integer matrix over F_p by Gaussian elimination."""
    A = np.array(M, dtype=np.int64) % p
    if A.size == 0:
        return 0
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i, c] != 0), None)
        if piv is None:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r] = A[r] * pow(int(A[r, c]), -1, p) % p
        for i in range(rows):
            if i != r and A[i, c]:
                A[i] = (A[i] - A[i, c] * A[r]) % p
        r += 1
        if r == rows:
            break
    return r


@dataclass(frozen=True, eq=False)
class LinearCode:
    """Code {G w : w in F_q^m} with an N x m generator matrix."""

    q: int
    G: np.ndarray

    def __post_init__(self):
        if not is_rational_prime(self.q):
            raise ValueError(f"{self.q} is not prime")
        G = np.array(self.G, dtype=np.int64)
        if G.ndim == 1:
            G = G[:, None]
        G = G % self.q
        G.setflags(write=False)
        object.__setattr__(self, "G", G)
        if rank_mod_p(G, self.q) != G.shape[1]:
            raise ValueError("generator matrix is rank deficient")

    @classmethod
    def trivial(cls, q: int, N: int) -> "LinearCode":
        return cls(q, np.zeros((N, 0), dtype=np.int64))

    @classmethod
    def identity(cls, q: int, N: int) -> "LinearCode":
        return cls(q, np.eye(N, dtype=np.int64))

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def size(self) -> int:
        return self.q**self.m

    def encode(self, w: Sequence[int]) -> np.ndarray:
        w = np.asarray(w, dtype=np.int64)
        if w.shape != (self.m,):
            raise ValueError(f"message must have length {self.m}")
        return self.G @ w % self.q

    def codewords(self, budget: int = CODEBOOK_BUDGET) -> np.ndarray:
        if self.size > budget:
            raise BudgetExceededError(f"codebook of size {self.size} exceeds {budget}")
        if self.m == 0:
            return np.zeros((1, self.N), dtype=np.int64)
        W = np.array(list(product(range(self.q), repeat=self.m)), dtype=np.int64)
        return W @ self.G.T % self.q

    def contains(self, c: Sequence[int]) -> bool:
        c = np.asarray(c, dtype=np.int64).reshape(self.N, 1) % self.q
        return rank_mod_p(np.hstack([self.G, c]), self.q) == self.m


@dataclass(frozen=True, eq=False)
class ProductLattice:
    """gamma/q * (M(C^1, ..., C^L) + qZ^N) with M the CRT ring isomorphism."""

    primes: tuple[int, ...]
    codes: tuple[LinearCode, ...]
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "primes", tuple(int(p) for p in self.primes))
        object.__setattr__(self, "codes", tuple(self.codes))
        if len(self.primes) != len(self.codes):
            raise ValueError("one code per prime")
        if len(set(self.primes)) != len(self.primes):
            raise ValueError("primes must be distinct")
        for p, c in zip(self.primes, self.codes):
            if c.q != p:
                raise ValueError("code field does not match its prime")
        if len({c.N for c in self.codes}) > 1:
            raise ValueError("all codes must have the same length")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def integer_lattice(cls, N: int, gamma: float = 1.0) -> "ProductLattice":
        lat = cls((), (), gamma)
        object.__setattr__(lat, "_N", N)
        return lat

    @property
    def N(self) -> int:
        return self.codes[0].N if self.codes else self.__dict__["_N"]

    @property
    def q(self) -> int:
        return math.prod(self.primes)

    @cached_property
    def idempotents(self) -> np.ndarray:
        if not self.primes:
            return np.zeros(0, dtype=np.int64)
        if len(self.primes) == 1:
            return np.array([1], dtype=np.int64)
        es = crt_idempotents([RingElement(INTEGERS, p) for p in self.primes])
        return np.array([e.a for e in es], dtype=np.int64)

    @property
    def volume(self) -> float:
        return self.gamma**self.N * math.prod(float(p) ** (-c.m) for p, c in zip(self.primes, self.codes))

    def with_gamma(self, gamma: float) -> "ProductLattice":
        if not self.primes:
            return ProductLattice.integer_lattice(self.N, gamma)
        return ProductLattice(self.primes, self.codes, gamma)

    # exact integer view ---------------------------------------------------
    def label_map(self, words: Sequence[Sequence[int]]) -> np.ndarray:
        """M(c^1, ..., c^L) in [0, q) coordinatewise."""
        if not self.primes:
            return np.zeros(self.N, dtype=np.int64)
        W = np.array(words, dtype=np.int64).reshape(len(self.primes), self.N)
        return (self.idempotents @ W) % self.q

    def encode(self, messages: Sequence[Sequence[int]]) -> np.ndarray:
        """Integer lattice point M(G^1 w^1, ..., G^L w^L)."""
        words = [c.encode(w) for c, w in zip(self.codes, messages)]
        return self.label_map(words)

    def _check_dim(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.N:
            raise ValueError(f"expected vectors of length {self.N}, got {x.shape[-1]}")
        return x

    def is_member(self, x: Sequence[int]) -> bool:
        x = self._check_dim(np.asarray(x, dtype=np.int64))
        return all(c.contains(x % p) for p, c in zip(self.primes, self.codes))

    def decompose(self, y: Sequence[int]) -> tuple[list[np.ndarray], np.ndarray]:
        """Per-level words and carry with y = M(c^1..c^L) + q*zeta."""
        y = self._check_dim(np.asarray(y, dtype=np.int64))
        words = [y % p for p in self.primes]
        rem = y - self.label_map(words) if self.primes else y
        return words, rem // self.q

    @cached_property
    def coset_reps(self) -> np.ndarray:
        """All images M(c) in [0, q)^N, one row per codeword tuple."""
        if not self.primes:
            return np.zeros((1, self.N), dtype=np.int64)
        total = math.prod(c.size for c in self.codes)
        if total > CODEBOOK_BUDGET:
            raise BudgetExceededError(f"{total} codewords exceed {CODEBOOK_BUDGET}")
        books = [c.codewords() for c in self.codes]
        out = np.zeros((1, self.N), dtype=np.int64)
        for e, book in zip(self.idempotents, books):
            out = (out[:, None, :] + e * book[None, :, :]).reshape(-1, self.N)
        return out % self.q

    def scale_points(self, x: np.ndarray) -> np.ndarray:
        """Map exact integer coordinates to the scaled lattice."""
        return np.asarray(x, dtype=float) * (self.gamma / self.q)

    # real-valued view ------------------------------------------------------
    def quantize_nn(self, y, search_radius: float | None = None) -> np.ndarray:
        """Nearest lattice point to y (rows of a 2-D array are separate queries).

        The lattice is a union of translates of gamma*Z^N, so the nearest point
        of each translate is a coordinatewise rounding; the minimum over
        translates is exact and ``search_radius`` is accepted for interface
        compatibility only.
        """
        y = self._check_dim(np.asarray(y, dtype=float))
        flat = y.reshape(-1, self.N)
        reps = self.scale_points(self.coset_reps)
        g = self.gamma
        out = np.empty_like(flat)
        best = np.full(flat.shape[0], np.inf)
        for r in reps:
            cand = r + g * np.round((flat - r) / g)
            d = np.sum((flat - cand) ** 2, axis=1)
            better = d < best
            best[better] = d[better]
            out[better] = cand[better]
        return out.reshape(y.shape)

    def mod_lattice(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y - self.quantize_nn(y)

    # serialisation ---------------------------------------------------------
    def to_json(self, seed: int | None = None) -> str:
        return json.dumps(
            {
                "ring": INTEGERS,
                "N": self.N,
                "primes": list(self.primes),
                "generators": [c.G.tolist() for c in self.codes],
                "gamma": self.gamma,
                "seed": seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ProductLattice":
        d = json.loads(text)
        if not d["primes"]:
            return cls.integer_lattice(int(d["N"]), float(d["gamma"]))
        codes = tuple(LinearCode(p, np.array(G, dtype=np.int64).reshape(d["N"], -1)) for p, G in zip(d["primes"], d["generators"]))
        return cls(tuple(d["primes"]), codes, float(d["gamma"]))


def is_member(lat: ProductLattice, x) -> bool:
    return lat.is_member(x)


def decompose(lat: ProductLattice, y):
    return lat.decompose(y)


def quantize_nn(lat: ProductLattice, y, search_radius: float | None = None) -> np.ndarray:
    return lat.quantize_nn(y, search_radius)


def mod_lattice(lat: ProductLattice, y) -> np.ndarray:
    return lat.mod_lattice(y)


@dataclass(frozen=True)
class SecondMoment:
    sigma2: float
    G: float
    stderr: float
    n_samples: int


def second_moment_mc(
    lat: ProductLattice, n_samples: int, seed: int, block: int = 1 << 16, threads: int = 1
) -> SecondMoment:
    """Monte-Carlo second moment and normalized second moment.

    Samples are drawn in fixed-size blocks with seeds spawned from ``seed`` and
    reduced in block order, so the result does not depend on ``threads``.
    """
    if n_samples <= 1:
        raise ValueError("need at least two samples")
    N = lat.N
    sizes = [block] * (n_samples // block) + ([n_samples % block] if n_samples % block else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i: int) -> tuple[float, float]:
        rng = np.random.default_rng(seeds[i])
        u = rng.random((sizes[i], N)) * lat.gamma
        e = np.sum(lat.mod_lattice(u) ** 2, axis=1) / N
        return float(np.sum(e)), float(np.sum(e * e))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    scale = lat.volume ** (2.0 / N)
    return SecondMoment(mean, mean / scale, math.sqrt(var / n_samples) / scale, n_samples)


@dataclass(frozen=True, eq=False)
class NestedPair:
    """Coarse and fine product lattices with G_f^l = [G_c^l | G_ext^l]."""

    primes: tuple[int, ...]
    coarse_gens: tuple[np.ndarray, ...]
    ext_gens: tuple[np.ndarray, ...]
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coarse_gens", tuple(np.array(g, dtype=np.int64) for g in self.coarse_gens))
        object.__setattr__(self, "ext_gens", tuple(np.array(g, dtype=np.int64) for g in self.ext_gens))
        _ = self.fine  # validates ranks

    @property
    def N(self) -> int:
        return self.ext_gens[0].shape[0]

    def _gens(self, g: np.ndarray) -> np.ndarray:
        return g.reshape(self.N, -1)

    @cached_property
    def coarse(self) -> ProductLattice:
        codes = tuple(LinearCode(p, self._gens(g)) for p, g in zip(self.primes, self.coarse_gens))
        return ProductLattice(self.primes, codes, self.gamma)

    @cached_property
    def fine(self) -> ProductLattice:
        codes = tuple(
            LinearCode(p, np.hstack([self._gens(gc), self._gens(ge)]))
            for p, gc, ge in zip(self.primes, self.coarse_gens, self.ext_gens)
        )
        return ProductLattice(self.primes, codes, self.gamma)

    def design_rate(self, base: float = 2.0) -> float:
        """Sum over levels of (m_f - m_c)/N * log p, in the given log base."""
        return sum(self._gens(ge).shape[1] / self.N * math.log(p, base) for p, ge in zip(self.primes, self.ext_gens))


def nested_codebook(pair: NestedPair) -> np.ndarray:
    """Coset representatives of fine/coarse inside the coarse Voronoi region."""
    fine = pair.fine
    sizes = [p ** pair._gens(ge).shape[1] for p, ge in zip(pair.primes, pair.ext_gens)]
    total = math.prod(sizes)
    if total > NESTED_BUDGET:
        raise BudgetExceededError(f"{total} fine messages exceed {NESTED_BUDGET}")
    words_per_level = []
    for p, ge in zip(pair.primes, pair.ext_gens):
        ge = pair._gens(ge)
        W = np.array(list(product(range(p), repeat=ge.shape[1])), dtype=np.int64).reshape(-1, ge.shape[1])
        words_per_level.append(W @ ge.T % p)
    pts = []
    for combo in product(*words_per_level):
        pts.append(fine.scale_points(fine.label_map(combo)))
    pts = np.array(pts).reshape(-1, pair.N)
    return pair.coarse.mod_lattice(pts)


def cf_frontend(y, alpha, dithers, coeffs, coarse: ProductLattice) -> np.ndarray:
    """(alpha*y + sum_k a_k u_k) mod the coarse lattice."""
    out = alpha * np.asarray(y, dtype=float)
    for a, u in zip(coeffs, dithers):
        out = out + a * np.asarray(u, dtype=float)
    return coarse.mod_lattice(out)


def sample_dither(coarse: ProductLattice, rng: np.random.Generator) -> np.ndarray:
    """Uniform dither over the coarse Voronoi region."""
    return coarse.mod_lattice(rng.random(coarse.N) * coarse.gamma)
