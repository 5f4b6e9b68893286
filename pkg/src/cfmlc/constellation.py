"""Quotient-ring constellations and their labelings.

A constellation is the set of minimum-energy coset representatives of R/PhiR
with Phi the product of a few relatively prime ring primes.  A labeling is a
bijection between those points and label tuples over the residue fields.
Every labeling except the naive Ungerboeck one is of the form

    M(v) = sum_i v_i * g_i  (mod Phi)

for one generator per label component, which covers the CRT ring isomorphism,
the general Z-module isomorphism, caller supplied generators and the
extension-field isomorphism for an inert prime.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .algebra import (
    EISENSTEIN,
    GAUSSIAN,
    INERT,
    INTEGERS,
    IdealReducer,
    PrimeSpec,
    RingElement,
    bezout,
    default_poly,
    enumerate_ball,
    ext_mul,
    is_unit,
    mod,
    norm,
    quotient_size,
    residue_of_generator,
)

CRT_RING_ISO = "crt-ring-iso"
MODULE_ISO_GENERAL = "module-iso-general"
MODULE_ISO_CUSTOM = "module-iso-custom"
EXTFIELD_RING_ISO = "extfield-ring-iso"
NAIVE_UNGERBOECK = "naive-ungerboeck"
KINDS = (CRT_RING_ISO, MODULE_ISO_GENERAL, MODULE_ISO_CUSTOM, EXTFIELD_RING_ISO, NAIVE_UNGERBOECK)
RING_KINDS = (CRT_RING_ISO, EXTFIELD_RING_ISO)

LEX_RE_IM = "lex-re-im"
SWAP_SYMMETRIC = "swap-symmetric"
TIE_BREAKS = (SWAP_SYMMETRIC, LEX_RE_IM)
TIE_BREAK = SWAP_SYMMETRIC


def tie_break_key(x: RingElement, rule: str = TIE_BREAK) -> tuple:
    """Ordering used to pick one representative among equal-norm candidates.

    ``swap-symmetric`` prefers the larger a + b (the projection on the mirror
    axis of (a, b) -> (b, a)), so the constellation is invariant under that
    swap; remaining ties and ``lex-re-im`` use (Re, Im).
    """
    if rule == LEX_RE_IM:
        return (norm(x), x.lex_key())
    return (norm(x), -(x.a + x.b), x.lex_key())


class LabelingError(ValueError):
    """Generators do not give a bijection, or a labeling precondition fails."""


def _as_prime(p) -> PrimeSpec:
    return p if isinstance(p, PrimeSpec) else PrimeSpec.from_element(p)


def _product(elems: Iterable[RingElement], ring: str) -> RingElement:
    out = RingElement.one(ring)
    for e in elems:
        out = out * e
    return out


@dataclass(frozen=True)
class ConstellationSpec:
    ring: str
    primes: tuple[PrimeSpec, ...]
    tie_break: str = TIE_BREAK

    def __post_init__(self):
        primes = tuple(_as_prime(p) for p in self.primes)
        object.__setattr__(self, "primes", primes)
        if not primes:
            raise ValueError("at least one prime is required")
        if any(p.ring != self.ring for p in primes):
            raise ValueError("all primes must live in the constellation ring")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")
        for i in range(len(primes)):
            for j in range(i + 1, len(primes)):
                g, _, _ = bezout(primes[i].element, primes[j].element)
                if not is_unit(g):
                    raise ValueError(f"primes {primes[i].element} and {primes[j].element} are not coprime")

    @classmethod
    def from_elements(
        cls, ring: str, elements: Sequence[tuple[int, int] | int], tie_break: str = TIE_BREAK
    ) -> "ConstellationSpec":
        primes = []
        for e in elements:
            a, b = (e, 0) if isinstance(e, int) else e
            primes.append(PrimeSpec.from_element(RingElement(ring, a, b)))
        return cls(ring, tuple(primes), tie_break)

    @property
    def modulus(self) -> RingElement:
        return _product((p.element for p in self.primes), self.ring)


@dataclass(frozen=True)
class Constellation:
    spec: ConstellationSpec
    modulus: RingElement
    points: tuple[RingElement, ...]

    @property
    def size(self) -> int:
        return len(self.points)

    @cached_property
    def reducer(self) -> IdealReducer:
        return IdealReducer(self.modulus)

    @cached_property
    def _index(self) -> dict[tuple[int, int], int]:
        return {self.reducer.key(p): i for i, p in enumerate(self.points)}

    @cached_property
    def _key_table(self) -> np.ndarray:
        r = self.reducer
        table = np.full((r.n1, r.n2), -1, dtype=np.int64)
        for (k1, k2), i in self._index.items():
            table[k1, k2] = i
        return table

    def index_of(self, x: RingElement) -> int:
        """Index of the representative of x mod Phi."""
        return self._index[self.reducer.key(x)]

    def indices_of(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised index_of for coordinate arrays."""
        r = self.reducer
        if self.spec.ring == INTEGERS:
            return self._key_table[np.mod(a, r.n1), 0]
        t = np.floor_divide(b, r.n2)
        return self._key_table[np.mod(a - t * r.k, r.n1), b - t * r.n2]

    def representative(self, x: RingElement) -> RingElement:
        return self.points[self.index_of(x)]

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([p.a for p in self.points], dtype=np.int64),
            np.array([p.b for p in self.points], dtype=np.int64),
        )

    @cached_property
    def complex_points(self) -> np.ndarray:
        return np.array([complex(p) for p in self.points])

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.complex_points) ** 2))


def build_constellation(spec: ConstellationSpec) -> Constellation:
    """Minimum-energy representatives of R/PhiR, ties resolved by ``spec.tie_break``."""
    phi = spec.modulus
    reducer = IdealReducer(phi)
    radius = 2.0 * math.sqrt(norm(phi)) if spec.ring != INTEGERS else 2.0 * abs(phi.a)
    best: dict[tuple[int, int], tuple] = {}
    for x in enumerate_ball(spec.ring, radius):
        k = reducer.key(mod(x, phi))
        rank = tie_break_key(x, spec.tie_break)
        if k not in best or rank < best[k][0]:
            best[k] = (rank, x)
    expected = math.prod(p.residue_size for p in spec.primes)
    if len(best) != expected or reducer.size != expected:
        raise AssertionError(f"found {len(best)} classes, expected {expected}")
    points = tuple(sorted((v[1] for v in best.values()), key=lambda x: (norm(x), x.lex_key())))
    return Constellation(spec, phi, points)


def crt_idempotents(primes: Sequence) -> list[RingElement]:
    """Elements e_l = 1 mod phi_l and 0 mod every other phi."""
    elems = [p.element if isinstance(p, PrimeSpec) else p for p in primes]
    ring = elems[0].ring
    phi = _product(elems, ring)
    out = []
    for l, el in enumerate(elems):
        rest = _product((e for i, e in enumerate(elems) if i != l), ring)
        g, _, t = bezout(el, rest)
        if not is_unit(g):
            raise ValueError("primes are not relatively prime")
        e = t * rest * g.conj()
        if ring == INTEGERS:
            e = RingElement(ring, e.a % abs(phi.a))
        else:
            e = mod(e, phi)
        out.append(e)
    return out


# ---------------------------------------------------------------------------
# labelings


@dataclass(frozen=True)
class LabelLevel:
    """One residue-field factor of the label alphabet."""

    prime: PrimeSpec
    poly: tuple[int, int] | None = None

    @property
    def q(self) -> int:
        return self.prime.base_prime

    @property
    def degree(self) -> int:
        return self.prime.degree

    @property
    def size(self) -> int:
        return self.prime.residue_size


@dataclass(frozen=True, eq=False)
class LabelingMap:
    """Bijection between label tuples and constellation points.

    Labels are flat integer tuples; a prime with residue field F_p contributes
    one component, an inert prime contributes two components (v1, v0) for the
    element v1*x + v0 of F_q[x]/(poly).  ``forward[i]`` is the point index of
    the label with mixed-radix index ``i`` (first component most significant).
    """

    constellation: Constellation
    kind: str
    levels: tuple[LabelLevel, ...]
    generators: tuple[RingElement, ...] | None
    forward: tuple[int, ...]
    inverse: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        n = self.constellation.size
        if sorted(self.forward) != list(range(n)):
            raise LabelingError("label map is not a bijection onto the constellation")
        inv = [0] * n
        for label_idx, point_idx in enumerate(self.forward):
            inv[point_idx] = label_idx
        object.__setattr__(self, "inverse", tuple(inv))

    @property
    def moduli(self) -> tuple[int, ...]:
        out = []
        for lev in self.levels:
            out.extend([lev.q] * lev.degree)
        return tuple(out)

    @property
    def n_components(self) -> int:
        return len(self.moduli)

    @cached_property
    def _radix(self) -> np.ndarray:
        m = self.moduli
        return np.array([math.prod(m[i + 1 :]) for i in range(len(m))], dtype=np.int64)

    def label_index(self, label: Sequence[int]) -> int:
        if len(label) != self.n_components:
            raise ValueError(f"label needs {self.n_components} components")
        return int(sum((int(v) % q) * r for v, q, r in zip(label, self.moduli, self._radix)))

    def label_of_index(self, idx: int) -> tuple[int, ...]:
        return tuple(int(idx // r % q) for q, r in zip(self.moduli, self._radix))

    @cached_property
    def label_table(self) -> np.ndarray:
        """(n, n_components) array: row i is the label with index i."""
        idx = np.arange(self.constellation.size)[:, None]
        return (idx // self._radix[None, :]) % np.array(self.moduli)[None, :]

    @cached_property
    def point_table(self) -> np.ndarray:
        """Complex point for each label index."""
        return self.constellation.complex_points[np.array(self.forward)]

    def map(self, label: Sequence[int]) -> RingElement:
        return self.constellation.points[self.forward[self.label_index(label)]]

    def demap(self, x: RingElement) -> tuple[int, ...]:
        return self.label_of_index(self.inverse[self.constellation.index_of(x)])

    # label arithmetic -------------------------------------------------------
    def label_add(self, u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
        return tuple((a + b) % q for a, b, q in zip(u, v, self.moduli))

    def label_mul(self, u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
        out: list[int] = []
        i = 0
        for lev in self.levels:
            if lev.degree == 1:
                out.append(u[i] * v[i] % lev.q)
            else:
                out.extend(ext_mul(u[i : i + 2], v[i : i + 2], lev.poly, lev.q))
            i += lev.degree
        return tuple(out)

    def level_slices(self) -> list[slice]:
        out, i = [], 0
        for lev in self.levels:
            out.append(slice(i, i + lev.degree))
            i += lev.degree
        return out

    @cached_property
    def add_table(self) -> np.ndarray:
        lab = self.label_table
        s = (lab[:, None, :] + lab[None, :, :]) % np.array(self.moduli)
        return s @ self._radix

    @cached_property
    def mul_table(self) -> np.ndarray:
        n = self.constellation.size
        out = np.empty((n, n), dtype=np.int64)
        labels = [self.label_of_index(i) for i in range(n)]
        for i in range(n):
            for j in range(n):
                out[i, j] = self.label_index(self.label_mul(labels[i], labels[j]))
        return out


def _level_structure(spec: ConstellationSpec, poly: dict[int, tuple[int, int]] | None) -> tuple[LabelLevel, ...]:
    levels = []
    for p in spec.primes:
        if p.behavior == INERT:
            q = p.base_prime
            levels.append(LabelLevel(p, (poly or {}).get(q, default_poly(q))))
        else:
            levels.append(LabelLevel(p))
    return tuple(levels)


def _find_theta(level: LabelLevel) -> RingElement:
    """Smallest (Re, Im) representative of a root of the level polynomial mod phi."""
    phi = level.prime.element
    c1, c0 = level.poly
    sub = build_constellation(ConstellationSpec(phi.ring, (level.prime,)))
    roots = [t for t in sub.points if mod(t * t + t * c1 + RingElement(phi.ring, c0), phi).is_zero()]
    if not roots:
        raise LabelingError(f"polynomial has no root modulo {phi}")
    return min(roots, key=lambda t: t.lex_key())


def _component_generators(levels: Sequence[LabelLevel], level_gens: Sequence[RingElement]) -> list[RingElement]:
    gens = []
    for lev, g in zip(levels, level_gens):
        if lev.degree == 1:
            gens.append(g)
        else:
            gens.extend([_find_theta(lev) * g, g])
    return gens


def _module_map(const: Constellation, gens: Sequence[RingElement], moduli: Sequence[int]) -> tuple[int, ...]:
    ga = np.array([g.a for g in gens], dtype=np.int64)
    gb = np.array([g.b for g in gens], dtype=np.int64)
    labels = np.array(list(product(*[range(q) for q in moduli])), dtype=np.int64)
    idx = const.indices_of(labels @ ga, labels @ gb)
    return tuple(int(i) for i in idx)


def make_labeling(
    const: Constellation,
    kind: str,
    generators: Sequence[RingElement] | None = None,
    poly: dict[int, tuple[int, int]] | None = None,
) -> LabelingMap:
    """Build a homomorphic labeling of the given kind.

    ``generators`` is required for the custom kind and gives one ring element
    per label component.  ``poly`` optionally fixes the quadratic (c1, c0)
    used for F_{q^2} by base prime q.
    """
    spec = const.spec
    levels = _level_structure(spec, poly)
    ring = spec.ring
    if kind == CRT_RING_ISO:
        gens = _component_generators(levels, crt_idempotents(spec.primes))
    elif kind == MODULE_ISO_GENERAL:
        elems = [p.element for p in spec.primes]
        rest = [_product((e for j, e in enumerate(elems) if j != i), ring) for i in range(len(elems))]
        gens = _component_generators(levels, rest)
    elif kind == EXTFIELD_RING_ISO:
        if len(levels) != 1 or levels[0].degree != 2:
            raise LabelingError("extension-field labeling needs a single inert prime")
        gens = _component_generators(levels, [RingElement.one(ring)])
    elif kind == MODULE_ISO_CUSTOM:
        if generators is None:
            raise LabelingError("custom labeling needs generators")
        gens = list(generators)
    elif kind == NAIVE_UNGERBOECK:
        return make_naive_ungerboeck(const)
    else:
        raise LabelingError(f"unknown labeling kind {kind!r}")
    moduli = [lev.q for lev in levels for _ in range(lev.degree)]
    if len(gens) != len(moduli):
        raise LabelingError(f"expected {len(moduli)} generators, got {len(gens)}")
    if any(g.ring != ring for g in gens):
        raise LabelingError("generators must live in the constellation ring")
    gens = [const.representative(g) for g in gens]
    forward = _module_map(const, gens, moduli)
    if len(set(forward)) != const.size:
        raise LabelingError("generators are not independent: map is not bijective")
    return LabelingMap(const, kind, levels, tuple(gens), forward)


def make_naive_ungerboeck(const: Constellation) -> LabelingMap:
    """Set-partitioning labeling that ignores the algebra.

    The first label component is the residue mod phi_1 (so each value picks a
    coset of phi_1 R, the subsets with the largest intra-subset distance).
    Inside a coset the second component is the residue mod phi_2 measured from
    the coset's own minimum-energy member.  Every coset map is an isomorphism,
    but the anchors do not add up, so the whole labeling is not additive.
    """
    spec = const.spec
    if len(spec.primes) != 2 or any(p.degree != 1 for p in spec.primes):
        raise LabelingError("naive Ungerboeck labeling needs two degree-one primes")
    q1, q2 = (p.residue_size for p in spec.primes)
    if q1 != q2:
        raise LabelingError("naive Ungerboeck labeling needs a q^2-point constellation")
    q = q1
    r1, r2 = (residue_of_generator(p) for p in spec.primes)
    a, b = const.coords
    s1 = (a + b * r1) % q
    s2 = (a + b * r2) % q
    anchor = {}
    for i in range(const.size):  # points are sorted by energy then (Re, Im)
        anchor.setdefault(int(s1[i]), int(s2[i]))
    forward = [0] * const.size
    for i in range(const.size):
        v1, v2 = int(s1[i]), (int(s2[i]) - anchor[int(s1[i])]) % q
        forward[v1 * q + v2] = i
    levels = _level_structure(spec, None)
    return LabelingMap(const, NAIVE_UNGERBOECK, levels, None, tuple(forward))


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class HomomorphismReport:
    kind: str
    additive: bool
    additive_counterexample: dict | None
    multiplicative: bool | None
    multiplicative_counterexample: dict | None

    @property
    def ok(self) -> bool:
        return self.additive and self.multiplicative is not False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "additive": self.additive,
            "additive_counterexample": self.additive_counterexample,
            "multiplicative": self.multiplicative,
            "multiplicative_counterexample": self.multiplicative_counterexample,
        }


def _point_ops(const: Constellation, op: str) -> np.ndarray:
    """Table of point indices of x_i op x_j reduced mod Phi."""
    a, b = const.coords
    A1, A2 = a[:, None], a[None, :]
    B1, B2 = b[:, None], b[None, :]
    if op == "add":
        ra, rb = A1 + A2, B1 + B2
    elif const.spec.ring == GAUSSIAN:
        ra, rb = A1 * A2 - B1 * B2, A1 * B2 + B1 * A2
    elif const.spec.ring == EISENSTEIN:
        ra, rb = A1 * A2 - B1 * B2, A1 * B2 + B1 * A2 - B1 * B2
    else:
        ra, rb = A1 * A2, np.zeros_like(A1 * A2)
    return const.indices_of(ra, rb)


def _check_table(lm: LabelingMap, label_op: np.ndarray, point_op: np.ndarray) -> dict | None:
    fwd = np.array(lm.forward)
    got = point_op[fwd[:, None], fwd[None, :]]
    want = fwd[label_op]
    bad = np.argwhere(got != want)
    if bad.size == 0:
        return None
    u, v = (int(t) for t in bad[0])
    return {
        "u": list(lm.label_of_index(u)),
        "v": list(lm.label_of_index(v)),
        "expected_label": list(lm.label_of_index(int(label_op[u, v]))),
        "observed_label": list(lm.label_of_index(lm.inverse[int(got[u, v])])),
    }


def verify_homomorphism(lm: LabelingMap) -> HomomorphismReport:
    """Exhaustive check of M(u+v) = M(u)+M(v) (and M(uv) = M(u)M(v) for ring kinds)."""
    const = lm.constellation
    add_ce = _check_table(lm, lm.add_table, _point_ops(const, "add"))
    mul_ok, mul_ce = None, None
    if lm.kind in RING_KINDS:
        mul_ce = _check_table(lm, lm.mul_table, _point_ops(const, "mul"))
        mul_ok = mul_ce is None
    return HomomorphismReport(lm.kind, add_ce is None, add_ce, mul_ok, mul_ce)


def demap(lm: LabelingMap, x: RingElement) -> tuple[int, ...]:
    return lm.demap(x)


# ---------------------------------------------------------------------------
# dumps


def _elem_json(x: RingElement) -> list[int]:
    return [x.a, x.b]


def labeling_header(lm: LabelingMap) -> dict:
    spec = lm.constellation.spec
    return {
        "ring": spec.ring,
        "primes": [
            {"element": _elem_json(p.element), "residue_size": p.residue_size, "behavior": p.behavior}
            for p in spec.primes
        ],
        "modulus": _elem_json(lm.constellation.modulus),
        "size": lm.constellation.size,
        "kind": lm.kind,
        "generators": None if lm.generators is None else [_elem_json(g) for g in lm.generators],
        "polys": {str(lev.q): list(lev.poly) for lev in lm.levels if lev.poly is not None},
        "tie_break": spec.tie_break,
        "columns": ["a", "b", "re", "im"] + [f"v{i + 1}" for i in range(lm.n_components)],
    }


def dump_csv(lm: LabelingMap, path: str | Path) -> None:
    """Write one row per point: integer basis coordinates, complex value, label."""
    const = lm.constellation
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(labeling_header(lm)["columns"])
        for i, p in enumerate(const.points):
            z = complex(p)
            label = lm.label_of_index(lm.inverse[i])
            w.writerow([p.a, p.b, repr(z.real), repr(z.imag), *label])


def dump_header(lm: LabelingMap, path: str | Path, extra: dict | None = None) -> None:
    data = labeling_header(lm)
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
