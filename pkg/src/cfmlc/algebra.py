"""Exact arithmetic in the integers, Gaussian integers and Eisenstein integers.

Elements are stored as integer pairs ``(a, b)`` meaning ``a + b*j`` for the
Gaussian integers and ``a + b*w`` for the Eisenstein integers, where
``w = -1/2 + j*sqrt(3)/2`` satisfies ``w**2 = -1 - w``.  Also provides prime
classification, Euclidean division, Bezout coefficients and small prime-field /
quadratic-extension-field arithmetic.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

INTEGERS = "integers"
GAUSSIAN = "gaussian"
EISENSTEIN = "eisenstein"
RINGS = (INTEGERS, GAUSSIAN, EISENSTEIN)

_OMEGA = complex(-0.5, math.sqrt(3.0) / 2.0)
_INT64 = 2**63 - 1


class RingMismatchError(ValueError):
    """Raised when two operands live in different rings or fields."""


def _check(value: int) -> int:
    if abs(value) > _INT64:
        raise OverflowError("ring coordinate exceeds 64-bit range")
    return value


@dataclass(frozen=True, order=False)
class RingElement:
    """An element ``a + b*u`` of one of the three rings, with ``u`` in {0, j, w}."""

    ring: str
    a: int
    b: int = 0

    def __post_init__(self):
        if self.ring not in RINGS:
            raise ValueError(f"unknown ring tag {self.ring!r}")
        if self.ring == INTEGERS and self.b != 0:
            raise ValueError("integer elements have b == 0")
        object.__setattr__(self, "a", _check(int(self.a)))
        object.__setattr__(self, "b", _check(int(self.b)))

    # construction helpers
    @classmethod
    def zero(cls, ring: str) -> "RingElement":
        return cls(ring, 0, 0)

    @classmethod
    def one(cls, ring: str) -> "RingElement":
        return cls(ring, 1, 0)

    def _same(self, other) -> "RingElement":
        if isinstance(other, int):
            return RingElement(self.ring, other, 0)
        if not isinstance(other, RingElement):
            return NotImplemented
        if other.ring != self.ring:
            raise RingMismatchError(f"{self.ring} vs {other.ring}")
        return other

    def __add__(self, other):
        other = self._same(other)
        if other is NotImplemented:
            return other
        return RingElement(self.ring, self.a + other.a, self.b + other.b)

    __radd__ = __add__

    def __neg__(self):
        return RingElement(self.ring, -self.a, -self.b)

    def __sub__(self, other):
        other = self._same(other)
        if other is NotImplemented:
            return other
        return RingElement(self.ring, self.a - other.a, self.b - other.b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._same(other)
        if other is NotImplemented:
            return other
        a, b, c, d = self.a, self.b, other.a, other.b
        if self.ring == GAUSSIAN:
            return RingElement(self.ring, a * c - b * d, a * d + b * c)
        if self.ring == EISENSTEIN:
            # w^2 = -1 - w
            return RingElement(self.ring, a * c - b * d, a * d + b * c - b * d)
        return RingElement(self.ring, a * c, 0)

    __rmul__ = __mul__

    def conj(self) -> "RingElement":
        if self.ring == GAUSSIAN:
            return RingElement(self.ring, self.a, -self.b)
        if self.ring == EISENSTEIN:
            # conj(w) = w^2 = -1 - w
            return RingElement(self.ring, self.a - self.b, -self.b)
        return self

    def __complex__(self) -> complex:
        if self.ring == GAUSSIAN:
            return complex(self.a, self.b)
        if self.ring == EISENSTEIN:
            return self.a + self.b * _OMEGA
        return complex(self.a, 0.0)

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def lex_key(self) -> tuple[int, int]:
        """Integer key ordering elements by (Re, Im) of their complex value."""
        if self.ring == EISENSTEIN:
            # Re = (2a - b)/2, Im = b*sqrt(3)/2
            return (2 * self.a - self.b, self.b)
        return (self.a, self.b)

    def __str__(self) -> str:
        if self.ring == INTEGERS:
            return str(self.a)
        sym = "j" if self.ring == GAUSSIAN else "w"
        sign = "+" if self.b >= 0 else "-"
        return f"{self.a}{sign}{abs(self.b)}{sym}"


def element(ring: str, a: int, b: int = 0) -> RingElement:
    return RingElement(ring, a, b)


def norm(x: RingElement) -> int:
    """Algebraic norm: a^2, a^2 + b^2 or a^2 - ab + b^2."""
    a, b = x.a, x.b
    if x.ring == GAUSSIAN:
        return a * a + b * b
    if x.ring == EISENSTEIN:
        return a * a - a * b + b * b
    return a * a


def quotient_size(x: RingElement) -> int:
    """Number of residue classes of R/xR."""
    if x.ring == INTEGERS:
        return abs(x.a)
    return norm(x)


def units(ring: str) -> list[RingElement]:
    if ring == GAUSSIAN:
        return [RingElement(ring, *ab) for ab in ((1, 0), (0, 1), (-1, 0), (0, -1))]
    if ring == EISENSTEIN:
        # 1, -w^2 = 1 + w, w, -1, w^2 = -1 - w, -w  (counter-clockwise)
        return [RingElement(ring, *ab) for ab in ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))]
    return [RingElement(ring, 1), RingElement(ring, -1)]


def is_unit(x: RingElement) -> bool:
    return norm(x) == 1


def unit_inverse(u: RingElement) -> RingElement:
    if not is_unit(u):
        raise ValueError(f"{u} is not a unit")
    return u.conj()


def euclid_divmod(x: RingElement, m: RingElement) -> tuple[RingElement, RingElement]:
    """Return (q, r) with x = q*m + r and r of minimum norm among rounding candidates.

    Ties are broken by the smallest real part and then the smallest imaginary
    part of the remainder.
    """
    if x.ring != m.ring:
        raise RingMismatchError(f"{x.ring} vs {m.ring}")
    if m.is_zero():
        raise ZeroDivisionError("division by zero ring element")
    ring = x.ring
    n = norm(m)
    num = x * m.conj()  # x/m = num/n
    best = None
    for qa in {num.a // n, -(-num.a // n)}:
        for qb in {num.b // n, -(-num.b // n)}:
            q = RingElement(ring, qa, qb)
            r = x - q * m
            key = (norm(r), r.lex_key())
            if best is None or key < best[0]:
                best = (key, q, r)
    _, q, r = best
    return q, r


def mod(x: RingElement, m: RingElement) -> RingElement:
    return euclid_divmod(x, m)[1]


def divides(m: RingElement, x: RingElement) -> bool:
    return euclid_divmod(x, m)[1].is_zero()


def bezout(x: RingElement, y: RingElement) -> tuple[RingElement, RingElement, RingElement]:
    """Extended Euclid: returns (g, s, t) with s*x + t*y = g = gcd(x, y)."""
    if x.ring != y.ring:
        raise RingMismatchError(f"{x.ring} vs {y.ring}")
    if x.is_zero() and y.is_zero():
        raise ValueError("bezout of two zeros is undefined")
    ring = x.ring
    one, zero = RingElement.one(ring), RingElement.zero(ring)
    r0, r1 = x, y
    s0, s1 = one, zero
    t0, t1 = zero, one
    while not r1.is_zero():
        q, r = euclid_divmod(r0, r1)
        r0, r1 = r1, r
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    # normalise the gcd to its canonical associate (1 for coprime inputs)
    g = canonical_associate(r0)
    u = next(u for u in units(ring) if u * r0 == g)
    return g, u * s0, u * t0


# ---------------------------------------------------------------------------
# primes


def is_rational_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


SPLIT, INERT, RAMIFIED, RATIONAL = "split", "inert", "ramified", "rational"


@dataclass(frozen=True)
class PrimeSpec:
    """A ring prime with the size of its residue field and its splitting behaviour."""

    element: RingElement
    residue_size: int
    behavior: str

    @property
    def ring(self) -> str:
        return self.element.ring

    @property
    def base_prime(self) -> int:
        """Characteristic of the residue field."""
        if self.behavior == INERT:
            return math.isqrt(self.residue_size)
        return self.residue_size

    @property
    def degree(self) -> int:
        return 2 if self.behavior == INERT else 1

    @classmethod
    def from_element(cls, x: RingElement) -> "PrimeSpec":
        """Classify a ring element as a prime; raises if it is not one."""
        n = norm(x)
        if x.ring == INTEGERS:
            p = abs(x.a)
            if not is_rational_prime(p):
                raise ValueError(f"{x} is not prime")
            return cls(x, p, RATIONAL)
        if is_rational_prime(n):
            ramified = (x.ring == EISENSTEIN and n == 3) or (x.ring == GAUSSIAN and n == 2)
            return cls(x, n, RAMIFIED if ramified else SPLIT)
        p = math.isqrt(n)
        if p * p == n and is_rational_prime(p):
            if _inert(p, x.ring) and any(x == u * p for u in units(x.ring)):
                return cls(x, n, INERT)
        raise ValueError(f"{x} is not a prime of the {x.ring} ring")


def _inert(p: int, ring: str) -> bool:
    if ring == EISENSTEIN:
        return p % 3 == 2
    if ring == GAUSSIAN:
        return p % 4 == 3
    return False


def canonical_associate(x: RingElement) -> RingElement:
    """The associate of x whose argument lies in [0, 2*pi/|units|)."""
    if x.is_zero():
        return x
    def angle(y: RingElement) -> float:
        ang = cmath.phase(complex(y)) % (2 * math.pi)
        return 0.0 if ang > 2 * math.pi - 1e-9 else ang

    return min((u * x for u in units(x.ring)), key=angle)


def classify_rational_prime(p: int, ring: str):
    """Factor the rational prime p in the given ring.

    Returns one PrimeSpec for ramified or inert primes, and a pair
    ``(phi, conj(phi))`` for split primes.  ``phi`` is the associate in the
    fundamental sector of larger argument.
    """
    if not is_rational_prime(p):
        raise ValueError(f"{p} is not prime")
    if ring == INTEGERS:
        return PrimeSpec(RingElement(ring, p), p, RATIONAL)
    if _inert(p, ring):
        return PrimeSpec(RingElement(ring, p), p * p, INERT)
    bound = 2 * math.isqrt(p) + 2
    found = None
    for a in range(-bound, bound + 1):
        for b in range(-bound, bound + 1):
            x = RingElement(ring, a, b)
            if norm(x) == p:
                found = x
                break
        if found is not None:
            break
    if found is None:
        raise AssertionError(f"no element of norm {p}")
    if (ring == EISENSTEIN and p == 3) or (ring == GAUSSIAN and p == 2):
        return PrimeSpec(canonical_associate(found), p, RAMIFIED)
    c1 = canonical_associate(found)
    c2 = canonical_associate(found.conj())
    phi = max(c1, c2, key=lambda y: cmath.phase(complex(y)))
    return PrimeSpec(phi, p, SPLIT), PrimeSpec(phi.conj(), p, SPLIT)


# ---------------------------------------------------------------------------
# finite fields


@dataclass(frozen=True)
class FieldElement:
    modulus: int
    value: int

    def __post_init__(self):
        if not is_rational_prime(self.modulus):
            raise ValueError(f"modulus {self.modulus} is not prime")
        object.__setattr__(self, "value", self.value % self.modulus)

    def _same(self, other) -> "FieldElement":
        if isinstance(other, int):
            return FieldElement(self.modulus, other)
        if other.modulus != self.modulus:
            raise RingMismatchError(f"F_{self.modulus} vs F_{other.modulus}")
        return other

    def __add__(self, other):
        other = self._same(other)
        return FieldElement(self.modulus, self.value + other.value)

    def __sub__(self, other):
        other = self._same(other)
        return FieldElement(self.modulus, self.value - other.value)

    def __neg__(self):
        return FieldElement(self.modulus, -self.value)

    def __mul__(self, other):
        other = self._same(other)
        return FieldElement(self.modulus, self.value * other.value)

    def inverse(self) -> "FieldElement":
        if self.value == 0:
            raise ZeroDivisionError("zero has no inverse")
        return FieldElement(self.modulus, pow(self.value, -1, self.modulus))

    def __int__(self) -> int:
        return self.value


def poly_is_irreducible(q: int, poly: tuple[int, int]) -> bool:
    """True if x^2 + c1*x + c0 has no root in F_q; ``poly = (c1, c0)``."""
    c1, c0 = poly
    return all((x * x + c1 * x + c0) % q != 0 for x in range(q))


def default_poly(q: int) -> tuple[int, int]:
    """Irreducible monic quadratic used for F_{q^2}; returned as (c1, c0)."""
    if q == 5:
        return (2, 4)
    for c1, c0 in product(range(q), range(q)):
        if poly_is_irreducible(q, (c1, c0)):
            return (c1, c0)
    raise ValueError(f"no irreducible quadratic over F_{q}")


@dataclass(frozen=True)
class ExtFieldElement:
    """Element v1*x + v0 of F_q[x]/(x^2 + c1*x + c0)."""

    base_prime: int
    coeffs: tuple[int, int]
    poly: tuple[int, int]

    def __post_init__(self):
        q = self.base_prime
        if not is_rational_prime(q):
            raise ValueError(f"{q} is not prime")
        poly = (self.poly[0] % q, self.poly[1] % q)
        if not poly_is_irreducible(q, poly):
            raise ValueError(f"x^2+{poly[0]}x+{poly[1]} is reducible over F_{q}")
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "coeffs", (self.coeffs[0] % q, self.coeffs[1] % q))

    def _same(self, other) -> "ExtFieldElement":
        if other.base_prime != self.base_prime or other.poly != self.poly:
            raise RingMismatchError("extension fields differ")
        return other

    def _new(self, v1: int, v0: int) -> "ExtFieldElement":
        return ExtFieldElement(self.base_prime, (v1, v0), self.poly)

    def __add__(self, other):
        other = self._same(other)
        return self._new(self.coeffs[0] + other.coeffs[0], self.coeffs[1] + other.coeffs[1])

    def __sub__(self, other):
        other = self._same(other)
        return self._new(self.coeffs[0] - other.coeffs[0], self.coeffs[1] - other.coeffs[1])

    def __neg__(self):
        return self._new(-self.coeffs[0], -self.coeffs[1])

    def __mul__(self, other):
        other = self._same(other)
        v1, v0 = ext_mul(self.coeffs, other.coeffs, self.poly, self.base_prime)
        return self._new(v1, v0)

    def is_zero(self) -> bool:
        return self.coeffs == (0, 0)

    def inverse(self) -> "ExtFieldElement":
        if self.is_zero():
            raise ZeroDivisionError("zero has no inverse")
        q = self.base_prime
        # the multiplicative group has order q^2 - 1
        result = self._new(0, 1)
        base, e = self, q * q - 2
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result


def ext_mul(u: Sequence[int], v: Sequence[int], poly: tuple[int, int], q: int) -> tuple[int, int]:
    """Multiply (u1*x + u0)(v1*x + v0) modulo x^2 + c1*x + c0 over F_q."""
    c1, c0 = poly
    u1, u0 = u
    v1, v0 = v
    top = u1 * v1  # coefficient of x^2, and x^2 = -c1*x - c0
    return ((u1 * v0 + u0 * v1 - top * c1) % q, (u0 * v0 - top * c0) % q)


def field_arith(x: FieldElement, y: FieldElement, op: str) -> FieldElement:
    return _apply(x, y, op)


def extfield_arith(x: ExtFieldElement, y: ExtFieldElement, op: str) -> ExtFieldElement:
    return _apply(x, y, op)


def _apply(x, y, op):
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "neg":
        return -x
    raise ValueError(f"unknown op {op!r}")


def ring_arith(x: RingElement, y: RingElement | None, op: str) -> RingElement:
    """Functional front end to the RingElement operators."""
    if op == "neg":
        return -x
    if op == "conj":
        return x.conj()
    if y is None:
        raise ValueError(f"{op} needs two operands")
    return _apply(x, y, op)


# ---------------------------------------------------------------------------
# ideal reduction


class IdealReducer:
    """Canonical reduction modulo the principal ideal m*R.

    Uses the Hermite normal form of the ideal viewed as a sublattice of Z^2 (or
    Z), so congruent elements map to the same key.
    """

    def __init__(self, m: RingElement):
        if m.is_zero():
            raise ValueError("modulus must be nonzero")
        self.modulus = m
        self.ring = m.ring
        if self.ring == INTEGERS:
            self.n1, self.n2, self.k = abs(m.a), 1, 0
            return
        unit2 = RingElement(self.ring, 0, 1)
        v1, v2 = m, m * unit2
        # column operations on (a, b) vectors until one has b == 0
        x1, y1, x2, y2 = v1.a, v1.b, v2.a, v2.b
        while y2 != 0:
            t = y1 // y2
            x1, y1 = x1 - t * x2, y1 - t * y2
            x1, y1, x2, y2 = x2, y2, x1, y1
        # now (x2, 0) and (x1, y1) generate the lattice
        n1 = abs(x2)
        if y1 < 0:
            x1, y1 = -x1, -y1
        self.n1, self.n2, self.k = n1, y1, x1 % n1
        assert n1 * y1 == norm(m)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def key(self, x: RingElement) -> tuple[int, int]:
        if x.ring != self.ring:
            raise RingMismatchError(f"{x.ring} vs {self.ring}")
        if self.ring == INTEGERS:
            return (x.a % self.n1, 0)
        t = x.b // self.n2
        a = x.a - t * self.k
        return ((a % self.n1), x.b - t * self.n2)

    def congruent(self, x: RingElement, y: RingElement) -> bool:
        return self.key(x) == self.key(y)


def enumerate_ball(ring: str, radius: float) -> Iterator[RingElement]:
    """All ring elements of absolute value at most ``radius``."""
    r = int(math.ceil(radius)) + 1
    if ring == INTEGERS:
        for a in range(-r, r + 1):
            if abs(a) <= radius:
                yield RingElement(ring, a)
        return
    span = 2 * r if ring == EISENSTEIN else r
    r2 = radius * radius
    for a in range(-span, span + 1):
        for b in range(-span, span + 1):
            x = RingElement(ring, a, b)
            if norm(x) <= r2 + 1e-9:
                yield x


def residue_of_generator(phi: PrimeSpec) -> int:
    """Integer r with u = r mod phi, where u is j or w; degree-one primes only."""
    if phi.degree != 1:
        raise ValueError("only defined for primes with prime residue field")
    x = phi.element
    q = phi.residue_size
    if x.ring == INTEGERS:
        return 0
    u = RingElement(x.ring, 0, 1)
    for r in range(q):
        if divides(x, u - r):
            return r
    raise AssertionError("generator has no integer residue")
