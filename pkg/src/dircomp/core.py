"""Finitely supported Dirichlet series, characters on the polytorus, and norms.

A Dirichlet polynomial ``f(s) = sum a_n n^{-s}`` is stored as a sparse map
``n -> a_n``.  Everything here is immutable; operations return new objects.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "DirichletPolynomial",
    "Character",
    "Space",
    "HARDY",
    "bergman",
    "evaluate",
    "derivative",
    "multiply",
    "exponentiate",
    "twist",
    "character_power",
    "norm_squared",
    "factorize",
    "smooth_semigroup",
    "lattice_points",
    "lattice_characters",
]


# -------------------------------------------------------------- arithmetic

_SPF = np.zeros(2, dtype=np.int64)


def _grow_sieve(limit: int) -> None:
    global _SPF
    size = max(limit + 1, 2 * len(_SPF))
    spf = np.zeros(size, dtype=np.int64)
    for p in range(2, int(math.isqrt(size - 1)) + 1):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    idx = np.nonzero(spf == 0)[0]
    spf[idx] = idx
    _SPF = spf


@lru_cache(maxsize=1 << 16)
def factorize(n: int) -> tuple[tuple[int, int], ...]:
    """Prime factorization of ``n`` as ``((p, e), ...)`` with ascending p."""
    if n < 1:
        raise ValueError(f"cannot factor {n}")
    out: list[tuple[int, int]] = []
    if n > 10**7:
        # large indices (operator rows) are products of small primes; trial division
        m, p = n, 2
        while p * p <= m:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            if e:
                out.append((p, e))
            p += 1 if p == 2 else 2
        if m > 1:
            out.append((m, 1))
        return tuple(out)
    if n >= len(_SPF):
        _grow_sieve(n)
    m = n
    while m > 1:
        p = int(_SPF[m])
        e = 0
        while m % p == 0:
            m //= p
            e += 1
        out.append((p, e))
    return tuple(out)


def smooth_semigroup(generators: Iterable[int], limit: int, max_count: int | None = None) -> list[int]:
    """All products of ``generators`` (with repetition) that are <= limit, incl. 1.

    Raises OverflowError when more than ``max_count`` elements would be produced.
    """
    gens = sorted({int(g) for g in generators if g > 1})
    found = {1}
    frontier = [1]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = x * g
                if y > limit:
                    break
                if y not in found:
                    found.add(y)
                    nxt.append(y)
        if max_count is not None and len(found) > max_count:
            raise OverflowError(f"semigroup below {limit} exceeds {max_count} elements")
        frontier = nxt
    return sorted(found)


# --------------------------------------------------------------- types


@dataclass(frozen=True)
class Space:
    """Hardy space H^2 (``alpha is None``) or Bergman space A_alpha, alpha > -1."""

    alpha: float | None = None

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > -1:
            raise ValueError(f"Bergman parameter must exceed -1, got {self.alpha}")

    @property
    def is_hardy(self) -> bool:
        return self.alpha is None

    def weight(self, n):
        """Squared norm of the monomial n^{-s} in this space (vectorized)."""
        if self.alpha is None:
            return np.ones_like(np.asarray(n, dtype=float))
        return (1.0 + np.log(np.asarray(n, dtype=float))) ** (-(1.0 + self.alpha))

    def __str__(self):
        return "hardy" if self.alpha is None else f"bergman({self.alpha:g})"

    @classmethod
    def parse(cls, text: str) -> "Space":
        text = text.strip().lower()
        if text in ("hardy", "h2"):
            return HARDY
        if text.startswith("bergman"):
            inner = text[len("bergman"):].strip("():= ")
            return cls(float(inner) if inner else 0.0)
        raise ValueError(f"unknown space {text!r}")


HARDY = Space()


def bergman(alpha: float) -> Space:
    return Space(float(alpha))


class DirichletPolynomial:
    """Finite Dirichlet series ``sum_n a_n n^{-s}``.

    Exact zero coefficients are dropped on construction; anything else,
    however small, is kept.
    """

    __slots__ = ("_coeffs", "_idx", "_vals")

    def __init__(self, coeffs: Mapping[int, complex] | None = None):
        clean: dict[int, complex] = {}
        for n, a in sorted((coeffs or {}).items()):
            n = int(n)
            if n < 1:
                raise ValueError(f"Dirichlet index must be >= 1, got {n}")
            a = complex(a)
            if a != 0:
                clean[n] = a
        self._coeffs = MappingProxyType(clean)
        self._idx = np.fromiter(clean.keys(), dtype=float, count=len(clean))
        self._vals = np.fromiter(clean.values(), dtype=complex, count=len(clean))

    @property
    def coeffs(self) -> Mapping[int, complex]:
        return self._coeffs

    def __getitem__(self, n: int) -> complex:
        return self._coeffs.get(n, 0j)

    def __len__(self):
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs.items())

    def __eq__(self, other):
        if not isinstance(other, DirichletPolynomial):
            return NotImplemented
        return dict(self._coeffs) == dict(other._coeffs)

    def __hash__(self):
        return hash(tuple(self._coeffs.items()))

    def __reduce__(self):
        return (DirichletPolynomial, (dict(self._coeffs),))

    def __repr__(self):
        body = ", ".join(f"{n}: {a:.6g}" for n, a in self._coeffs.items())
        return f"DirichletPolynomial({{{body}}})"

    def __add__(self, other: "DirichletPolynomial") -> "DirichletPolynomial":
        out = dict(self._coeffs)
        for n, a in other:
            out[n] = out.get(n, 0j) + a
        return DirichletPolynomial(out)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c: complex) -> "DirichletPolynomial":
        return DirichletPolynomial({n: c * a for n, a in self})

    def __call__(self, s):
        return evaluate(self, s)

    @property
    def indices(self) -> np.ndarray:
        return self._idx

    @property
    def values(self) -> np.ndarray:
        return self._vals

    @property
    def is_zero(self) -> bool:
        return not self._coeffs

    def constant_term(self) -> complex:
        return self[1]

    def support(self) -> frozenset[int]:
        """Primes dividing some index with nonzero coefficient."""
        return frozenset(p for n in self._coeffs for p, _ in factorize(n))

    def without_constant(self) -> "DirichletPolynomial":
        return DirichletPolynomial({n: a for n, a in self if n != 1})

    def abs_sum(self, sigma: float = 0.0, log_power: int = 0, skip_constant: bool = True) -> float:
        """``sum |a_n| (log n)^k n^{-sigma}``, a uniform bound on Re s >= sigma."""
        total = 0.0
        for n, a in self:
            if skip_constant and n == 1:
                continue
            total += abs(a) * math.log(n) ** log_power * n ** (-sigma)
        return total

    # -- serialization: {"2": [re, im]}
    def to_json_obj(self) -> dict:
        return {str(n): [a.real, a.imag] for n, a in self}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "DirichletPolynomial":
        out = {}
        for k, v in obj.items():
            if isinstance(v, (list, tuple)):
                out[int(k)] = complex(float(v[0]), float(v[1]))
            else:
                out[int(k)] = complex(v)
        return cls(out)

    def dumps(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "DirichletPolynomial":
        return cls.from_json_obj(json.loads(text))


class Character:
    """A point of the polytorus: unimodular values ``z_p`` on finitely many primes.

    Primes not listed take the value 1.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[int, complex] | None = None):
        vals = {}
        for p, z in sorted((values or {}).items()):
            p = int(p)
            if factorize(p) != ((p, 1),):
                raise ValueError(f"character keys must be primes, got {p}")
            z = complex(z)
            if abs(abs(z) - 1.0) > 1e-12:
                raise ValueError(f"character value at {p} is not unimodular: |z|={abs(z)}")
            vals[p] = z
        self._values = MappingProxyType(vals)

    @classmethod
    def from_angles(cls, angles: Mapping[int, float]) -> "Character":
        return cls({p: complex(math.cos(t), math.sin(t)) for p, t in angles.items()})

    @classmethod
    def vertical(cls, tau: float, primes: Iterable[int]) -> "Character":
        """The character n -> n^{-i tau}, restricted to ``primes``."""
        return cls.from_angles({p: -tau * math.log(p) for p in primes})

    @property
    def values(self) -> Mapping[int, complex]:
        return self._values

    def angles(self) -> dict[int, float]:
        return {p: math.atan2(z.imag, z.real) for p, z in self._values.items()}

    def __call__(self, n: int) -> complex:
        out = 1 + 0j
        for p, e in factorize(int(n)):
            z = self._values.get(p)
            if z is not None:
                out *= z**e
        return out

    def covers(self, primes: Iterable[int]) -> bool:
        return all(p in self._values for p in primes)

    def conj(self) -> "Character":
        return Character({p: z.conjugate() for p, z in self._values.items()})

    def __eq__(self, other):
        return isinstance(other, Character) and dict(self._values) == dict(other._values)

    def __hash__(self):
        return hash(tuple(self._values.items()))

    def __reduce__(self):
        return (Character, (dict(self._values),))

    def __repr__(self):
        return f"Character({dict(self._values)})"

    def to_json_obj(self) -> dict:
        return {str(p): t for p, t in self.angles().items()}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "Character":
        return cls.from_angles({int(p): float(t) for p, t in obj.items()})


TRIVIAL = Character()


# ------------------------------------------------------------- operations


def evaluate(f: DirichletPolynomial, s):
    """Evaluate the finite sum at ``s`` (scalar or array), ascending in n."""
    s_arr = np.asarray(s, dtype=complex)
    out = np.zeros(s_arr.shape, dtype=complex)
    for n, a in f:
        if n == 1:
            out += a
        else:
            out += a * np.exp(-s_arr * math.log(n))
    if np.ndim(s) == 0:
        return complex(out)
    return out


def derivative(f: DirichletPolynomial) -> DirichletPolynomial:
    return DirichletPolynomial({n: -a * math.log(n) for n, a in f if n != 1})


def multiply(f: DirichletPolynomial, g: DirichletPolynomial) -> DirichletPolynomial:
    """Dirichlet convolution."""
    out: dict[int, complex] = {}
    for m, a in f:
        for n, b in g:
            k = m * n
            out[k] = out.get(k, 0j) + a * b
    return DirichletPolynomial(out)


def exponentiate(f: DirichletPolynomial, N: int, max_terms: int | None = None) -> DirichletPolynomial:
    """Coefficients of ``exp(f)`` with index <= N.

    Uses ``g' = f' g``: ``b_1 = exp(a_1)`` and for m > 1
    ``b_m log m = sum_{d | m, d > 1} a_d log d b_{m/d}``.  Only indices in the
    multiplicative semigroup generated by the support of f can be nonzero, so
    only those are visited.
    """
    if N < 1:
        raise ValueError(f"truncation order must be >= 1, got {N}")
    b1 = complex(np.exp(f[1]))
    terms = [(d, a * math.log(d)) for d, a in f if d != 1]
    if not terms:
        return DirichletPolynomial({1: b1})
    reach = smooth_semigroup((d for d, _ in terms), N, max_terms)
    b: dict[int, complex] = {1: b1}
    for m in reach[1:]:
        acc = 0j
        for d, ad in terms:
            if d > m:
                break
            if m % d == 0:
                q = b.get(m // d)
                if q is not None:
                    acc += ad * q
        b[m] = acc / math.log(m)
    return DirichletPolynomial(b)


def twist(f: DirichletPolynomial, chi: Character) -> DirichletPolynomial:
    """Vertical limit ``f_chi = sum a_n chi(n) n^{-s}``."""
    missing = f.support() - set(chi.values)
    if missing:
        log.info("twist: primes %s absent from character, taking z_p = 1", sorted(missing))
    return DirichletPolynomial({n: a * chi(n) for n, a in f})


def character_power(chi: Character, k: int) -> Character:
    if k < 0:
        raise ValueError("character power must be >= 0")
    if k == 0:
        return TRIVIAL
    return Character({p: z**k for p, z in chi.values.items()})


def norm_squared(f: DirichletPolynomial, space: Space = HARDY) -> float:
    if f.is_zero:
        return 0.0
    return float(np.sum(np.abs(f.values) ** 2 * space.weight(f.indices)))


# ---------------------------------------------------------- polytorus sampling

# odd generators: the n-point lattice is contained in the 2n-point one
_LATTICE_Z = (1, 27, 11, 45, 19, 53, 7, 37)


def lattice_points(dim: int, n: int, shift=None) -> np.ndarray:
    """Rank-1 lattice ``frac(k z / n + shift)`` in [0, 1)^dim, shape (n, dim)."""
    if dim > len(_LATTICE_Z):
        raise ValueError(f"lattice rule supports at most {len(_LATTICE_Z)} dimensions")
    z = np.asarray(_LATTICE_Z[:dim], dtype=float)
    x = np.arange(n)[:, None] * z[None, :] / n
    if shift is not None:
        x = x + np.asarray(shift, dtype=float)[None, :]
    return np.mod(x, 1.0)


def lattice_characters(primes, n: int, shift=None) -> list[Character]:
    """``n`` low-discrepancy characters on the polytorus over ``primes``."""
    primes = sorted(primes)
    pts = lattice_points(len(primes), n, shift)
    return [Character.from_angles({p: 2 * math.pi * x for p, x in zip(primes, row)}) for row in pts]
