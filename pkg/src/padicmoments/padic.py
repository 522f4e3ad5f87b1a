"""Exact arithmetic in Z/p^wZ: valuations, p-adic logarithm, square-root
branches, and Hensel lifting.

All residues are exact unsigned integers modulo p^w; no floats enter any
computation here.  Values are immutable after construction and every
operation is a pure function, so everything in this module is safe to use
from many threads without synchronization.

Vectorized (numpy int64) kernels are provided for the inner loops of large
sweeps; they implement the same Newton/series recurrences as the scalar
reference functions and are cross-checked against them in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

ORD_INFINITY = math.inf

# numpy int64 modular products stay exact while modulus^2 < 2^63
_INT64_MOD_LIMIT = 3_000_000_000


class PadicError(ValueError):
    """Base class for p-adic domain violations."""


class NotOneUnitError(PadicError):
    """Argument of the p-adic logarithm is not congruent to 1 mod p."""


class NonResidueError(PadicError):
    """Square root requested for a non-unit or a quadratic non-residue."""


class SingularLiftError(PadicError):
    """Hensel lifting attempted at a root where f' vanishes mod p."""


class PrecisionError(PadicError):
    """Operation would claim more precision than its inputs carry."""


def is_odd_prime(p: int) -> bool:
    if p < 3 or p % 2 == 0:
        return False
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def ordp_int(value: int, p: int):
    """Largest k with p^k | value; +inf for value == 0."""
    if value == 0:
        return ORD_INFINITY
    v = abs(value)
    k = 0
    while v % p == 0:
        v //= p
        k += 1
    return k


@dataclass(frozen=True)
class PrimePowerModulus:
    """An odd prime power q = p^n with its floor/ceil half-powers."""

    p: int
    n: int
    q: int = field(init=False)
    rt_star: int = field(init=False)   # p^floor(n/2)
    rt_ceil: int = field(init=False)   # p^ceil(n/2)

    def __post_init__(self):
        if not is_odd_prime(self.p):
            raise ValueError(f"p must be an odd prime, got {self.p}")
        if self.n < 1:
            raise ValueError(f"exponent must be >= 1, got {self.n}")
        object.__setattr__(self, "q", self.p ** self.n)
        object.__setattr__(self, "rt_star", self.p ** (self.n // 2))
        object.__setattr__(self, "rt_ceil", self.p ** ((self.n + 1) // 2))

    def __str__(self):
        return f"{self.p}^{self.n}"


@dataclass(frozen=True)
class PadicResidue:
    """An integer known exactly modulo p^w.

    `w` is the working precision.  Division by an element of valuation d
    requires d <= valuation of the dividend and costs d digits of
    precision, which is tracked in the result's `w`.
    """

    p: int
    w: int
    value: int

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("precision must be >= 1")
        object.__setattr__(self, "value", self.value % self.p ** self.w)

    @property
    def modulus(self) -> int:
        return self.p ** self.w

    def ordp(self):
        return ordp_int(self.value, self.p)

    def is_unit(self) -> bool:
        return self.value % self.p != 0

    def _check(self, other: "PadicResidue"):
        if self.p != other.p:
            raise ValueError("mixed primes")

    def _join(self, other: "PadicResidue") -> int:
        self._check(other)
        return min(self.w, other.w)

    def reduce(self, w: int) -> "PadicResidue":
        if w > self.w:
            raise PrecisionError(f"cannot raise precision {self.w} -> {w}")
        return PadicResidue(self.p, w, self.value % self.p ** w)

    def __add__(self, other):
        other = self._coerce(other)
        w = self._join(other)
        return PadicResidue(self.p, w, self.value + other.value)

    def __sub__(self, other):
        other = self._coerce(other)
        w = self._join(other)
        return PadicResidue(self.p, w, self.value - other.value)

    def __mul__(self, other):
        other = self._coerce(other)
        w = self._join(other)
        return PadicResidue(self.p, w, self.value * other.value)

    def __neg__(self):
        return PadicResidue(self.p, self.w, -self.value)

    def _coerce(self, other) -> "PadicResidue":
        if isinstance(other, PadicResidue):
            return other
        if isinstance(other, int):
            return PadicResidue(self.p, self.w, other)
        raise TypeError(f"cannot combine PadicResidue with {type(other).__name__}")

    def div(self, other: "PadicResidue") -> "PadicResidue":
        """Exact division with precision-loss tracking.

        Requires ordp(other) <= ordp(self); the result is exact modulo
        p^(min(w) - ordp(other)).
        """
        other = self._coerce(other)
        d = other.ordp()
        if d is ORD_INFINITY:
            raise ZeroDivisionError("division by zero residue")
        if self.value != 0 and self.ordp() < d:
            raise PadicError(
                f"division undefined: ord {self.ordp()} < divisor ord {d}")
        w = self._join(other) - d
        if w < 1:
            raise PrecisionError("division consumed all working precision")
        pw = self.p ** w
        num = (self.value % (self.p ** (w + d))) // self.p ** d
        den = (other.value // self.p ** d) % pw
        return PadicResidue(self.p, w, num * pow(den, -1, pw))

    def __repr__(self):
        return f"PadicResidue({self.value} mod {self.p}^{self.w})"


def ordp(x: PadicResidue):
    """p-adic valuation of a residue; +inf sentinel for 0."""
    return x.ordp()


# ---------------------------------------------------------------------------
# p-adic logarithm


def _log_series_length(d: int, p: int, w: int) -> int:
    # term k of log(1+t), ord(t) = d, has valuation >= k*d - floor(log_p k);
    # that lower bound is nondecreasing in k, so stop at the first k at
    # or past the target.
    k = 1
    while k * d - int(math.log(k, p) + 1e-9) < w:
        k += 1
    return k


def plog_int(x: int, p: int, w: int) -> int:
    """log_p(x) mod p^w for an integer x = 1 mod p, treated as exact.

    The alternating series sum_{k>=1} (-1)^(k-1) (x-1)^k / k is truncated
    once all omitted terms have valuation >= w, and evaluated at inflated
    internal precision so divisions by k stay exact.
    """
    if x % p != 1:
        raise NotOneUnitError(f"{x} is not 1 mod {p}")
    t = x - 1
    if t % p ** w == 0:
        return 0
    d = ordp_int(t, p)
    kmax = _log_series_length(d, p, w)
    buffer = int(math.log(kmax, p) + 1e-9) + 1
    big = p ** (w + buffer)
    pw = p ** w
    t %= big
    acc = 0
    power = 1
    for k in range(1, kmax + 1):
        power = power * t % big
        a = ordp_int(k, p)
        unit = k // p ** a
        term = (power // p ** a) * pow(unit, -1, pw) % pw
        acc = (acc - term if k % 2 == 0 else acc + term) % pw
    return acc


def plog(x: PadicResidue, w: int | None = None) -> PadicResidue:
    """p-adic logarithm on 1 + pZ_p, a homomorphism into pZ_p.

    The result is exact mod p^w; the input must carry at least w digits
    (the logarithm is an isometry on 1 + pZ_p, so input precision w
    determines output precision w).
    """
    if w is None:
        w = x.w
    if w > x.w:
        raise PrecisionError(f"input precision {x.w} < target {w}")
    return PadicResidue(x.p, w, plog_int(x.value, x.p, w))


# ---------------------------------------------------------------------------
# square-root branches


@dataclass(frozen=True)
class SqrtBranch:
    """A branch of the p-adic square root, fixed by one chosen root of every
    quadratic residue mod p.

    The canonical branch designates the root whose least nonnegative
    representative lies in [1, (p-1)/2], which makes runs reproducible.
    """

    p: int
    residue_choice: tuple  # residue_choice[u] = chosen root of u mod p, else 0

    @classmethod
    def canonical(cls, p: int) -> "SqrtBranch":
        if not is_odd_prime(p):
            raise ValueError(f"p must be an odd prime, got {p}")
        table = [0] * p
        for r in range(1, (p - 1) // 2 + 1):
            table[r * r % p] = r
        return cls(p, tuple(table))

    def root_mod_p(self, u: int) -> int:
        r = self.residue_choice[u % self.p]
        if r == 0:
            raise NonResidueError(f"{u % self.p} is not a quadratic residue mod {self.p}")
        return r


@lru_cache(maxsize=None)
def canonical_branch(p: int) -> SqrtBranch:
    return SqrtBranch.canonical(p)


def legendre(a: int, p: int) -> int:
    """Legendre symbol (a/p) via the Euler criterion."""
    a %= p
    if a == 0:
        return 0
    s = pow(a, (p - 1) // 2, p)
    return -1 if s == p - 1 else 1


def psqrt_int(x: int, p: int, w: int, branch: SqrtBranch | None = None) -> int:
    """Square root of a unit quadratic residue mod p^w on a fixed branch.

    Newton lifting from the branch's root mod p; the result r satisfies
    r^2 = x (mod p^w) and r = branch(x mod p) (mod p).
    """
    if branch is None:
        branch = canonical_branch(p)
    if x % p == 0:
        raise NonResidueError("square root of a non-unit is outside every branch")
    r = branch.root_mod_p(x)
    k = 1
    while k < w:
        k = min(2 * k, w)
        pk = p ** k
        r = (r - (r * r - x) * pow(2 * r, -1, pk)) % pk
    return r


def psqrt(x: PadicResidue, branch: SqrtBranch | None = None,
          w: int | None = None) -> PadicResidue:
    if w is None:
        w = x.w
    if w > x.w:
        raise PrecisionError(f"input precision {x.w} < target {w}")
    return PadicResidue(x.p, w, psqrt_int(x.value, x.p, w, branch))


# ---------------------------------------------------------------------------
# Hensel lifting


def hensel_lift(f, fprime, root: int, p: int, k: int, w: int) -> int:
    """Lift a simple root of f from mod p^k to mod p^w.

    `f` and `fprime` are callables (x, precision_exponent) -> int giving the
    value mod p^precision.  Requires f(root) = 0 (mod p^k) and f'(root) a
    unit; raises SingularLiftError otherwise.  The lift is the unique root
    mod p^w congruent to `root` mod p^k.
    """
    if k < 1:
        raise ValueError("starting precision must be >= 1")
    if f(root, k) % p ** k != 0:
        raise ValueError(f"{root} is not a root of f mod {p}^{k}")
    if fprime(root, 1) % p == 0:
        raise SingularLiftError("f'(root) = 0 mod p: singular case")
    cur = k
    r = root % p ** k
    while cur < w:
        cur = min(2 * cur, w)
        pk = p ** cur
        r = (r - f(r, cur) * pow(fprime(r, cur), -1, pk)) % pk
    return r % p ** w


# ---------------------------------------------------------------------------
# vectorized kernels (int64 numpy, object-dtype fallback for huge moduli)


def _mod_dtype(modulus: int):
    # products of two reduced residues must stay exact in the array dtype
    if modulus < _INT64_MOD_LIMIT:
        return np.int64
    return object


def inverse_table_mod_p(p: int) -> np.ndarray:
    """inv[u] = u^-1 mod p for units, 0 at u = 0."""
    table = np.zeros(p, dtype=np.int64)
    for u in range(1, p):
        table[u] = pow(u, -1, p)
    return table


def vec_inv_unit(u: np.ndarray, p: int, w: int) -> np.ndarray:
    """Elementwise inverse of unit residues mod p^w (Newton from mod p)."""
    pw = p ** w
    dtype = _mod_dtype(pw)
    u = np.asarray(u, dtype=dtype) % pw
    inv_p = inverse_table_mod_p(p)
    y = inv_p[np.asarray(u % p, dtype=np.int64)].astype(dtype, copy=True)
    k = 1
    while k < w:
        k = min(2 * k, w)
        pk = p ** k
        y = y * (2 - u % pk * y % pk) % pk
    return y


def vec_sqrt_unit(x: np.ndarray, p: int, w: int,
                  branch: SqrtBranch | None = None) -> np.ndarray:
    """Elementwise branch square root of unit quadratic residues mod p^w."""
    if branch is None:
        branch = canonical_branch(p)
    pw = p ** w
    dtype = _mod_dtype(pw)
    x = np.asarray(x, dtype=dtype) % pw
    root_p = np.asarray(branch.residue_choice, dtype=np.int64)
    r0 = root_p[np.asarray(x % p, dtype=np.int64)]
    if np.any(r0 == 0):
        raise NonResidueError("non-residue entry in vectorized square root")
    r = r0.astype(dtype, copy=True)
    k = 1
    while k < w:
        k = min(2 * k, w)
        pk = p ** k
        inv2r = vec_inv_unit(2 * r % pk, p, k)
        r = (r - (r * r % pk - x % pk) * inv2r) % pk
    return r


def vec_plog(x: np.ndarray, p: int, w: int) -> np.ndarray:
    """Elementwise log_p of residues = 1 mod p, exact mod p^w."""
    pw = p ** w
    x = np.asarray(x, dtype=object) % pw
    t = (x - 1) % pw
    if np.any(t % p != 0):
        raise NotOneUnitError("entry not congruent to 1 mod p")
    kmax = _log_series_length(1, p, w)
    buffer = int(math.log(kmax, p) + 1e-9) + 1
    big = p ** (w + buffer)
    dtype = _mod_dtype(big)
    t = t.astype(dtype)
    acc = np.zeros_like(t)
    power = np.ones_like(t)
    for k in range(1, kmax + 1):
        power = power * t % big
        a = ordp_int(k, p)
        unit_inv = pow(k // p ** a, -1, pw)
        term = power // p ** a % pw * unit_inv % pw
        acc = (acc - term if k % 2 == 0 else acc + term) % pw
    return acc % pw
