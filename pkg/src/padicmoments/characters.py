"""Dirichlet characters modulo odd prime powers.

Characters are represented through the cyclic structure of (Z/p^nZ)^x: a
fixed generator g and a full discrete-log table give O(1) evaluation, which
dominates the runtime of moment scans.  A character is an index a in
[0, phi(q)); its value at a unit u is e(a dlog(u) / phi(q)).

For primitive characters mod p^n (n >= 2) the module extracts the unit A
with chi(1 + kp) = e(A log_p(1 + kp) / p^n) for every k; A is solved from
the single congruence at k = 1 by modular inversion of log_p(1+p)/p and
then verified at all k mod p^(n-1), guarding against branch or precision
bugs.

Tables are built once and then read-only, so shared concurrent reads are
safe.  Tables (p, n, g, dlog, per-character A) can be cached on disk as
versioned JSON keyed by (p, n).
"""

from __future__ import annotations

import json
import os
from functools import lru_cache, cached_property
from pathlib import Path

import numpy as np

from .padic import is_odd_prime, ordp_int, plog_int, vec_plog

CACHE_VERSION = 1
CACHE_ENV_VAR = "PADICMOMENTS_CACHE"


class CharacterError(ValueError):
    pass


class ImprimitiveError(CharacterError):
    """Operation requires a primitive character."""


def factor_prime_power(q: int) -> tuple[int, int]:
    """Write q = p^n for an odd prime p, or raise."""
    if q < 3:
        raise ValueError(f"{q} is not an odd prime power")
    p = 3
    while q % p != 0:
        p += 2
        if p * p > q:
            p = q
            break
    n = ordp_int(q, p)
    if p ** n != q or not is_odd_prime(p):
        raise ValueError(f"{q} is not an odd prime power")
    return p, n


def _prime_factors(m: int) -> list[int]:
    out = []
    d = 2
    while d * d <= m:
        if m % d == 0:
            out.append(d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        out.append(m)
    return out


def find_generator(p: int, n: int) -> int:
    """Smallest positive generator of the cyclic group (Z/p^nZ)^x."""
    if not is_odd_prime(p) or n < 1:
        raise ValueError("need an odd prime p and n >= 1")
    q = p ** n
    phi = q // p * (p - 1)
    primes = _prime_factors(phi)
    g = 2
    while True:
        if g % p != 0 and all(pow(g, phi // ell, q) != 1 for ell in primes):
            return g
        g += 1


@lru_cache(maxsize=None)
def canonical_generator(p: int) -> int:
    """Generator shared by all levels of p: the smallest generator mod p^2.

    A generator mod p^2 generates (Z/p^nZ)^x for every n >= 1, so using it
    at every level keeps the discrete logs of the different levels
    compatible (dlog at level m is the level-n dlog reduced mod phi(p^m)).
    """
    return find_generator(p, 2)


class UnitGroupTable:
    """Generator and discrete-log table for (Z/p^nZ)^x."""

    def __init__(self, p: int, n: int, g: int | None = None):
        if not is_odd_prime(p) or n < 1:
            raise ValueError("need an odd prime p and n >= 1")
        self.p = p
        self.n = n
        self.q = p ** n
        self.phi = self.q // p * (p - 1)
        self.g = canonical_generator(p) if g is None else g
        dlog = np.full(self.q, -1, dtype=np.int64)
        unit_of_index = np.empty(self.phi, dtype=np.int64)
        acc = 1
        for k in range(self.phi):
            unit_of_index[k] = acc
            dlog[acc] = k
            acc = acc * self.g % self.q
        if acc != 1:
            raise CharacterError(f"{self.g} does not generate the units mod {self.q}")
        self.dlog = dlog
        self.unit_of_index = unit_of_index

    @cached_property
    def omega(self) -> np.ndarray:
        """e(k/phi) for k = 0..phi-1."""
        return np.exp(2j * np.pi * np.arange(self.phi) / self.phi)

    def conductor_exponent(self, index: int) -> int:
        """Exponent m of the conductor p^m of the character with this index."""
        index %= self.phi
        if index == 0:
            return 0
        return self.n - min(ordp_int(index, self.p), self.n - 1)

    def inducer_index(self, index: int) -> tuple[int, int]:
        """(m, b): conductor exponent and index of the inducing primitive
        character at level m (same canonical generator)."""
        m = self.conductor_exponent(index)
        if m == 0:
            return 0, 0
        return m, index // self.p ** (self.n - m)

    def lift_index(self, index_low: int, m: int) -> int:
        """Index mod p^n of the lift of a level-m character index."""
        return index_low * self.p ** (self.n - m)

    @cached_property
    def postnikov_log_table(self) -> np.ndarray:
        """log_p(1 + kp)/p mod p^(n-1) for k = 0..p^(n-1)-1 (n >= 2)."""
        pn1 = self.p ** (self.n - 1)
        ks = np.arange(pn1, dtype=object)
        logs = vec_plog((1 + self.p * ks) % self.q, self.p, self.n)
        out = np.asarray(logs, dtype=object) // self.p % pn1
        return out.astype(np.int64)

    @cached_property
    def postnikov_dlog_table(self) -> np.ndarray:
        """dlog(1 + kp)/(p-1) for k = 0..p^(n-1)-1; exact integer division
        because 1 + pZ is the index-(p-1) subgroup."""
        pn1 = self.p ** (self.n - 1)
        ks = np.arange(pn1, dtype=np.int64)
        d = self.dlog[(1 + self.p * ks) % self.q]
        if np.any(d % (self.p - 1) != 0):
            raise CharacterError("discrete logs on 1+pZ not divisible by p-1")
        return d // (self.p - 1)


@lru_cache(maxsize=32)
def unit_group(p: int, n: int) -> UnitGroupTable:
    return UnitGroupTable(p, n)


class DirichletCharacter:
    """Character chi(u) = e(a dlog(u) / phi(q)) mod q = p^n."""

    def __init__(self, table: UnitGroupTable, index: int):
        self.table = table
        self.index = index % table.phi

    @property
    def modulus(self) -> int:
        return self.table.q

    @property
    def p(self) -> int:
        return self.table.p

    @property
    def n(self) -> int:
        return self.table.n

    @cached_property
    def conductor(self) -> int:
        return self.p ** self.table.conductor_exponent(self.index)

    @property
    def is_principal(self) -> bool:
        return self.index == 0

    @property
    def is_primitive(self) -> bool:
        return self.conductor == self.modulus

    @property
    def parity(self) -> int:
        """0 for even characters, 1 for odd (chi(-1) = (-1)^parity)."""
        return self.index % 2

    @cached_property
    def postnikov_A(self) -> int:
        return postnikov_unit(self)

    def value(self, u: int) -> complex:
        u %= self.modulus
        if u % self.p == 0:
            return 0.0 + 0.0j
        return complex(self.table.omega[self.index * int(self.table.dlog[u]) % self.table.phi])

    def value_many(self, us: np.ndarray) -> np.ndarray:
        us = np.asarray(us, dtype=np.int64) % self.modulus
        unit = us % self.p != 0
        out = np.zeros(len(us), dtype=complex)
        d = self.table.dlog[us[unit]]
        out[unit] = self.table.omega[self.index * d % self.table.phi]
        return out

    def __call__(self, u: int) -> complex:
        return self.value(u)

    def conj(self) -> "DirichletCharacter":
        return DirichletCharacter(self.table, -self.index)

    def __mul__(self, other: "DirichletCharacter") -> "DirichletCharacter":
        if other.table is not self.table:
            if (other.p, other.n) != (self.p, self.n):
                raise CharacterError("can only multiply characters of the same modulus")
        return DirichletCharacter(self.table, self.index + other.index)

    def __eq__(self, other):
        return (isinstance(other, DirichletCharacter)
                and (self.p, self.n, self.index) == (other.p, other.n, other.index))

    def __hash__(self):
        return hash((self.p, self.n, self.index))

    def __repr__(self):
        return f"DirichletCharacter(mod {self.p}^{self.n}, index {self.index})"


def characters_mod(q: int) -> list[DirichletCharacter]:
    """All phi(q) characters mod q = p^n, conductor-labelled."""
    p, n = factor_prime_power(q)
    table = unit_group(p, n)
    return [DirichletCharacter(table, a) for a in range(table.phi)]


def primitive_characters(q: int) -> list[DirichletCharacter]:
    return [chi for chi in characters_mod(q) if chi.is_primitive]


def primitive_indices(table: UnitGroupTable) -> np.ndarray:
    """Indices of the primitive characters: a != 0 at level 1, p coprime to
    a at levels n >= 2."""
    a = np.arange(table.phi, dtype=np.int64)
    if table.n == 1:
        return a[a != 0]
    return a[(a % table.p != 0)]


# ---------------------------------------------------------------------------
# Postnikov units


def postnikov_unit(chi: DirichletCharacter) -> int:
    """The unit A mod p^(n-1) with chi(1+kp) = e(A log_p(1+kp)/p^n) for all k.

    Solved from the k = 1 congruence (log_p(1+p) has valuation exactly 1,
    making the linear solve well-posed), then verified at every k mod
    p^(n-1) by an exact integer congruence.
    """
    if not chi.is_primitive:
        raise ImprimitiveError("Postnikov unit is defined for primitive characters")
    if chi.n < 2:
        raise CharacterError("Postnikov unit needs modulus p^n with n >= 2")
    table = chi.table
    A = _solve_postnikov(table, chi.index)
    if not postnikov_holds(table, chi.index, A):
        raise CharacterError("Postnikov verification sweep failed")
    return A


def _solve_postnikov(table: UnitGroupTable, index: int) -> int:
    p, n = table.p, table.n
    pn1 = p ** (n - 1)
    log1p = plog_int(1 + p, p, n)
    if ordp_int(log1p, p) != 1:
        raise CharacterError("log_p(1+p) does not have valuation exactly 1")
    lprime = log1p // p % pn1
    d1 = int(table.dlog[(1 + p) % table.q])
    if d1 % (p - 1) != 0:
        raise CharacterError("dlog(1+p) not in the wild inertia subgroup")
    e1 = d1 // (p - 1)
    if e1 % p == 0:
        raise CharacterError("1+p does not generate 1+pZ mod p^n")
    return index * e1 * pow(lprime, -1, pn1) % pn1

def postnikov_holds(table: UnitGroupTable, index: int, A: int) -> bool:
    """Exact check of chi(1+kp) = e(A log_p(1+kp)/p^n) for all k mod p^(n-1)."""
    p, n = table.p, table.n
    pn1 = p ** (n - 1)
    d = table.postnikov_dlog_table.astype(object)
    lp = table.postnikov_log_table.astype(object)
    res = (index % pn1 * d - A % pn1 * lp) % pn1
    return not np.any(res != 0)


def postnikov_units_level(table: UnitGroupTable, verify: bool = True,
                          chunk: int = 512) -> np.ndarray:
    """A for every primitive index at this level (0 at imprimitive slots).

    With verify=True the defining congruence is checked for every primitive
    character and every k mod p^(n-1), in chunks.
    """
    p, n = table.p, table.n
    if n < 2:
        raise CharacterError("Postnikov units need n >= 2")
    pn1 = p ** (n - 1)
    d = table.postnikov_dlog_table
    lp = table.postnikov_log_table
    lp1_inv = pow(int(lp[1]), -1, pn1)
    e1 = int(d[1])
    out = np.zeros(table.phi, dtype=np.int64)
    prim = primitive_indices(table)
    out[prim] = prim % pn1 * e1 % pn1 * lp1_inv % pn1
    if verify:
        # int64 is exact here: all factors are reduced below p^(n-1)
        if pn1 * pn1 > 2 ** 62:
            raise CharacterError("level too large for vectorized verification")
        dm = d % pn1
        lm = lp % pn1
        for start in range(0, len(prim), chunk):
            idx = prim[start:start + chunk] % pn1
            A = out[prim[start:start + chunk]]
            res = (idx[:, None] * dm[None, :] - A[:, None] * lm[None, :]) % pn1
            if np.any(res != 0):
                raise CharacterError("Postnikov verification failed in batch")
    return out


def delta_units(p: int, n: int, A1: int, A2: int) -> int:
    """delta_q(chi, chi') = gcd(q/p, A - A'), from the stored units."""
    pn1 = p ** (n - 1)
    diff = (A1 - A2) % pn1
    if diff == 0:
        return pn1
    return p ** min(ordp_int(diff, p), n - 1)


def delta_q(chi: DirichletCharacter, chi2: DirichletCharacter) -> int:
    """Distance q/p >= delta >= 1 between two primitive characters in the
    dual topology: delta = (q/p, A - A')."""
    if (chi.p, chi.n) != (chi2.p, chi2.n):
        raise CharacterError("characters must share a modulus")
    return delta_units(chi.p, chi.n, chi.postnikov_A, chi2.postnikov_A)


def orthogonality_sum(q1: int, u: int, v: int) -> complex:
    """sum over psi mod q1 of psi(u) conj(psi(v)); equals phi(q1) when
    u = v mod q1 and 0 otherwise, computed by direct complex summation."""
    p, n1 = factor_prime_power(q1)
    table = unit_group(p, n1)
    if u % p == 0 or v % p == 0:
        raise ValueError("u, v must be units mod q1")
    du = int(table.dlog[u % q1])
    dv = int(table.dlog[v % q1])
    total = 0.0 + 0.0j
    for b in range(table.phi):
        total += table.omega[b * du % table.phi] * np.conj(table.omega[b * dv % table.phi])
    return complex(total)


# ---------------------------------------------------------------------------
# on-disk cache


def cache_directory(cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "padicmoments"


def _cache_file(p: int, n: int, cache_dir=None) -> Path:
    return cache_directory(cache_dir) / f"chars_p{p}_n{n}.json"


def save_table(table: UnitGroupTable, cache_dir=None,
               postnikov: np.ndarray | None = None) -> Path:
    """Persist (p, n, g, dlog, per-character A) as versioned JSON."""
    path = _cache_file(table.p, table.n, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CACHE_VERSION,
        "p": table.p,
        "n": table.n,
        "g": table.g,
        "dlog": [int(x) for x in table.dlog],
    }
    if postnikov is not None:
        payload["postnikov"] = [int(x) for x in postnikov]
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.replace(path)
    return path


def load_table(p: int, n: int, cache_dir=None):
    """Load a cached table, or None on miss / version mismatch."""
    path = _cache_file(p, n, cache_dir)
    if not path.exists():
        return None
    payload = json.loads(path.read_text())
    if payload.get("version") != CACHE_VERSION:
        return None
    if (payload.get("p"), payload.get("n")) != (p, n):
        return None
    table = UnitGroupTable(p, n, g=payload["g"])
    if list(table.dlog) != payload["dlog"]:
        return None
    post = payload.get("postnikov")
    return table, (np.asarray(post, dtype=np.int64) if post is not None else None)
