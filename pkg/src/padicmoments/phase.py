"""Complete exponential sums over (Z/p^nZ)^x: brute-force evaluation and
closed-form evaluation by the p-adic method of stationary phase.

A phase is a black-box pair of evaluators for f, f', f'' modulo p^w together
with a declared domain (a union of unit residue classes mod p^lambda) and
declared analyticity data.  The brute-force sum is the oracle; the
stationary-phase evaluation must reproduce it exactly up to complex
rounding.

Phases are immutable and evaluation is pure; sums use a fixed ascending
summation order so repeated runs are bit-stable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .padic import (
    PrimePowerModulus,
    legendre,
    ordp_int,
    plog_int,
    vec_inv_unit,
    vec_plog,
)


class PhaseError(ValueError):
    """Base class for phase-level failures."""


class HypothesisError(PhaseError):
    """Stationary-phase evaluation requested without the declared
    higher-derivative divisibility hypotheses."""


class DomainCompatibilityError(PhaseError):
    """Domain residue level lambda is too fine for the requested reduction."""


def epsilon(p: int) -> complex:
    """Normalized quadratic Gauss sum sign: 1 for p = 1 (4), i for p = 3 (4)."""
    return 1.0 + 0.0j if p % 4 == 1 else 1.0j


def gauss_quadratic(c: int, p: int) -> complex:
    """Closed form of sum_{t mod p} e(c t^2 / p) = eps(p) sqrt(p) (c/p)."""
    return epsilon(p) * math.sqrt(p) * legendre(c, p)


@lru_cache(maxsize=8)
def roots_of_unity(q: int) -> np.ndarray:
    """Table of e(k/q) for k = 0..q-1."""
    return np.exp(2j * np.pi * np.arange(q) / q)


@dataclass(frozen=True)
class AnalyticPhase:
    """A p-adically analytic phase on a union of unit classes mod p^lambda.

    eval_f/eval_d1/eval_d2 map (x, w) to the value mod p^w.  The flag
    `higher_deriv_bound_ok` declares that p^(k*l) f^(k)(x)/k! vanishes mod
    p^n for k >= 2 (and k >= 3 at stationary points); `radius_class` is the
    declared integer rho with r_p(f) >= p^-rho.  Optional *_batch evaluators
    take an int64/object ndarray of x values.
    """

    name: str
    p: int
    n: int
    eval_f: Callable[[int, int], int]
    eval_d1: Callable[[int, int], int]
    eval_d2: Callable[[int, int], int]
    domain_level: int = 1
    domain_classes: frozenset = field(default_factory=frozenset)
    radius_class: int = 1
    higher_deriv_bound_ok: bool = False
    eval_f_batch: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    eval_d1_batch: Optional[Callable[[np.ndarray, int], np.ndarray]] = None

    def __post_init__(self):
        if self.domain_level < 1:
            raise ValueError("domain level must be >= 1")
        classes = self.domain_classes
        if not classes:
            classes = frozenset(r for r in range(1, self.p) )
            object.__setattr__(self, "domain_classes", classes)
        plam = self.p ** self.domain_level
        for r in classes:
            if not (0 <= r < plam) or r % self.p == 0:
                raise ValueError("domain classes must be unit residues mod p^lambda")

    def domain_points(self, q: int) -> np.ndarray:
        """All x in [0, q) belonging to the domain, ascending."""
        xs = np.arange(q, dtype=np.int64)
        plam = self.p ** self.domain_level
        keep = np.isin(xs % plam, np.fromiter(self.domain_classes, dtype=np.int64))
        return xs[keep]

    def in_domain(self, x: int) -> bool:
        return x % self.p ** self.domain_level in self.domain_classes

    def f_values(self, xs: np.ndarray, w: int) -> np.ndarray:
        if self.eval_f_batch is not None:
            return np.asarray(self.eval_f_batch(xs, w))
        pw = self.p ** w
        return np.array([self.eval_f(int(x), w) % pw for x in xs], dtype=object)

    def d1_values(self, xs: np.ndarray, w: int) -> np.ndarray:
        if self.eval_d1_batch is not None:
            return np.asarray(self.eval_d1_batch(xs, w))
        pw = self.p ** w
        return np.array([self.eval_d1(int(x), w) % pw for x in xs], dtype=object)


@dataclass(frozen=True)
class StationaryData:
    """Critical-point data for one phase at modulus p^n.

    `representatives` lists one point per coset of X modulo p^floor(n/2),
    already re-centered in the odd nonsingular case; `delta` holds the
    matching local factors (complex units, possibly times sqrt(p) or 0).
    """

    modulus: PrimePowerModulus
    representatives: tuple
    delta: tuple
    parity_even: bool
    singular_flags: tuple
    phase_values: tuple  # f(rep) mod p^n


def delta_factor(p: int, n: int, d2_mod_p: int, d1_scaled_mod_p: int) -> complex:
    """Local stationary factor.

    For even n the factor is 1.  For odd n and p not dividing f''(x0) it is
    eps(p) (2 f''(x0) / p) e(-(2 f''(x0))^-1 (f'(x0)/p^floor(n/2))^2 / p);
    with a re-centered representative the exponential is 1.  In the
    singular case p | f''(x0) the factor is sqrt(p) times the indicator
    that p | f'(x0)/p^floor(n/2).
    """
    if n % 2 == 0:
        return 1.0 + 0.0j
    d2 = d2_mod_p % p
    d1s = d1_scaled_mod_p % p
    if d2 != 0:
        quad = (-pow(2 * d2, -1, p) * d1s * d1s) % p
        return (epsilon(p) * legendre(2 * d2, p)
                * cmath.exp(2j * cmath.pi * quad / p))
    return math.sqrt(p) if d1s == 0 else 0.0 + 0.0j


def sum_direct(phase: AnalyticPhase, q: PrimePowerModulus) -> complex:
    """Brute-force oracle: sum of e(f(x)/p^n) over the domain mod p^n."""
    xs = phase.domain_points(q.q)
    roots = roots_of_unity(q.q)
    if phase.eval_f_batch is not None:
        vals = np.asarray(phase.eval_f_batch(xs, q.n), dtype=np.int64) % q.q
        return complex(np.sum(roots[vals]))
    total = 0.0 + 0.0j
    for x in xs:
        total += roots[phase.eval_f(int(x), q.n) % q.q]
    return complex(total)


def sum_critical_classes(phase: AnalyticPhase, q: PrimePowerModulus,
                         ell: int) -> complex:
    """First-reduction identity: the complete sum equals the plain sum of
    e(f(x0)/p^n) over x0 in the domain with f'(x0) = 0 mod p^(n-ell)."""
    if not phase.higher_deriv_bound_ok:
        raise HypothesisError("phase lacks declared derivative bounds")
    if not (1 <= ell <= q.n):
        raise ValueError("need 1 <= ell <= n")
    if phase.domain_level > ell:
        raise DomainCompatibilityError(
            f"domain level {phase.domain_level} exceeds ell={ell}")
    xs = phase.domain_points(q.q)
    d1 = phase.d1_values(xs, q.n)
    crit = xs[np.asarray(d1 % q.p ** (q.n - ell) == 0, dtype=bool)]
    roots = roots_of_unity(q.q)
    total = 0.0 + 0.0j
    for x in crit:
        total += roots[phase.eval_f(int(x), q.n) % q.q]
    return complex(total)


def stationary_data(phase: AnalyticPhase, q: PrimePowerModulus,
                    refine: bool = True,
                    rng: Optional[np.random.Generator] = None) -> StationaryData:
    """Locate critical points by exhaustive scan and attach local factors.

    X = {x0 in domain : f'(x0) = 0 mod p^floor(n/2)} is verified to be
    invariant under translation by p^floor(n/2) and reduced to one
    representative per coset (the smallest, or a seeded random choice).
    With refine=True, odd nonsingular representatives are re-centered so
    that f' vanishes mod p^ceil(n/2) and the quadratic correction in the
    local factor disappears.
    """
    p, n = q.p, q.n
    if n < 2:
        raise PhaseError("exact stationary evaluation needs n >= 2")
    if not phase.higher_deriv_bound_ok:
        raise HypothesisError("phase lacks declared derivative bounds")
    if 2 * phase.domain_level > n:
        raise DomainCompatibilityError(
            f"domain level {phase.domain_level} too fine for n={n}")
    fl = n // 2
    rt_star = p ** fl
    xs = phase.domain_points(q.q)
    d1 = phase.d1_values(xs, max(n, fl + 1))
    crit_mask = np.asarray(d1 % rt_star == 0, dtype=bool)
    crit = xs[crit_mask]
    crit_set = set(int(x) for x in crit)
    # translation invariance of X (domain itself is invariant: lambda <= fl)
    for x in crit_set:
        if (x + rt_star) % q.q not in crit_set:
            raise HypothesisError(
                "critical set not invariant under p^floor(n/2) translation")
    buckets: dict[int, list[int]] = {}
    for x in sorted(crit_set):
        buckets.setdefault(x % rt_star, []).append(x)
    reps = []
    for r in sorted(buckets):
        members = buckets[r]
        if rng is None:
            reps.append(members[0])
        else:
            reps.append(members[int(rng.integers(len(members)))])

    representatives, deltas, singulars, fvals = [], [], [], []
    for x0 in reps:
        d2 = phase.eval_d2(x0, 1) % p
        singular = d2 == 0
        x_use = x0
        if n % 2 == 1:
            d1_val = phase.eval_d1(x0, fl + 1)
            d1_scaled = (d1_val // rt_star) % p
            if not singular and refine:
                t = (-d1_scaled * pow(d2, -1, p)) % p
                x_use = (x0 + t * rt_star) % q.q
                d1_scaled = (phase.eval_d1(x_use, fl + 1) // rt_star) % p
                if d1_scaled != 0:
                    raise PhaseError("re-centering failed to cancel f' mod p^ceil(n/2)")
                d2 = phase.eval_d2(x_use, 1) % p
            delta = delta_factor(p, n, d2, d1_scaled)
        else:
            delta = delta_factor(p, n, d2, 0)
        representatives.append(x_use)
        deltas.append(delta)
        singulars.append(singular)
        fvals.append(phase.eval_f(x_use, n) % q.q)
    return StationaryData(
        modulus=q,
        representatives=tuple(representatives),
        delta=tuple(deltas),
        parity_even=(n % 2 == 0),
        singular_flags=tuple(singulars),
        phase_values=tuple(fvals),
    )


def sum_stationary(phase: AnalyticPhase, q: PrimePowerModulus,
                   ell: int | None = None, refine: bool = True,
                   rng: Optional[np.random.Generator] = None) -> complex:
    """Closed-form evaluation p^(n/2) sum over representatives of
    e(f(x0)/p^n) Delta_f(x0; p^n).  Must agree with sum_direct exactly."""
    ce = (q.n + 1) // 2
    if ell is not None and ell != ce:
        raise ValueError(f"exact evaluation is defined for ell = ceil(n/2) = {ce}")
    data = stationary_data(phase, q, refine=refine, rng=rng)
    roots = roots_of_unity(q.q)
    total = 0.0 + 0.0j
    for fv, delta in zip(data.phase_values, data.delta):
        total += roots[fv] * delta
    return q.p ** (q.n / 2.0) * total


def check_taylor_hypotheses(phase: AnalyticPhase, q: PrimePowerModulus,
                            max_points: int = 512) -> bool:
    """Empirical verification of the quadratic Taylor identity

        f(x0 + t p^l) = f(x0) + f'(x0) t p^l + f''(x0) t^2 p^(2l) / 2  (mod p^n)

    with l = ceil(n/2), over all (x0, t) when the domain is small and a
    deterministic stride sample otherwise.  This is the black-box
    equivalent of the k >= 2 divisibility hypotheses for the sums computed.
    """
    p, n = q.p, q.n
    ell = (n + 1) // 2
    pl = p ** ell
    xs = phase.domain_points(q.q)
    if len(xs) > max_points:
        stride = len(xs) // max_points
        xs = xs[::stride]
    inv2 = pow(2, -1, q.q)
    for x0 in xs:
        x0 = int(x0)
        f0 = phase.eval_f(x0, n)
        d1 = phase.eval_d1(x0, n)
        d2 = phase.eval_d2(x0, n)
        for t in range(p ** (n - ell)):
            lhs = phase.eval_f((x0 + t * pl) % q.q, n) % q.q
            rhs = (f0 + d1 * t * pl + d2 * t * t * pl * pl * inv2) % q.q
            if lhs != rhs:
                return False
    return True


# ---------------------------------------------------------------------------
# bundled phase families


def _unit_classes(p: int) -> frozenset:
    return frozenset(range(1, p))


def linear_phase(p: int, n: int, c: int) -> AnalyticPhase:
    def f(x, w):
        return c * x % p ** w

    def d1(x, w):
        return c % p ** w

    def d2(x, w):
        return 0

    return AnalyticPhase(
        name=f"linear(c={c})", p=p, n=n, eval_f=f, eval_d1=d1, eval_d2=d2,
        higher_deriv_bound_ok=True,
        eval_f_batch=lambda xs, w: c * np.asarray(xs, dtype=np.int64) % p ** w,
        eval_d1_batch=lambda xs, w: np.full(len(xs), c % p ** w, dtype=np.int64),
    )


def quadratic_phase(p: int, n: int, a: int, b: int) -> AnalyticPhase:
    def f(x, w):
        return (a * x * x + b * x) % p ** w

    def d1(x, w):
        return (2 * a * x + b) % p ** w

    def d2(x, w):
        return 2 * a % p ** w

    def f_batch(xs, w):
        pw = p ** w
        xs = np.asarray(xs, dtype=np.int64) % pw
        return (a % pw * xs % pw * xs + b % pw * xs) % pw

    def d1_batch(xs, w):
        pw = p ** w
        xs = np.asarray(xs, dtype=np.int64) % pw
        return (2 * a % pw * xs + b) % pw

    return AnalyticPhase(
        name=f"quadratic(a={a},b={b})", p=p, n=n, eval_f=f, eval_d1=d1,
        eval_d2=d2, higher_deriv_bound_ok=True,
        eval_f_batch=f_batch, eval_d1_batch=d1_batch,
    )


def kloosterman_phase(p: int, n: int, m: int) -> AnalyticPhase:
    """f(x) = x + m/x, the classical Kloosterman-type phase."""

    def f(x, w):
        pw = p ** w
        return (x + m * pow(x, -1, pw)) % pw

    def d1(x, w):
        pw = p ** w
        xbar = pow(x, -1, pw)
        return (1 - m * xbar * xbar) % pw

    def d2(x, w):
        pw = p ** w
        xbar = pow(x, -1, pw)
        return 2 * m * pow(xbar, 3, pw) % pw

    def f_batch(xs, w):
        pw = p ** w
        xs = np.asarray(xs, dtype=np.int64)
        return (xs + m * vec_inv_unit(xs, p, w)) % pw

    def d1_batch(xs, w):
        pw = p ** w
        xb = vec_inv_unit(np.asarray(xs, dtype=np.int64), p, w)
        return (1 - m * xb % pw * xb) % pw

    return AnalyticPhase(
        name=f"kloosterman(m={m})", p=p, n=n, eval_f=f, eval_d1=d1,
        eval_d2=d2, higher_deriv_bound_ok=True,
        eval_f_batch=f_batch, eval_d1_batch=d1_batch,
    )


def postnikov_log_phase(p: int, n: int, depth: int, unit_a: int,
                        m: int) -> AnalyticPhase:
    """f(x) = A log_p(1 + p^depth x) + m/x, the character-type phase.

    Built from the p-adic logarithm; depth >= 1 keeps the argument inside
    1 + pZ_p, and the declared analyticity data is inherited from the
    logarithm series.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    d = depth

    def f(x, w):
        pw = p ** w
        return (unit_a * plog_int((1 + p ** d * x) % pw, p, w)
                + m * pow(x, -1, pw)) % pw

    def d1(x, w):
        pw = p ** w
        xbar = pow(x, -1, pw)
        u = pow((1 + p ** d * x) % pw, -1, pw)
        return (unit_a * p ** d % pw * u - m * xbar * xbar) % pw

    def d2(x, w):
        pw = p ** w
        xbar = pow(x, -1, pw)
        u = pow((1 + p ** d * x) % pw, -1, pw)
        return (-unit_a * p ** (2 * d) % pw * u % pw * u
                + 2 * m * pow(xbar, 3, pw)) % pw

    def f_batch(xs, w):
        pw = p ** w
        xs = np.asarray(xs, dtype=np.int64)
        logs = vec_plog((1 + p ** d * xs.astype(object)) % pw, p, w)
        inv = vec_inv_unit(xs, p, w)
        return (unit_a * logs % pw + m % pw * inv) % pw

    def d1_batch(xs, w):
        pw = p ** w
        xs = np.asarray(xs, dtype=np.int64)
        xb = vec_inv_unit(xs, p, w)
        u = vec_inv_unit((1 + p ** d % pw * xs) % pw, p, w)
        return (unit_a * p ** d % pw * u % pw
                - m % pw * xb % pw * xb % pw) % pw

    return AnalyticPhase(
        name=f"postnikov_log(depth={d},A={unit_a},m={m})", p=p, n=n,
        eval_f=f, eval_d1=d1, eval_d2=d2, higher_deriv_bound_ok=True,
        eval_f_batch=f_batch, eval_d1_batch=d1_batch,
    )


@dataclass(frozen=True)
class PhaseCase:
    name: str
    phase: AnalyticPhase
    modulus: PrimePowerModulus


def bundled_phase_suite(cap: int = 500_000,
                        primes: Sequence[int] = (3, 5, 7, 11),
                        n_range: Sequence[int] = tuple(range(2, 9))) -> list:
    """The standard verification suite: linear, quadratic, Kloosterman, and
    Postnikov-log phases on every (p, n) grid point with p^n <= cap."""
    cases = []
    for p in primes:
        for n in n_range:
            q = PrimePowerModulus(p, n)
            if q.q > cap:
                continue
            fams = [
                linear_phase(p, n, 1),
                quadratic_phase(p, n, 1, 1),
                kloosterman_phase(p, n, 1),
                kloosterman_phase(p, n, 2),
            ]
            if n >= 3:
                fams.append(postnikov_log_phase(p, n, (n + 1) // 2, 1, 1))
                fams.append(postnikov_log_phase(p, n, 1, 2, 3))
            if n == 3:
                # singular family: f'' = 2p vanishes mod p at every point
                fams.append(quadratic_phase(p, n, p, p))
            for ph in fams:
                cases.append(PhaseCase(f"p={p} n={n} {ph.name}", ph, q))
    return cases
