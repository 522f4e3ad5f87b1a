"""The normalized complete sums K_chi(j,h;q~) attached to a primitive
character chi mod q = p^n and a proper divisor q~ of q:

    K_chi(a,b;q~) = q~^(-1/2) sum over units r mod q~ of
                    chi(r + b(q/q~)) conj(chi)(r) e(ar/q~),

their elementary reduction to the coprime case, the closed-form
oscillatory split K = K^+ + K^-, twisted complete sums of products of the
split components, and the completion bound for incomplete periodic sums.

The closed form evaluates each component at an explicit stationary point

    s_pm(c; q~) = (c q/q~ +- sqrt((c q/q~)^2 + 4c)) / 2,   c = m/A,

with phase g_pm(c;q~) = (q~/q) log_p(1 + (q/q~) s_pm) + c/s_pm and a local
factor from the stationary-phase machinery.  All square roots share one
global branch, and the +/- labels of the split are defined relative to
that branch.  Every computation is pure; sweeps aggregate in a fixed
deterministic order.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass
from math import gcd
from typing import Optional

import numpy as np

from .characters import (
    DirichletCharacter,
    ImprimitiveError,
    delta_units,
    postnikov_units_level,
    primitive_indices,
    unit_group,
)
from .padic import (
    PadicResidue,
    SqrtBranch,
    canonical_branch,
    legendre,
    ordp_int,
    plog_int,
    psqrt_int,
    vec_inv_unit,
    vec_plog,
    vec_sqrt_unit,
)
from .phase import epsilon, roots_of_unity


class TraceSumError(ValueError):
    pass


def units_mod(q: int, p: int) -> np.ndarray:
    xs = np.arange(q, dtype=np.int64)
    return xs[xs % p != 0]


@dataclass(frozen=True)
class TraceSumParams:
    """Arguments of K_chi(a,b;q~) with the valuations of (a,q~), (b,q~)."""

    chi: DirichletCharacter
    a: int
    b: int
    qt: int

    def __post_init__(self):
        q = self.chi.modulus
        if self.qt >= q or q % self.qt != 0 or self.qt < self.chi.p:
            raise TraceSumError(f"qt={self.qt} is not a proper divisor of {q}")

    @property
    def eta_j(self) -> int:
        return ordp_int(gcd(self.a % self.qt, self.qt), self.chi.p)

    @property
    def eta_h(self) -> int:
        return ordp_int(gcd(self.b % self.qt, self.qt), self.chi.p)


@dataclass(frozen=True)
class OscillatorySplit:
    """The two oscillatory components of K_chi(m;q~).

    kplus + kminus equals the direct sum; s_plus * s_minus = -m/A and
    s_plus + s_minus = (m/A) q/q~ hold exactly in modular arithmetic.
    """

    kplus: complex
    kminus: complex
    s_plus: Optional[PadicResidue]
    s_minus: Optional[PadicResidue]
    g_plus: Optional[int]
    g_minus: Optional[int]
    delta_plus: complex
    delta_minus: complex

    @property
    def total(self) -> complex:
        return self.kplus + self.kminus


# ---------------------------------------------------------------------------
# direct (oracle) evaluation


def kchi_direct(chi: DirichletCharacter, a: int, b: int, qt: int) -> complex:
    """Direct complex summation of K_chi(a,b;q~) over units r mod q~."""
    TraceSumParams(chi, a, b, qt)
    q = chi.modulus
    d = q // qt
    rs = units_mod(qt, chi.p)
    left = chi.value_many((rs + b % qt * d) % q)
    right = np.conj(chi.value_many(rs))
    tw = roots_of_unity(qt)[a % qt * rs % qt]
    return complex(np.sum(left * right * tw)) / math.sqrt(qt)


def kchi_m_direct(chi: DirichletCharacter, m: int, qt: int) -> complex:
    """Normalized form q~^(-1/2) sum chi(1 + (q/q~) r) e(m rbar / q~)."""
    if m % chi.p == 0:
        raise TraceSumError("normalized form needs (m, q~) = 1")
    q = chi.modulus
    d = q // qt
    rs = units_mod(qt, chi.p)
    rbar = vec_inv_unit(rs, chi.p, ordp_int(qt, chi.p))
    vals = chi.value_many((1 + d * rs) % q)
    tw = roots_of_unity(qt)[m % qt * rbar % qt]
    return complex(np.sum(vals * tw)) / math.sqrt(qt)


def kchi_direct_all_m(chi: DirichletCharacter, qt: int) -> np.ndarray:
    """K_chi(m,1;q~) for every m mod q~ at once, via one length-q~ DFT.

    Writing s = rbar, the sum is q~^(-1/2) sum_s chi(1 + (q/q~) sbar) e(ms/q~),
    the inverse DFT of the unit-supported table chi(1 + (q/q~) sbar).
    """
    q = chi.modulus
    p = chi.p
    t = ordp_int(qt, p)
    d = q // qt
    ss = units_mod(qt, p)
    sbar = vec_inv_unit(ss, p, t)
    table = np.zeros(qt, dtype=complex)
    table[ss] = chi.value_many((1 + d * sbar) % q)
    return math.sqrt(qt) * np.fft.ifft(table)


# ---------------------------------------------------------------------------
# elementary reduction


CASE_REDUCE = "reduce"
CASE_FULL = "full"
CASE_BOUNDARY = "boundary"
CASE_ZERO = "zero"


@dataclass(frozen=True)
class KchiReduction:
    """Outcome of the elementary reduction of K_chi(j,h;q~).

    tag is one of:
      reduce    -> value = p^(eta/2) K_chi(m_reduced; qt_reduced)
      full      -> value = q~^(1/2) (1 - 1/p)
      boundary  -> value = -q~^(1/2) / p
      zero      -> value = 0
    """

    tag: str
    eta: int
    scale: float
    m_reduced: Optional[int]
    qt_reduced: Optional[int]
    value: Optional[complex]


def kchi_reduce(j: int, h: int, qt: int, q: int) -> KchiReduction:
    """Classify K_chi(j,h;q~) by the valuations eta_j, eta_h of (j,q~),(h,q~)."""
    p = _prime_of(qt)
    t = ordp_int(qt, p)
    if q % qt != 0 or qt >= q:
        raise TraceSumError("qt must be a proper divisor of q")
    jm, hm = j % qt, h % qt
    eta_j = ordp_int(gcd(jm, qt), p)
    eta_h = ordp_int(gcd(hm, qt), p)
    if eta_j == eta_h:
        eta = eta_j
        if eta == t:
            return KchiReduction(CASE_FULL, eta, 1.0, None, None,
                                 math.sqrt(qt) * (1 - 1 / p))
        pe = p ** eta
        qt_red = qt // pe
        m_red = (jm // pe) * (hm // pe) % qt_red
        return KchiReduction(CASE_REDUCE, eta, p ** (eta / 2.0), m_red,
                             qt_red, None)
    if eta_j + eta_h == 2 * t - 1:
        return KchiReduction(CASE_BOUNDARY, min(eta_j, eta_h), 1.0, None,
                             None, -math.sqrt(qt) / p)
    return KchiReduction(CASE_ZERO, min(eta_j, eta_h), 1.0, None, None, 0.0j)


def _prime_of(qt: int) -> int:
    from .characters import factor_prime_power

    return factor_prime_power(qt)[0]


# ---------------------------------------------------------------------------
# closed-form oscillatory split


def _check_closed_args(chi: DirichletCharacter, m: int, qt: int):
    p, n = chi.p, chi.n
    if not chi.is_primitive:
        raise ImprimitiveError("closed form needs a primitive character")
    if qt < p * p:
        raise TraceSumError(f"closed form requires q~ >= p^2, got {qt}")
    t = ordp_int(qt, p)
    if qt != p ** t or t >= n:
        raise TraceSumError("q~ must be a proper prime-power divisor of q")
    if gcd(m, qt) > 1:
        raise TraceSumError("closed form requires (m, q~) = 1")
    # A is only canonical mod p^(n-1); the phase mod q~ is insensitive to
    # the lift exactly because q~ | p^(n-1)
    if t > n - 1:
        raise TraceSumError("q~ must divide p^(n-1)")
    return t


def kchi_closed(chi: DirichletCharacter, m: int, qt: int,
                branch: Optional[SqrtBranch] = None) -> OscillatorySplit:
    """Closed-form split K_chi(m;q~) = K^+ + K^-.

    Vanishes identically when (Am/p) = -1.  Otherwise the two stationary
    points s_pm are computed from the branch square root, the phase values
    g_pm from the p-adic logarithm and modular inversion, and the local
    factors from the parity of ord_p(q~) and a Legendre symbol.
    """
    t = _check_closed_args(chi, m, qt)
    p, n = chi.p, chi.n
    q = chi.modulus
    if branch is None:
        branch = canonical_branch(p)
    A = chi.postnikov_A
    if legendre(A * m, p) != 1:
        zero = 0.0 + 0.0j
        return OscillatorySplit(zero, zero, None, None, None, None, zero, zero)
    nu = t + 2
    pnu = p ** nu
    d = q // qt
    c = m * pow(A, -1, pnu) % pnu
    disc = (c * d % pnu * (c * d % pnu) + 4 * c) % pnu
    root = psqrt_int(disc, p, nu, branch)
    inv2 = pow(2, -1, pnu)
    out = {}
    for sign in (+1, -1):
        s = (c * d + sign * root) * inv2 % pnu
        g = _g_value(p, n, t, c, s)
        phase_val = A * g % qt
        delta = _delta_theta(p, t, m, s)
        out[sign] = (
            delta * cmath.exp(2j * cmath.pi * phase_val / qt),
            PadicResidue(p, nu, s),
            g,
            delta,
        )
    return OscillatorySplit(
        kplus=out[1][0], kminus=out[-1][0],
        s_plus=out[1][1], s_minus=out[-1][1],
        g_plus=out[1][2], g_minus=out[-1][2],
        delta_plus=out[1][3], delta_minus=out[-1][3],
    )


def _g_value(p: int, n: int, t: int, c: int, s: int) -> int:
    """g(c) = (q~/q) log_p(1 + (q/q~)s) + c/s, exact mod p^(t+2).

    The logarithm is taken with n - t extra digits of headroom so that the
    exact division by q/q~ = p^(n-t) leaves t + 2 correct digits.
    """
    w_log = n + 2
    d = p ** (n - t)
    pnu = p ** (t + 2)
    big = p ** w_log
    val = plog_int((1 + d * s) % big, p, w_log)
    logterm = val // d % pnu
    return (logterm + c * pow(s, -1, pnu)) % pnu


def _delta_theta(p: int, t: int, m: int, s: int) -> complex:
    """Local factor at a stationary point of the K_chi phase.

    theta''(s) = 2 m sbar^3 mod p is a unit, so for odd ord_p(q~) the factor
    is eps(p) (2 theta''(s) / p); for even it is 1.  The singular branch
    never occurs here.
    """
    if t % 2 == 0:
        return 1.0 + 0.0j
    sp = s % p
    th2 = 2 * m % p * pow(sp, 3 * (p - 2), p) % p
    if th2 == 0:
        raise TraceSumError("unexpected singular stationary point")
    return epsilon(p) * legendre(2 * th2, p)


def kchi_closed_all_m(p: int, n: int, t: int, A: int,
                      branch: Optional[SqrtBranch] = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed form over every m mod q~ = p^t coprime to p.

    Returns (kplus, kminus) arrays of length q~ (zero off the coprime set
    and off the support (Am/p) = +1).  Only the unit A enters: characters
    sharing A have identical K^+/K^- components.
    """
    if branch is None:
        branch = canonical_branch(p)
    qt = p ** t
    if t < 2 or t > n - 1:
        raise TraceSumError("need 2 <= t <= n-1")
    nu = t + 2
    pnu = p ** nu
    d = p ** (n - t)
    ms = units_mod(qt, p)
    leg = np.array([legendre(A * int(m), p) for m in range(p)], dtype=np.int64)
    support = leg[ms % p] == 1
    ms = ms[support]
    kplus = np.zeros(qt, dtype=complex)
    kminus = np.zeros(qt, dtype=complex)
    if len(ms) == 0:
        return kplus, kminus
    Ainv = pow(A, -1, pnu)
    c = ms * (Ainv % pnu) % pnu
    dm = d % pnu
    disc = (c * dm % pnu * (c * dm % pnu) + 4 * c) % pnu
    root = vec_sqrt_unit(disc, p, nu, branch)
    inv2 = pow(2, -1, pnu)
    roots_qt = roots_of_unity(qt)
    eps = epsilon(p)
    big = p ** (n + 2)
    squares = _square_set(p)
    for sign, dest in ((+1, kplus), (-1, kminus)):
        s = (c * dm % pnu + sign * root) * inv2 % pnu
        logs = vec_plog((1 + d * s.astype(object)) % big, p, n + 2)
        logterm = np.asarray(logs, dtype=object) // d % pnu
        g = (logterm.astype(np.int64) + c * vec_inv_unit(s, p, nu)) % pnu
        phase_vals = A % qt * g % qt
        vals = roots_qt[phase_vals]
        if t % 2 == 1:
            # (2 theta''(s)/p) = (4 m sbar^3 / p) = (m s / p)
            th = ms % p * (s % p) % p
            leg_vals = np.where(np.isin(th, squares), 1.0, -1.0)
            vals = vals * eps * leg_vals
        dest[ms] = vals
    return kplus, kminus


def _square_set(p: int) -> np.ndarray:
    return np.unique(np.arange(1, p, dtype=np.int64) ** 2 % p)


# ---------------------------------------------------------------------------
# sums of products and completion


@dataclass(frozen=True)
class ProductSumParams:
    """Twisted complete sum of products of split components.

    Q = q~/(q~, delta) where delta = (q/p, A - A') measures the distance
    between the two characters in the dual topology.
    """

    chi: DirichletCharacter
    chi2: DirichletCharacter
    qt: int
    v: int
    sign: int

    def __post_init__(self):
        if not (self.chi.is_primitive and self.chi2.is_primitive):
            raise ImprimitiveError("product sums need primitive characters")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def delta(self) -> int:
        return delta_units(self.chi.p, self.chi.n,
                           self.chi.postnikov_A, self.chi2.postnikov_A)

    @property
    def Q(self) -> int:
        return self.qt // gcd(self.qt, self.delta)


def product_pointwise(chi: DirichletCharacter, chi2: DirichletCharacter,
                      m: int, qt: int, sign: int,
                      branch: Optional[SqrtBranch] = None) -> complex:
    """K^s_chi(m;q~) conj(K^s_chi'(m;q~)) for one m and sign s."""
    s1 = kchi_closed(chi, m, qt, branch)
    s2 = kchi_closed(chi2, m, qt, branch)
    if sign == 1:
        return s1.kplus * np.conj(s2.kplus)
    return s1.kminus * np.conj(s2.kminus)


def product_table(chi: DirichletCharacter, chi2: DirichletCharacter,
                  qt: int, sign: int,
                  branch: Optional[SqrtBranch] = None) -> np.ndarray:
    """Table of the product over m in [0, q~), zero off the coprime set."""
    p, n = chi.p, chi.n
    t = ordp_int(qt, p)
    kp1, km1 = kchi_closed_all_m(p, n, t, chi.postnikov_A, branch)
    kp2, km2 = kchi_closed_all_m(p, n, t, chi2.postnikov_A, branch)
    if sign == 1:
        return kp1 * np.conj(kp2)
    return km1 * np.conj(km2)


def product_sum(params: ProductSumParams,
                branch: Optional[SqrtBranch] = None) -> complex:
    """sum over units u mod Q of K^s_chi(u;q~) conj(K^s_chi'(u;q~)) e(-uv/Q).

    For Q = 1 the sum degenerates to the pointwise indicator value
    1_{(A/p) = 1} at u = 1.
    """
    Q = params.Q
    if Q == 1:
        return product_pointwise(params.chi, params.chi2, 1, params.qt,
                                 params.sign, branch)
    table = product_table(params.chi, params.chi2, params.qt, params.sign,
                          branch)
    us = units_mod(Q, params.chi.p)
    tw = roots_of_unity(Q)[(-params.v % Q) * us % Q]
    return complex(np.sum(table[us] * tw))


def product_sum_all_v(chi: DirichletCharacter, chi2: DirichletCharacter,
                      qt: int, sign: int,
                      branch: Optional[SqrtBranch] = None) -> np.ndarray:
    """The twisted sums for every v mod Q at once (one DFT of the Q-period)."""
    params = ProductSumParams(chi, chi2, qt, 0, sign)
    Q = params.Q
    if Q == 1:
        return np.array([product_sum(params, branch)])
    table = product_table(chi, chi2, qt, sign, branch)
    return np.fft.fft(table[:Q])


def periodicity_check(chi: DirichletCharacter, chi2: DirichletCharacter,
                      qt: int, sign: int, tol: float = 1e-9,
                      branch: Optional[SqrtBranch] = None) -> int:
    """Smallest verified period p^s of m -> K^s_chi(m) conj(K^s_chi'(m)).

    The claimed period Q = q~/(q~, delta) is asserted to be a multiple of
    the verified one.
    """
    p = chi.p
    t = ordp_int(qt, p)
    table = product_table(chi, chi2, qt, sign, branch)
    period = qt
    for s in range(t + 1):
        ps = p ** s
        shifted = np.roll(table, -ps)
        if np.max(np.abs(table - shifted)) <= tol:
            period = ps
            break
    Q = ProductSumParams(chi, chi2, qt, 0, sign).Q
    if np.max(np.abs(table - np.roll(table, -(Q % qt)))) > tol:
        raise TraceSumError("claimed modulus Q is not a verified period")
    return period


@dataclass(frozen=True)
class CompletionBound:
    bound: float
    partial: complex
    fourier_l1: float


def complete_incomplete_sum(f_table: np.ndarray, M: int) -> CompletionBound:
    """Completion bound for sum_{1 <= m <= M} f(m) of a Q-periodic table.

    Returns Q^-1 sum_v |fhat(v)| min(M, ||v/Q||^-1) together with the exact
    partial sum; the bound provably dominates (geometric-series estimate
    with constant 1) and this is asserted.
    """
    f = np.asarray(f_table, dtype=complex)
    Q = len(f)
    fhat = np.fft.fft(f)
    vs = np.arange(Q)
    dist = np.minimum(vs, Q - vs) / Q
    weights = np.where(vs == 0, float(M), 1.0 / np.where(dist == 0, 1.0, dist))
    bound = float(np.sum(np.abs(fhat) * weights)) / Q
    ms = np.arange(1, M + 1) % Q
    partial = complex(np.sum(f[ms]))
    if abs(partial) > bound + 1e-9 * (1 + bound):
        raise TraceSumError("completion bound violated")
    return CompletionBound(bound=bound, partial=partial,
                           fourier_l1=float(np.sum(np.abs(fhat))))


# ---------------------------------------------------------------------------
# sweep engines


def kchi_sweep(p: int, n: int, tol: float = 1e-8,
               verify_postnikov: bool = False) -> dict:
    """Closed form against the direct oracle for every unit A, every
    q~ = p^t with 2 <= t < n, and every coprime m.

    Characters sharing the Postnikov unit A have identical sums (their
    values on 1 + pZ coincide), so the sweep runs once per unit; a sampled
    same-A character pair is compared directly as a cross-check.
    """
    table = unit_group(p, n)
    As = postnikov_units_level(table, verify=verify_postnikov)
    prim = primitive_indices(table)
    rep_of_A: dict[int, int] = {}
    for a in prim:
        rep_of_A.setdefault(int(As[a]), int(a))
    q = table.q
    report = {
        "p": p, "n": n, "tolerance": tol,
        "units": len(rep_of_A), "cases": 0,
        "max_residual": 0.0, "max_support_leak": 0.0,
        "same_unit_max_diff": 0.0,
    }
    for t in range(2, n):
        qt = p ** t
        for A, a in sorted(rep_of_A.items()):
            chi = DirichletCharacter(table, a)
            direct = kchi_direct_all_m(chi, qt)
            kp, km = kchi_closed_all_m(p, n, t, A)
            closed = kp + km
            ms = units_mod(qt, p)
            resid = np.max(np.abs(closed[ms] - direct[ms]))
            report["max_residual"] = max(report["max_residual"], float(resid))
            # vanishing pattern: direct must be 0 exactly where closed is
            off = ms[np.abs(closed[ms]) == 0]
            if len(off):
                leak = float(np.max(np.abs(direct[off])))
                report["max_support_leak"] = max(report["max_support_leak"], leak)
            report["cases"] += len(ms)
        # same-A determinism spot check
        seen: dict[int, int] = {}
        for a in prim:
            A = int(As[a])
            if A in seen and seen[A] != int(a):
                chi1 = DirichletCharacter(table, seen[A])
                chi2 = DirichletCharacter(table, int(a))
                m0 = 1 if legendre(A, p) == 1 else _first_support_m(p, A)
                diff = abs(kchi_m_direct(chi1, m0, qt) - kchi_m_direct(chi2, m0, qt))
                report["same_unit_max_diff"] = max(report["same_unit_max_diff"],
                                                   float(diff))
                break
            seen[A] = int(a)
    report["passed"] = (report["max_residual"] <= tol
                        and report["max_support_leak"] <= tol
                        and report["same_unit_max_diff"] <= tol)
    return report


def _first_support_m(p: int, A: int) -> int:
    for m in range(1, p):
        if legendre(A * m, p) == 1:
            return m
    raise TraceSumError("no support residue found")


def reduction_sweep(p: int, n: int, qt: int, tol: float = 1e-8,
                    exhaustive_limit: int = 30000) -> dict:
    """kchi_reduce against the direct oracle over (j,h) pairs mod q~.

    Exhaustive when q~^2 is small, a deterministic lattice sample otherwise;
    all four reduction cases are exercised either way.
    """
    table = unit_group(p, n)
    a = int(primitive_indices(table)[0])
    chi = DirichletCharacter(table, a)
    q = table.q
    t = ordp_int(qt, p)
    if qt * qt <= exhaustive_limit:
        pairs = [(j, h) for j in range(qt) for h in range(qt)]
    else:
        anchors = [0] + [p ** s for s in range(t + 1)] + [3 * p ** s for s in range(t)]
        anchors = sorted({x % qt for x in anchors} | {1, 2, qt - 1})
        pairs = [(j, h) for j in anchors for h in anchors]
    seen_tags = set()
    max_resid = 0.0
    for j, h in pairs:
        red = kchi_reduce(j, h, qt, q)
        seen_tags.add(red.tag)
        direct = kchi_direct(chi, j, h, qt)
        if red.tag == CASE_REDUCE:
            predicted = red.scale * kchi_m_direct(chi, red.m_reduced,
                                                  red.qt_reduced)
        else:
            predicted = red.value
        max_resid = max(max_resid, abs(direct - predicted))
    return {
        "p": p, "n": n, "qt": qt, "pairs": len(pairs),
        "tags_seen": sorted(seen_tags), "max_residual": float(max_resid),
        "passed": max_resid <= tol and len(seen_tags) == 4,
    }


def products_sweep(p: int, n: int, tol: float = 1e-8,
                   ratio_cap: float = 4.0) -> dict:
    """Full pair sweep of products of split components at level p^n.

    For every ordered pair of units (A, A') and every q~ = p^t, 2 <= t < n:
    verifies Q-periodicity, the vanishing of p | v twists for Q >= p^2, the
    Q = 1 indicator identity, and records sup |sum| / Q^(1/2) over unit
    twists v.
    """
    table = unit_group(p, n)
    As_arr = postnikov_units_level(table, verify=False)
    prim = primitive_indices(table)
    rep_of_A: dict[int, int] = {}
    for a in prim:
        rep_of_A.setdefault(int(As_arr[a]), int(a))
    units_A = sorted(rep_of_A)
    report = {
        "p": p, "n": n, "pairs": 0,
        "max_period_residual": 0.0,
        "max_pv_leak": 0.0,
        "max_indicator_error": 0.0,
        "sup_ratio": 0.0,
        "ratio_cap": ratio_cap,
    }
    for t in range(2, n):
        qt = p ** t
        split_cache = {A: kchi_closed_all_m(p, n, t, A) for A in units_A}
        for A1 in units_A:
            kp1, km1 = split_cache[A1]
            for A2 in units_A:
                kp2, km2 = split_cache[A2]
                delta = delta_units(p, n, A1, A2)
                Q = qt // gcd(qt, delta)
                report["pairs"] += 1
                for tab in (kp1 * np.conj(kp2), km1 * np.conj(km2)):
                    if Q == 1:
                        # pointwise indicator over every coprime m
                        ms = units_mod(qt, p)
                        ind = np.array(
                            [1.0 if legendre(A1 * int(m), p) == 1 else 0.0
                             for m in ms])
                        err = float(np.max(np.abs(tab[ms] - ind)))
                        report["max_indicator_error"] = max(
                            report["max_indicator_error"], err)
                        continue
                    shifted = np.roll(tab, -Q)
                    per = float(np.max(np.abs(tab - shifted)))
                    report["max_period_residual"] = max(
                        report["max_period_residual"], per)
                    sums = np.fft.fft(tab[:Q])
                    vs = np.arange(Q)
                    if Q >= p * p:
                        pv = np.abs(sums[(vs % p == 0)])
                        report["max_pv_leak"] = max(report["max_pv_leak"],
                                                    float(np.max(pv)))
                    unit_vs = vs[vs % p != 0]
                    if len(unit_vs):
                        ratio = float(np.max(np.abs(sums[unit_vs]))) / math.sqrt(Q)
                        report["sup_ratio"] = max(report["sup_ratio"], ratio)
    report["passed"] = (report["max_period_residual"] <= tol
                        and report["max_pv_leak"] <= tol
                        and report["max_indicator_error"] <= tol
                        and report["sup_ratio"] <= ratio_cap)
    return report


def emit_sweep_csv(rows: list[dict], path) -> None:
    """CSV emitter for sweep results, fixed column order and formatting."""
    cols = ["p", "n", "qt", "m_or_v", "case", "abs_value", "ratio_to_sqrtQ"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row.get("p"), row.get("n"), row.get("qt"),
                             row.get("m_or_v"), row.get("case"),
                             _fmt(row.get("abs_value")),
                             _fmt(row.get("ratio_to_sqrtQ"))])


def emit_sweep_json(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(rows, fh, sort_keys=True, indent=1)


def _fmt(x) -> str:
    return "" if x is None else f"{x:.12e}"
