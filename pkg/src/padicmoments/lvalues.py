"""Central values L(1/2, chi), short second moments, twelfth moments,
large-value counts, and the Poisson-step verification pipeline.

Two independent evaluators are provided for every central value:

  * a Hurwitz-zeta decomposition L(s,chi) = q^-s sum_a chi(a) zeta(s, a/q)
    with Euler-Maclaurin evaluation of zeta(1/2, x), and
  * a smoothed approximate-functional-equation sum with incomplete-gamma
    weights and the root number from the Gauss sum.

Their agreement is a standing cross-check.  The moment pipeline uses a
fixed C-infinity dyadic bump (a partition of unity built from the
exp(-1/t) mollifier family), so the arithmetic coefficients A(m; p^eta)
depend on (m, eta, N, q1) only and never on the character.

L-value computation is batched over characters (one length-phi(q) DFT per
level); aggregation always runs in a fixed index order, and persistence is
single-writer JSON-lines keyed by (p, n).
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaincc

from .characters import (
    DirichletCharacter,
    ImprimitiveError,
    UnitGroupTable,
    cache_directory,
    factor_prime_power,
    primitive_indices,
    unit_group,
)
from .tracefn import kchi_direct, kchi_m_direct, units_mod

EPS_RATIO = 0.1     # every verification q^eps slack factor
EPS_WINDOW = 0.05   # every range/window q^eps exponent

STORE_VERSION = 1

# Bernoulli numbers B_2 .. B_20 for the Euler-Maclaurin tail
_BERNOULLI = [
    1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66,
    -691 / 2730, 7 / 6, -3617 / 510, 43867 / 798, -174611 / 330,
]
_EM_SHIFT = 30


class QuadratureError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Hurwitz zeta at the central point


def hurwitz_zeta_half(x) -> np.ndarray:
    """zeta(1/2, x) for x > 0 by Euler-Maclaurin: shift M = 30, Bernoulli
    correction through B_20.  Accuracy is far below 1e-10 per value."""
    x = np.asarray(x, dtype=float)
    s = 0.5
    total = np.zeros_like(x)
    for k in range(_EM_SHIFT):
        total += (x + k) ** (-s)
    y = x + _EM_SHIFT
    total += y ** (1 - s) / (s - 1)
    total += 0.5 * y ** (-s)
    poch = s
    fact = 1.0
    for j, b in enumerate(_BERNOULLI, start=1):
        fact *= (2 * j - 1) * (2 * j)
        total += b / fact * poch * y ** (-s - 2 * j + 1)
        poch *= (s + 2 * j - 1) * (s + 2 * j)
    return total


def zeta_half() -> float:
    """zeta(1/2), for the principal-character inclusion flag."""
    return float(hurwitz_zeta_half(np.array([1.0]))[0])


# ---------------------------------------------------------------------------
# smooth dyadic weights


def _smoothstep(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1] = 1.0
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def _smoothstep_scalar(t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a / (a + b)


def _bump_scalar(x: float) -> float:
    """Scalar fast path of dyadic_bump for quadrature inner loops."""
    if x <= 0.5 or x >= 2.0:
        return 0.0
    lg = math.log2(x)
    return _smoothstep_scalar(lg + 1.0) - _smoothstep_scalar(lg)


def dyadic_bump(x) -> np.ndarray:
    """C-infinity bump supported on [1/2, 2] with sum_j B(x/2^j) = 1 for
    x > 0 (telescoping construction from the exp(-1/t) smoothstep)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    lg = np.zeros_like(x)
    lg[pos] = np.log2(x[pos])
    out[pos] = _smoothstep(lg[pos] + 1.0) - _smoothstep(lg[pos])
    return out


@dataclass(frozen=True)
class SmoothWeight:
    """Weight V_N at dyadic scale N, supported on [N/2, 2N].

    Without (q, kappa) this is the plain bump B(x/N) used throughout the
    moment pipeline (it depends on N only).  With (q, kappa) the weight
    carries the central-value amplitude (N/x)^(1/2) Q(a, pi x^2/q), the
    natural block weight of the smoothed central-value expansion.
    """

    N: float
    q: Optional[int] = None
    kappa: Optional[int] = None

    @property
    def support(self) -> tuple[float, float]:
        return (self.N / 2.0, 2.0 * self.N)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = dyadic_bump(x / self.N)
        if self.q is not None:
            a = (0.5 + (self.kappa or 0)) / 2.0
            amp = np.zeros_like(x)
            pos = x > 0
            amp[pos] = (np.sqrt(self.N / x[pos])
                        * gammaincc(a, math.pi * x[pos] ** 2 / self.q))
            vals = vals * amp
        return vals

    def scalar(self, x: float) -> float:
        return float(self(np.array([x]))[0])

    def derivative_certificates(self, j_max: int = 4,
                                samples: int = 257) -> list[float]:
        """Measured sup |V_N^(j)| N^j for j = 1..j_max by central finite
        differences; certifies V^(j) << N^-j with the returned constants."""
        lo, hi = self.support
        xs = np.linspace(lo - 0.25 * self.N, hi + 0.25 * self.N, samples)
        h = self.N / 512.0
        certs = []
        vals = self(xs)
        for j in range(1, j_max + 1):
            stencil = _fd_stencil(j)
            acc = np.zeros_like(xs)
            for off, coef in stencil:
                acc += coef * self(xs + off * h)
            deriv = acc / h ** j
            certs.append(float(np.max(np.abs(deriv)) * self.N ** j))
        del vals
        return certs


def _fd_stencil(j: int) -> list[tuple]:
    if j == 1:
        return [(-1, -0.5), (1, 0.5)]
    if j == 2:
        return [(-1, 1.0), (0, -2.0), (1, 1.0)]
    if j == 3:
        return [(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)]
    if j == 4:
        return [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)]
    raise ValueError("stencils available for j <= 4")


def adaptive_simpson(fn: Callable[[float], complex], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 40) -> complex:
    """Recursive adaptive Simpson quadrature for a complex integrand."""
    fa, fm, fb = fn(a), fn((a + b) / 2), fn(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, depth):
    if depth <= 0:
        raise QuadratureError("adaptive Simpson did not converge")
    m = (a + b) / 2
    lm, rm = (a + m) / 2, (m + b) / 2
    flm, frm = fn(lm), fn(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    if abs(left + right - whole) <= 15 * tol:
        return left + right + (left + right - whole) / 15
    return (_simpson_rec(fn, a, m, fa, flm, fm, left, tol / 2, depth - 1)
            + _simpson_rec(fn, m, b, fm, frm, fb, right, tol / 2, depth - 1))


@lru_cache(maxsize=65536)
def _pair_transform(N: int, shift: int, j_num: int, j_den: int,
                    tol: float = 1e-10) -> complex:
    """Fourier transform of W(y) = V_N(y + shift) V_N(y) at xi = j_num/j_den,
    with V_N the plain bump at scale N."""
    lo = N / 2.0
    hi = 2.0 * N - shift
    if lo >= hi:
        return 0.0 + 0.0j
    xi = j_num / j_den
    inv_n = 1.0 / N
    two_pi_xi = 2.0 * math.pi * xi

    def integrand(y: float) -> complex:
        w = _bump_scalar((y + shift) * inv_n) * _bump_scalar(y * inv_n)
        if w == 0.0:
            return 0.0 + 0.0j
        return w * cmath.exp(-1j * two_pi_xi * y)

    return adaptive_simpson(integrand, lo, hi, tol=tol)


# ---------------------------------------------------------------------------
# persistent store of central values


class LValueStore:
    """Per-level arrays of central values, persisted as JSON-lines.

    level(p, n) returns a complex array indexed by character index, NaN at
    imprimitive slots; scans resume from the persisted files.
    """

    def __init__(self, cache_dir=None):
        self.dir = cache_directory(cache_dir)
        self._mem: dict[tuple, np.ndarray] = {}

    def _path(self, p: int, n: int) -> Path:
        return self.dir / f"lvalues_p{p}_n{n}.jsonl"

    def level(self, p: int, n: int) -> np.ndarray:
        key = (p, n)
        if key in self._mem:
            return self._mem[key]
        loaded = self._load(p, n)
        if loaded is None:
            loaded = lvalues_level(unit_group(p, n))
            self._save(p, n, loaded)
        self._mem[key] = loaded
        return loaded

    def _load(self, p: int, n: int):
        path = self._path(p, n)
        if not path.exists():
            return None
        table = unit_group(p, n)
        arr = np.full(table.phi, np.nan, dtype=complex)
        try:
            with path.open() as fh:
                for line in fh:
                    rec = json.loads(line)
                    if rec.get("v") != STORE_VERSION:
                        return None
                    arr[rec["char_index"]] = rec["re_L"] + 1j * rec["im_L"]
        except (json.JSONDecodeError, KeyError, IndexError):
            return None
        prim = primitive_indices(table)
        if np.any(np.isnan(arr[prim])):
            return None
        return arr

    def _save(self, p: int, n: int, arr: np.ndarray):
        path = self._path(p, n)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with tmp.open("w") as fh:
            for a in np.where(~np.isnan(arr))[0]:
                rec = {"v": STORE_VERSION, "p": p, "n": n,
                       "char_index": int(a),
                       "re_L": float(arr[a].real), "im_L": float(arr[a].imag),
                       "method": "hurwitz-em", "accuracy": 1e-8}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        tmp.replace(path)

    def lookup(self, p: int, n: int, index: int) -> complex:
        """Central value of the primitive character inducing the character
        with this index mod p^n (conductor-correct induction)."""
        table = unit_group(p, n)
        m, b = table.inducer_index(index)
        if m == 0:
            raise ImprimitiveError("principal character has no primitive inducer")
        return complex(self.level(p, m)[b])

    def abs_all(self, p: int, n: int) -> np.ndarray:
        """|L| of the inducing primitive character for every index mod p^n;
        NaN at the principal slot."""
        table = unit_group(p, n)
        out = np.full(table.phi, np.nan)
        idx = np.arange(table.phi, dtype=np.int64)
        e = np.zeros(table.phi, dtype=np.int64)
        rest = idx.copy()
        nonzero = rest != 0
        while True:
            divisible = nonzero & (rest % p == 0)
            if not np.any(divisible):
                break
            e[divisible] += 1
            rest[divisible] //= p
        e = np.minimum(e, n - 1)
        for m in range(1, n + 1):
            sel = nonzero & (e == n - m)
            if not np.any(sel):
                continue
            level = np.abs(self.level(p, m))
            out[idx[sel]] = level[idx[sel] // p ** (n - m)]
        return out


# ---------------------------------------------------------------------------
# central values: Hurwitz route


def lvalue_central(chi: DirichletCharacter) -> complex:
    """L(1/2, chi) by the Hurwitz-zeta decomposition, absolute accuracy
    well within 1e-8 at desk scale."""
    if not chi.is_primitive:
        raise ImprimitiveError("central values are computed for primitive "
                               "characters (conductor mismatch would change "
                               "the object)")
    q = chi.modulus
    a_vals = np.arange(1, q, dtype=np.int64)
    hz = hurwitz_zeta_half(a_vals / q)
    chis = chi.value_many(a_vals)
    return complex(np.sum(chis * hz)) / math.sqrt(q)


def lvalues_level(table: UnitGroupTable) -> np.ndarray:
    """All primitive central values at level p^n with one DFT.

    Ordering the units as powers of the generator turns every character
    sum into a frequency component of a single length-phi sequence.
    """
    q, phi = table.q, table.phi
    hz = np.zeros(q)
    a_vals = np.arange(1, q)
    hz[1:] = hurwitz_zeta_half(a_vals / q)
    seq = hz[table.unit_of_index]
    coeffs = phi * np.fft.ifft(seq) / math.sqrt(q)
    out = np.full(phi, np.nan, dtype=complex)
    prim = primitive_indices(table)
    out[prim] = coeffs[prim]
    return out


# ---------------------------------------------------------------------------
# central values: smoothed approximate functional equation


def gauss_sum(chi: DirichletCharacter) -> complex:
    """tau(chi) = sum_b chi(b) e(b/q), direct summation."""
    q = chi.modulus
    bs = units_mod(q, chi.p)
    return complex(np.sum(chi.value_many(bs)
                          * np.exp(2j * np.pi * bs / q)))


def root_number(chi: DirichletCharacter) -> complex:
    """epsilon(chi) = tau(chi) / (i^kappa sqrt(q)); modulus 1 for primitive."""
    kappa = chi.parity
    eps = gauss_sum(chi) / (1j ** kappa * math.sqrt(chi.modulus))
    if abs(abs(eps) - 1.0) > 1e-8:
        raise ImprimitiveError("root number is not unimodular; chi primitive?")
    return eps


@dataclass(frozen=True)
class AfeResult:
    value: complex
    pieces: dict
    bound: float
    tail_mass: float
    kappa: int
    epsilon: complex

    @property
    def dyadic_scales(self) -> list[int]:
        return sorted(self.pieces)


def afe_cutoff(q: int) -> int:
    """Summation length with incomplete-gamma tails below 1e-16."""
    return int(math.ceil(math.sqrt(q * 37.0 / math.pi))) + 1


def lvalue_afe(chi: DirichletCharacter) -> AfeResult:
    """Smoothed approximate-functional-equation central value and its
    dyadic decomposition.

    value = sum_n chi(n) n^-1/2 V(n) + eps(chi) sum_n conj(chi)(n) n^-1/2 V(n)
    with V(n) = Q((1/2+kappa)/2, pi n^2 / q) (regularized upper incomplete
    gamma).  The dyadic pieces N^-1/2 sum_n chi(n) V_N(n) carry the block
    weights V_N(x) = (N/x)^(1/2) V(x) B(x/N) for dyadic N <= q^(1/2+0.05),
    giving O(log q) pieces; the implied bound on |L|^2 (a fixed constant
    times log q times the sum of squared pieces, plus the computed tail
    budget) is returned for comparison against the Hurwitz route.
    """
    if not chi.is_primitive:
        raise ImprimitiveError("the functional equation needs a primitive chi")
    q = chi.modulus
    kappa = chi.parity
    a_gamma = (0.5 + kappa) / 2.0
    nmax = afe_cutoff(q)
    ns = np.arange(1, nmax + 1, dtype=np.int64)
    weights = gammaincc(a_gamma, math.pi * ns.astype(float) ** 2 / q)
    amp = weights / np.sqrt(ns)
    chi_n = chi.value_many(ns)
    eps = root_number(chi)
    value = complex(np.sum(chi_n * amp) + eps * np.sum(np.conj(chi_n) * amp))

    # dyadic pieces within the window N <= q^(1/2 + eps)
    window = q ** (0.5 + EPS_WINDOW)
    pieces = {}
    sq_sum = 0.0
    scale = 1
    while scale <= window:
        block = dyadic_bump(ns / scale)
        piece = complex(np.sum(chi_n * amp * block))
        piece_dual = complex(np.sum(np.conj(chi_n) * amp * block))
        pieces[scale] = piece
        sq_sum += abs(piece) ** 2 + abs(piece_dual) ** 2
        scale *= 2
    nmax_window = scale // 2  # largest dyadic N included
    covered = ns <= nmax_window
    tail_mass = float(np.sum(amp[~covered]))
    bound = 4.0 * math.log(q) * sq_sum + 12.0 * tail_mass ** 2
    return AfeResult(value=value, pieces=pieces, bound=bound,
                     tail_mass=tail_mass, kappa=kappa, epsilon=eps)


def lvalues_afe_level(table: UnitGroupTable) -> np.ndarray:
    """Batch smoothed-functional-equation values for every primitive index."""
    q, phi = table.q, table.phi
    p = table.p
    nmax = afe_cutoff(q)
    ns = np.arange(1, nmax + 1, dtype=np.int64)
    unit = ns % p != 0
    nu = ns[unit]
    dl = table.dlog[nu % q]
    e_q = np.exp(2j * np.pi * np.arange(q) / q)
    tau_seq = e_q[table.unit_of_index]
    taus = phi * np.fft.ifft(tau_seq)
    out = np.full(phi, np.nan, dtype=complex)
    prim = primitive_indices(table)
    for a in prim:
        kappa = int(a) % 2
        amp = (gammaincc((0.5 + kappa) / 2.0,
                         math.pi * nu.astype(float) ** 2 / q)
               / np.sqrt(nu))
        chi_n = table.omega[int(a) * dl % phi]
        eps = taus[a] / (1j ** kappa * math.sqrt(q))
        out[a] = (np.sum(chi_n * amp)
                  + eps * np.sum(np.conj(chi_n) * amp))
    return out


# ---------------------------------------------------------------------------
# short second moment and the Poisson verification step


def _lift_step(table: UnitGroupTable, q_small: int) -> int:
    """Index stride of the lift of characters mod q_small into level p^n."""
    p_s, n_s = factor_prime_power(q_small)
    if p_s != table.p or n_s > table.n:
        raise ValueError("q_small must be a smaller power of the same prime")
    return table.p ** (table.n - n_s)


def short_second_moment(chi: DirichletCharacter, q1: int,
                        store: LValueStore) -> float:
    """S_2(chi) = sum over the phi(q1) characters psi_1 mod q1 of
    |L(1/2, inducer of chi psi_1)|^2."""
    table = chi.table
    _check_q_restrictions(chi.p, q1, q1, table.q)
    step = _lift_step(table, q1)
    phi1 = q1 // chi.p * (chi.p - 1)
    total = 0.0
    for b in range(phi1):
        idx = (chi.index + b * step) % table.phi
        if table.conductor_exponent(idx) == 0:
            continue  # principal twist excluded (no primitive inducer)
        total += abs(store.lookup(chi.p, table.n, idx)) ** 2
    return total


def _check_q_restrictions(p: int, q1: int, q2: int, q: int):
    if not (p <= q1 <= q2 < q):
        raise ValueError(f"needs p <= q1 <= q2 < q, got {(p, q1, q2, q)}")
    for qi in (q1, q2):
        pi, _ = factor_prime_power(qi)
        if pi != p:
            raise ValueError("q1, q2 must be powers of the same prime")


@dataclass(frozen=True)
class PoissonCheck:
    direct: complex
    dual: complex
    residual: float
    j_used: int
    j_tail: float


def poisson_step_check(chi: DirichletCharacter, q1: int, N: int, h: int,
                       quad_tol: float = 1e-10) -> PoissonCheck:
    """Both sides of the Poisson summation step for

        S_{h q1}(N; chi) = sum* over r mod Q1 of chi(r + h q1) conj(chi)(r)
                           sum_j V_N(r + j Q1 + h q1) V_N(r + j Q1),

    the dual form being Q1^(-1/2) sum_j What_{h q1}(j/Q1) K_chi(j, h; Q1).
    Returns the absolute discrepancy between the two evaluations.
    """
    q = chi.modulus
    p = chi.p
    _check_q_restrictions(p, q1, q1, q)
    Q1 = q // q1
    if Q1 <= 1:
        raise ValueError("need Q1 = q/q1 > 1")
    shift = h * q1
    weight = SmoothWeight(N)
    lo, hi = N / 2.0, 2.0 * N - shift

    # direct side, residue classes mod Q1
    direct = 0.0 + 0.0j
    if lo < hi:
        rs = units_mod(Q1, p)
        left = chi.value_many((rs + shift) % q)
        right = np.conj(chi.value_many(rs))
        inner = np.zeros(len(rs), dtype=complex)
        j_lo = int(math.floor((lo - Q1) / Q1)) - 1
        j_hi = int(math.ceil(hi / Q1)) + 1
        for j in range(j_lo, j_hi + 1):
            ys = rs + j * Q1
            inner += weight(ys + shift) * weight(ys)
        direct = complex(np.sum(left * right * inner))

    # dual side via the trace sums; the transform of the bump pair decays
    # like exp(-c sqrt(N xi)), so truncation is driven by measured decay
    dual = 0.0 + 0.0j
    j_used = 0
    j_tail = 0.0
    if lo < hi:
        cutoff = 1e-9 * N
        consecutive_small = 0
        j = 0
        while True:
            level = 0.0
            for sgn in ((0,) if j == 0 else (j, -j)):
                what = _pair_transform(N, shift, sgn, Q1, quad_tol)
                level = max(level, abs(what))
                if abs(what) > cutoff:
                    dual += what * kchi_direct(chi, sgn, h, Q1)
                    j_used = max(j_used, abs(sgn))
                else:
                    j_tail = max(j_tail, abs(what))
            if j > 0:
                consecutive_small = consecutive_small + 1 if level <= cutoff else 0
                if consecutive_small >= 4:
                    break
            if j > 4000:
                raise QuadratureError("dual Poisson sum did not truncate")
            j += 1
        dual /= math.sqrt(Q1)
    return PoissonCheck(direct=complex(direct), dual=complex(dual),
                        residual=abs(complex(direct) - complex(dual)),
                        j_used=j_used, j_tail=j_tail)


def divisor_count(m: int) -> int:
    m = abs(m)
    count = 1
    d = 2
    while d * d <= m:
        if m % d == 0:
            e = 0
            while m % d == 0:
                m //= d
                e += 1
            count *= e + 1
        d += 1
    if m > 1:
        count *= 2
    return count


def coefficients_A(m: int, p_eta: int, N: int, q1: int, q: int,
                   quad_tol: float = 1e-10) -> complex:
    """The arithmetic coefficient A(m; p^eta): the divisor sum

        sum over h' j' = m with p coprime to h' j',
            1 <= h' <= 3N/(2 q1 p^eta),  |j'| <= q^0.05 Q1 / (N p^eta)
        of N^-1 What_{h' p^eta q1}(j' p^eta / Q1).

    Depends only on (m, eta, N, q1); characters never enter.
    """
    p, _ = factor_prime_power(q)
    if m == 0 or m % p == 0:
        raise ValueError("m must be nonzero and coprime to p")
    Q1 = q // q1
    H = int(1.5 * N / (q1 * p_eta))
    J = int(math.ceil(q ** EPS_WINDOW * Q1 / (N * p_eta)))
    total = 0.0 + 0.0j
    am = abs(m)
    for hp in range(1, H + 1):
        if hp % p == 0 or am % hp != 0:
            continue
        jp = m // hp if m > 0 else -(am // hp)
        if abs(jp) > J or jp % p == 0:
            continue
        total += _pair_transform(N, hp * p_eta * q1, jp * p_eta, Q1, quad_tol)
    return complex(total) / N


@dataclass(frozen=True)
class Prop31Result:
    s2: float
    rhs: float
    ratio: float
    n_star: int
    tie_to_smaller: bool


def _maximizing_dyadic_n(chi: DirichletCharacter, q1: int) -> tuple[int, bool]:
    """Dyadic N <= q^(1/2+0.05) maximizing the psi_1-averaged block sum;
    ties broken toward smaller N (flagged)."""
    table = chi.table
    q = table.q
    step = _lift_step(table, q1)
    phi1 = q1 // chi.p * (chi.p - 1)
    best_n, best_val, tie = 1, -1.0, False
    scale = 1
    while scale <= q ** (0.5 + EPS_WINDOW):
        weight = SmoothWeight(scale)
        ns = np.arange(max(1, scale // 2), 2 * scale + 1, dtype=np.int64)
        w = weight(ns)
        val = 0.0
        for b in range(phi1):
            psi = DirichletCharacter(table, (chi.index + b * step) % table.phi)
            val += abs(np.sum(psi.value_many(ns) * w)) ** 2 / scale
        if abs(val - best_val) <= 1e-12 * max(val, best_val, 1e-300):
            tie = True
        elif val > best_val:
            best_n, best_val, tie = scale, val, False
        scale *= 2
    return best_n, tie


def verify_prop_31(chi: DirichletCharacter, q1: int, store: LValueStore,
                   quad_tol: float = 1e-10) -> Prop31Result:
    """Short-second-moment bound check: S_2(chi) against

        q1 (1 + Q1^(-1/2) Re sum_eta p^(eta/2) sum_m K_chi(m; Q1/p^eta)
                                               A(m; p^eta)),

    at the maximizing dyadic scale; the returned ratio carries the fixed
    q^0.1 slack instantiation.
    """
    q = chi.modulus
    p = chi.p
    _check_q_restrictions(p, q1, q1, q)
    Q1 = q // q1
    s2 = short_second_moment(chi, q1, store)
    n_star, tie = _maximizing_dyadic_n(chi, q1)
    inner = 0.0 + 0.0j
    eta = 0
    while True:
        p_eta = p ** eta
        if p_eta > q ** (0.5 + EPS_WINDOW) / q1 or Q1 // p_eta < p:
            break
        if Q1 % p_eta != 0:
            break
        qt = Q1 // p_eta
        m_cap = int(q ** (1 + EPS_WINDOW) / (q1 * q1 * p_eta * p_eta))
        term = 0.0 + 0.0j
        for m in range(-m_cap, m_cap + 1):
            if m == 0 or m % p == 0:
                continue
            coeff = coefficients_A(m, p_eta, n_star, q1, q, quad_tol)
            if coeff == 0:
                continue
            term += kchi_m_direct(chi, m, qt) * coeff
        inner += p_eta ** 0.5 * term
        eta += 1
    rhs = q1 * (1.0 + inner.real / math.sqrt(Q1))
    ratio = s2 / (rhs * q ** EPS_RATIO) if rhs > 0 else math.inf
    return Prop31Result(s2=s2, rhs=rhs, ratio=ratio, n_star=n_star,
                        tie_to_smaller=tie)


@dataclass(frozen=True)
class Prop51Result:
    lhs: float
    rhs: float
    ratio: float
    psi_size: int


def verify_prop_51(chi: DirichletCharacter, q1: int, q2: int,
                   psi_indices: Sequence[int],
                   store: LValueStore) -> Prop51Result:
    """Aggregate short-moment bound over a set Psi of characters mod q2:

        sum over psi in Psi of S_2(chi psi)
            against (q1 + q1^(1/4) q2^(1/4)) |Psi| + q^(1/2) |Psi|^(1/2).
    """
    q = chi.modulus
    _check_q_restrictions(chi.p, q1, q2, q)
    table = chi.table
    step2 = _lift_step(table, q2)
    lhs = 0.0
    for b in psi_indices:
        twisted = DirichletCharacter(table, (chi.index + b * step2) % table.phi)
        lhs += short_second_moment(twisted, q1, store)
    size = len(psi_indices)
    rhs = (q1 + q1 ** 0.25 * q2 ** 0.25) * size + math.sqrt(q) * math.sqrt(size)
    ratio = lhs / (rhs * q ** EPS_RATIO) if size else 0.0
    return Prop51Result(lhs=lhs, rhs=rhs, ratio=ratio, psi_size=size)


# ---------------------------------------------------------------------------
# moments and large values


def moment(q: int, k: int, store: LValueStore,
           include_principal: bool = False) -> float:
    """sum over characters mod q of |L(1/2, primitive inducer)|^k.

    The principal character maps to zeta and is excluded unless the flag
    is set, in which case its Euler-corrected value enters.
    """
    if k not in (2, 4, 12):
        raise ValueError("supported exponents: 2, 4, 12")
    p, n = factor_prime_power(q)
    vals = store.abs_all(p, n)
    total = float(np.nansum(vals ** k))
    if include_principal:
        total += abs(zeta_half() * (1 - p ** -0.5)) ** k
    return total


@dataclass
class MomentRecord:
    """Aggregates for one modulus: moments, large-value counts, diagnostics.

    All moments are nonnegative and the counts |R(V;q)| are weakly
    decreasing in V; validate() asserts both.
    """

    q: int
    q1: Optional[int] = None
    q2: Optional[int] = None
    moments: dict = field(default_factory=dict)
    large_value_counts: list = field(default_factory=list)  # (V, count, in_range)
    diagnostics: dict = field(default_factory=dict)

    def validate(self):
        for k, v in self.moments.items():
            if v < 0:
                raise ValueError(f"moment {k} negative")
        counts = [c for _, c, _ in self.large_value_counts]
        if any(c2 > c1 for c1, c2 in zip(counts, counts[1:])):
            raise ValueError("|R(V;q)| must be weakly decreasing in V")
        return self


def interest_range(q: int) -> tuple[float, float]:
    """The large-value range of interest [q^(1/8-0.05), q^(1/6+0.05)]."""
    return (q ** (1 / 8 - EPS_WINDOW), q ** (1 / 6 + EPS_WINDOW))


def large_values(q: int, v_grid: Sequence[float], store: LValueStore,
                 q2: Optional[int] = None, q1: Optional[int] = None,
                 chi_index: Optional[int] = None) -> MomentRecord:
    """Exact large-value counts |R(V;q)| by thresholding stored values.

    With q2 given, also counts |R_2(V;chi)| for every primitive chi and
    checks the double-counting identity: each member of R(V;q) arises from
    exactly phi(q2) pairs (chi, chi_2), so

        sum over primitive chi of |R_2(V;chi)| = phi(q2) |R(V;q)|

    exactly.  The q2-normalized ratio (which differs by 1 - 1/p) is
    recorded alongside.  With (q1, chi_index) given, the neighborhood set
    size |Psi(V;chi)| is recorded for the middle grid value.
    """
    p, n = factor_prime_power(q)
    table = unit_group(p, n)
    prim = primitive_indices(table)
    absL = np.abs(store.level(p, n))
    lo, hi = interest_range(q)
    rec = MomentRecord(q=q, q1=q1, q2=q2)
    for V in v_grid:
        count = int(np.sum(absL[prim] > V))
        rec.large_value_counts.append((float(V), count, lo <= V <= hi))
    if q2 is not None:
        phi2 = q2 // p * (p - 1)
        step2 = _lift_step(table, q2)
        V0 = v_grid[len(v_grid) // 2]
        in_r = absL > V0
        total_r2 = 0
        for a in prim:
            idx2 = (int(a) + step2 * np.arange(phi2, dtype=np.int64)) % table.phi
            total_r2 += int(np.sum(in_r[idx2]))
        r_count = int(np.sum(absL[prim] > V0))
        rec.diagnostics["bookkeeping_V"] = float(V0)
        rec.diagnostics["sum_R2"] = total_r2
        rec.diagnostics["phi_q2_times_R"] = phi2 * r_count
        rec.diagnostics["bookkeeping_exact"] = total_r2 == phi2 * r_count
        rec.diagnostics["q2_normalized_ratio"] = (
            total_r2 / (q2 * r_count) if r_count else None)
        if chi_index is not None:
            bs = np.arange(phi2, dtype=np.int64)
            idx2 = (chi_index + step2 * bs) % table.phi
            r2_mask = in_r[idx2]
            rec.diagnostics["R2_of_chi"] = int(np.sum(r2_mask))
            if q1 is not None:
                # Psi(V;chi): psi_2 with psi_1 psi_2 in R_2 for some psi_1
                phi1 = q1 // p * (p - 1)
                step12 = phi2 // phi1
                psi_mask = np.zeros(phi2, dtype=bool)
                for c in range(phi1):
                    psi_mask |= np.roll(r2_mask, -c * step12)
                rec.diagnostics["Psi_of_chi"] = int(np.sum(psi_mask))
    return rec.validate()


def choose_q1(V: float, q: int, p: int) -> int:
    """Power of p nearest (in log) to V^2 q^-0.05 within the window
    [V^2 q^-0.15, V^2 q^-0.1]; nearest to the window center if the window
    contains no power of p.  Clamped to [p, q/p]."""
    lo = V * V * q ** (-3 * EPS_WINDOW)
    hi = V * V * q ** (-2 * EPS_WINDOW)
    target = V * V * q ** (-EPS_WINDOW)
    center = V * V * q ** (-2.5 * EPS_WINDOW)
    powers = []
    pk = p
    while pk <= q // p:
        powers.append(pk)
        pk *= p
    inside = [x for x in powers if lo <= x <= hi]
    pool = inside if inside else powers
    anchor = target if inside else center
    return min(pool, key=lambda x: abs(math.log(x) - math.log(anchor)))
