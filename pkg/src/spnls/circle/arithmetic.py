"""Exact integer arithmetic: rational approximation, divisors, Ramanujan sums.

All counting is done in Python integers or int64 arrays with explicit range
checks, never in floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..spectral import eta1

__all__ = [
    "RationalApprox",
    "dirichlet_approx",
    "mobius_table",
    "totient",
    "ramanujan_sum",
    "ramanujan_sum_direct",
    "ramanujan_table",
    "divisor_count",
    "divisor_counts",
    "farey_bump_coeffs",
    "farey_identity_check",
    "FareyCheck",
    "ramanujan_bound_check",
    "RamanujanReport",
    "divisor_level_set_check",
    "LevelSetReport",
    "eta_hat_periodized",
]

_INT64_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class RationalApprox:
    a: int
    q: int
    beta: float

    def __post_init__(self):
        if self.q < 1 or math.gcd(self.a, self.q) != 1:
            raise ValueError(f"invalid rational approximation {self.a}/{self.q}")


def dirichlet_approx(t: float, N: int) -> RationalApprox:
    """(a, q, beta) with t/(2 pi) = a/q + beta, q <= N, gcd(a, q) = 1, |beta| <= 1/(N q).

    Uses the last continued-fraction convergent of t/(2 pi) with
    denominator at most N; the float is converted to an exact rational.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    alpha = Fraction(float(t) / (2 * math.pi))
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    x = alpha
    a_best, q_best = math.floor(alpha), 1
    while True:
        c = math.floor(x)
        h0, h1 = h1, c * h1 + h0
        k0, k1 = k1, c * k1 + k0
        if k1 > N:
            break
        a_best, q_best = h1, k1
        frac = x - c
        if frac == 0:
            break
        x = 1 / frac
    beta = alpha - Fraction(a_best, q_best)
    return RationalApprox(int(a_best), int(q_best), float(beta))


def mobius_table(n: int) -> np.ndarray:
    """mu(0..n) by a linear sieve (mu[0] is unused and set to 0)."""
    mu = np.ones(n + 1, dtype=np.int64)
    mu[0] = 0
    is_comp = np.zeros(n + 1, dtype=bool)
    primes = []
    for i in range(2, n + 1):
        if not is_comp[i]:
            primes.append(i)
            mu[i] = -1
        for p in primes:
            if i * p > n:
                break
            is_comp[i * p] = True
            if i % p == 0:
                mu[i * p] = 0
                break
            mu[i * p] = -mu[i]
    return mu


def totient(n: int) -> int:
    result, m, p = n, n, 2
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            result -= result // p
        p += 1
    if m > 1:
        result -= result // m
    return result


def _divisors(n: int) -> list[int]:
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d * d != n:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def ramanujan_sum(q: int, m: int, mu=None) -> int:
    """c_q(m) = sum_{a mod q, (a,q)=1} e^{-2 pi i m a/q} = sum_{d | (q, m)} mu(q/d) d."""
    mu = mobius_table(q) if mu is None else mu
    g = math.gcd(q, abs(m)) if m != 0 else q
    return int(sum(int(mu[q // d]) * d for d in _divisors(g)))


def ramanujan_sum_direct(q: int, m: int) -> complex:
    """The defining double sum evaluated in floating point."""
    a = np.array([a for a in range(q) if math.gcd(a, q) == 1])
    return complex(np.exp(-2j * np.pi * m * a / q).sum())


def ramanujan_table(Q: int, ms: np.ndarray) -> np.ndarray:
    """Exact c_q(m) for q = 1..Q (rows) and the integer array ``ms`` (columns)."""
    ms = np.asarray(ms, dtype=np.int64)
    mu = mobius_table(Q)
    out = np.zeros((Q, ms.size), dtype=np.int64)
    for q in range(1, Q + 1):
        for d in _divisors(q):
            s = int(mu[q // d])
            if s:
                out[q - 1] += s * d * (ms % d == 0)
    return out


def divisor_count(m: int, Q: int) -> int:
    """#{d <= Q : d | m}; every d divides 0, so d(0, Q) = Q."""
    if Q < 1:
        raise ValueError("Q must be a positive integer")
    m = abs(int(m))
    if m == 0:
        return int(Q)
    return sum(1 for d in range(1, min(Q, m) + 1) if m % d == 0)


def divisor_counts(ms, Q: int) -> np.ndarray:
    ms = np.abs(np.asarray(ms, dtype=np.int64))
    out = np.zeros(ms.shape, dtype=np.int64)
    for d in range(1, Q + 1):
        out += ms % d == 0
    return out


def farey_bump_coeffs(S, M: int, Q: int, m) -> np.ndarray:
    """c_m = sum_{q in S} sum_{a mod q, (a,q)=1} e^{-2 pi i m a/q} (exact integers)."""
    S = sorted(set(int(q) for q in S))
    if M < 8 * Q:
        raise ValueError(f"need M >= 8Q, got M={M}, Q={Q}")
    if not S or S[0] < 1 or S[-1] > Q:
        raise ValueError("S must be a nonempty subset of {1, ..., Q}")
    ms = np.atleast_1d(np.asarray(m, dtype=np.int64))
    tab = ramanujan_table(Q, ms)
    out = tab[[q - 1 for q in S]].sum(axis=0)
    return out if np.ndim(m) else int(out[0])


def eta_hat_periodized(P: float, n: int, eta=eta1) -> np.ndarray:
    """eta_hat(2 pi m / P) for m in FFT order, by the trapezoid rule on [-P/2, P/2).

    ``eta`` is supported in [-2, 2] and P > 4, so the periodization has no
    overlap and the rule is spectrally accurate.
    """
    x = np.arange(n) * (P / n)
    x = (x + P / 2) % P - P / 2
    return (P / n) * np.fft.fft(eta(x))


@dataclass
class FareyCheck:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_error: float
    tail_bound: float
    max_abs_cm: int
    cm_bound: int


def farey_identity_check(S, M: int, Q: int, n_t: int = 4096, oversample: int = 64,
                         m_max: int = 1000) -> FareyCheck:
    """Both sides of the Farey-bump Fourier identity on a uniform grid of [0, 1).

    Left: sum over q in S and a coprime to q of eta(MQ(t - a/q)).
    Right: sum_m (MQ)^{-1} eta_hat(2 pi m/(MQ)) c_m e^{2 pi i m t}, truncated
    to |m| < oversample MQ / 2 and folded onto the t-grid.
    """
    S = sorted(set(int(q) for q in S))
    P = M * Q
    t = np.arange(n_t) / n_t
    lhs = np.zeros(n_t)
    for q in S:
        for a in range(-2, q + 3):
            if math.gcd(a, q) == 1:
                lhs += eta1(P * (t - a / q))
    n = oversample * P
    ehat = eta_hat_periodized(P, n)
    ms = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    cm = farey_bump_coeffs(S, M, Q, ms)
    coef = ehat * cm / P
    folded = np.zeros(n_t, dtype=complex)
    np.add.at(folded, ms % n_t, coef)
    rhs = (np.fft.ifft(folded) * n_t).real
    edge = np.abs(ehat[n // 2 - 8 : n // 2 + 8]).max() / P * np.abs(cm).max()
    mm = np.arange(-m_max, m_max + 1)
    cmm = farey_bump_coeffs(S, M, Q, mm)
    return FareyCheck(t, lhs, rhs, float(np.abs(lhs - rhs).max()), float(edge * n), int(np.abs(cmm).max()),
                      4 * Q * Q)


@dataclass
class RamanujanReport:
    Q: int
    gamma: float
    ms: np.ndarray
    lhs: np.ndarray
    divisors: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    argmax: int


def ramanujan_bound_check(Q: int, m_range, gamma: float) -> RamanujanReport:
    """max over m of sum_{q <= Q} |c_q(m)| / (d(m, Q) Q^{1+gamma})."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lo, hi = m_range
    if max(abs(lo), abs(hi)) * Q > _INT64_MAX // 4:
        raise OverflowError("m range too large for exact int64 arithmetic")
    ms = np.arange(lo, hi + 1, dtype=np.int64)
    lhs = np.abs(ramanujan_table(Q, ms)).sum(axis=0)
    d = divisor_counts(ms, Q)
    ratios = lhs / (d * float(Q) ** (1 + gamma))
    i = int(np.argmax(ratios))
    return RamanujanReport(Q, gamma, ms, lhs, d, ratios, float(ratios[i]), int(ms[i]))


@dataclass
class LevelSetReport:
    P: int
    Q: int
    D: int
    gamma: float
    B: float
    count: int
    bound_shape: float
    implied_constant: float


def divisor_level_set_check(P: int, Q: int, D: int, gamma: float, B: float) -> LevelSetReport:
    """Exact #{m in 0..P : d(m, Q) >= D} against D^{-B} Q^gamma P + Q^B."""
    for name, v in (("P", P), ("Q", Q), ("D", D)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer")
    if gamma <= 0 or B <= 0:
        raise ValueError("gamma and B must be positive")
    d = divisor_counts(np.arange(P + 1, dtype=np.int64), Q)
    d[0] = Q
    count = int(np.sum(d >= D))
    shape = float(D) ** (-B) * float(Q) ** gamma * P + float(Q) ** B
    return LevelSetReport(P, Q, D, gamma, B, count, shape, count / shape)
