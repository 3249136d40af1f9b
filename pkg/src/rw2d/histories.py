"""Combinatorics of level-crossing histories and related analytic utilities.

A history on levels 0..n starts at level 1, moves one level at a time, is
forced down at level n and stops on first reaching 0.  ``m_l`` (l = 2..n)
counts its upcrossings from l-1 to l.  Under the idealized level chain
(fair moves at levels 1..n-1) a fixed history with vector m has probability
(1/2)^(|m| - m_n), where |m| = 2 * sum(m) + 1 is its length.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, logsumexp

from .excursion import SuccessCriterion, frak_n, k0
from .rng import next_bit, seed_state

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class HistoryVector:
    """Upcrossing counts (m_2, ..., m_n)."""

    n: int
    m: tuple

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if len(self.m) != self.n - 1:
            raise ValueError(f"expected {self.n - 1} entries m_2..m_n, got {len(self.m)}")
        if any(v < 0 for v in self.m):
            raise ValueError("upcrossing counts must be nonnegative")

    @classmethod
    def of(cls, *m) -> "HistoryVector":
        return cls(len(m) + 1, m)

    def u(self, level: int) -> int:
        """Upcrossings from level-1 to level."""
        return self.m[level - 2]

    @property
    def length(self) -> int:
        return 2 * sum(self.m) + 1


def _nb_count(upper: int, lower: int) -> int:
    """C(upper + lower - 1, lower - 1), with C(j - 1, -1) = [j == 0]."""
    if lower == 0:
        return 1 if upper == 0 else 0
    return math.comb(upper + lower - 1, lower - 1)


def history_count(h: HistoryVector) -> int:
    """Number of histories with the given upcrossing counts."""
    out = 1
    for ell in range(2, h.n):
        out *= _nb_count(h.u(ell + 1), h.u(ell))
        if out == 0:
            return 0
    return out


def count_paths(h: HistoryVector) -> int:
    """Exhaustive count of nearest-level paths realising ``h``.

    Depth-first search over paths from level 1, forced down at n, stopped at
    the first visit to 0, with exactly ``m_l`` upcrossings into each level l.
    Independent of the product formula; used as its oracle.
    """
    n = h.n

    @lru_cache(maxsize=None)
    def walk(level: int, left: tuple) -> int:
        if level == 0:
            return 1 if not any(left) else 0
        total = 0
        if level < n and left[level - 1] > 0:  # up into level + 1 uses m_{level+1}
            rest = list(left)
            rest[level - 1] -= 1
            total += walk(level + 1, tuple(rest))
        total += walk(level - 1, left)
        return total

    return walk(1, h.m)


def history_probability(h: HistoryVector) -> Fraction:
    """Probability of any single history with vector ``h`` under the level chain."""
    return Fraction(1, 2 ** (h.length - h.m[-1]))


def history_mass(h: HistoryVector) -> Fraction:
    return history_count(h) * history_probability(h)


def total_probability(n: int) -> Fraction:
    """Sum of history_mass over all vectors, done level by level in rationals.

    Summing m_l out of C(m_l + m_{l-1} - 1, m_{l-1} - 1) y^{m_l} leaves
    (1 - y)^{-m_{l-1}}; the per-level base stays rational throughout.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    y = Fraction(1, 2)  # weight per unit of m_n
    for _ in range(n - 1, 1, -1):
        if not 0 <= y < 1:
            raise ArithmeticError("divergent negative-binomial series")
        y = Fraction(1, 4) / (1 - y)
    # m_2 carries (1/2)^{2 m_2} times the folded weight; leading 1/2 from |m| = 2 sum + 1
    return Fraction(1, 2) / (1 - y)


def absorbed_by(n: int, steps: int) -> Fraction:
    """P(level chain started at 1 is absorbed at 0 within ``steps`` moves), exactly."""
    dist = [Fraction(0)] * (n + 1)
    dist[1] = Fraction(1)
    absorbed = Fraction(0)
    half = Fraction(1, 2)
    for _ in range(steps):
        new = [Fraction(0)] * (n + 1)
        for lvl in range(1, n + 1):
            p = dist[lvl]
            if not p:
                continue
            if lvl == n:
                new[n - 1] += p
            else:
                new[lvl + 1] += p * half
                new[lvl - 1] += p * half
        absorbed += new[0]
        new[0] = Fraction(0)
        dist = new
    return absorbed


def vectors_up_to(n: int, max_length: int):
    """All history vectors with |m| <= max_length."""
    budget = (max_length - 1) // 2
    for m in itertools.product(range(budget + 1), repeat=n - 1):
        if sum(m) <= budget:
            yield HistoryVector(n, m)


# --------------------------------------------------------------------------
# level chain sampling


@njit(cache=True, nogil=True)
def _chain(key, first, trials, n, start_level, arrivals, cap, out, steps):
    state = np.empty(4, dtype=np.uint64)
    for i in range(trials):
        seed_state(key, first + i, state)
        t = 0
        for _ in range(arrivals):
            lvl = start_level
            while lvl >= start_level:
                if t >= cap:
                    break
                if lvl == n:
                    lvl -= 1
                elif next_bit(state) == 1:
                    lvl += 1
                    out[i, lvl] += 1
                else:
                    lvl -= 1
                t += 1
        steps[i] = -1 if t >= cap else t


class ChainSamples(NamedTuple):
    m: np.ndarray  # (trials, n + 1); column l holds upcrossings into level l
    truncated: int


def level_chain_batch(key, trials: int, n: int, cap: int = 10**7, first: int = 0) -> ChainSamples:
    """Upcrossing vectors of the level chain from level 1 to absorption."""
    return level_chain_from(key, trials, 1, 1, n, cap, first)


def level_chain_from(key, trials: int, level: int, arrivals: int, n: int,
                     cap: int = 10**7, first: int = 0) -> ChainSamples:
    """Upcrossings above ``level`` generated by ``arrivals`` visits to it.

    Each arrival runs the chain until it drops below ``level``.
    """
    if n < 2 or not 1 <= level <= n:
        raise ValueError("need n >= 2 and 1 <= level <= n")
    out = np.zeros((trials, n + 1), dtype=np.int64)
    steps = np.zeros(trials, dtype=np.int64)
    _chain(np.uint64(key), first, trials, n, level, arrivals, cap, out, steps)
    return ChainSamples(out, int((steps < 0).sum()))


def level_chain_sample(n: int, stream) -> HistoryVector:
    """One sampled history vector; ``stream`` is a :class:`rw2d.rng.Stream`."""
    out = np.zeros((1, n + 1), dtype=np.int64)
    steps = np.zeros(1, dtype=np.int64)
    _chain_state(stream.state, n, out, steps)
    if steps[0] < 0:
        raise RuntimeError("level chain hit its step cap")
    return HistoryVector(n, tuple(out[0, 2:].tolist()))


@njit(cache=True)
def _chain_state(state, n, out, steps):
    lvl = 1
    t = 0
    while lvl >= 1:
        if t >= 10**8:
            steps[0] = -1
            return
        if lvl == n:
            lvl -= 1
        elif next_bit(state) == 1:
            lvl += 1
            out[0, lvl] += 1
        else:
            lvl -= 1
        t += 1
    steps[0] = t


# --------------------------------------------------------------------------
# excursion joint law


def log_nb_factor(upper, lower):
    """log of C(upper + lower - 1, lower - 1) (1/2)^(upper + lower); vectorised."""
    upper = np.asarray(upper, dtype=float)
    lower = np.asarray(lower, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (gammaln(upper + lower) - gammaln(lower) - gammaln(upper + 1)
               - (upper + lower) * LOG2)
    val = np.where(lower == 0, np.where(upper == 0, 0.0, -np.inf), val)
    return val if val.ndim else float(val)


class ExcursionJointLaw:
    """Law of (m_{l+1}, ..., m_n) given m_l crossings into level l."""

    def __init__(self, l: int, m_l: int, n: int):
        if not 1 <= l < n:
            raise ValueError("need 1 <= l < n")
        if m_l < 1:
            raise ValueError("m_l must be >= 1")
        self.l, self.m_l, self.n = l, m_l, n

    def logpmf(self, ms: Sequence[int]) -> float:
        if len(ms) != self.n - self.l:
            raise ValueError(f"expected {self.n - self.l} counts")
        if any(v < 0 for v in ms):
            return -math.inf
        chain = [self.m_l, *ms]
        return float(sum(log_nb_factor(chain[i + 1], chain[i]) for i in range(len(ms))))

    def pmf(self, ms: Sequence[int]) -> float:
        return math.exp(self.logpmf(ms))

    def exact_pmf(self, ms: Sequence[int]) -> Fraction:
        chain = [self.m_l, *ms]
        out = Fraction(1)
        for i in range(len(ms)):
            out *= Fraction(_nb_count(chain[i + 1], chain[i]), 2 ** (chain[i + 1] + chain[i]))
        return out

    def conditional(self, lower: int, support: int) -> np.ndarray:
        """pmf of the next count given ``lower`` crossings, on 0..support-1."""
        return np.exp(log_nb_factor(np.arange(support), lower))


def excursion_joint_law(l: int, m_l: int, n: int) -> ExcursionJointLaw:
    return ExcursionJointLaw(l, m_l, n)


# --------------------------------------------------------------------------
# probability of the admissible band of histories


def admissible_levels(a: float, n: int) -> list[range]:
    """Admissible integer values of m_l for l = 2..n."""
    c = SuccessCriterion(a, n)
    return [c.integer_band(l) for l in range(2, n + 1)]


def successful_prob_dp(a: float, n: int) -> float:
    """log of the band sum of prod_l C(m_{l+1}+m_l-1, m_l-1) (1/2)^(m_{l+1}+m_l).

    Forward dynamic programme over (l, m_l) in log space.  Returns -inf when
    some band holds no integer.
    """
    if not 0 < a < 2:
        raise ValueError("a must lie in (0, 2)")
    if n < k0(a):
        raise ValueError(f"n must be >= k0(a) = {k0(a)}")
    bands = admissible_levels(a, n)
    if any(len(b) == 0 for b in bands):
        return -math.inf
    prev_m = np.array(bands[0], dtype=float)
    v = np.zeros(len(prev_m))
    for band in bands[1:]:
        nxt = np.array(band, dtype=float)
        w = v[:, None] + log_nb_factor(nxt[None, :], prev_m[:, None])
        v = logsumexp(w, axis=0)
        prev_m = nxt
    return float(logsumexp(v))


def successful_prob_bruteforce(a: float, n: int) -> Fraction:
    """Exact big-integer band sum by enumeration (small n only)."""
    bands = admissible_levels(a, n)
    total = Fraction(0)
    for ms in itertools.product(*bands):
        num, exp2 = 1, 0
        for i in range(len(ms) - 1):
            num *= _nb_count(ms[i + 1], ms[i])
            exp2 += ms[i + 1] + ms[i]
        total += Fraction(num, 2**exp2)
    return total


def log_fraction(q: Fraction) -> float:
    if q <= 0:
        return -math.inf
    return math.log(q.numerator) - math.log(q.denominator)


def exponent_ratio(a: float, n: int) -> float:
    """-log(band sum) / (3 a log n!)."""
    return -successful_prob_dp(a, n) / (3 * a * math.lgamma(n + 1))


# --------------------------------------------------------------------------
# Stirling band, rate function, minimisation and Paley-Zygmund


def round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def log_binom(n, k) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def stirling_band(a: float, k: int) -> float:
    """C(m+l, l) (1/2)^(m+l+1) over k^(-3a-1)/sqrt(log k) at the band centers."""
    if k < 2:
        raise ValueError("k must be >= 2")
    m = round_half_up(frak_n(a, k + 1))
    ell = round_half_up(frak_n(a, k)) - 1
    log_b = log_binom(m + ell, ell) - (m + ell + 1) * LOG2
    log_ref = (-3 * a - 1) * math.log(k) - 0.5 * math.log(math.log(k))
    return math.exp(log_b - log_ref)


def rate_I(lam: float) -> float:
    """-(1+lam) log(1+lam) + lam log lam + lam log 2 + log 2."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return -(1 + lam) * math.log1p(lam) + lam * math.log(lam) + lam * LOG2 + LOG2


class MinPhi(NamedTuple):
    value: float
    argmin: float
    at_boundary: bool


def phi_objective(phi: float, alpha: float, beta: float) -> float:
    return phi * alpha - phi / (1 + phi) * beta


def min_phi(alpha: float, beta: float) -> MinPhi:
    """inf over phi >= 0 of phi*alpha - phi/(1+phi)*beta in closed form."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if beta < alpha:
        return MinPhi(0.0, 0.0, True)
    sa, sb = math.sqrt(alpha), math.sqrt(beta)
    return MinPhi(-((sb - sa) ** 2), sb / sa - 1, False)


def min_phi_numeric(alpha: float, beta: float, upper: float = 100.0) -> MinPhi:
    """Bounded Brent minimisation of the same objective over (0, upper]."""
    res = minimize_scalar(phi_objective, bounds=(0.0, upper), args=(alpha, beta),
                          method="bounded", options={"xatol": 1e-12, "maxiter": 2000})
    return MinPhi(float(res.fun), float(res.x), False)


def pz_bound(mean: float, second_moment: float, lam: float) -> float:
    """Paley-Zygmund lower bound (1-lam)^2 (EW)^2 / E(W^2) for P(W >= lam EW)."""
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    if mean <= 0 or second_moment < mean * mean * (1 - 1e-12):
        raise ValueError("need second_moment >= mean^2 > 0")
    return (1 - lam) ** 2 * mean * mean / second_moment
