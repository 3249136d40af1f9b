"""Concentric radii schedules, excursion counts and the n-successful predicate.

Level ``k`` (1 <= k <= n) is the annulus between the circles ``∂D(c, r_{k-1})``
and ``∂D(c, r_k)``.  ``N_k`` counts completed traversals from the outer
circle to the inner one.  A nearest-neighbour walk crossing a lattice disk in
either direction must pass through its exterior boundary shell, so touching a
shell is an exact event.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .lattice import (
    STEPS,
    DiskSpec,
    LatticePoint,
    as_point,
    disk_points,
    exact_radius,
    membership_threshold,
)
from .rng import next_direction, seed_state

NONE, OUTER, INNER = 0, 1, 2


@dataclass(frozen=True)
class RadiiSchedule:
    """Decreasing radii r_0 > r_1 > ... > r_n around a center.

    ``asymptotic`` mode uses r_k = e^n n^(3(n-k)) and K = 16 e^n n^(3n); those
    overflow quickly, so they are exposed in log space only.  ``desk`` mode
    uses r_k = r_min * ratio^(n-k) with exact rationals and K = 16 r_0.
    """

    n: int
    mode: str = "desk"
    r_min: Fraction | float | int = 4
    ratio: Fraction | float | int = 2

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one level")
        if self.mode not in ("desk", "asymptotic"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "desk":
            if not exact_radius(self.r_min) > 0:
                raise ValueError("r_min must be positive")
            if exact_radius(self.ratio) < 2:
                raise ValueError("ratio must be >= 2")

    @classmethod
    def asymptotic(cls, n: int) -> "RadiiSchedule":
        return cls(n, "asymptotic")

    def log_radius(self, k: int) -> float:
        if not 0 <= k <= self.n:
            raise IndexError(k)
        if self.mode == "asymptotic":
            return self.n + 3 * (self.n - k) * math.log(self.n)
        return math.log(self.radius(k))

    def log_K(self) -> float:
        return math.log(16) + self.log_radius(0)

    def radius(self, k: int) -> Fraction:
        if self.mode == "asymptotic":
            raise ValueError("asymptotic-mode radii are available in log space only")
        if not 0 <= k <= self.n:
            raise IndexError(k)
        return exact_radius(self.r_min) * exact_radius(self.ratio) ** (self.n - k)

    @property
    def radii(self) -> list[Fraction]:
        return [self.radius(k) for k in range(self.n + 1)]

    @property
    def K(self) -> Fraction:
        return 16 * self.radius(0)

    def thresholds(self) -> np.ndarray:
        """Integer membership thresholds for r_0, ..., r_n."""
        return np.array([membership_threshold(r) for r in self.radii], dtype=np.int64)

    def sampling_square(self) -> tuple[int, int]:
        """Integer range [lo, hi] of the square [2 r_0, 3 r_0]^2."""
        r0 = self.radius(0)
        return math.ceil(2 * r0), math.floor(3 * r0)

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "n": self.n}
        if self.mode == "desk":
            d.update(r_min=str(exact_radius(self.r_min)), ratio=str(exact_radius(self.ratio)))
        return d


def shell_index(dx: int, dy: int, thresholds) -> int:
    """k with (dx, dy) on ∂D(0, r_k), or -1."""
    d2 = dx * dx + dy * dy
    inner = d2 - 2 * max(abs(dx), abs(dy)) + 1  # squared norm of the closest neighbour
    for k, s in enumerate(thresholds):
        if inner <= s < d2:
            return k
    return -1


@dataclass
class ExcursionTracker:
    """Per-level excursion counts around one center."""

    center: LatticePoint
    schedule: RadiiSchedule
    record_segments: bool = False
    counts: list = field(init=False)
    level_state: list = field(init=False)
    segments: dict = field(init=False)

    def __post_init__(self):
        self.center = as_point(self.center)
        n = self.schedule.n
        self.counts = [0] * (n + 1)  # index 0 unused
        self.level_state = [NONE] * (n + 1)
        self._thr = self.schedule.thresholds().tolist()
        self.segments = {k: [] for k in range(1, n + 1)}
        self._open = {}

    def observe(self, p) -> "ExcursionTracker":
        p = as_point(p)
        if self.record_segments:
            for k in self._open:
                self._open[k].append(p)
        k = shell_index(p.x - self.center.x, p.y - self.center.y, self._thr)
        if k < 0:
            return self
        n = self.schedule.n
        if k >= 1 and self.level_state[k] == OUTER:
            self.counts[k] += 1
            if self.record_segments:
                self.segments[k].append(self._open.pop(k))
        if k >= 1:
            self.level_state[k] = INNER
        if k + 1 <= n:
            self.level_state[k + 1] = OUTER
            if self.record_segments:
                self._open[k + 1] = [p]
        return self

    __call__ = observe

    @property
    def N(self) -> list[int]:
        """Counts N_1, ..., N_n."""
        return self.counts[1:]

    def to_json(self) -> str:
        return json.dumps({"center": list(self.center), "schedule": self.schedule.to_dict(),
                           "counts": self.N}, sort_keys=True)


# --------------------------------------------------------------------------
# success criterion


@dataclass(frozen=True)
class SuccessCriterion:
    a: float
    n: int

    def __post_init__(self):
        if not 0 < self.a < 2:
            raise ValueError("a must lie in (0, 2)")
        if self.n < 1:
            raise ValueError("n must be positive")

    def frak_n(self, k: int) -> float:
        return frak_n(self.a, k)

    @property
    def k0(self) -> int:
        return k0(self.a)

    def band(self, k: int) -> tuple[float, float]:
        """Admissible real interval for N_k (the point 1 below k0)."""
        if k < self.k0:
            return 1.0, 1.0
        f = self.frak_n(k)
        return f - k, f + k

    def integer_band(self, k: int) -> range:
        lo, hi = self.band(k)
        return range(max(math.ceil(lo), 0), math.floor(hi) + 1)


def frak_n(a: float, k: int) -> float:
    """Target excursion count 3 a k^2 log k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return 3.0 * a * k * k * math.log(k)


def k0(a: float) -> int:
    k = 1
    while frak_n(a, k) < 2 * k:
        k += 1
    return max(4, k)


def is_n_successful(counts: Sequence[int], c: SuccessCriterion) -> bool:
    """N_k = 1 below k0 and |N_k - frak_n(k)| <= k from k0 to n."""
    if len(counts) != c.n:
        raise ValueError(f"expected {c.n} counts, got {len(counts)}")
    for k, m in enumerate(counts, start=1):
        lo, hi = c.band(k)
        if not lo <= m <= hi:
            return False
    return True


# --------------------------------------------------------------------------
# separation level


def lattice_disks_intersect(x, y, r) -> bool:
    """Whether D(x, r) and D(y, r) share a lattice point."""
    x, y = as_point(x), as_point(y)
    s = membership_threshold(r)
    h = math.isqrt(s)
    lo, hi = max(x.x, y.x) - h, min(x.x, y.x) + h
    for px in range(lo, hi + 1):
        wx = s - (px - x.x) ** 2
        wy = s - (px - y.x) ** 2
        if wx < 0 or wy < 0:
            continue
        ax, ay = math.isqrt(wx), math.isqrt(wy)
        if max(x.y - ax, y.y - ay) <= min(x.y + ax, y.y + ay):
            return True
    return False


def separation_level(x, y, schedule: RadiiSchedule) -> Optional[int]:
    """Smallest m <= n with D(x, r_m) and D(y, r_m) disjoint, else None."""
    x, y = as_point(x), as_point(y)
    if x == y:
        return None
    for m in range(schedule.n + 1):
        if not lattice_disks_intersect(x, y, schedule.radius(m)):
            return m
    return None


# --------------------------------------------------------------------------
# Monte Carlo kernel: many centers, one pass per trajectory

_WHEEL = 4096


@njit(cache=True)
def _sleep(dx, dy, roots):
    """Steps that must elapse before (dx, dy) can reach a shell or the center."""
    d = math.sqrt(dx * dx + dy * dy)
    best = math.ceil(d - 1e-9) if d > 0 else 1
    for k in range(roots.shape[0]):
        rk = roots[k]
        if d <= rk:
            j = math.floor(rk - d - 1e-9) + 1
        elif d > rk + 1:
            j = math.ceil(d - rk - 1 - 1e-9)
        else:
            j = 0
        if j < best:
            best = j
    if best < 1:
        best = 1
    if best > _WHEEL - 1:
        best = _WHEEL - 1
    return best


@njit(cache=True, nogil=True)
def _track(key, first, trials, sx, sy, kill_sq, cap, centers, thr, counts, ltime, exits, texit):
    n_c = centers.shape[0]
    n_lev = thr.shape[0] - 1
    roots = np.sqrt(thr.astype(np.float64))
    state = np.empty(4, dtype=np.uint64)
    level = np.zeros((n_c, n_lev + 1), dtype=np.int64)
    head = np.empty(_WHEEL, dtype=np.int64)
    nxt = np.empty(n_c, dtype=np.int64)
    for i in range(trials):
        seed_state(key, first + i, state)
        level[:, :] = 0
        head[:] = -1
        for c in range(n_c):
            nxt[c] = head[0]
            head[0] = c
        x, y = sx, sy
        t = 0
        truncated = False
        while True:
            slot = t % _WHEEL
            c = head[slot]
            head[slot] = -1
            while c >= 0:
                after = nxt[c]
                dx = x - centers[c, 0]
                dy = y - centers[c, 1]
                d2 = dx * dx + dy * dy
                if d2 == 0:
                    ltime[i, c] += 1
                ad = abs(dx) if abs(dx) > abs(dy) else abs(dy)
                inner = d2 - 2 * ad + 1
                for k in range(n_lev + 1):
                    if inner <= thr[k] and thr[k] < d2:
                        if k >= 1:
                            if level[c, k] == 1:
                                counts[i, c, k] += 1
                            level[c, k] = 2
                        if k + 1 <= n_lev:
                            level[c, k + 1] = 1
                        break
                s = (t + _sleep(dx, dy, roots)) % _WHEEL
                nxt[c] = head[s]
                head[s] = c
                c = after
            if x * x + y * y > kill_sq:
                break
            if t >= cap:
                truncated = True
                break
            d = next_direction(state)
            x += STEPS[d, 0]
            y += STEPS[d, 1]
            t += 1
        exits[i, 0] = x
        exits[i, 1] = y
        texit[i] = -1 if truncated else t


class TrackedRuns:
    """Excursion counts at many centers for walks run until leaving D(0, kill_radius).

    ``counts[i, c, k]`` is N_k at center ``c`` in trial ``i`` (k = 1..n),
    ``local_time[i, c]`` the visits to the center itself.
    """

    def __init__(self, key, trials: int, schedule: RadiiSchedule, centers: Sequence,
                 kill_radius, start=(0, 0), cap: int = 10**9, first: int = 0):
        self.schedule = schedule
        self.centers = [as_point(c) for c in centers]
        thr = schedule.thresholds()
        if np.any(np.diff(np.sqrt(thr.astype(float))) > -1.0):
            raise ValueError("radii must be at least one unit apart so that shells are disjoint")
        start = as_point(start)
        kill_sq = membership_threshold(kill_radius)
        if start.norm_sq() > kill_sq:
            raise ValueError("start must lie inside the killing disk")
        cs = np.array([[c.x, c.y] for c in self.centers], dtype=np.int64).reshape(-1, 2)
        n_c = len(self.centers)
        self.counts = np.zeros((trials, n_c, schedule.n + 1), dtype=np.int64)
        self.local_time = np.zeros((trials, n_c), dtype=np.int64)
        self.exits = np.zeros((trials, 2), dtype=np.int64)
        self.exit_time = np.zeros(trials, dtype=np.int64)
        _track(np.uint64(key), first, trials, start.x, start.y, kill_sq, cap, cs, thr,
               self.counts, self.local_time, self.exits, self.exit_time)

    @property
    def truncated(self) -> int:
        return int((self.exit_time < 0).sum())

    def N(self) -> np.ndarray:
        """Counts N_1..N_n with shape (trials, centers, n)."""
        return self.counts[:, :, 1:]

    def successful(self, crit: SuccessCriterion) -> np.ndarray:
        """Boolean (trials, centers) array of the n-successful predicate."""
        N = self.N()
        ok = np.ones(N.shape[:2], dtype=bool)
        for k in range(1, crit.n + 1):
            lo, hi = crit.band(k)
            ok &= (N[:, :, k - 1] >= lo) & (N[:, :, k - 1] <= hi)
        return ok


def center_grid(schedule: RadiiSchedule, spacing: int) -> list[LatticePoint]:
    """Centers on a subgrid of the sampling square [2 r_0, 3 r_0]^2."""
    lo, hi = schedule.sampling_square()
    return [LatticePoint(a, b) for a in range(lo, hi + 1, spacing) for b in range(lo, hi + 1, spacing)]
