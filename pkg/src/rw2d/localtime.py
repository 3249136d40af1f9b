"""Local-time accounting and thick-point counts."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .lattice import STEPS, DiskSpec, LatticePoint, as_point, membership_threshold
from .rng import next_direction, seed_state


@dataclass
class LocalTimeLedger:
    """Sparse visit counts L^x with a running maximum.

    Ties for the maximum go to the lexicographically smallest point.
    """

    counts: dict = field(default_factory=dict)
    total: int = 0
    running_max: Optional[tuple] = None

    def record_visit(self, p) -> "LocalTimeLedger":
        p = as_point(p)
        c = self.counts.get(p, 0) + 1
        self.counts[p] = c
        self.total += 1
        m = self.running_max
        if m is None or c > m[1] or (c == m[1] and p < m[0]):
            self.running_max = (p, c)
        return self

    __call__ = record_visit  # usable directly as a walk observer

    def merge(self, other: "LocalTimeLedger") -> "LocalTimeLedger":
        """Pointwise sum; neither operand is modified."""
        out = LocalTimeLedger(dict(self.counts), self.total + other.total)
        for p, c in other.counts.items():
            out.counts[p] = out.counts.get(p, 0) + c
        out._refresh_max()
        return out

    def _refresh_max(self):
        if self.counts:
            p, c = min(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
            self.running_max = (p, c)
        else:
            self.running_max = None

    def distinct(self) -> int:
        return len(self.counts)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "count"])
            for p in sorted(self.counts):
                w.writerow([p.x, p.y, self.counts[p]])

    def summary(self, R=None, a_grid=(), n=None, alpha_grid=()) -> dict:
        out = {"total": self.total, "distinct": self.distinct()}
        if self.running_max is not None:
            p, c = self.running_max
            out["max"] = {"x": p.x, "y": p.y, "count": c}
        if R is not None:
            out["psi"] = {repr(float(a)): psi_count(self, R, a) for a in a_grid}
        if n is not None:
            out["theta"] = {repr(float(al)): theta_count(self, n, al) for al in alpha_grid}
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(**kw), sort_keys=True)

    @classmethod
    def from_counts(cls, counts: dict) -> "LocalTimeLedger":
        led = cls({as_point(p): int(c) for p, c in counts.items() if c > 0})
        led.total = sum(led.counts.values())
        led._refresh_max()
        return led


def record_visit(ledger: LocalTimeLedger, p) -> LocalTimeLedger:
    return ledger.record_visit(p)


def merge(*ledgers: LocalTimeLedger) -> LocalTimeLedger:
    out = LocalTimeLedger()
    for led in ledgers:
        out = out.merge(led)
    return out


def max_local_time(ledger: LocalTimeLedger) -> tuple:
    if ledger.running_max is None:
        raise ValueError("ledger is empty")
    return ledger.running_max


def psi_threshold(R, a) -> float:
    return 2.0 * a / math.pi * math.log(R) ** 2


def theta_threshold(n, alpha) -> float:
    return alpha / math.pi * math.log(n) ** 2


def psi_count(ledger: LocalTimeLedger, R, a) -> int:
    """|{x in D(0,R) : L^x >= (2a/pi)(log R)^2}| for a run stopped on leaving D(0,R)."""
    if R <= 1:
        raise ValueError("R must exceed 1")
    if a <= 0:
        raise ValueError("a must be positive")
    thr = psi_threshold(R, a)
    s = membership_threshold(R)
    return sum(1 for p, c in ledger.counts.items() if c >= thr and p.norm_sq() <= s)


def theta_count(ledger: LocalTimeLedger, n, alpha) -> int:
    """|{x : L^x_n >= (alpha/pi)(log n)^2}| for a run of exactly n steps."""
    if n <= 1:
        raise ValueError("n must exceed 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    thr = theta_threshold(n, alpha)
    return sum(1 for c in ledger.counts.values() if c >= thr)


def count_at_least(hist: np.ndarray, threshold: float) -> int:
    """Number of points with count >= threshold from a count histogram."""
    k = max(math.ceil(threshold), 1)
    return int(hist[k:].sum()) if k < len(hist) else 0


# --------------------------------------------------------------------------
# Monte Carlo kernels


@njit(cache=True, nogil=True)
def _disk_run(key, first, trials, sx, sy, max_sq, half, cap, hist_len, probes,
              hist, lmax, texit, probe_counts):
    side = 2 * half + 1
    counts = np.zeros((side, side), dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    for i in range(trials):
        seed_state(key, first + i, state)
        x, y = sx, sy
        t = 0
        truncated = False
        while x * x + y * y <= max_sq:
            counts[x + half, y + half] += 1
            if t >= cap:
                truncated = True
                break
            d = next_direction(state)
            x += STEPS[d, 0]
            y += STEPS[d, 1]
            t += 1
        texit[i] = -1 if truncated else t
        for j in range(probes.shape[0]):
            probe_counts[i, j] = counts[probes[j, 0] + half, probes[j, 1] + half]
        best = 0
        for a in range(side):
            for b in range(side):
                c = counts[a, b]
                if c > 0:
                    if c > best:
                        best = c
                    hist[i, min(c, hist_len - 1)] += 1
                    counts[a, b] = 0
        lmax[i] = best


class DiskRuns:
    """Per-trial local-time summaries for walks run until leaving D(0,R).

    ``hist[i, v]`` is the number of points of D(0,R) visited exactly ``v``
    times in trial ``i`` (the last column collects larger counts).
    """

    def __init__(self, key, trials, R, start=(0, 0), probes=(), cap=10**9, hist_len=4096, first=0):
        self.R = R
        max_sq = membership_threshold(R)
        start = as_point(start)
        if start.norm_sq() > max_sq:
            raise ValueError("start must lie inside D(0,R)")
        half = math.isqrt(max_sq) + 1
        self.probes = [as_point(p) for p in probes]
        for p in self.probes:
            if p.norm_sq() > max_sq:
                raise ValueError(f"probe {p} lies outside D(0,R)")
        pr = np.array([[p.x, p.y] for p in self.probes], dtype=np.int64).reshape(-1, 2)
        self.hist = np.zeros((trials, hist_len), dtype=np.int64)
        self.lmax = np.zeros(trials, dtype=np.int64)
        self.exit_time = np.zeros(trials, dtype=np.int64)
        self.probe_counts = np.zeros((trials, len(self.probes)), dtype=np.int64)
        _disk_run(np.uint64(key), first, trials, start.x, start.y, max_sq, half, cap, hist_len,
                  pr, self.hist, self.lmax, self.exit_time, self.probe_counts)
        if (self.lmax >= hist_len - 1).any():
            raise RuntimeError("count histogram overflow; raise hist_len")

    @property
    def truncated(self) -> int:
        return int((self.exit_time < 0).sum())

    def psi_counts(self, a) -> np.ndarray:
        thr = psi_threshold(self.R, a)
        return np.array([count_at_least(h, thr) for h in self.hist])

    def distinct(self) -> np.ndarray:
        return self.hist[:, 1:].sum(axis=1)


@njit(cache=True, nogil=True)
def _origin_visits(key, first, trials, sx, sy, max_sq, cap, visits, texit):
    state = np.empty(4, dtype=np.uint64)
    for i in range(trials):
        seed_state(key, first + i, state)
        x, y = sx, sy
        t = 0
        v = 0
        while x * x + y * y <= max_sq:
            if x == 0 and y == 0:
                v += 1
            if t >= cap:
                t = -1
                break
            d = next_direction(state)
            x += STEPS[d, 0]
            y += STEPS[d, 1]
            t += 1
        visits[i] = v
        texit[i] = t


def origin_visits(key, trials, x0, R, cap=10**9, first=0) -> tuple[np.ndarray, np.ndarray]:
    """L^0 up to the exit of D(0,R) for ``trials`` walks from ``x0``; exit time -1 if capped."""
    max_sq = membership_threshold(R)
    x0 = as_point(x0)
    if x0.norm_sq() > max_sq:
        raise ValueError(f"{x0} is not in D(0, {R})")
    visits = np.zeros(trials, dtype=np.int64)
    texit = np.zeros(trials, dtype=np.int64)
    _origin_visits(np.uint64(key), first, trials, x0.x, x0.y, max_sq, cap, visits, texit)
    return visits, texit
