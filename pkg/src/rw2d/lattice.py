"""Lattice geometry and the simple random walk engine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .rng import Stream, next_direction, seed_state

DEFAULT_STEP_CAP = 10**9

# direction index -> unit step; shared by every kernel
STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


class LatticePoint(NamedTuple):
    x: int
    y: int

    def norm_sq(self) -> int:
        return self.x * self.x + self.y * self.y

    def __abs__(self) -> float:
        return math.hypot(self.x, self.y)

    def neighbors(self) -> list["LatticePoint"]:
        return [LatticePoint(self.x + dx, self.y + dy) for dx, dy in STEPS.tolist()]


ORIGIN = LatticePoint(0, 0)


def as_point(p) -> LatticePoint:
    if isinstance(p, LatticePoint):
        return p
    x, y = p
    if int(x) != x or int(y) != y:
        raise ValueError(f"lattice coordinates must be integers, got {p!r}")
    return LatticePoint(int(x), int(y))


def exact_radius(radius) -> Fraction:
    """Radius as an exact rational; a float is read as the decimal it prints as."""
    if isinstance(radius, Fraction):
        return radius
    if isinstance(radius, (int, np.integer)):
        return Fraction(int(radius))
    r = float(radius)
    if not math.isfinite(r):
        raise ValueError("radius must be finite")
    # shortest round-trip decimal, so 0.1 means 1/10
    return Fraction(repr(r))


def membership_threshold(radius) -> int:
    """Largest integer s with s < radius**2, so |p|^2 < r^2 iff |p|^2 <= s."""
    r2 = exact_radius(radius) ** 2
    return math.ceil(r2) - 1


@dataclass(frozen=True)
class DiskSpec:
    """Open Euclidean disk D(center, radius) = {p : |p - center| < radius}."""

    center: LatticePoint
    radius: Fraction | float | int

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not exact_radius(self.radius) > 0:
            raise ValueError("disk radius must be positive")

    @property
    def max_sq(self) -> int:
        return membership_threshold(self.radius)

    def __contains__(self, p) -> bool:
        return disk_contains(self, p)

    def points(self) -> list[LatticePoint]:
        return disk_points(self)


def disk_contains(d: DiskSpec, p) -> bool:
    p = as_point(p)
    dx, dy = p.x - d.center.x, p.y - d.center.y
    return dx * dx + dy * dy <= d.max_sq


def disk_points(d: DiskSpec) -> list[LatticePoint]:
    """Lattice points of the disk in lexicographic order."""
    s = d.max_sq
    h = math.isqrt(s)
    cx, cy = d.center
    out = []
    for dx in range(-h, h + 1):
        w = math.isqrt(s - dx * dx)
        out.extend(LatticePoint(cx + dx, cy + dy) for dy in range(-w, w + 1))
    return out


def boundary_of(domain: Iterable) -> list[LatticePoint]:
    """Exterior points within distance 1 of the domain (axis neighbours only).

    Returned in lexicographic order.
    """
    pts = {as_point(p) for p in domain}
    if not pts:
        raise ValueError("boundary_of needs a nonempty domain")
    out = set()
    for p in pts:
        for q in p.neighbors():
            if q not in pts:
                out.add(q)
    return sorted(out)


def disk_boundary(d: DiskSpec) -> list[LatticePoint]:
    return boundary_of(disk_points(d))


@njit(cache=True)
def in_disk(x, y, cx, cy, max_sq):
    dx = x - cx
    dy = y - cy
    return dx * dx + dy * dy <= max_sq


@njit(cache=True)
def on_disk_boundary(x, y, cx, cy, max_sq):
    """True iff (x, y) lies outside the disk with an axis neighbour inside it."""
    dx = x - cx
    dy = y - cy
    if dx * dx + dy * dy <= max_sq:
        return False
    if (dx - 1) * (dx - 1) + dy * dy <= max_sq or (dx + 1) * (dx + 1) + dy * dy <= max_sq:
        return True
    return dx * dx + (dy - 1) * (dy - 1) <= max_sq or dx * dx + (dy + 1) * (dy + 1) <= max_sq


# --------------------------------------------------------------------------
# walk state and single-walk execution


@dataclass
class WalkState:
    position: LatticePoint
    step_count: int = 0
    rng: Stream = field(default_factory=Stream)

    def __post_init__(self):
        self.position = as_point(self.position)


def random_step(s: WalkState) -> WalkState:
    """Advance ``s`` in place by one uniform nearest-neighbour step."""
    d = s.rng.direction()
    dx, dy = STEPS[d]
    s.position = LatticePoint(s.position.x + int(dx), s.position.y + int(dy))
    s.step_count += 1
    return s


class ExitOutcome(NamedTuple):
    exit_point: Optional[LatticePoint]
    exit_time: int
    truncated: bool


class WalkTruncated(RuntimeError):
    pass


@njit(cache=True)
def _walk_exit(state, x, y, cx, cy, max_sq, cap):
    t = 0
    while in_disk(x, y, cx, cy, max_sq):
        if t >= cap:
            return x, y, t, True
        d = next_direction(state)
        x += STEPS[d, 0]
        y += STEPS[d, 1]
        t += 1
    return x, y, t, False


def walk_until_exit(
    s: WalkState,
    domain: DiskSpec,
    observers: Sequence[Callable[[LatticePoint], object]] = (),
    cap: Optional[int] = DEFAULT_STEP_CAP,
) -> ExitOutcome:
    """Run ``s`` until it first leaves ``domain``.

    Every observer is called with each visited position, start and exit point
    included.  When ``cap`` steps elapse inside the domain the outcome has
    ``truncated=True`` and ``exit_point=None``.
    """
    if s.position not in domain:
        raise ValueError(f"start {s.position} is not inside {domain}")
    cap = DEFAULT_STEP_CAP if cap is None else int(cap)
    cx, cy = domain.center
    max_sq = domain.max_sq
    if not observers:
        x, y, t, trunc = _walk_exit(s.rng.state, s.position.x, s.position.y, cx, cy, max_sq, cap)
        s.position = LatticePoint(int(x), int(y))
        s.step_count += int(t)
        return ExitOutcome(None if trunc else s.position, int(t), bool(trunc))

    for obs in observers:
        obs(s.position)
    t = 0
    while in_disk(s.position.x, s.position.y, cx, cy, max_sq):
        if t >= cap:
            return ExitOutcome(None, t, True)
        random_step(s)
        t += 1
        for obs in observers:
            obs(s.position)
    return ExitOutcome(s.position, t, False)


# --------------------------------------------------------------------------
# batched Monte Carlo over independent trials


@njit(cache=True, nogil=True)
def _batch_exit(key, first, trials, sx, sy, cx, cy, max_sq, cap, out_x, out_y, out_t):
    state = np.empty(4, dtype=np.uint64)
    for i in range(trials):
        seed_state(key, first + i, state)
        x, y, t, trunc = _walk_exit(state, sx, sy, cx, cy, max_sq, cap)
        out_x[i] = x
        out_y[i] = y
        out_t[i] = -1 if trunc else t


def batch_exit(key, trials: int, start, domain: DiskSpec, cap: int = DEFAULT_STEP_CAP, first: int = 0):
    """Exit points and exit times of ``trials`` independent walks.

    Trial ``i`` uses stream ``first + i`` of ``key``.  Truncated trials have
    exit time -1; callers must not drop them silently.
    """
    start = as_point(start)
    if start not in domain:
        raise ValueError(f"start {start} is not inside {domain}")
    out_x = np.empty(trials, dtype=np.int64)
    out_y = np.empty(trials, dtype=np.int64)
    out_t = np.empty(trials, dtype=np.int64)
    _batch_exit(np.uint64(key), first, trials, start.x, start.y, domain.center.x, domain.center.y,
                domain.max_sq, cap, out_x, out_y, out_t)
    return out_x, out_y, out_t
