"""Exact discrete potential theory on finite lattice domains.

All quantities come from linear solves of ``(I - P_A) h = b`` where ``P_A`` is
the simple random walk kernel killed on leaving the domain ``A``.  Small
domains are inverted densely; larger ones use a sparse LU factorisation that
is reused for every right-hand side on the same domain.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import (
    ORIGIN,
    DiskSpec,
    LatticePoint,
    as_point,
    disk_points,
    exact_radius,
    membership_threshold,
)

DENSE_LIMIT = 2000
DEFAULT_TOL = 1e-10
MAX_EXACT_RADIUS = 400


class SolverError(RuntimeError):
    """Raised when a linear solve misses its residual tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class Domain:
    """Indexed finite point set with its killed-walk operator and exit map."""

    def __init__(self, points: Iterable):
        pts = sorted({as_point(p) for p in points})
        if not pts:
            raise ValueError("domain must be nonempty")
        self.points = pts
        self.xs = np.array([p.x for p in pts], dtype=np.int64)
        self.ys = np.array([p.y for p in pts], dtype=np.int64)
        self.x0, self.y0 = int(self.xs.min()) - 1, int(self.ys.min()) - 1
        w = int(self.xs.max()) - self.x0 + 2
        h = int(self.ys.max()) - self.y0 + 2
        self.grid = np.full((w, h), -1, dtype=np.int64)
        self.grid[self.xs - self.x0, self.ys - self.y0] = np.arange(len(pts))
        self._build()
        self._factor = None
        self._dense_inverse = None

    def __len__(self):
        return len(self.points)

    def index(self, p) -> int:
        p = as_point(p)
        i, j = p.x - self.x0, p.y - self.y0
        if 0 <= i < self.grid.shape[0] and 0 <= j < self.grid.shape[1]:
            k = int(self.grid[i, j])
            if k >= 0:
                return k
        raise KeyError(p)

    def __contains__(self, p) -> bool:
        try:
            self.index(p)
        except KeyError:
            return False
        return True

    def _build(self):
        n = len(self.points)
        rows, cols = [], []
        ext_pts, ext_rows = [], []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = self.xs + dx, self.ys + dy
            nb = self.grid[nx - self.x0, ny - self.y0]
            inside = nb >= 0
            idx = np.nonzero(inside)[0]
            rows.append(idx)
            cols.append(nb[inside])
            out = np.nonzero(~inside)[0]
            ext_rows.append(out)
            ext_pts.append(np.stack([nx[out], ny[out]], axis=1))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        adj = sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(n, n))
        self.operator = (sp.identity(n, format="csr") - adj).tocsc()

        # exit map: boundary point y <- domain point z with weight 1/4 per adjacency
        ext_rows = np.concatenate(ext_rows)
        ext_pts = np.concatenate(ext_pts)
        keys, inverse = np.unique(ext_pts, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.boundary = [LatticePoint(int(a), int(b)) for a, b in keys]
        self.exit_map = sp.csr_matrix(
            (np.full(len(ext_rows), 0.25), (inverse, ext_rows)), shape=(len(keys), n)
        )

    def boundary_index(self, p) -> int:
        p = as_point(p)
        lo, hi = 0, len(self.boundary)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.boundary[mid] < p:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.boundary) and self.boundary[lo] == p:
            return lo
        raise KeyError(p)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I - P_A) h = rhs`` for one or several right-hand sides."""
        if len(self) <= DENSE_LIMIT:
            if self._dense_inverse is None:
                self._dense_inverse = np.linalg.inv(self.operator.toarray())
            return self._dense_inverse @ rhs
        if self._factor is None:
            self._factor = spla.splu(self.operator, permc_spec="COLAMD")
        return self._factor.solve(np.asarray(rhs, dtype=float))

    def residual(self, h: np.ndarray, rhs: np.ndarray) -> float:
        return float(np.max(np.abs(self.operator @ h - rhs)))

    def checked_solve(self, rhs: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
        h = self.solve(rhs)
        res = self.residual(h, rhs)
        if res > tol:
            # one step of iterative refinement before giving up
            h = h + self.solve(rhs - self.operator @ h)
            res = self.residual(h, rhs)
            if res > tol:
                raise SolverError("linear solve did not reach tolerance", res)
        return h


@lru_cache(maxsize=16)
def _disk_domain(cx: int, cy: int, max_sq: int) -> Domain:
    return Domain(disk_points(DiskSpec(LatticePoint(cx, cy), math.sqrt(max_sq + 1))))


def disk_domain(radius, center=ORIGIN) -> Domain:
    """Cached :class:`Domain` for the lattice disk D(center, radius)."""
    if exact_radius(radius) > MAX_EXACT_RADIUS:
        raise ValueError(f"exact solves are capped at radius {MAX_EXACT_RADIUS}")
    c = as_point(center)
    return _disk_domain(c.x, c.y, membership_threshold(radius))


def _as_domain(domain) -> Domain:
    if isinstance(domain, Domain):
        return domain
    if isinstance(domain, DiskSpec):
        return disk_domain(domain.radius, domain.center)
    return Domain(domain)


# --------------------------------------------------------------------------
# Green's function


@dataclass
class GreenTable:
    """Expected visit counts G_A(x, y) for a finite domain A.

    ``values`` holds the full symmetric matrix for domains of at most
    ``DENSE_LIMIT`` points.  Larger tables solve columns on demand; by
    symmetry a column is also a row.
    """

    domain: Domain
    values: Optional[np.ndarray]
    solver_residual: float
    tol: float = DEFAULT_TOL
    _columns: dict = field(default_factory=dict, repr=False)

    @property
    def points(self) -> list[LatticePoint]:
        return self.domain.points

    def column(self, y) -> np.ndarray:
        j = self.domain.index(y)
        if self.values is not None:
            return self.values[:, j]
        if j not in self._columns:
            e = np.zeros(len(self.domain))
            e[j] = 1.0
            col = self.domain.checked_solve(e, self.tol)
            self.solver_residual = max(self.solver_residual, self.domain.residual(col, e))
            self._columns[j] = col
        return self._columns[j]

    row = column

    def __call__(self, x, y) -> float:
        if x not in self.domain or y not in self.domain:
            return 0.0
        return float(self.column(y)[self.domain.index(x)])

    def symmetry_defect(self) -> float:
        if self.values is None:
            raise ValueError("symmetry defect is only tabulated for dense tables")
        return float(np.max(np.abs(self.values - self.values.T)))

    def to_csv(self, path, x) -> None:
        """Write the row G(x, .) as CSV with columns x, y, value."""
        row = self.row(x)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "value"])
            for p, v in zip(self.points, row):
                w.writerow([p.x, p.y, repr(float(v))])


def green(domain, tol: float = DEFAULT_TOL) -> GreenTable:
    """Green's function of the walk killed on leaving ``domain``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    dom = _as_domain(domain)
    n = len(dom)
    if n <= DENSE_LIMIT:
        eye = np.eye(n)
        values = dom.solve(eye)
        res = dom.residual(values, eye)
        if res > tol:
            raise SolverError("dense Green solve did not reach tolerance", res)
        return GreenTable(dom, values, res, tol)
    table = GreenTable(dom, None, 0.0, tol)
    table.column(dom.points[n // 2])
    return table


def green_at_center(R, center=ORIGIN) -> float:
    """G_{D(c,R)}(c, c)."""
    dom = disk_domain(R, center)
    j = dom.index(center)
    e = np.zeros(len(dom))
    e[j] = 1.0
    return float(dom.checked_solve(e)[j])


class PotentialConstants(NamedTuple):
    slope_hat: float
    gamma_hat: float
    radii: tuple
    values: tuple


def green_asymptotics(R_list: Sequence) -> PotentialConstants:
    """Least-squares fit of G_{D(0,R)}(0,0) = slope * log R + gamma."""
    radii = tuple(R_list)
    if len(radii) < 3 or min(radii) < 10:
        raise ValueError("need at least 3 radii, each >= 10")
    values = tuple(green_at_center(R) for R in radii)
    slope, intercept = np.polyfit(np.log(np.asarray(radii, dtype=float)), values, 1)
    return PotentialConstants(float(slope), float(intercept), radii, values)


# --------------------------------------------------------------------------
# hitting distributions and Dirichlet problems


def exit_distribution(domain, starts: Sequence) -> tuple[list[LatticePoint], np.ndarray]:
    """Exit law H_A(x, .) on the boundary for each start x (one row each)."""
    dom = _as_domain(domain)
    idx = [dom.index(s) for s in starts]
    rhs = np.zeros((len(dom), len(idx)))
    rhs[idx, np.arange(len(idx))] = 1.0
    cols = dom.solve(rhs)
    res = dom.residual(cols, rhs)
    if res > DEFAULT_TOL:
        raise SolverError("hitting solve did not reach tolerance", res)
    # by symmetry column j of G is the row G(start_j, .)
    H = (dom.exit_map @ cols).T
    return dom.boundary, np.asarray(H)


def hitting_distribution(domain, start) -> dict[LatticePoint, float]:
    """pmf of the first exit point X_{T_{A^c}} for the walk started at ``start``."""
    dom = _as_domain(domain)
    start = as_point(start)
    if start not in dom:
        raise ValueError(f"start {start} is not in the domain")
    bpts, H = exit_distribution(dom, [start])
    return dict(zip(bpts, H[0].tolist()))


def hitting_csv(pmf: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for p in sorted(pmf):
            w.writerow([p.x, p.y, repr(float(pmf[p]))])


def dirichlet(domain, boundary_value: Callable[[LatticePoint], float]) -> np.ndarray:
    """Harmonic function on ``domain`` with the given values outside it."""
    dom = _as_domain(domain)
    f = np.array([boundary_value(p) for p in dom.boundary], dtype=float)
    rhs = dom.exit_map.T @ f
    return dom.checked_solve(rhs)


def hit_origin_before_exit(x, R) -> float:
    """P^x(T_0 < T_{D(0,R)^c}) as the ratio G(x, 0) / G(0, 0)."""
    x = as_point(x)
    dom = disk_domain(R)
    if x not in dom:
        raise ValueError(f"{x} is not in D(0, {R})")
    g = GreenTable(dom, None, 0.0).column(ORIGIN)
    return float(g[dom.index(x)] / g[dom.index(ORIGIN)])


def hit_origin_dirichlet(x, R) -> float:
    """Same probability from the first-step equations on D(0,R) minus the origin."""
    x = as_point(x)
    if x == ORIGIN:
        return 1.0
    pts = [p for p in disk_points(DiskSpec(ORIGIN, R)) if p != ORIGIN]
    dom = Domain(pts)
    h = dirichlet(dom, lambda p: 1.0 if p == ORIGIN else 0.0)
    return float(h[dom.index(x)])


class AnnulusCrossing(NamedTuple):
    p_exit_outer: float
    p_hit_inner: float


def _annulus_domain(r, R, inner_closed: bool) -> Domain:
    """Points of D(0,R) outside D(0,r) (and outside its boundary shell if closed)."""
    outer = disk_points(DiskSpec(ORIGIN, R))
    s_in = membership_threshold(r)
    pts = [p for p in outer if p.norm_sq() > s_in]
    if inner_closed:
        shell = set(boundary_of_disk(r))
        pts = [p for p in pts if p not in shell]
    return Domain(pts)


def boundary_of_disk(r) -> list[LatticePoint]:
    from .lattice import disk_boundary

    return disk_boundary(DiskSpec(ORIGIN, r))


def annulus_crossing(x, r, R) -> AnnulusCrossing:
    """Exact P^x(T_{D(0,R)^c} < T_{D(0,r)}) and its complement for r < |x| < R."""
    x = as_point(x)
    rq, Rq = exact_radius(r), exact_radius(R)
    if not (0 < rq < Rq):
        raise ValueError("need 0 < r < R")
    if not (rq * rq < x.norm_sq() < Rq * Rq):
        raise ValueError(f"{x} is not in the open annulus r < |x| < R")
    if Rq > MAX_EXACT_RADIUS:
        raise ValueError(f"exact solves are capped at radius {MAX_EXACT_RADIUS}")
    dom = _annulus_domain(r, R, inner_closed=False)
    s_in = membership_threshold(r)
    outer = dirichlet(dom, lambda p: 0.0 if p.norm_sq() <= s_in else 1.0)
    inner = dirichlet(dom, lambda p: 1.0 if p.norm_sq() <= s_in else 0.0)
    i = dom.index(x)
    return AnnulusCrossing(float(outer[i]), float(inner[i]))


def log_ratio_exit_outer(x_norm: float, r: float, R: float) -> float:
    """Continuum value log(|x|/r) / log(R/r)."""
    return math.log(x_norm / r) / math.log(R / r)


class HalfStep(NamedTuple):
    p_up: float
    p_down: float
    n_starts: int


def annulus_half_step(mid_r, ratio) -> HalfStep:
    """Average over ∂D(0, mid_r) of reaching ∂D(0, ratio*mid_r) before ∂D(0, mid_r/ratio)."""
    ratio_q = exact_radius(ratio)
    mid_q = exact_radius(mid_r)
    if ratio_q < 2:
        raise ValueError("ratio must be >= 2")
    r_in, r_out = mid_q / ratio_q, mid_q * ratio_q
    if r_in < 1 or r_in + 2 > mid_q:
        raise ValueError("degenerate radii: inner shell touches the starting circle")
    if r_out > MAX_EXACT_RADIUS:
        raise ValueError(f"exact solves are capped at radius {MAX_EXACT_RADIUS}")
    dom = _annulus_domain(r_in, r_out, inner_closed=True)
    s_out = membership_threshold(r_out)
    up = dirichlet(dom, lambda p: 1.0 if p.norm_sq() > s_out else 0.0)
    down = dirichlet(dom, lambda p: 0.0 if p.norm_sq() > s_out else 1.0)
    starts = boundary_of_disk(mid_q)
    idx = [dom.index(p) for p in starts]
    return HalfStep(float(np.mean(up[idx])), float(np.mean(down[idx])), len(idx))


# --------------------------------------------------------------------------
# local time at the origin


def eulerian_row(k: int) -> list[int]:
    """Eulerian numbers A(k, 0..k-1)."""
    row = [1]
    for m in range(2, k + 1):
        row = [(i + 1) * (row[i] if i < len(row) else 0) + (m - i) * (row[i - 1] if i >= 1 else 0)
               for i in range(m)]
    return row


@dataclass(frozen=True)
class LocalTimeLaw:
    """Law of L^0 up to the exit of D(0,R) for the walk started at x0.

    Zero with probability 1 - p_hit, otherwise geometric on {1, 2, ...} with
    mean ``geometric_mean`` = G(0, 0).
    """

    p_hit: float
    geometric_mean: float
    green_x0: float

    @property
    def escape(self) -> float:
        return 1.0 / self.geometric_mean

    def laplace(self, phi: float) -> float:
        """E exp(-phi * L / G(0,0))."""
        if phi <= 0:
            raise ValueError("phi must be positive")
        G = self.geometric_mean
        return 1.0 - self.p_hit + self.p_hit / (math.expm1(phi / G) * G + 1.0)

    def pmf(self, k: int) -> float:
        if k == 0:
            return 1.0 - self.p_hit
        q = self.escape
        return self.p_hit * q * (1.0 - q) ** (k - 1)

    def sf(self, k: float) -> float:
        """P(L >= k)."""
        k = math.ceil(k)
        if k <= 0:
            return 1.0
        return self.p_hit * (1.0 - self.escape) ** (k - 1)

    def moment(self, k: int) -> float:
        """E L^k from the Eulerian-number form of the geometric moments."""
        if k == 0:
            return 1.0
        q = self.escape
        cond = sum(a * (1.0 - q) ** i for i, a in enumerate(eulerian_row(k))) / q**k
        return self.p_hit * cond

    def moment_bound(self, k: int) -> float:
        """k! G(x0,0) G(0,0)^(k-1)."""
        return math.factorial(k) * self.green_x0 * self.geometric_mean ** (k - 1)


def local_time_law(x0, R) -> LocalTimeLaw:
    x0 = as_point(x0)
    dom = disk_domain(R)
    if x0 not in dom:
        raise ValueError(f"{x0} is not in D(0, {R})")
    g = GreenTable(dom, None, 0.0).column(ORIGIN)
    g00 = float(g[dom.index(ORIGIN)])
    gx = float(g[dom.index(x0)])
    return LocalTimeLaw(gx / g00, g00, gx)


def babe_band(R, r, phi) -> tuple[float, float]:
    """Band 1 - (log(R/r)/log R) * phi/(1+phi) * (1 -/+ 2/log r)."""
    base = math.log(R / r) / math.log(R) * phi / (1 + phi)
    slack = 2.0 / math.log(r)
    lo, hi = 1 - base * (1 + slack), 1 - base * (1 - slack)
    return lo, hi


# --------------------------------------------------------------------------
# Harnack ratio


def harnack_ratio(R, eps, probe_points: Optional[int] = None) -> float:
    """max over x, x' in D(0, eps R) and y in ∂D(0,R) of H(x, y) / H(x', y).

    With ``probe_points`` set, only that many interior points are used,
    taken in decreasing distance from the origin (the extreme ratios come
    from the outermost points).
    """
    eps_q, R_q = exact_radius(eps), exact_radius(R)
    # the Harnack bound itself is stated for eps < 1/4; larger eps is allowed
    # so that the ratio can be traced as eps shrinks
    if not 0 < eps_q < 1:
        raise ValueError("eps must lie in (0, 1)")
    if eps_q * R_q < 2:
        raise ValueError("need eps * R >= 2")
    inner = disk_points(DiskSpec(ORIGIN, eps_q * R_q))
    if not inner:
        raise ValueError("no interior points at this eps")
    if probe_points is not None and probe_points < len(inner):
        inner = sorted(inner, key=lambda p: (-p.norm_sq(), p))[: max(int(probe_points), 1)]
    _, H = exit_distribution(disk_domain(R), inner)
    return float(np.max(H.max(axis=0) / H.min(axis=0)))
