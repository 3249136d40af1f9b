import math

import numpy as np
import pytest

from rw2d.lattice import ORIGIN, DiskSpec, LatticePoint, batch_exit, disk_points
from rw2d.potential import (
    Domain,
    annulus_crossing,
    annulus_half_step,
    babe_band,
    disk_domain,
    dirichlet,
    eulerian_row,
    exit_distribution,
    green,
    green_asymptotics,
    green_at_center,
    harnack_ratio,
    hit_origin_before_exit,
    hit_origin_dirichlet,
    hitting_distribution,
    local_time_law,
    log_ratio_exit_outer,
)
from rw2d.rng import stream_key


def test_green_single_point_and_pair():
    assert green([ORIGIN])(ORIGIN, ORIGIN) == pytest.approx(1.0, abs=1e-12)
    g = green([(0, 0), (1, 0)])
    assert abs(g(ORIGIN, ORIGIN) - 16 / 15) <= 1e-10
    assert abs(g(ORIGIN, (1, 0)) - 4 / 15) <= 1e-10
    assert g((5, 5), ORIGIN) == 0.0


def test_green_disk_residual_and_symmetry():
    g = green(DiskSpec(ORIGIN, 10))
    assert g.solver_residual <= 1e-10
    assert g.symmetry_defect() <= 1e-10
    with pytest.raises(ValueError):
        green(DiskSpec(ORIGIN, 10), tol=0)


def test_green_domain_monotone():
    small = green(DiskSpec(ORIGIN, 6))
    big = green(DiskSpec(ORIGIN, 9))
    for x in small.points[::7]:
        for y in small.points[::5]:
            assert small(x, y) <= big(x, y) + 1e-12


def test_green_large_domain_uses_columns():
    dom = disk_domain(30)
    assert len(dom) > 2000
    g = green(dom)
    assert g.values is None
    assert g(ORIGIN, (3, 4)) == pytest.approx(g((3, 4), ORIGIN), rel=1e-9)
    assert g.solver_residual <= 1e-10


def test_green_asymptotics():
    fit = green_asymptotics([25, 50, 100, 200])
    assert abs(fit.slope_hat / (2 / math.pi) - 1) <= 0.02
    lo = green_asymptotics([25, 50, 100]).gamma_hat
    hi = green_asymptotics([50, 100, 200]).gamma_hat
    assert abs(lo - hi) <= 0.02
    assert all(np.diff(fit.values) > 0)
    with pytest.raises(ValueError):
        green_asymptotics([10, 20])
    with pytest.raises(ValueError):
        green_asymptotics([5, 20, 40])


def test_hitting_sums_and_symmetry():
    pmf = hitting_distribution(disk_domain(10), ORIGIN)
    assert math.fsum(pmf.values()) == pytest.approx(1.0, abs=1e-9)
    assert min(pmf.values()) >= 0
    for (x, y), v in pmf.items():
        for q in [(-x, y), (x, -y), (y, x), (-y, -x)]:
            assert pmf[q] == pytest.approx(v, abs=1e-12)
    with pytest.raises(ValueError):
        hitting_distribution(disk_domain(10), (10, 0))


def test_hitting_is_harmonic_in_start():
    dom = disk_domain(6)
    bpts, H = exit_distribution(dom, dom.points)
    row = {p: H[i] for i, p in enumerate(dom.points)}
    worst = 0.0
    for p in dom.points:
        acc = np.zeros(len(bpts))
        for q in p.neighbors():
            if q in row:
                acc += row[q] / 4
            else:
                acc[bpts.index(q)] += 0.25
        worst = max(worst, float(np.abs(acc - row[p]).max()))
    assert worst <= 1e-9


def test_hitting_matches_monte_carlo():
    d = DiskSpec(ORIGIN, 10)
    pmf = hitting_distribution(disk_domain(10), ORIGIN)
    trials = 10**6
    x, y, t = batch_exit(stream_key(2, "hit"), trials, ORIGIN, d)
    assert np.all(t > 0)
    emp = {}
    for a, b in zip(x.tolist(), y.tolist()):
        emp[(a, b)] = emp.get((a, b), 0) + 1
    assert set(emp) <= set(pmf)
    for p, v in pmf.items():
        sd = math.sqrt(trials * v * (1 - v))
        # 3.5 sigma keeps the per-cell family-wise rate near 1% over ~70 cells
        assert abs(emp.get(p, 0) - trials * v) <= 3.5 * sd + 1


def test_hit_origin_identity_and_formula():
    assert hit_origin_before_exit(ORIGIN, 50) == pytest.approx(1.0)
    for x in [(1, 0), (3, 4), (7, -2), (12, 9)]:
        assert abs(hit_origin_before_exit(x, 16) - hit_origin_dirichlet(x, 16)) <= 1e-9
    R = 200
    p = hit_origin_before_exit((20, 0), R)
    g = green_at_center(R)
    gamma_fit = g - 2 / math.pi * math.log(R)
    formula = (2 / math.pi * math.log(R / 20)) / (2 / math.pi * math.log(R) + gamma_fit)
    assert abs(p - formula) <= 0.05
    with pytest.raises(ValueError):
        hit_origin_before_exit((20, 0), 20)


def test_annulus_examples():
    ac = annulus_crossing((30, 0), 10, 100)
    assert abs(ac.p_exit_outer - math.log(3) / math.log(10)) <= 0.02
    assert ac.p_exit_outer + ac.p_hit_inner == pytest.approx(1.0, abs=1e-9)
    assert ac.p_exit_outer == pytest.approx(log_ratio_exit_outer(30, 10, 100), abs=0.02)
    mid = annulus_crossing((32, 0), 10, 100)  # |x| close to sqrt(r R)
    assert abs(mid.p_exit_outer - 0.5) <= 0.02
    for bad in [(5, 0), (100, 0), (0, 0)]:
        with pytest.raises(ValueError):
            annulus_crossing(bad, 10, 100)
    with pytest.raises(ValueError):
        annulus_crossing((30, 0), 100, 10)


def test_half_step():
    h = annulus_half_step(50, 4)
    assert abs(h.p_up - 0.5) <= 0.02
    assert h.p_up + h.p_down == pytest.approx(1.0, abs=1e-9)
    devs = [abs(annulus_half_step(m, 4).p_up - 0.5) for m in (25, 50, 100)]
    assert devs[0] > devs[1] > devs[2]
    with pytest.raises(ValueError):
        annulus_half_step(50, 1.5)
    with pytest.raises(ValueError):
        annulus_half_step(2, 4)
    with pytest.raises(ValueError):
        annulus_half_step(200, 4)  # outer radius beyond the exact-solve cap


def test_local_time_law():
    law = local_time_law((10, 0), 100)
    assert law.p_hit == pytest.approx(hit_origin_before_exit((10, 0), 100))
    assert law.geometric_mean == pytest.approx(green_at_center(100))
    assert law.laplace(1e-9) == pytest.approx(1.0, abs=1e-8)
    lo, hi = babe_band(100, 10, 0.5)
    assert lo <= law.laplace(0.5) <= hi
    assert sum(law.pmf(k) for k in range(20_000)) == pytest.approx(1.0, abs=1e-9)
    mean = sum(k * law.pmf(k) for k in range(20_000))
    assert law.moment(1) == pytest.approx(mean, rel=1e-9)
    for k in range(1, 6):
        assert law.moment(k) <= law.moment_bound(k) * (1 + 1e-12)
    assert law.sf(0) == 1.0
    assert law.sf(1) == pytest.approx(law.p_hit)
    with pytest.raises(ValueError):
        law.laplace(0)


def test_eulerian_rows():
    assert eulerian_row(1) == [1]
    assert eulerian_row(3) == [1, 4, 1]
    assert eulerian_row(4) == [1, 11, 11, 1]
    assert sum(eulerian_row(6)) == math.factorial(6)


def test_harnack():
    assert harnack_ratio(60, 0.1) <= 1 + 5 * 0.1
    rs = [harnack_ratio(60, e) for e in (0.3, 0.2, 0.1)]
    assert rs[0] > rs[1] > rs[2] >= 1.0
    with pytest.raises(ValueError):
        harnack_ratio(40, 0.02)
    with pytest.raises(ValueError):
        harnack_ratio(60, 1.0)


def test_dirichlet_constant_and_cap():
    dom = Domain(disk_points(DiskSpec(ORIGIN, 5)))
    h = dirichlet(dom, lambda p: 3.0)
    assert np.allclose(h, 3.0, atol=1e-12)
    with pytest.raises(ValueError):
        disk_domain(401)
