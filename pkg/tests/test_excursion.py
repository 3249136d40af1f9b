import math
from fractions import Fraction

import numpy as np
import pytest

from rw2d.excursion import (
    ExcursionTracker,
    RadiiSchedule,
    SuccessCriterion,
    TrackedRuns,
    center_grid,
    frak_n,
    is_n_successful,
    k0,
    lattice_disks_intersect,
    separation_level,
    shell_index,
)
from rw2d.lattice import ORIGIN, DiskSpec, WalkState, walk_until_exit
from rw2d.rng import Stream, stream_key

SCH = RadiiSchedule(3, r_min=4, ratio=2)  # radii 32, 16, 8, 4


def _line(a, b):
    step = 1 if b >= a else -1
    return [(x, 0) for x in range(a, b + step, step)]


def _feed(tracker, xs):
    for p in xs:
        tracker.observe(p)
    return tracker


def test_schedule():
    assert SCH.radii == [32, 16, 8, 4]
    assert SCH.K == 512
    assert SCH.sampling_square() == (64, 96)
    assert list(SCH.thresholds()) == [1023, 255, 63, 15]
    assert RadiiSchedule(2, r_min=0.5, ratio=2.5).radii == [Fraction(25, 8), Fraction(5, 4),
                                                              Fraction(1, 2)]
    with pytest.raises(ValueError):
        RadiiSchedule(3, ratio=1.5)
    with pytest.raises(ValueError):
        RadiiSchedule(0)
    with pytest.raises(ValueError):
        RadiiSchedule(3, mode="other")


def test_asymptotic_schedule_in_log_space():
    n = 12
    p = RadiiSchedule.asymptotic(n)
    assert p.log_radius(n) == pytest.approx(n)  # r_n = e^n
    for k in range(n):
        assert p.log_radius(k) - p.log_radius(k + 1) == pytest.approx(3 * math.log(n))
    assert p.log_K() - p.log_radius(0) == pytest.approx(math.log(16))
    with pytest.raises(ValueError):
        p.radius(0)


def test_shell_index():
    thr = SCH.thresholds()
    assert shell_index(32, 0, thr) == 0
    assert shell_index(16, 0, thr) == 1
    assert shell_index(4, 0, thr) == 3
    assert shell_index(10, 0, thr) == -1
    assert shell_index(0, 0, thr) == -1


def test_radial_path_counts_one_per_level():
    t = _feed(ExcursionTracker(ORIGIN, SCH), _line(32, 0) + _line(0, 40))
    assert t.N == [1, 1, 1]


def test_back_and_forth_in_one_annulus():
    path = _line(32, 8) + _line(8, 16) + _line(16, 8) + _line(8, 16) + _line(16, 40)
    t = _feed(ExcursionTracker(ORIGIN, SCH), path)
    assert t.N == [1, 2, 0]


def test_partial_excursion_not_counted():
    t = _feed(ExcursionTracker((5, 0), SCH), [(x + 5, y) for x, y in _line(32, 10)])
    assert t.N == [1, 0, 0]
    # a walk starting inside never counts level 1 until it touches r_0 first
    t = _feed(ExcursionTracker(ORIGIN, SCH), _line(20, 0))
    assert t.N == [0, 1, 1]


def test_counts_monotone_along_walk_and_segments():
    tr = ExcursionTracker(ORIGIN, RadiiSchedule(2, r_min=3, ratio=3), record_segments=True)
    snapshots = []

    def snap(p):
        tr.observe(p)
        snapshots.append(list(tr.N))

    walk_until_exit(WalkState((27, 0), rng=Stream(1)), DiskSpec(ORIGIN, 60), observers=[snap])
    arr = np.array(snapshots)
    assert np.all(np.diff(arr, axis=0) >= 0)
    for k in (1, 2):
        assert len(tr.segments[k]) == tr.N[k - 1]
    assert '"counts"' in tr.to_json()


def test_frak_and_k0():
    assert frak_n(0.7, 1) == 0
    assert frak_n(1, 2) == pytest.approx(12 * math.log(2))
    assert abs(frak_n(1, 2) - 8.3178) < 1e-4
    assert k0(1) == 4
    assert k0(0.05) > 4
    assert all(k0(a) >= 4 for a in (0.01, 0.1, 0.5, 1.9))
    with pytest.raises(ValueError):
        frak_n(1, 0)


def test_is_n_successful():
    c = SuccessCriterion(1.0, 6)
    centre = [1, 1, 1] + [round(frak_n(1, k)) for k in range(4, 7)]
    assert is_n_successful(centre, c)
    bad = list(centre)
    bad[4] = math.ceil(frak_n(1, 5) + 5.5)
    assert not is_n_successful(bad, c)
    low = [1, 1, 1] + [math.ceil(frak_n(1, k) - k) for k in range(4, 7)]
    high = [1, 1, 1] + [math.floor(frak_n(1, k) + k) for k in range(4, 7)]
    assert is_n_successful(low, c) and is_n_successful(high, c)
    assert not is_n_successful([2] + centre[1:], c)
    assert not is_n_successful([low[0], low[1], low[2], low[3] - 1, low[4], low[5]], c)
    with pytest.raises(ValueError):
        is_n_successful(centre[:-1], c)
    with pytest.raises(ValueError):
        SuccessCriterion(2.0, 3)


def test_integer_band_is_inside_real_band():
    c = SuccessCriterion(0.5, 10)
    for k in range(1, 11):
        lo, hi = c.band(k)
        r = c.integer_band(k)
        assert all(lo <= m <= hi for m in r)
        assert (r.start - 1 < lo) and (r.stop > hi)


def test_separation_level():
    assert separation_level((0, 0), (20, 0), SCH) == 2
    assert separation_level((0, 0), (0, 0), SCH) is None
    assert separation_level((0, 0), (65, 0), SCH) == 0
    assert separation_level((0, 0), (3, 0), SCH) is None
    # lattice disks are disjoint slightly before |x - y| reaches 2r
    assert lattice_disks_intersect((0, 0), (6, 0), 4)
    assert not lattice_disks_intersect((0, 0), (7, 0), 4)
    assert lattice_disks_intersect((0, 0), (4, 4), 4)


def test_tracked_runs_match_python_tracker():
    sch = RadiiSchedule(2, r_min=2, ratio=3)  # radii 18, 6, 2
    centers = [(0, 0), (5, 3), (-7, 2)]
    seed, tag, kill = 5, "tr", 40
    runs = TrackedRuns(stream_key(seed, tag), 6, sch, centers, kill)
    assert runs.truncated == 0
    for i in range(6):
        trackers = [ExcursionTracker(c, sch) for c in centers]
        visits = [0] * len(centers)

        def obs(p):
            for j, t in enumerate(trackers):
                t.observe(p)
                visits[j] += p == t.center

        out = walk_until_exit(WalkState(ORIGIN, rng=Stream(seed, i, tag)), DiskSpec(ORIGIN, kill),
                              observers=[obs])
        assert runs.exit_time[i] == out.exit_time
        assert tuple(runs.exits[i]) == out.exit_point
        for j, t in enumerate(trackers):
            assert list(runs.N()[i, j]) == t.N
            assert runs.local_time[i, j] == visits[j]
    crit = SuccessCriterion(1.0, 2)
    ok = runs.successful(crit)
    assert ok.shape == (6, 3)
    assert np.array_equal(ok, np.all(runs.N() == 1, axis=2))


def test_center_grid_inside_sampling_square():
    lo, hi = SCH.sampling_square()
    grid = center_grid(SCH, 8)
    assert len(grid) == 25
    assert all(lo <= c.x <= hi and lo <= c.y <= hi for c in grid)
