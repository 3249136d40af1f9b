import math

import numpy as np
import pytest

from rw2d.lattice import ORIGIN, DiskSpec, WalkState, walk_until_exit
from rw2d.localtime import (
    DiskRuns,
    LocalTimeLedger,
    count_at_least,
    max_local_time,
    merge,
    origin_visits,
    psi_count,
    psi_threshold,
    record_visit,
    theta_count,
    theta_threshold,
)
from rw2d.potential import local_time_law
from rw2d.rng import Stream, stream_key


def _ledger(points):
    led = LocalTimeLedger()
    for p in points:
        record_visit(led, p)
    return led


def test_record_visit():
    led = _ledger([ORIGIN, ORIGIN])
    assert led.counts[ORIGIN] == 2 and led.total == 2
    assert max_local_time(led) == (ORIGIN, 2)
    assert max_local_time(_ledger([(0, 0), (1, 0), (0, 0)])) == (ORIGIN, 2)


def test_tie_break_is_lexicographic():
    led = _ledger([(1, 0)] * 3 + [(0, 1)] * 3)
    assert max_local_time(led) == ((0, 1), 3)
    led = _ledger([(0, 1)] * 3 + [(1, 0)] * 3)
    assert max_local_time(led) == ((0, 1), 3)
    with pytest.raises(ValueError):
        max_local_time(LocalTimeLedger())


def test_merge_is_pointwise_associative_commutative():
    rng = np.random.default_rng(0)
    leds = [_ledger([tuple(p) for p in rng.integers(-3, 4, size=(50, 2))]) for _ in range(3)]
    a, b, c = leds
    left, right = a.merge(b).merge(c), a.merge(b.merge(c))
    assert left.counts == right.counts and left.total == right.total == 150
    assert a.merge(b).counts == b.merge(a).counts
    assert left.running_max == right.running_max == merge(c, a, b).running_max
    for p in left.counts:
        assert left.counts[p] == sum(l.counts.get(p, 0) for l in leds)
    assert a.total == 50  # operands untouched


def test_walk_feeds_one_visit_per_time():
    led = LocalTimeLedger()
    out = walk_until_exit(WalkState(ORIGIN, rng=Stream(2)), DiskSpec(ORIGIN, 15), observers=[led])
    assert led.total == out.exit_time + 1


def test_pigeonhole_on_long_walk():
    led = LocalTimeLedger()
    s = WalkState(ORIGIN, rng=Stream(4))
    walk_until_exit(s, DiskSpec(ORIGIN, 10**6), observers=[led], cap=10_000)
    assert led.total == 10_001
    assert max_local_time(led)[1] >= math.ceil(led.total / led.distinct())


def test_psi_count_examples():
    R = math.exp(2)
    led = LocalTimeLedger.from_counts({(0, 0): 3, (1, 0): 2, (0, 1): 1})
    assert psi_threshold(R, 1) == pytest.approx(8 / math.pi)
    assert psi_count(led, R, 1) == 1
    assert psi_count(led, R, 100) == 0
    assert psi_count(led, R, 1e-6) == 3
    # points outside D(0,R) never count
    led2 = LocalTimeLedger.from_counts({(0, 0): 5, (9, 0): 5})
    assert psi_count(led2, R, 1e-6) == 1
    with pytest.raises(ValueError):
        psi_count(led, 1, 1)
    with pytest.raises(ValueError):
        psi_count(led, R, 0)


def test_theta_count_examples():
    n = 100
    led = LocalTimeLedger.from_counts({(0, 0): 9, (1, 0): 5, (2, 0): 1})
    assert theta_threshold(n, 1) == pytest.approx(math.log(n) ** 2 / math.pi)  # about 6.75
    assert theta_count(led, n, 1) == 1
    assert theta_count(led, n, 1e3) == 0
    assert theta_count(led, n, 1e-6) == 3
    with pytest.raises(ValueError):
        theta_count(led, 1, 1)


def test_thresholded_counts_monotone():
    led = LocalTimeLedger()
    walk_until_exit(WalkState(ORIGIN, rng=Stream(6)), DiskSpec(ORIGIN, 30), observers=[led])
    psis = [psi_count(led, 30, a) for a in np.linspace(0.05, 2, 30)]
    thetas = [theta_count(led, led.total, al) for al in np.linspace(0.05, 4, 30)]
    assert all(np.diff(psis) <= 0) and all(np.diff(thetas) <= 0)


def test_summary_and_csv(tmp_path):
    led = LocalTimeLedger.from_counts({(0, 0): 3, (1, 0): 2})
    s = led.summary(R=math.exp(2), a_grid=(1.0,), n=100, alpha_grid=(0.5,))
    assert s["total"] == 5 and s["max"] == {"x": 0, "y": 0, "count": 3}
    assert s["psi"] == {"1.0": 1}
    led.to_csv(tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines() == ["x,y,count", "0,0,3", "1,0,2"]


def test_count_at_least():
    hist = np.array([0, 4, 2, 1, 0, 1])
    assert count_at_least(hist, 2.5) == 2
    assert count_at_least(hist, 0.1) == 8
    assert count_at_least(hist, 99) == 0


def test_disk_runs_match_python_ledger():
    R, seed = 12, 3
    key = stream_key(seed, "dr")
    runs = DiskRuns(key, 5, R, probes=[(0, 0), (2, 1)])
    s = R * R - 1
    for i in range(5):
        led = LocalTimeLedger()
        out = walk_until_exit(WalkState(ORIGIN, rng=Stream(seed, i, "dr")), DiskSpec(ORIGIN, R),
                              observers=[led])
        inside = {p: c for p, c in led.counts.items() if p.norm_sq() <= s}
        assert runs.exit_time[i] == out.exit_time
        assert runs.lmax[i] == max(inside.values())
        assert runs.distinct()[i] == len(inside)
        assert runs.probe_counts[i, 0] == inside.get((0, 0), 0)
        assert runs.probe_counts[i, 1] == inside.get((2, 1), 0)
        for a in (0.1, 0.3):
            assert runs.psi_counts(a)[i] == psi_count(led, R, a)


def test_origin_visits_law():
    law = local_time_law((3, 0), 20)
    v, t = origin_visits(stream_key(1, "ov"), 20_000, (3, 0), 20)
    assert np.all(t > 0)
    p = law.p_hit
    assert abs((v > 0).mean() - p) <= 3 * math.sqrt(p * (1 - p) / len(v))
    with pytest.raises(ValueError):
        origin_visits(stream_key(1), 10, (20, 0), 20)
