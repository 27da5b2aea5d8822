import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pushlab.metrics import (
    EpisodeRecord,
    aggregate,
    count_distance_corrections,
    count_overshoot,
    episode_return,
    load_records,
    mean_sem,
    read_trajectory,
    write_trajectory,
)

THR = 0.01


def brute_overshoot(d):
    n = 0
    for t in range(len(d) - 1):
        if d[t] < THR and not d[t + 1] < THR:
            n += 1
    return n


def brute_corrections(d):
    """Enumerate maximal strictly rising runs [s, e] (as index pairs) directly."""
    count = 0
    T = len(d)
    for s in range(T - 1):
        if not d[s + 1] > d[s]:
            continue
        if s > 0 and d[s] > d[s - 1]:
            continue  # not the start of a maximal run
        e = s + 1
        while e + 1 < T and d[e + 1] > d[e]:
            e += 1
        later_drop = any(d[j + 1] < d[j] for j in range(e, T - 1))
        if d[s] >= THR and later_drop:
            count += 1
    return count


def rest(value, n):
    return [value] * n


def test_overshoot_examples():
    assert count_overshoot(np.linspace(0.1, 0.001, 50)) == 0
    assert count_overshoot([0.05, 0.009, 0.012, 0.008] + rest(0.008, 46)) == 1
    assert count_overshoot([0.011, 0.009] * 25) == 24
    assert count_overshoot([0.009, 0.011] * 25) == 25


def test_distance_correction_examples():
    assert count_distance_corrections(np.linspace(0.1, 0.001, 50)) == 0
    assert count_distance_corrections([0.05, 0.06, 0.04] + rest(0.04, 47)) == 1
    assert count_distance_corrections([0.05, 0.06, 0.07, 0.04, 0.05, 0.03] + rest(0.03, 44)) == 2
    # exits from inside the success region belong to the overshoot count
    assert count_distance_corrections([0.011, 0.009] * 25) == 0
    # a rise with no later decrease does not count
    assert count_distance_corrections([0.05, 0.04, 0.06] + rest(0.06, 47)) == 0


def test_return_examples():
    assert episode_return(rest(0.005, 50)) == 0
    assert episode_return(rest(0.02, 50)) == -50
    assert episode_return(rest(0.02, 10) + rest(0.001, 40)) == -10


series = st.lists(
    st.one_of(st.floats(0.0, 0.03), st.sampled_from([0.0, 0.0099, 0.01, 0.0101, 0.02])), min_size=50, max_size=50
)


@given(series)
def test_counters_match_brute_force(d):
    assert count_overshoot(d) == brute_overshoot(d)
    assert count_distance_corrections(d) == brute_corrections(d)
    assert episode_return(d) == sum(-1 if x >= THR else 0 for x in d)
    assert count_overshoot(d) <= sum(x < THR for x in d)


@given(series, st.integers(1, 20))
def test_counters_invariant_to_constant_tail(d, k):
    longer = d + [d[-1]] * k
    assert count_overshoot(longer) == count_overshoot(d)
    assert count_distance_corrections(longer) == count_distance_corrections(d)


def test_mean_sem():
    s = mean_sem([-10, -20])
    assert s.mean == -15 and s.sem == pytest.approx(5.0)
    one = mean_sem([3])
    assert one.mean == 3 and one.sem == 0.0


def _record(final, cls="disc", returns=None):
    d = np.full(50, 0.05)
    d[-1] = final
    return EpisodeRecord(d, cls)


def test_aggregate_groups_and_flags():
    recs = [_record(0.001, "disc"), _record(0.05, "disc"), _record(0.001, "square")]
    report = aggregate(recs)
    assert report.overall.n == 3
    assert report.success_rate == pytest.approx(2 / 3)
    assert report.groups["disc"].success_rate == 0.5
    assert not report.groups["square"].sem_defined
    assert "rectangle" not in report.groups
    assert "SEM undefined" in report.to_text()
    assert report.overall.ret.mean == pytest.approx(np.mean([r.ret for r in recs]))
    assert aggregate([_record(0.001)] * 100).success_rate == 1.0
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_brute_force():
    rng = np.random.default_rng(0)
    recs = [EpisodeRecord(rng.uniform(0, 0.03, 50), rng.choice(["disc", "square", "rectangle"])) for _ in range(60)]
    report = aggregate(recs)
    for name, g in report.rows():
        members = recs if name == "all" else [r for r in recs if r.shape_class == name]
        vals = [brute_corrections(list(r.distances)) for r in members]
        assert g.distance_corrections.mean == pytest.approx(np.mean(vals))
        assert g.distance_corrections.sem == pytest.approx(np.std(vals, ddof=1) / math.sqrt(len(vals)))


def test_trajectory_round_trip(tmp_path):
    rows = [
        dict(t=i + 1, ee_x=0.1, ee_y=0.2, obj_x=0.0, obj_y=0.0, obj_theta=0.5, goal_x=0.1, goal_y=0.1,
             distance=0.05 - i * 1e-3, reward=-1.0, a_x=0.1, a_y=-0.1, a_s=100)
        for i in range(50)
    ]
    write_trajectory(tmp_path / "ep.csv", rows)
    back = read_trajectory(tmp_path / "ep.csv")
    assert len(back["t"]) == 50
    assert back["distance"] == pytest.approx([r["distance"] for r in rows])
    (tmp_path / "episodes.csv").write_text(
        "episode,file,shape_class,mass,mu_k,final_distance,success\n0,ep.csv,square,0.1,0.3,0.001,0\n"
    )
    recs = load_records(tmp_path)
    assert recs[0].shape_class == "square" and len(recs[0].distances) == 50
