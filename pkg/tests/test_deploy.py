import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from capnet.deploy import (INFRASTRUCTURE, ORDINARY, Deployment, Flow, FlowSet, MobilityModel,
                           critical_range, draw_multicast_flows, draw_unicast_flows, place_infrastructure,
                           place_uniform, step_mobility)
from capnet.errors import InvalidScenario


def test_place_uniform_range_and_determinism():
    a = place_uniform(1000, 1.0, 7)
    b = place_uniform(1000, 1.0, 7)
    assert a.n == 1000
    assert np.all((a.positions >= 0) & (a.positions <= 1))
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, place_uniform(1000, 1.0, 8).positions)


def test_place_uniform_density_one():
    n = 4000
    dep = place_uniform(n, math.sqrt(n), 3)
    assert dep.n / dep.area_side**2 == pytest.approx(1.0)
    assert dep.positions.max() <= dep.area_side


def test_place_uniform_mean_x():
    n = 10**5
    x = place_uniform(n, 1.0, 11).positions[:, 0]
    assert abs(x.mean() - 0.5) <= 3 / math.sqrt(12 * n)


def test_place_uniform_chi_square():
    pos = place_uniform(10**5, 1.0, 5).positions
    counts, _, _ = np.histogram2d(pos[:, 0], pos[:, 1], bins=10, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.001


def test_place_uniform_rejects_tiny():
    with pytest.raises(InvalidScenario):
        place_uniform(1, 1.0, 0)


def test_infrastructure_grid_examples():
    four = place_infrastructure(4, 1.0, "grid").positions
    assert sorted(map(tuple, four.round(12))) == sorted([(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)])
    assert np.allclose(place_infrastructure(1, 1.0, "grid").positions, [[0.5, 0.5]])
    p = place_infrastructure(64, 1.0, "grid").positions
    d = np.hypot(*(p[:, None] - p[None]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    assert np.allclose(d.min(axis=1), 1 / 8)


def test_infrastructure_kinds_and_uniform_mode():
    frag = place_infrastructure(5, 2.0, "uniform", seed=3)
    assert frag.n == 5 and np.all(frag.kinds == INFRASTRUCTURE)
    assert np.all((frag.positions >= 0) & (frag.positions <= 2.0))
    with pytest.raises(InvalidScenario):
        place_infrastructure(0, 1.0, "grid")


def test_merged_keeps_ordinary_first():
    dep = place_uniform(10, 1.0, 1).merged(place_infrastructure(4, 1.0, "grid"))
    assert dep.n == 14 and dep.n_ordinary == 10
    assert list(dep.kinds[:10]) == [ORDINARY] * 10


def test_unicast_two_nodes():
    flows = draw_unicast_flows(place_uniform(2, 1.0, 0), 0)
    assert [(f.source, f.destinations) for f in flows] == [(0, (1,)), (1, (0,))]


def test_unicast_mean_distance():
    # mean distance between two uniform points in the unit square
    exact = (2 + math.sqrt(2) + 5 * math.log(1 + math.sqrt(2))) / 15
    d = []
    for s in range(10):
        dep = place_uniform(1000, 1.0, s)
        f = draw_unicast_flows(dep, s)
        src = dep.positions[[x.source for x in f]]
        dst = dep.positions[[x.destinations[0] for x in f]]
        d.append(np.hypot(*(src - dst).T))
    assert np.mean(np.concatenate(d)) == pytest.approx(exact, rel=0.02)
    assert exact == pytest.approx(0.5214, abs=1e-4)


def test_unicast_determinism_and_validity():
    dep = place_uniform(300, 1.0, 4)
    a, b = draw_unicast_flows(dep, 9), draw_unicast_flows(dep, 9)
    assert a == b
    a.validate(dep)
    assert sorted(f.source for f in a) == list(range(300))
    assert all(f.source not in f.destinations for f in a)


def test_unicast_permutation_is_derangement():
    dep = place_uniform(200, 1.0, 4)
    f = draw_unicast_flows(dep, 2, permutation=True)
    dests = [x.destinations[0] for x in f]
    assert sorted(dests) == list(range(200))
    assert all(x.source != x.destinations[0] for x in f)


def test_unicast_skips_infrastructure():
    dep = place_uniform(20, 1.0, 0).merged(place_infrastructure(4, 1.0, "grid"))
    flows = draw_unicast_flows(dep, 1)
    assert len(flows) == 20
    assert all(f.destinations[0] < 20 for f in flows)


def test_multicast_l2_single_destination():
    dep = place_uniform(100, 1.0, 0)
    flows = draw_multicast_flows(dep, 100, 2, 5)
    assert sorted(f.source for f in flows) == list(range(100))
    assert all(len(f.destinations) == 1 and f.source not in f.destinations for f in flows)


def test_multicast_unique_destinations_l64():
    u = []
    for s in range(3):
        dep = place_uniform(4000, 1.0, s)
        u += [len(f.destinations) for f in draw_multicast_flows(dep, 100, 64, s)]
    assert 60 <= np.mean(u) <= 63


def test_multicast_rejects_large_l():
    with pytest.raises(InvalidScenario):
        draw_multicast_flows(place_uniform(10, 1.0, 0), 2, 11, 0)


def test_flowset_validation_catches_bad_endpoints():
    dep = place_uniform(5, 1.0, 0)
    with pytest.raises(InvalidScenario):
        FlowSet((Flow(0, 0, (9,)),)).validate(dep)
    with pytest.raises(InvalidScenario):
        FlowSet((Flow(0, 1, (1,)),)).validate(dep)
    with pytest.raises(InvalidScenario):
        FlowSet((Flow(0, 1, (2, 3)),)).validate(dep)


def test_mobility_static_and_reshuffle():
    dep = place_uniform(50, 2.0, 0).merged(place_infrastructure(4, 2.0, "grid"))
    same = step_mobility(dep, MobilityModel("static"), 1, 3)
    assert np.array_equal(same.positions, dep.positions)
    moved = step_mobility(dep, MobilityModel("iid-reshuffle"), 1, 3)
    assert moved.n == dep.n and moved.area_side == dep.area_side
    assert not np.array_equal(moved.positions[:50], dep.positions[:50])
    assert np.array_equal(moved.positions[50:], dep.positions[50:])
    assert np.all((moved.positions >= 0) & (moved.positions <= 2.0))


def test_mobility_time_average():
    dep = place_uniform(3, 1.0, 0)
    xs = [step_mobility(dep, MobilityModel("iid-reshuffle"), 5, t).positions[0, 0] for t in range(1000)]
    assert abs(np.mean(xs) - 0.5) <= 3 / math.sqrt(12 * 1000)


def test_critical_range_examples():
    assert critical_range(1000) == pytest.approx(0.05305, abs=5e-6)
    assert critical_range(1000, math.log(math.log(1000))) == critical_range(1000)
    assert critical_range(math.e, 0.0) == pytest.approx(math.sqrt(1 / (math.pi * math.e)))
    assert critical_range(2000, 1.0) < critical_range(1000, 1.0)
    vals = [critical_range(10**e) for e in (3, 4, 5, 6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(InvalidScenario):
        critical_range(10, -10.0)


def test_csv_round_trip():
    dep = place_uniform(12, 1.0, 3).merged(place_infrastructure(4, 1.0, "grid"))
    back = Deployment.from_csv(dep.to_csv(), area_side=1.0)
    assert np.array_equal(back.positions, dep.positions)
    assert np.array_equal(back.kinds, dep.kinds)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 2**32))
def test_unicast_flows_always_valid(n, seed):
    dep = place_uniform(n, 1.0, seed)
    flows = draw_unicast_flows(dep, seed)
    flows.validate(dep)
    assert len(flows) == n


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 200), l=st.integers(2, 12), seed=st.integers(0, 2**32))
def test_multicast_flows_always_valid(n, l, seed):
    l = min(l, n)
    dep = place_uniform(n, 1.0, seed)
    flows = draw_multicast_flows(dep, min(n, 10), l, seed)
    flows.validate(dep)
    for f in flows:
        assert 1 <= len(f.destinations) <= l - 1
        assert len(set(f.destinations)) == len(f.destinations)
