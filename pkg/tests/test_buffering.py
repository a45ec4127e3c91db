import itertools
import math

import numpy as np
import pytest

from mcast_twin.buffering import (
    assign_phi,
    buffer_requirement,
    build_plan,
    data_rate,
    max_affordable,
    max_segments_bandwidth,
    max_segments_computing,
    multicast_min_rate,
    segment_number,
)
from mcast_twin.watch import compute_distribution

from conftest import make_catalog, make_resources, make_smgs


def test_data_rate_examples():
    res = make_resources(bandwidth=10e6, downlink_power=3.0, noise_power=1.0)
    assert data_rate(1.0, res) == pytest.approx(20e6, abs=1e-6)
    assert data_rate(0.0, res) == 0.0
    res1 = make_resources(bandwidth=1.0, downlink_power=1.0, noise_power=1.0)
    assert data_rate(1.0, res1) == pytest.approx(1.0, abs=1e-12)


def test_buffer_requirement_examples():
    assert buffer_requirement([2.0, 6.0], 5.0, 2.0) == pytest.approx(1.5, abs=1e-12)
    assert buffer_requirement([5.0, 9.0], 5.0, 2.0) == 0.0
    assert buffer_requirement([0.0, 0.0], 5.0, 2.0) == pytest.approx(5.0, abs=1e-12)


def test_bandwidth_count_examples():
    seg = [np.array([3.0])] * 5
    assert max_segments_bandwidth(seg, 1, 2e6, 5.0) == 3  # budget 10 Mb
    assert max_segments_bandwidth(seg, 1, 0.0, 5.0) == 0
    hetero = [np.array([2.0]), np.array([5.0]), np.array([5.0])]
    assert max_segments_bandwidth(hetero, 1, 1.6e6, 5.0) == 2  # budget 8 Mb


def test_computing_count_examples():
    res = make_resources(computing_capacity=10e9, computing_density=4e9, slot_length=5.0)
    seg = [np.array([1.0, 1.0, 1.0])] * 10  # layers 2..3 give 2 Mb of enhancement
    assert max_segments_computing(seg, 3, res, cap=10) == 6
    assert max_segments_computing(seg, 1, res, cap=8) == 8
    tiny_c = make_resources(computing_capacity=1e-9)
    assert max_segments_computing(seg, 2, tiny_c, cap=8) == 0


def linear_scan(costs, budget):
    best = 0
    for k in range(len(costs) + 1):
        if sum(costs[:k]) <= budget:
            best = k
    return best


def test_max_affordable_matches_linear_scan_and_sandwich():
    rng = np.random.default_rng(0)
    for _ in range(300):
        costs = list(rng.uniform(0.1, 3.0, int(rng.integers(0, 10))))
        budget = float(rng.uniform(0, 15))
        n = max_affordable(costs, budget)
        assert n == linear_scan(costs, budget)
        assert sum(costs[:n]) <= budget
        if n < len(costs):
            assert sum(costs[: n + 1]) > budget


def test_counts_monotone_in_resources():
    rng = np.random.default_rng(1)
    seg = [rng.uniform(0.5, 1.5, 3) for _ in range(8)]
    prev_b = prev_c = -1
    for scale in (0.5, 1, 2, 4, 8):
        nb = max_segments_bandwidth(seg, 2, scale * 1e6, 5.0)
        nc = max_segments_computing(seg, 3, make_resources(computing_capacity=scale * 1e9), cap=8)
        assert nb >= prev_b and nc >= prev_c
        prev_b, prev_c = nb, nc


def test_multicast_min_rate_nonincreasing_in_g():
    res = make_resources()
    smgs = make_smgs([[1e-9, 3e-9], [5e-10], [2e-9]])
    rates = [multicast_min_rate(smgs, g, res) for g in range(3)]
    assert rates == sorted(rates, reverse=True)
    assert rates[1] == data_rate(5e-10, res)


def test_segment_number_examples():
    assert segment_number(1.5, [3, 2]) == 3
    assert segment_number(4.7, [3, 2]) == 4
    assert segment_number(1.5, [3, 2], n_max=2) == 2
    assert segment_number(0.0, []) == 0


def test_plan_n_is_floor_of_max_and_capped():
    cat = make_catalog([[0.1] * 6, [0.1] * 6, [0.1] * 6])
    res = make_resources()
    smgs = make_smgs([[1e-9], [1e-9]], buffers=[[3.0, 0.0], [5.0]])
    dists = [compute_distribution(cat, s.playhead) for s in smgs]
    plan = build_plan(smgs, dists, res, cat, avg_version=1, n_max=2)
    assert plan.n == 2 and plan.counts == (2, 2)
    plan = build_plan(smgs, dists, res, cat, avg_version=1, n_max=8)
    assert 1 <= plan.n <= 8
    assert all(c <= plan.n for c in plan.counts)


def test_plan_with_exhausted_catalog_is_empty():
    cat = make_catalog([[0.1], [0.1]])
    smgs = make_smgs([[1e-9], [1e-9]], playheads=[(2, 0), (2, 0)])
    plan = build_plan(smgs, [None, None], make_resources(), cat, avg_version=1, n_max=4)
    assert plan.counts == (0, 0)


def test_plan_picks_highest_probability_unbuffered_segments():
    # two SMGs, four candidate segments each, distinct watching probabilities
    cat = make_catalog([[0.6, 0.1], [0.3, 0.2], [0.5, 0.4], [0.2, 0.2]])
    res = make_resources()
    smgs = make_smgs([[1e-9], [1e-9]], playheads=[(0, 0), (1, 0)])
    dists = [compute_distribution(cat, s.playhead) for s in smgs]
    buffered = [{(0, 0)}, set()]
    plan = build_plan(smgs, dists, res, cat, avg_version=1, n_max=2, buffered=buffered)
    for g in range(2):
        cands = [s for s, _ in dists[g].items() if s not in buffered[g]]
        n = plan.counts[g]
        best = max(itertools.combinations(cands, n), key=lambda c: sum(dists[g][s] for s in c))
        assert set(plan.segments[g]) == set(best)
        ws = [dists[g][s] for s in plan.segments[g]]
        assert ws == sorted(ws, reverse=True)


def test_phi_decreasing_and_global_rank():
    cat = make_catalog([[0.5, 0.5, 0.5], [0.2, 0.2, 0.2]])
    smgs = make_smgs([[1e-9], [1e-9]], playheads=[(0, 0), (1, 0)])
    dists = [compute_distribution(cat, s.playhead) for s in smgs]
    segments = [((0, 0), (0, 1)), ((1, 0), (1, 1))]
    phi = assign_phi(segments, dists)
    # w: smg0 (1, .5), smg1 (1, .8); the tie at w = 1 goes to the earlier segment
    assert phi == ((4.0, 1.0), (3.0, 2.0))
    for row in phi:
        assert all(a > b for a, b in zip(row, row[1:]))
    assert sorted(x for row in phi for x in row) == [1.0, 2.0, 3.0, 4.0]
