import dataclasses
import itertools
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from mcast_twin.core import ChannelParams, ScenarioError, SchedulingDecision
from mcast_twin.env import (
    FixedVersionPolicy,
    HeuristicPolicy,
    InfeasibleDecision,
    MulticastEnv,
    RandomPolicy,
    channel_gains,
    path_gain,
    run_baseline,
    run_episode,
    sample_swipes,
)
from mcast_twin.scenarios import load_scenario, standard_scenario, read_catalog_csv, read_channel_csv, tiny_scenario
from mcast_twin.slot_division import BETA_MIN

from conftest import make_catalog, make_resources, make_scenario, make_smgs

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def totals(reports):
    return [r.mg_total for r in reports]


def test_reset_is_deterministic_and_starts_empty():
    env = MulticastEnv(standard_scenario(1, horizon=5))
    a = env.reset(9)
    assert len(a) == 3 * env.G
    assert all(q == 0.0 for s in env.smgs for q in s.buffers)
    assert np.array_equal(a, env.reset(9))
    r1 = run_episode(env, FixedVersionPolicy(2), 9)
    r2 = run_episode(MulticastEnv(standard_scenario(1, horizon=5)), FixedVersionPolicy(2), 9)
    assert r1 == r2


def test_no_state_leaks_across_reset():
    sc = tiny_scenario(2, horizon=8)
    used = MulticastEnv(sc)
    run_episode(used, RandomPolicy(0), 3)
    fresh = MulticastEnv(sc)
    assert np.array_equal(used.reset(4), fresh.reset(4))
    assert used.plan == fresh.plan
    assert run_episode(used, FixedVersionPolicy(1), 4) == run_episode(fresh, FixedVersionPolicy(1), 4)


def test_swipe_sampling():
    rng = np.random.default_rng(0)
    never = make_catalog([[0.0, 0.0]])
    always = make_catalog([[1.0, 1.0], [1.0]])
    assert sample_swipes(rng, [(0, 0)] * 50, never) == [0] * 50
    assert sample_swipes(rng, [(0, 1)] * 50, always) == [1] * 50
    assert sample_swipes(rng, [(2, 0)], always) == [0]  # finished SMG
    third = make_catalog([[0.3]])
    n = sum(sample_swipes(rng, [(0, 0)] * 10_000, third))
    assert stats.binomtest(n, 10_000, 0.3).pvalue > 0.001


def test_channel_model():
    params = ChannelParams(path_loss_exponent=2.0, reference_gain=1.0, fading=False)
    g = channel_gains(np.random.default_rng(0), [10.0, 10.0, 20.0], params)
    assert g[0] == g[1] == path_gain(10.0, params)
    assert g[2] == pytest.approx(g[0] / 4, rel=1e-12)
    faded = dataclasses.replace(params, fading=True)
    n = 100_000
    mult = channel_gains(np.random.default_rng(1), [10.0] * n, faded) / path_gain(10.0, params)
    assert abs(mult.mean() - 1.0) <= 3 / np.sqrt(n)  # unit-mean, unit-variance multiplier


def test_constant_gains_without_fading_or_motion():
    cat = make_catalog([[0.1] * 4] * 4)
    sc = make_scenario(cat, make_smgs([[0.0], [0.0]]), make_resources(), horizon=4, n_max=2)
    env = MulticastEnv(sc)
    first = [s.gains for s in env.smgs]
    env.step(env.decide([(1,) * n for n in env.plan.counts]))
    assert [s.gains for s in env.smgs] == first


def test_floor_share_is_penalized():
    env = MulticastEnv(standard_scenario(0, horizon=3))
    versions = [(1,) * n for n in env.plan.counts]
    good = env.decide(versions)
    starved = SchedulingDecision(tuple(versions), (BETA_MIN, BETA_MIN, 1 - 2 * BETA_MIN))
    assert env.evaluate(starved).mg_total < env.evaluate(good).mg_total - 0.1


def single_segment_env():
    cat = make_catalog([[0.0, 0.0, 0.0], [0.0, 0.0]])
    res = make_resources(bandwidth=1e12, computing_capacity=1e15, slot_length=2.0)
    return MulticastEnv(make_scenario(cat, make_smgs([[0.0]]), res, horizon=2, n_max=1))


def test_single_segment_reward_by_hand():
    env = single_segment_env()
    assert env.plan.segments == (((0, 0),),)
    dec = env.decide([(2,)])
    assert dec.betas == pytest.approx((1.0,))
    _, reward, _, terminal = env.step(dec)
    res = env.res
    h = path_gain(100.0, env.scenario.channel)
    rate = res.bandwidth * np.log2(1 + h * res.downlink_power / res.noise_power)
    S = max(1.8e6 / rate, res.computing_density * 1.8 / res.computing_capacity)
    Q = 1 - 1 / (2 * 1.8 / 2 + 1)
    s = env.scenario.smgs[0]
    assert reward == pytest.approx(Q - s.lambda_rebuffer * S - s.lambda_variation * Q, abs=1e-12)
    assert not terminal
    assert env.smgs[0].last_quality == pytest.approx(Q)


def test_terminal_at_horizon_and_reward_is_report_total():
    env = MulticastEnv(tiny_scenario(0, horizon=4))
    flags = []
    for _ in range(4):
        report, reward, obs, terminal = env.step(RandomPolicy(1).act(env))
        assert reward == report.mg_total
        assert obs.shape == (env.state_dim,)
        flags.append(terminal)
    assert flags == [False, False, False, True]


def test_infeasible_decisions_are_rejected():
    env = MulticastEnv(standard_scenario(0, horizon=3))
    versions = [(1,) * n for n in env.plan.counts]
    with pytest.raises(InfeasibleDecision):
        env.step(SchedulingDecision(tuple(versions), (0.0, 0.5, 0.5)))
    with pytest.raises(InfeasibleDecision):
        env.step(SchedulingDecision(tuple(versions), (0.6, 0.6, 0.6)))
    short = [v[:-1] for v in versions]
    with pytest.raises(InfeasibleDecision):
        env.step(SchedulingDecision(tuple(short), (0.3, 0.3, 0.3)))
    assert isinstance(InfeasibleDecision(["x"]), ScenarioError)


def test_branch_mask_and_action_mapping():
    env = MulticastEnv(standard_scenario(0, horizon=3))
    mask = env.branch_mask().reshape(env.G, env.n_max)
    assert list(mask.sum(axis=1)) == list(env.plan.counts)
    versions = env.versions_from_actions(np.arange(env.n_branches) % env.L)
    for g, n in enumerate(env.plan.counts):
        assert len(versions[g]) == n
        assert all(1 <= v <= env.L for v in versions[g])


def test_schemes_agree_for_one_smg_without_swipes():
    cat = make_catalog([[0.0] * 5] * 6)
    sc = make_scenario(cat, make_smgs([[0.0, 0.0]]), make_resources(), horizon=6, n_max=3)
    a, b = MulticastEnv(sc, "proposed"), MulticastEnv(sc, "wdt")
    assert a.plan == b.plan
    assert run_episode(a, FixedVersionPolicy(2), 0) == run_episode(b, FixedVersionPolicy(2), 0)


def test_wdt_decides_against_total_buffer():
    env = MulticastEnv(standard_scenario(0, horizon=4), "wdt")
    for _ in range(3):
        env.step(FixedVersionPolicy(1).act(env))
    assert env.decision_buffers() == [pytest.approx(sum(s.buffers)) for s in env.smgs]
    with pytest.raises(ValueError):
        MulticastEnv(standard_scenario(0), "nope")
    with pytest.raises(ValueError):
        run_baseline(standard_scenario(0), "wdt")


def test_heuristic_single_smg_matches_exhaustive_search():
    cat = make_catalog([[0.1] * 6] * 3, sizes=(1.0, 0.8, 0.8))
    sc = make_scenario(cat, make_smgs([[0.0]]), make_resources(), horizon=3, n_max=3)
    env = MulticastEnv(sc)
    for _ in range(3):
        dec = HeuristicPolicy().act(env)
        assert dec.betas == (1.0,)
        n = env.plan.counts[0]
        best = min(itertools.product(range(1, env.L + 1), repeat=n), key=lambda v: env.objective([v]).value([1.0]))
        assert env.objective([dec.versions[0]]).value([1.0]) == pytest.approx(env.objective([best]).value([1.0]), abs=1e-12)
        env.step(dec)


def test_heuristic_decisions_are_feasible():
    env = MulticastEnv(standard_scenario(3, horizon=6))
    reports = run_episode(env, HeuristicPolicy(), 3)
    assert len(reports) == 6


def test_catalog_csv_loader(tmp_path):
    cat = read_catalog_csv(CONFIGS / "catalog_example.csv")
    assert cat.n_layers == 2 and cat.swipe_prob(0, 2) == 0.3
    bad = tmp_path / "bad.csv"
    bad.write_text("video,segment,p,layer1_mb\n0,0,0.1,1.0\n")
    with pytest.raises(ScenarioError, match="header"):
        read_catalog_csv(bad)
    gap = tmp_path / "gap.csv"
    gap.write_text("video_id,segment_id,swipe_prob,layer1_mb\n0,0,0.1,1.0\n0,2,0.1,1.0\n")
    with pytest.raises(ScenarioError, match="contiguous"):
        read_catalog_csv(gap)
    sc = load_scenario(CONFIGS / "tiny_csv_catalog.json")
    assert sc.catalog == cat


def test_channel_trace_overrides_gains(tmp_path):
    sc = tiny_scenario(0, horizon=3)
    users = [u.user_id for u in sc.users]
    path = tmp_path / "trace.csv"
    lines = ["slot,user_id,gain"] + [f"{t},{u},{1e-9 * (t + 1)}" for t in range(2) for u in users]
    path.write_text("\n".join(lines) + "\n")
    trace = read_channel_csv(path)
    env = MulticastEnv(dataclasses.replace(sc, channel_trace=trace))
    assert all(h == 1e-9 for s in env.smgs for h in s.gains)
    env.step(FixedVersionPolicy(1).act(env))
    assert all(h == 2e-9 for s in env.smgs for h in s.gains)
    env.step(FixedVersionPolicy(1).act(env))
    assert all(h == 1e-9 for s in env.smgs for h in s.gains)  # trace repeats
    bad = tmp_path / "bad.csv"
    bad.write_text("t,user,gain\n")
    with pytest.raises(ScenarioError):
        read_channel_csv(bad)
