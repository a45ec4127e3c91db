"""Slot-level multicast streaming simulator and non-learning policies."""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from typing import Protocol, Sequence

import numpy as np

from mcast_twin import qoe
from mcast_twin.buffering import BufferingPlan, build_plan, multicast_min_rate
from mcast_twin.core import (
    ChannelParams,
    QoeReport,
    Scenario,
    ScenarioError,
    SchedulingDecision,
    Segment,
    SmgState,
    Video,
    VideoCatalog,
)
from mcast_twin.slot_division import BETA_MIN, TransformedObjective, slsqp_optimize
from mcast_twin.vbuffer import advance, apply_swipe, video_transition
from mcast_twin.watch import WatchDistribution, compute_distribution

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "wdt")


class InfeasibleDecision(ScenarioError):
    pass


def path_gain(distance: float, params: ChannelParams) -> float:
    """Log-distance power gain."""
    return params.reference_gain * (distance / params.reference_distance) ** (-params.path_loss_exponent)


def channel_gains(rng: np.random.Generator, distances: Sequence[float], params: ChannelParams) -> np.ndarray:
    """Path loss times an optional unit-mean exponential (Rayleigh power) fade."""
    base = np.array([path_gain(d, params) for d in distances])
    if params.fading:
        base = base * rng.exponential(1.0, size=len(base))
    return base


def sample_swipes(rng: np.random.Generator, playheads: Sequence[Segment], catalog: VideoCatalog) -> list[int]:
    """One Bernoulli draw per SMG with the swipe probability of the playing segment."""
    out = []
    for ph in playheads:
        u = rng.random()
        p = catalog.swipe_prob(*ph) if catalog.contains(ph) else 0.0
        out.append(int(u < p))
    return out


def synthetic_catalog(
    rng: np.random.Generator,
    n_videos: int,
    mean_swipe: float = 0.2,
    swipe_spread: float = 0.1,
    segments: tuple[int, int] = (4, 10),
    layer_sizes: Sequence[float] = (1.0, 0.8, 0.8, 0.8),
    size_jitter: float = 0.2,
    segment_duration: float = 2.0,
) -> VideoCatalog:
    """Random catalog with geometric retention.

    Each video draws one per-segment swipe probability around ``mean_swipe``
    (constant hazard, so watch time is geometric); layer sizes are scaled by
    a per-segment factor in ``1 +- size_jitter``.
    """
    videos = []
    base = np.asarray(layer_sizes, dtype=float)
    for _ in range(n_videos):
        n_seg = int(rng.integers(segments[0], segments[1] + 1))
        p = float(np.clip(rng.normal(mean_swipe, swipe_spread), 0.0, 1.0))
        scale = rng.uniform(1 - size_jitter, 1 + size_jitter, size=n_seg)
        videos.append(Video(tuple([p] * n_seg), tuple(tuple(base * s) for s in scale)))
    return VideoCatalog(tuple(videos), segment_duration)


def perturb_catalog(catalog: VideoCatalog, rng: np.random.Generator, noise: float) -> VideoCatalog:
    """The twin's estimate of the swipe probabilities (Gaussian error, clipped)."""
    if noise <= 0:
        return catalog
    videos = []
    for v in catalog.videos:
        p = np.clip(np.asarray(v.swipe_probs) + rng.normal(0.0, noise, len(v.swipe_probs)), 0.0, 1.0)
        videos.append(Video(tuple(p), v.layer_sizes))
    return VideoCatalog(tuple(videos), catalog.segment_duration)


class MulticastEnv:
    """Discrete-time simulator for one multicast group.

    ``scheme="proposed"`` ranks segments by watching probability and
    measures rebuffering against virtual buffer 0. ``scheme="wdt"`` buffers
    sequentially and its decisions see the total buffered seconds over all
    virtual buffers. The reported QoE always uses virtual buffer 0.
    """

    def __init__(self, scenario: Scenario, scheme: str = "proposed"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.scenario = scenario
        self.scheme = scheme
        self.catalog = scenario.catalog
        self.res = scenario.resources
        self.G = scenario.n_smgs
        self.L = self.catalog.n_layers
        self.n_max = scenario.n_max
        self._trace = _index_trace(scenario.channel_trace)
        near = min(u.distance for u in scenario.users)
        self.gain_scale = path_gain(max(near, scenario.channel.min_distance), scenario.channel)
        self.reset()

    # -- bookkeeping -------------------------------------------------------
    @property
    def state_dim(self) -> int:
        return 3 * self.G

    @property
    def n_branches(self) -> int:
        return self.G * self.n_max

    def reset(self, seed: int | None = None) -> np.ndarray:
        seed = self.scenario.seed if seed is None else seed
        ss = np.random.SeedSequence(seed)
        chan_ss, swipe_ss, est_ss, move_ss = ss.spawn(4)
        self.channel_rng = np.random.default_rng(chan_ss)
        self.swipe_rng = np.random.default_rng(swipe_ss)
        self.move_rng = np.random.default_rng(move_ss)
        self.twin_catalog = perturb_catalog(self.catalog, np.random.default_rng(est_ss), self.scenario.swipe_estimate_noise)
        self.t = 0
        self.avg_version = (self.L + 1) // 2
        self.positions = [s.playhead[1] * self.catalog.segment_duration for s in self.scenario.smgs]
        self.distances = {u.user_id: u.distance for u in self.scenario.users}
        self.speeds = {u.user_id: u.speed for u in self.scenario.users}
        self.directions = {u.user_id: (1.0 if self.move_rng.random() < 0.5 else -1.0) for u in self.scenario.users}
        self.smgs = [
            dataclasses.replace(s, buffers=(0.0,) * (self.G - g), gains=s.gains)
            for g, s in enumerate(self.scenario.smgs)
        ]
        self.buffered: list[set[Segment]] = [set() for _ in range(self.G)]
        self._refresh_channels()
        self._refresh_plan()
        return self.observation()

    def _refresh_channels(self) -> None:
        users = [u for s in self.smgs for u in s.users]
        gains = channel_gains(self.channel_rng, [self.distances[u] for u in users], self.scenario.channel)
        lookup = dict(zip(users, gains))
        if self._trace:
            row = self._trace.get(self.t % (max(self._trace) + 1), {})
            lookup.update(row)
        self.smgs = [dataclasses.replace(s, gains=tuple(lookup[u] for u in s.users)) for s in self.smgs]

    def _move_users(self) -> None:
        ch = self.scenario.channel
        for u, v in self.speeds.items():
            if v <= 0:
                continue
            d = self.distances[u] + self.directions[u] * v / 3.6 * self.res.slot_length
            if d < ch.min_distance or d > ch.max_distance:
                self.directions[u] *= -1.0
                d = min(max(d, ch.min_distance), ch.max_distance)
            self.distances[u] = d

    def _refresh_plan(self) -> None:
        self.dists: list[WatchDistribution | None] = [
            compute_distribution(self.twin_catalog, s.playhead) if self.catalog.contains(s.playhead) else None
            for s in self.smgs
        ]
        order = "watch" if self.scheme == "proposed" else "sequential"
        self.plan: BufferingPlan = build_plan(
            self.smgs, self.dists, self.res, self.catalog, self.avg_version, self.n_max, self.buffered, order
        )

    def decision_buffers(self) -> list[float]:
        """Buffer each SMG's rebuffering estimate is made against."""
        if self.scheme == "wdt":
            return [float(sum(s.buffers)) for s in self.smgs]
        return [s.buffers[0] for s in self.smgs]

    def observation(self) -> np.ndarray:
        obs = []
        buffers = self.decision_buffers()
        for g, s in enumerate(self.smgs):
            h_min = min(h for d in self.smgs[: g + 1] for h in d.gains)
            obs += [buffers[g] / (10.0 * self.res.slot_length), h_min / self.gain_scale, s.last_quality]
        return np.array(obs, dtype=float)

    def branch_mask(self) -> np.ndarray:
        mask = np.zeros((self.G, self.n_max), dtype=bool)
        for g, n in enumerate(self.plan.counts):
            mask[g, :n] = True
        return mask.ravel()

    def versions_from_actions(self, actions: Sequence[int]) -> tuple[tuple[int, ...], ...]:
        """Branch ``g * n_max + m`` picks the version of SMG ``g``'s m-th segment."""
        a = np.asarray(actions, dtype=int).reshape(self.G, self.n_max)
        return tuple(tuple(int(x) + 1 for x in a[g, :n]) for g, n in enumerate(self.plan.counts))

    def objective(self, versions: Sequence[Sequence[int]]) -> TransformedObjective:
        return TransformedObjective.from_context(versions, self.plan, self.smgs, self.res, self.catalog, self.decision_buffers())

    def decide(self, versions: Sequence[Sequence[int]]) -> SchedulingDecision:
        """Complete a version selection with SQP slot division."""
        result = slsqp_optimize(self.objective(versions))
        return SchedulingDecision(tuple(tuple(v) for v in versions), tuple(result.beta))

    def evaluate(self, decision: SchedulingDecision) -> QoeReport:
        return qoe.evaluate(decision, self.plan, self.smgs, self.res, self.catalog)

    # -- dynamics ----------------------------------------------------------
    def step(self, decision: SchedulingDecision):
        """Apply one slot; returns ``(report, reward, next_observation, terminal)``."""
        problems = decision.violations(self.L, self.plan.counts)
        for g, n in enumerate(self.plan.counts):
            if g < len(decision.betas) and n and decision.betas[g] <= 0:
                problems.append(f"smg {g}: zero slot share with {n} segments to deliver")
        if problems:
            raise InfeasibleDecision(problems)

        report = self.evaluate(decision)
        tau = self.catalog.segment_duration
        T_s = self.res.slot_length

        chosen = [v for row in decision.versions for v in row]
        if chosen:
            self.avg_version = int(math.floor(np.mean(chosen) + 0.5))
        per_seg = [qoe.segment_quality([self.catalog.cumulative_size(seg, v) for seg, v in zip(segs, decision.versions[g])], tau)
                   for g, segs in enumerate(self.plan.segments)]
        for g, segs in enumerate(self.plan.segments):
            for d in range(g + 1):
                self.buffered[d].update(segs)
        levels = advance([s.buffers for s in self.smgs], self.plan.counts, T_s, tau)

        swipes = sample_swipes(self.swipe_rng, [s.playhead for s in self.smgs], self.catalog)
        new_smgs = []
        for g, s in enumerate(self.smgs):
            last_q = float(per_seg[g][-1]) if len(per_seg[g]) else s.last_quality
            buf = levels[g]
            i, _ = s.playhead
            pos = self.positions[g]
            if i >= len(self.catalog):
                playhead = s.playhead
            elif swipes[g]:
                buf = apply_swipe(buf, 1)
                i, pos = i + 1, 0.0
            else:
                pos += T_s
                length = self.catalog.segment_count(i) * tau
                if pos >= length:
                    buf = video_transition(buf)
                    i, pos = i + 1, pos - length
                    if i < len(self.catalog):
                        pos = min(pos, self.catalog.segment_count(i) * tau - 1e-9)
            if i < len(self.catalog):
                playhead = (i, min(int(pos // tau), self.catalog.segment_count(i) - 1))
            else:
                playhead, pos = (len(self.catalog), 0), 0.0
            self.positions[g] = pos
            new_smgs.append(dataclasses.replace(s, buffers=buf, last_quality=last_q, playhead=playhead))
        self.smgs = new_smgs
        self.last_swipes = swipes

        self.t += 1
        self._move_users()
        self._refresh_channels()
        self._refresh_plan()
        terminal = self.t >= self.scenario.horizon
        return report, report.mg_total, self.observation(), terminal


def _index_trace(rows) -> dict[int, dict[str, float]]:
    out: dict[int, dict[str, float]] = {}
    for t, u, h in rows:
        out.setdefault(int(t), {})[str(u)] = float(h)
    return out


# -- policies ---------------------------------------------------------------
class Policy(Protocol):
    def act(self, env: MulticastEnv) -> SchedulingDecision: ...


class RandomPolicy:
    """Uniform versions per planned segment; slot division by SQP."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, env: MulticastEnv) -> SchedulingDecision:
        versions = [tuple(int(v) for v in self.rng.integers(1, env.L + 1, size=n)) for n in env.plan.counts]
        return env.decide(versions)


class FixedVersionPolicy:
    def __init__(self, version: int):
        self.version = version

    def act(self, env: MulticastEnv) -> SchedulingDecision:
        v = min(self.version, env.L)
        return env.decide([(v,) * n for n in env.plan.counts])


class HeuristicPolicy:
    """Mini-slot allocation with exhaustive version search per offer.

    The slot is cut into ``mini_slots`` equal parts. Each part is offered to
    every SMG in turn; for each offer the SMG's best versions are found by
    enumerating all combinations, and the part goes to the SMG whose
    weighted QoE gains most.
    """

    def __init__(self, mini_slots: int = 10):
        self.mini_slots = mini_slots

    def _table(self, env: MulticastEnv, g: int):
        """Every version combination of SMG ``g``: its work (Mb) and beta-free QoE part."""
        segs = env.plan.segments[g]
        s = env.smgs[g]
        cum = np.array([[env.catalog.cumulative_size(seg, l) for l in range(1, env.L + 1)] for seg in segs])
        combos = np.array(list(itertools.product(range(env.L), repeat=len(segs))), dtype=int)
        mb = cum[np.arange(len(segs)), combos]  # (C, n)
        q = 1.0 - 1.0 / (2.0 * mb / env.catalog.segment_duration + 1.0)
        prev = np.concatenate([np.full((len(q), 1), s.last_quality), q[:, :-1]], axis=1)
        V = np.abs(q - prev).mean(axis=1)
        return combos, mb.sum(axis=1), q.sum(axis=1) - s.lambda_variation * V

    def best_versions(self, env: MulticastEnv, g: int, beta: float, table=None):
        """Best ``(versions, weighted QoE)`` for SMG ``g`` at share ``beta``."""
        if not env.plan.segments[g]:
            return (), 0.0
        combos, work, base = table if table is not None else self._table(env, g)
        beta = max(beta, BETA_MIN)
        r_min = multicast_min_rate(env.smgs, g, env.res)
        tx = work * 1e6 / (beta * r_min) if r_min > 0 else np.full(len(work), np.inf)
        tc = env.res.computing_density * work / (beta * env.res.computing_capacity)
        R = np.maximum(np.maximum(tx, tc) - env.decision_buffers()[g], 0.0)
        U = qoe.weighting(env.plan)[g] * (base - env.smgs[g].lambda_rebuffer * R)
        k = int(np.argmax(U))
        return tuple(int(c) + 1 for c in combos[k]), float(U[k])

    def act(self, env: MulticastEnv) -> SchedulingDecision:
        G = env.G
        counts = [0] * G
        tables = [self._table(env, g) if env.plan.segments[g] else None for g in range(G)]
        cache: dict[tuple[int, int], tuple] = {}

        def best(g, k):
            if (g, k) not in cache:
                cache[(g, k)] = self.best_versions(env, g, k / self.mini_slots, tables[g])
            return cache[(g, k)]

        for _ in range(self.mini_slots):
            gains = [best(g, counts[g] + 1)[1] - best(g, counts[g])[1] for g in range(G)]
            counts[int(np.argmax(gains))] += 1
        betas = [k / self.mini_slots for k in counts]
        needy = [g for g in range(G) if counts[g] == 0 and env.plan.counts[g]]
        if needy:
            donor = int(np.argmax(betas))
            for g in needy:
                betas[g] = BETA_MIN
                betas[donor] -= BETA_MIN
        versions = [best(g, counts[g])[0] for g in range(G)]
        return SchedulingDecision(tuple(versions), tuple(betas))


def run_episode(env: MulticastEnv, policy: Policy, seed: int | None = None) -> list[QoeReport]:
    env.reset(seed)
    reports = []
    terminal = False
    while not terminal:
        report, _, _, terminal = env.step(policy.act(env))
        reports.append(report)
    return reports


def run_baseline(scenario: Scenario, which: str, engine: Policy | None = None, seed: int | None = None) -> list[QoeReport]:
    """Per-slot reports for ``"wdt"`` (needs the shared decision ``engine``) or ``"heuristic"``."""
    if which == "wdt":
        if engine is None:
            raise ValueError("the WDT baseline reuses the proposed decision engine; pass one")
        return run_episode(MulticastEnv(scenario, "wdt"), engine, seed)
    if which == "heuristic":
        return run_episode(MulticastEnv(scenario, "proposed"), HeuristicPolicy(), seed)
    raise ValueError(f"unknown baseline {which!r}")
