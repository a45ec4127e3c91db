"""Branching dueling Q-learning for per-segment version selection."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mcast_twin.bdqn.network import BranchingDuelingNet
from mcast_twin.bdqn.replay import PRIORITY_FLOOR, PrioritizedReplay

log = logging.getLogger(__name__)


def q_values(net: BranchingDuelingNet, state) -> np.ndarray:
    """Per-branch Q vectors ``(B, L)`` for one state."""
    return net.q_values(np.asarray(state, dtype=float)[None, :])[0]


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator, mask=None) -> np.ndarray:
    """Per-branch epsilon-greedy choice; ties go to the lowest index.

    Both the exploration coin and the random action are drawn for every
    branch so the generator advances the same way whatever ``epsilon`` is.
    Masked (padded) branches return 0.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1] ({epsilon})")
    q = np.atleast_2d(q)
    B, L = q.shape
    coin = rng.random(B)
    random = rng.integers(L, size=B)
    greedy = np.argmax(q, axis=1)
    a = np.where(coin < epsilon, random, greedy)
    if mask is not None:
        a = np.where(np.asarray(mask, dtype=bool), a, 0)
    return a.astype(np.int64)


def _masked_mean(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n = mask.sum(axis=1)
    return np.where(n > 0, (x * mask).sum(axis=1) / np.maximum(n, 1), 0.0)


def td_target(rewards, q_next_online, q_next_target, next_masks, gamma: float, terminals) -> np.ndarray:
    """Bootstrapped target shared by all branches of a transition.

    The online network picks each branch's action, the target network
    values it, and the branch values are averaged over active branches.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1) ({gamma})")
    rewards = np.asarray(rewards, dtype=float)
    best = np.argmax(q_next_online, axis=2)
    value = np.take_along_axis(q_next_target, best[..., None], axis=2)[..., 0]
    boot = _masked_mean(value, np.asarray(next_masks, dtype=bool))
    return rewards + gamma * np.where(np.asarray(terminals, dtype=bool), 0.0, boot)


def taken_q(q: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.take_along_axis(q, np.asarray(actions)[..., None], axis=2)[..., 0]


def loss(q: np.ndarray, actions, masks, targets) -> float:
    """Mean over the batch of the mean squared branch error."""
    err = taken_q(q, actions) - np.asarray(targets, dtype=float)[:, None]
    return float(_masked_mean(err**2, np.asarray(masks, dtype=bool)).mean())


def loss_and_grads(net: BranchingDuelingNet, states, actions, masks, targets):
    """Loss value and gradients with respect to every network parameter."""
    q, cache = net.forward(states)
    masks = np.asarray(masks, dtype=bool)
    actions = np.asarray(actions)
    err = taken_q(q, actions) - np.asarray(targets, dtype=float)[:, None]
    n_active = np.maximum(masks.sum(axis=1), 1)[:, None]
    value = float(_masked_mean(err**2, masks).mean())
    derr = np.where(masks, 2.0 * err / (n_active * len(q)), 0.0)
    dq = np.zeros_like(q)
    np.put_along_axis(dq, actions[..., None], derr[..., None], axis=2)
    return value, net.backward(cache, dq)


def priority(q: np.ndarray, actions, masks, targets) -> np.ndarray:
    """Summed absolute branch error per transition, floored."""
    err = np.abs(taken_q(q, actions) - np.asarray(targets, dtype=float)[:, None])
    return np.maximum((err * np.asarray(masks, dtype=bool)).sum(axis=1), PRIORITY_FLOOR)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def epsilon_after(k: int, start: float = 1.0, decay: float = 0.99, floor: float = 0.1) -> float:
    return max(floor, start * decay**k)


@dataclass
class TrainConfig:
    episodes: int = 500
    episode_length: int = 75
    memory: int = 5000
    batch_size: int = 64
    gamma: float = 0.9
    learning_rate: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.1
    target_sync: int = 200
    grad_clip: float = 10.0
    hidden: tuple[int, ...] = (512, 256, 256, 128)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class BdqnAgent:
    def __init__(self, state_dim: int, n_branches: int, n_actions: int, config: TrainConfig | None = None):
        self.config = config or TrainConfig()
        net_ss, act_ss = np.random.SeedSequence(self.config.seed).spawn(2)
        self.net = BranchingDuelingNet(state_dim, n_branches, n_actions, self.config.hidden, np.random.default_rng(net_ss))
        self.target = self.net.copy()
        self.rng = np.random.default_rng(act_ss)
        self.replay = PrioritizedReplay(self.config.memory, state_dim, n_branches)
        self.updates = 0

    @classmethod
    def from_net(cls, net: BranchingDuelingNet, config: TrainConfig | None = None) -> "BdqnAgent":
        agent = cls.__new__(cls)
        agent.config = config or TrainConfig()
        agent.net, agent.target = net, net.copy()
        agent.rng = np.random.default_rng(agent.config.seed)
        agent.replay = PrioritizedReplay(agent.config.memory, net.state_dim, net.n_branches)
        agent.updates = 0
        return agent

    def act(self, state, mask, epsilon: float = 0.0) -> np.ndarray:
        return select_action(q_values(self.net, state), epsilon, self.rng, mask)

    def targets(self, rewards, next_states, next_masks, terminals) -> np.ndarray:
        return td_target(
            rewards, self.net.q_values(next_states), self.target.q_values(next_states), next_masks, self.config.gamma, terminals
        )

    def remember(self, state, action, mask, reward, next_state, next_mask, terminal) -> None:
        y = self.targets([reward], next_state[None, :], next_mask[None, :], [terminal])
        p = priority(self.net.q_values(state[None, :]), action[None, :], mask[None, :], y)[0]
        if not (np.isfinite(reward) and np.isfinite(p)):
            raise FloatingPointError(f"non-finite transition: reward {reward}, priority {p}")
        self.replay.add(state, action, mask, reward, next_state, next_mask, terminal, p)

    def learn(self) -> float | None:
        """One prioritized minibatch SGD step; ``None`` until the buffer holds a batch."""
        cfg = self.config
        if len(self.replay) < cfg.batch_size:
            return None
        idx = self.replay.sample(cfg.batch_size, self.rng)
        s, a, m, r, s2, m2, term = self.replay.batch(idx)
        y = self.targets(r, s2, m2, term)
        value, grads = loss_and_grads(self.net, s, a, m, y)
        if not np.isfinite(value):
            raise FloatingPointError(
                f"non-finite loss {value} at update {self.updates}: rewards in [{r.min()}, {r.max()}], targets in [{y.min()}, {y.max()}]"
            )
        clip_by_global_norm(grads, cfg.grad_clip)
        for k, g in grads.items():
            self.net.params[k] -= cfg.learning_rate * g
        self.replay.update_priorities(idx, priority(self.net.q_values(s), a, m, y))
        self.updates += 1
        if self.updates % cfg.target_sync == 0:
            self.target.load_params(self.net)
        return value


class BdqnPolicy:
    """Greedy version selection from a trained network, slot division by SQP."""

    def __init__(self, net: BranchingDuelingNet):
        self.net = net

    def act(self, env):
        q = q_values(self.net, env.observation())
        a = select_action(q, 0.0, np.random.default_rng(0), env.branch_mask())
        return env.decide(env.versions_from_actions(a))


@dataclass
class CurveRow:
    episode: int
    mean_reward: float
    epsilon: float
    loss: float


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def train(env, config: TrainConfig | None = None, progress: Callable[[CurveRow], None] | None = None):
    """Train on ``env``; returns the agent and one curve row per episode."""
    cfg = config or TrainConfig()
    agent = BdqnAgent(env.state_dim, env.n_branches, env.L, cfg)
    epsilon = cfg.epsilon_start
    curve: list[CurveRow] = []
    for episode in range(cfg.episodes):
        state = env.reset(episode_seed(cfg.seed, episode))
        rewards, losses = [], []
        for t in range(cfg.episode_length):
            mask = env.branch_mask()
            action = agent.act(state, mask, epsilon)
            decision = env.decide(env.versions_from_actions(action))
            _, reward, next_state, terminal = env.step(decision)
            terminal = terminal or t == cfg.episode_length - 1
            agent.remember(state, action, mask, reward, next_state, env.branch_mask(), terminal)
            value = agent.learn()
            if value is not None:
                losses.append(value)
            rewards.append(reward)
            state = next_state
            if terminal:
                break
        row = CurveRow(episode, float(np.mean(rewards)), epsilon, float(np.mean(losses)) if losses else float("nan"))
        curve.append(row)
        log.debug("episode %d reward %.4f eps %.3f loss %.4g", episode, row.mean_reward, epsilon, row.loss)
        if progress:
            progress(row)
        epsilon = max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)
    return agent, curve
