"""Proportional prioritized replay with FIFO eviction."""

from __future__ import annotations

import numpy as np

PRIORITY_FLOOR = 1e-6


class PrioritizedReplay:
    """Fixed-capacity transition store sampled in proportion to priority.

    No importance-sampling correction is applied.
    """

    def __init__(self, capacity: int, state_dim: int, n_branches: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, n_branches), dtype=np.int64)
        self.masks = np.zeros((capacity, n_branches), dtype=bool)
        self.next_masks = np.zeros((capacity, n_branches), dtype=bool)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.priorities = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, mask, reward, next_state, next_mask, terminal, priority: float) -> int:
        k = self._next
        self.states[k] = state
        self.actions[k] = action
        self.masks[k] = mask
        self.rewards[k] = reward
        self.next_states[k] = next_state
        self.next_masks[k] = next_mask
        self.terminals[k] = terminal
        self.priorities[k] = max(float(priority), PRIORITY_FLOOR)
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return k

    def probabilities(self) -> np.ndarray:
        p = self.priorities[: self.size]
        return p / p.sum()

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.choice(self.size, size=batch_size, replace=True, p=self.probabilities())

    def update_priorities(self, idx, priorities) -> None:
        self.priorities[np.asarray(idx)] = np.maximum(np.asarray(priorities, dtype=float), PRIORITY_FLOOR)

    def batch(self, idx):
        return (
            self.states[idx],
            self.actions[idx],
            self.masks[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.next_masks[idx],
            self.terminals[idx],
        )
