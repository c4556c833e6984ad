"""Fixed-capacity FIFO replay buffer with uniform sampling."""

from __future__ import annotations

import numpy as np

__all__ = ["ReplayBuffer", "Batch"]


class Batch:
    """One minibatch of transitions, column arrays."""

    __slots__ = ("states", "actions", "rewards", "next_states", "dones")

    def __init__(self, states, actions, rewards, next_states, dones):
        self.states = states
        self.actions = actions
        self.rewards = rewards
        self.next_states = next_states
        self.dones = dones

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Ring storage: oldest transition is overwritten first once full."""

    def __init__(
        self,
        capacity: int,
        state_dim: int,
        action_dim: int,
        dtype=np.float32,
        seed: int = 0,
    ):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.states = np.zeros((capacity, state_dim), dtype=self.dtype)
        self.actions = np.zeros((capacity, action_dim), dtype=self.dtype)
        self.rewards = np.zeros(capacity, dtype=self.dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype=self.dtype)
        self.dones = np.zeros(capacity, dtype=self.dtype)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def write_index(self) -> int:
        return self._next

    def add(self, state, action, reward, next_state, done) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self._size, batch_size)
        return self.gather(idx)

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )
