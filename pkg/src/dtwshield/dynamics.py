"""Learned one-step dynamics used to fabricate successors of filtered steps."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import ConfigError, ReplayMemory, is_finite
from .neural import Adam, Mlp, mse_grad, train_step


class DynamicsModel:
    """MLP over (state, action) that predicts the state change.

    Only real environment transitions supervise the model; filtered steps
    carry a next state that the model itself produced.
    """

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 256, seed: int = 0,
                 lr: float = 3e-4, batch_size: int = 256):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.batch_size = batch_size
        self.net = Mlp.init([state_dim + action_dim, hidden, hidden, state_dim], seed)
        self.optim = Adam(self.net.params, lr=lr)
        self.rng = np.random.default_rng(seed)

    def _inputs(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ConfigError(
                f"expected state/action dims ({self.state_dim}, {self.action_dim}), "
                f"got ({states.shape[1]}, {actions.shape[1]})"
            )
        return np.hstack([states, actions])

    def predict_next(self, state, action) -> np.ndarray:
        s = np.asarray(state, dtype=np.float64)
        out = s + self.net(self._inputs(s, action))[0].reshape(s.shape)
        if not is_finite(out):
            raise FloatingPointError("dynamics model produced a non-finite state")
        return out

    def loss(self, states, actions, next_states) -> float:
        """Mean squared one-step prediction error (no update)."""
        x = self._inputs(states, actions)
        return mse_grad(self.net, x, np.atleast_2d(next_states) - np.atleast_2d(states))[0]

    def fit_batch(self, states, actions, next_states) -> float:
        x = self._inputs(states, actions)
        return train_step(self.net, self.optim, x, np.atleast_2d(next_states) - np.atleast_2d(states))

    def train_from_replay(self, memory: ReplayMemory) -> Optional[float]:
        """One update on real transitions; None when there are too few to sample."""
        if memory.n_real < self.batch_size:
            return None
        batch = memory.sample_real(self.batch_size, self.rng)
        return self.fit_batch(batch.states, batch.actions, batch.next_states)
