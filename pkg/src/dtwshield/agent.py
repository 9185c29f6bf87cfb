"""Policies that act in an environment and learn from replay memory."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .core import Batch, ConfigError, ReplayMemory
from .envs import CliffWorld2D, PoleBalance, env_spec
from .neural import Adam, Mlp, train_step

AGENT_KINDS = ("random", "scripted", "actor-critic")


@dataclass
class AgentConfig:
    kind: str = "actor-critic"
    gamma: float = 0.99
    noise: float = 0.1
    twin: bool = True
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    hidden: int = 256
    policy_delay: int = 2
    warmup: int = 1000  # real transitions collected before the first update

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}; choose from {AGENT_KINDS}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.noise < 0:
            raise ConfigError("exploration noise must be non-negative")


class RandomAgent:
    def __init__(self, action_dim: int, seed: int = 0):
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def act(self, state, explore: bool = True) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.action_dim)

    def optimize(self, memory: ReplayMemory) -> Optional[Dict[str, float]]:
        return None


class ScriptedAgent:
    """Hand-written controllers; safe most of the time but not always."""

    def __init__(self, env_id: str, seed: int = 0, noise: float = 0.0):
        env_spec(env_id)
        self.env_id = env_id
        self.noise = noise
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def _cliff2d(self, s):
        pos, vel = s[:2], s[2:]
        # detour over the top of the hazard, then home in on the goal
        target = np.array([0.5, 0.8]) if pos[0] < 0.5 else CliffWorld2D.goal
        return 2.0 * (target - pos) - 2.0 * vel

    def _polebalance(self, s):
        x, x_dot, theta, theta_dot = s
        force = 2.0 * x + 3.0 * x_dot + 30.0 * theta + 6.0 * theta_dot
        return np.array([force / PoleBalance.force_scale])

    def act(self, state, explore: bool = True) -> np.ndarray:
        s = np.asarray(state, dtype=np.float64)
        a = self._cliff2d(s) if self.env_id == "cliff2d" else self._polebalance(s)
        if explore and self.noise > 0:
            a = a + self.rng.normal(0.0, self.noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def optimize(self, memory: ReplayMemory) -> Optional[Dict[str, float]]:
        return None


class ActorCritic:
    """Deterministic actor with twin critics and delayed, soft-updated targets."""

    def __init__(self, state_dim: int, action_dim: int, cfg: Optional[AgentConfig] = None, seed: int = 0):
        self.cfg = cfg or AgentConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)
        h = self.cfg.hidden
        seeds = np.random.SeedSequence(seed).generate_state(3)
        self.actor = Mlp.init([state_dim, h, h, action_dim], int(seeds[0]), output="tanh")
        n_critics = 2 if self.cfg.twin else 1
        self.critics = [Mlp.init([state_dim + action_dim, h, h, 1], int(seeds[1 + i])) for i in range(n_critics)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_optim = Adam(self.actor.params, lr=self.cfg.lr)
        self.critic_optims = [Adam(c.params, lr=self.cfg.lr) for c in self.critics]
        self.updates = 0

    def act(self, state, explore: bool = True) -> np.ndarray:
        a = self.actor(np.asarray(state, dtype=np.float64))
        if explore and self.cfg.noise > 0:
            a = a + self.rng.normal(0.0, self.cfg.noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def q_values(self, states, actions) -> np.ndarray:
        x = np.hstack([np.atleast_2d(states), np.atleast_2d(actions)])
        return np.min([c(x)[:, 0] for c in self.critics], axis=0)

    def critic_targets_for(self, batch: Batch) -> np.ndarray:
        """r + gamma * (1 - done) * min_i Q'_i(s', pi'(s'))."""
        next_a = self.actor_target(batch.next_states)
        x = np.hstack([batch.next_states, next_a])
        next_q = np.min([c(x)[:, 0] for c in self.critic_targets], axis=0)
        return batch.rewards + self.cfg.gamma * (1.0 - batch.dones) * next_q

    def update(self, batch: Batch) -> Dict[str, float]:
        target = self.critic_targets_for(batch)[:, None]
        x = np.hstack([batch.states, batch.actions])
        losses = {}
        for i, (critic, optim) in enumerate(zip(self.critics, self.critic_optims)):
            losses[f"critic{i}"] = train_step(critic, optim, x, target)
        self.updates += 1
        if self.updates % self.cfg.policy_delay == 0:
            a, actor_cache = self.actor.forward_cache(batch.states)
            q, critic_cache = self.critics[0].forward_cache(np.hstack([batch.states, a]))
            _, dx = self.critics[0].backward(critic_cache, np.full_like(q, -1.0 / len(q)))
            grads, _ = self.actor.backward(actor_cache, dx[:, self.state_dim:])
            self.actor_optim.step(self.actor.params, grads)
            losses["actor"] = float(-q.mean())
            self.actor_target.soft_update(self.actor, self.cfg.tau)
            for tgt, src in zip(self.critic_targets, self.critics):
                tgt.soft_update(src, self.cfg.tau)
        return losses

    def optimize(self, memory: ReplayMemory) -> Optional[Dict[str, float]]:
        if len(memory) < max(self.cfg.batch_size, self.cfg.warmup):
            return None
        return self.update(memory.sample(self.cfg.batch_size, self.rng))


def make_agent(kind: str, env_id: str, seed: int = 0, cfg: Optional[AgentConfig] = None):
    spec = env_spec(env_id)
    if kind == "random":
        return RandomAgent(spec.action_dim, seed)
    if kind == "scripted":
        return ScriptedAgent(env_id, seed, noise=cfg.noise if cfg else 0.0)
    if kind == "actor-critic":
        cfg = cfg or AgentConfig()
        return ActorCritic(spec.state_dim, spec.action_dim, cfg, seed)
    raise ConfigError(f"unknown agent kind {kind!r}; choose from {AGENT_KINDS}")
