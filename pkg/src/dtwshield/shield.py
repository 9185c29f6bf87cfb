"""Per-step episode filtering around an arbitrary agent and environment."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import ConfigError, DemoSet, EpisodeRecord, ReplayMemory, Trajectory, TrajectoryMode, Transition
from .dynamics import DynamicsModel
from .envs import Env
from .filters import FilterDecision, StrategyScorer, StrategySpec

METRIC_COLUMNS = ("episode", "acc_reward", "crashed", "filtered", "steps", "shield_time_ms", "total_time_ms")


@dataclass
class ShieldConfig:
    strategy: Optional[StrategySpec]
    mode: TrajectoryMode
    r_task: float
    enabled: bool = True
    normalize_features: bool = False
    normalize_dtw: bool = False


class Shield:
    """Keeps the running trajectory and blocks steps that look like unsafe demos."""

    def __init__(self, cfg: ShieldConfig, demos: Optional[DemoSet] = None, env: Optional[Env] = None):
        self.cfg = cfg
        self.traj = Trajectory(cfg.mode)
        self.scorer = None
        self.last_decision: Optional[FilterDecision] = None
        self.time_spent = 0.0
        if env is not None and cfg.r_task > env.spec.min_reward:
            raise ConfigError(f"penalty {cfg.r_task} exceeds the minimum reward {env.spec.min_reward} of {env.spec.id}")
        if cfg.enabled:
            if demos is None or cfg.strategy is None:
                raise ConfigError("an enabled shield needs demonstrations and a strategy")
            if demos.mode is not cfg.mode:
                raise ConfigError("demo set and shield use different trajectory modes")
            self.scorer = StrategyScorer(cfg.strategy, demos, cfg.normalize_features, cfg.normalize_dtw)

    def reset(self) -> None:
        self.traj.clear()
        self.last_decision = None
        self.time_spent = 0.0
        if self.scorer is not None:
            self.scorer.reset()

    def check(self, state, action) -> FilterDecision:
        """Extend the trajectory with this step and decide whether it may run."""
        t0 = time.perf_counter()
        vec = self.traj.extend(state, action)
        self.last_decision = self.scorer.push(vec)
        self.time_spent += time.perf_counter() - t0
        return self.last_decision

    def step(self, env: Env, dynamics: Optional[DynamicsModel], state, action) -> Transition:
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if self.cfg.enabled and self.check(state, action).filtered:
            # the environment is never stepped on a filtered action
            t0 = time.perf_counter()
            next_state = dynamics.predict_next(state, action) if dynamics is not None else state.copy()
            self.time_spent += time.perf_counter() - t0
            return Transition(state, action, self.cfg.r_task, next_state, done=True, crashed=False, filtered=True)
        res = env.step(action)
        return Transition(state, action, res.reward, res.next_state, res.done, res.crashed, False)


@dataclass
class EpisodeStats:
    acc_reward: float
    crashed: bool
    filtered: bool
    steps: int
    shield_time: float
    total_time: float

    def row(self, episode: int) -> dict:
        return {
            "episode": episode,
            "acc_reward": self.acc_reward,
            "crashed": int(self.crashed),
            "filtered": int(self.filtered),
            "steps": self.steps,
            "shield_time_ms": self.shield_time * 1e3,
            "total_time_ms": self.total_time * 1e3,
        }


@dataclass
class ShieldStats:
    episodes: int = 0
    crashes: int = 0
    filtered_episodes: int = 0
    env_steps: int = 0
    wall_time_shield: float = 0.0
    wall_time_total: float = 0.0
    window: int = 100
    _recent: deque = field(default_factory=deque, repr=False)

    def update(self, ep: EpisodeStats) -> None:
        self.episodes += 1
        self.crashes += int(ep.crashed)
        self.filtered_episodes += int(ep.filtered)
        self.env_steps += ep.steps - int(ep.filtered)
        self.wall_time_shield += ep.shield_time
        self.wall_time_total += ep.total_time
        self._recent.append(ep.crashed)
        if len(self._recent) > self.window:
            self._recent.popleft()

    @property
    def crash_rate(self) -> float:
        return self.crashes / self.episodes if self.episodes else 0.0

    @property
    def recent_crash_rate(self) -> float:
        return sum(self._recent) / len(self._recent) if self._recent else 0.0


def run_episode(
    shield: Shield,
    env: Env,
    agent,
    seed: int,
    memory: Optional[ReplayMemory] = None,
    dynamics: Optional[DynamicsModel] = None,
    learn: bool = True,
    dynamics_warmup: int = 1000,
    explore: bool = True,
) -> Tuple[EpisodeRecord, EpisodeStats]:
    """Roll out one episode, storing every transition and optimizing once per step."""
    t_start = time.perf_counter()
    state = env.reset(seed)
    shield.reset()
    states, actions, rewards = [state], [], []
    tr = None
    while tr is None or not tr.done:
        action = agent.act(state, explore=explore)
        tr = shield.step(env, dynamics, state, action)
        if memory is not None:
            memory.add(tr)
            if learn:
                agent.optimize(memory)
                if dynamics is not None and memory.n_real >= dynamics_warmup:
                    dynamics.train_from_replay(memory)
        states.append(tr.next_state)
        actions.append(tr.action)
        rewards.append(tr.reward)
        state = tr.next_state
    rec = EpisodeRecord(np.array(states), np.array(actions), np.array(rewards), tr.crashed, env.spec.id, seed)
    stats = EpisodeStats(
        acc_reward=float(np.sum(rewards)),
        crashed=tr.crashed,
        filtered=tr.filtered,
        steps=len(actions),
        shield_time=shield.time_spent,
        total_time=time.perf_counter() - t_start,
    )
    return rec, stats
