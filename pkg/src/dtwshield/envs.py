"""Deterministic toy continuous-control tasks with real unsafe terminal states.

``cliff2d``
    Damped point mass in the unit square that must reach a goal on the far
    side of a circular hazard. Leaving the square or touching the hazard
    crashes the episode.
``polebalance``
    Cart-pole with a continuous force, integrated with explicit Euler.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    id: str
    state_dim: int
    action_dim: int
    horizon: int
    min_reward: float  # shield penalty; never above any reward the env emits


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    crashed: bool


class Env:
    spec: EnvSpec

    def __init__(self):
        self._state = None
        self._t = 0
        self._done = True

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    def set_state(self, state) -> None:
        """Place the env in an arbitrary state and start a fresh episode there."""
        self._state = np.asarray(state, dtype=np.float64).copy()
        self._t = 0
        self._done = False

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.set_state(self._initial_state(rng))
        return self.state

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeOver("step() called on a finished episode; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim), -1.0, 1.0)
        nxt, reward, crashed, success = self._dynamics(self._state, a)
        self._t += 1
        done = crashed or success or self._t >= self.spec.horizon
        self._state = nxt
        self._done = done
        return StepResult(nxt.copy(), float(reward), bool(done), bool(crashed))

    def _initial_state(self, rng):
        raise NotImplementedError

    def _dynamics(self, s, a):
        raise NotImplementedError


class CliffWorld2D(Env):
    spec = EnvSpec("cliff2d", state_dim=4, action_dim=2, horizon=200, min_reward=-math.sqrt(2.0))
    start = np.array([0.1, 0.5])
    goal = np.array([0.9, 0.5])
    hazard_center = np.array([0.5, 0.5])
    hazard_radius = 0.15
    goal_radius = 0.05
    start_noise = 0.02

    def _initial_state(self, rng):
        pos = self.start + rng.uniform(-self.start_noise, self.start_noise, size=2)
        return np.concatenate([pos, np.zeros(2)])

    def _dynamics(self, s, a):
        vel = np.clip(0.9 * s[2:] + 0.1 * a, -1.0, 1.0)
        pos = s[:2] + 0.05 * vel
        dist_goal = float(np.linalg.norm(pos - self.goal))
        in_hazard = float(np.linalg.norm(pos - self.hazard_center)) <= self.hazard_radius
        out_of_box = bool(np.any(pos < 0.0) or np.any(pos > 1.0))
        crashed = in_hazard or out_of_box
        success = (not crashed) and dist_goal < self.goal_radius
        return np.concatenate([pos, vel]), -dist_goal, crashed, success


class PoleBalance(Env):
    # reward floor is 0; the shield penalty is set to -1 so that it actually discourages
    spec = EnvSpec("polebalance", state_dim=4, action_dim=1, horizon=500, min_reward=-1.0)
    gravity = 9.8
    cart_mass = 1.0
    pole_mass = 0.1
    half_length = 0.5
    force_scale = 10.0
    dt = 0.02
    theta_limit = 0.2095
    x_limit = 2.4
    start_noise = 0.05

    def _initial_state(self, rng):
        return rng.uniform(-self.start_noise, self.start_noise, size=4)

    def _dynamics(self, s, a):
        x, x_dot, theta, theta_dot = s
        force = self.force_scale * float(a[0])
        total_mass = self.cart_mass + self.pole_mass
        pml = self.pole_mass * self.half_length
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + pml * theta_dot * theta_dot * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass)
        )
        x_acc = temp - pml * theta_acc * cos / total_mass
        x = x + self.dt * x_dot
        x_dot = x_dot + self.dt * x_acc
        theta = theta + self.dt * theta_dot
        theta_dot = theta_dot + self.dt * theta_acc
        crashed = abs(theta) > self.theta_limit or abs(x) > self.x_limit
        return np.array([x, x_dot, theta, theta_dot]), (0.0 if crashed else 1.0), crashed, False


ENVS = {cls.spec.id: cls for cls in (CliffWorld2D, PoleBalance)}


def make_env(env_id: str) -> Env:
    try:
        return ENVS[env_id]()
    except KeyError:
        raise ConfigError(f"unknown env id {env_id!r}; choose from {sorted(ENVS)}") from None


def env_spec(env_id: str) -> EnvSpec:
    try:
        return ENVS[env_id].spec
    except KeyError:
        raise ConfigError(f"unknown env id {env_id!r}; choose from {sorted(ENVS)}") from None


def min_reward(env_id: str) -> float:
    """Penalty reward assigned to filtered transitions for this task."""
    return env_spec(env_id).min_reward
