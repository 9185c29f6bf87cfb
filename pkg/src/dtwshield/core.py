"""Trajectories, demonstrations, transitions and the JSONL episode format."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

PathLike = Union[str, Path]

EPISODE_FIELDS = ("env_id", "seed", "states", "actions", "rewards", "crashed")


class ConfigError(ValueError):
    """Inconsistent dimensions or an invalid run configuration."""


class DatasetError(ValueError):
    """A corpus file that does not satisfy the episode schema."""


class TrajectoryMode(enum.Enum):
    STATE = "state"
    STATE_ACTION = "state-action"

    @classmethod
    def parse(cls, value: Union[str, "TrajectoryMode"]) -> "TrajectoryMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown trajectory mode {value!r}; expected 'state' or 'state-action'") from None


def _as_matrix(rows, name: str, width: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, width or 0)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a list of equal-length vectors")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite values")
    return arr


def encode_step(state, action, mode: TrajectoryMode) -> np.ndarray:
    """Feature vector appended to the running trajectory for one step."""
    state = np.asarray(state, dtype=np.float64).ravel()
    if mode is TrajectoryMode.STATE:
        return state.copy()
    action = np.asarray(action, dtype=np.float64).ravel()
    return np.concatenate([state, action])


class Trajectory:
    """Growable sequence of per-step feature vectors under one mode.

    ``steps`` is an (n, dim) float array view of the appended vectors.
    """

    def __init__(self, mode: TrajectoryMode, steps=None):
        self.mode = mode
        self._buf = np.zeros((0, 0))
        self._n = 0
        if steps is not None:
            for row in np.atleast_2d(np.asarray(steps, dtype=np.float64)):
                self.append(row)

    @property
    def dim(self) -> Optional[int]:
        return self._buf.shape[1] if self._n else None

    @property
    def steps(self) -> np.ndarray:
        return self._buf[: self._n]

    def __len__(self) -> int:
        return self._n

    def append(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if self._n == 0:
            self._buf = np.empty((16, vec.size))
        elif vec.size != self._buf.shape[1]:
            raise ConfigError(f"step dimension {vec.size} does not match trajectory dimension {self._buf.shape[1]}")
        if self._n == self._buf.shape[0]:
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
        self._buf[self._n] = vec
        self._n += 1

    def extend(self, state, action) -> np.ndarray:
        vec = encode_step(state, action, self.mode)
        self.append(vec)
        return vec

    def clear(self) -> None:
        self._n = 0


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    crashed: bool
    env_id: str = ""
    seed: int = 0

    def __post_init__(self):
        states = _as_matrix(self.states, "states")
        actions = _as_matrix(self.actions, "actions")
        rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        if len(states) == 0:
            raise ConfigError("episode has no states")
        if not (len(actions) == len(rewards) == len(states) - 1):
            raise ConfigError(
                f"episode counts violate |actions| = |rewards| = |states| - 1 "
                f"({len(actions)}, {len(rewards)}, {len(states)})"
            )
        if not np.all(np.isfinite(rewards)):
            raise ConfigError("rewards contain non-finite values")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "crashed", bool(self.crashed))
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    def to_json_line(self) -> str:
        """Canonical single-line serialization (fixed key order, no whitespace)."""
        obj = {
            "env_id": self.env_id,
            "seed": self.seed,
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "crashed": self.crashed,
        }
        return json.dumps(obj, separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeRecord":
        if not isinstance(obj, dict) or set(obj) != set(EPISODE_FIELDS):
            got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
            raise DatasetError(f"expected fields {list(EPISODE_FIELDS)}, got {got}")
        if not isinstance(obj["crashed"], bool) or not isinstance(obj["env_id"], str):
            raise DatasetError("'crashed' must be a bool and 'env_id' a string")
        return cls(
            states=obj["states"],
            actions=obj["actions"],
            rewards=obj["rewards"],
            crashed=obj["crashed"],
            env_id=obj["env_id"],
            seed=obj["seed"],
        )

    def same_as(self, other: "EpisodeRecord") -> bool:
        return self.to_json_line() == other.to_json_line()


def episode_to_trajectory(rec: EpisodeRecord, mode: TrajectoryMode) -> np.ndarray:
    """Feature sequence of a recorded episode.

    In state-action mode the terminal state has no action and is dropped.
    """
    if mode is TrajectoryMode.STATE:
        return rec.states.copy()
    if len(rec.actions) == 0:
        raise ConfigError("episode has no actions, its state-action trajectory is empty")
    return np.hstack([rec.states[:-1], rec.actions])


def save_episodes(path: PathLike, records: Iterable[EpisodeRecord]) -> None:
    lines = [rec.to_json_line() for rec in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_episodes(path: PathLike) -> List[EpisodeRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such corpus file: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(EpisodeRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    _check_dims(records, str(path))
    return records


def _check_dims(records: Sequence[EpisodeRecord], where: str) -> None:
    state_dims = {rec.states.shape[1] for rec in records}
    action_dims = {rec.actions.shape[1] for rec in records if len(rec.actions)}
    if len(state_dims) > 1 or len(action_dims) > 1:
        raise DatasetError(f"{where}: mixed dimensions (states {sorted(state_dims)}, actions {sorted(action_dims)})")


class DemoSet:
    """Safe and unsafe demonstrations compared under a single trajectory mode."""

    def __init__(self, safe: Sequence[EpisodeRecord], unsafe: Sequence[EpisodeRecord], mode: TrajectoryMode):
        self.safe = list(safe)
        self.unsafe = list(unsafe)
        self.mode = mode
        if not self.safe or not self.unsafe:
            raise DatasetError(f"demo set needs both groups, got {len(self.safe)} safe and {len(self.unsafe)} unsafe")
        if any(rec.crashed for rec in self.safe):
            raise DatasetError("a safe demonstration is marked crashed")
        if not all(rec.crashed for rec in self.unsafe):
            raise DatasetError("an unsafe demonstration is not marked crashed")
        _check_dims(self.safe + self.unsafe, "demo set")

    @classmethod
    def from_records(cls, records: Iterable[EpisodeRecord], mode: TrajectoryMode) -> "DemoSet":
        records = list(records)
        return cls([r for r in records if not r.crashed], [r for r in records if r.crashed], mode)

    def trajectories(self, normalizer: Optional["FeatureScaler"] = None):
        """(safe, unsafe) lists of feature arrays, optionally z-scored."""
        safe = [episode_to_trajectory(r, self.mode) for r in self.safe]
        unsafe = [episode_to_trajectory(r, self.mode) for r in self.unsafe]
        if normalizer is not None:
            safe = [normalizer(x) for x in safe]
            unsafe = [normalizer(x) for x in unsafe]
        return safe, unsafe

    def scaler(self) -> "FeatureScaler":
        safe, unsafe = self.trajectories()
        return FeatureScaler.fit(np.vstack(safe + unsafe))

    def __len__(self) -> int:
        return len(self.safe) + len(self.unsafe)


def load_demo_set(path: PathLike, mode: TrajectoryMode) -> DemoSet:
    return DemoSet.from_records(load_episodes(path), TrajectoryMode.parse(mode))


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension z-score with statistics taken from the demonstrations."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "FeatureScaler":
        std = data.std(axis=0)
        std[std < 1e-12] = 1.0
        return cls(data.mean(axis=0), std)

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    crashed: bool = False
    filtered: bool = False

    def __post_init__(self):
        if self.filtered and (not self.done or self.crashed):
            raise ValueError("a filtered transition must be done and not crashed")
        if self.crashed and not self.done:
            raise ValueError("a crashed transition must be done")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


class ReplayMemory:
    """FIFO ring of transitions with uniform minibatch sampling."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = int(capacity)
        self._size = 0
        self._next = 0
        self._alloc = 0
        self._arrays = None
        self._n_real = 0

    def __len__(self) -> int:
        return self._size

    @property
    def n_real(self) -> int:
        """Number of stored transitions that came from the real environment."""
        return self._n_real

    def _grow(self, state_dim: int, action_dim: int) -> None:
        new = min(self.capacity, max(1024, 2 * self._alloc))
        fresh = {
            "s": np.zeros((new, state_dim)),
            "a": np.zeros((new, action_dim)),
            "r": np.zeros(new),
            "s2": np.zeros((new, state_dim)),
            "done": np.zeros(new, dtype=bool),
            "crashed": np.zeros(new, dtype=bool),
            "filtered": np.zeros(new, dtype=bool),
        }
        if self._arrays is not None:
            for key, arr in self._arrays.items():
                fresh[key][: self._alloc] = arr
        self._arrays = fresh
        self._alloc = new

    def add(self, tr: Transition) -> None:
        state = np.asarray(tr.state, dtype=np.float64).ravel()
        action = np.asarray(tr.action, dtype=np.float64).ravel()
        if self._arrays is None:
            self._grow(state.size, action.size)
        elif state.size != self._arrays["s"].shape[1] or action.size != self._arrays["a"].shape[1]:
            raise ConfigError("transition dimensions do not match replay memory")
        if self._next == self._alloc and self._alloc < self.capacity:
            self._grow(state.size, action.size)
        i = self._next
        arr = self._arrays
        if self._size == self.capacity and not arr["filtered"][i]:
            self._n_real -= 1
        arr["s"][i] = state
        arr["a"][i] = action
        arr["r"][i] = tr.reward
        arr["s2"][i] = np.asarray(tr.next_state, dtype=np.float64).ravel()
        arr["done"][i] = tr.done
        arr["crashed"][i] = tr.crashed
        arr["filtered"][i] = tr.filtered
        if not tr.filtered:
            self._n_real += 1
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _batch(self, idx: np.ndarray) -> Batch:
        arr = self._arrays
        return Batch(arr["s"][idx], arr["a"][idx], arr["r"][idx], arr["s2"][idx], arr["done"][idx].astype(np.float64))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        return self._batch(rng.integers(0, self._size, size=batch_size))

    def sample_real(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform minibatch over unfiltered transitions only."""
        pool = np.flatnonzero(~self._arrays["filtered"][: self._size]) if self._arrays is not None else []
        if len(pool) == 0:
            raise ValueError("no real transitions stored")
        return self._batch(pool[rng.integers(0, len(pool), size=batch_size)])

    def transitions(self) -> List[Transition]:
        """Stored transitions, oldest first."""
        if self._arrays is None:
            return []
        start = self._next if self._size == self.capacity else 0
        arr = self._arrays
        out = []
        for k in range(self._size):
            i = (start + k) % self.capacity
            out.append(
                Transition(
                    arr["s"][i].copy(), arr["a"][i].copy(), float(arr["r"][i]), arr["s2"][i].copy(),
                    bool(arr["done"][i]), bool(arr["crashed"][i]), bool(arr["filtered"][i]),
                )
            )
        return out


def is_finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def mean_std(values: Sequence[float]):
    vals = [float(v) for v in values]
    if not vals:
        return math.nan, math.nan
    return float(np.mean(vals)), float(np.std(vals))
