"""Episode collection, training sessions and metric summaries."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binomtest

from .agent import AgentConfig, make_agent
from .core import ConfigError, DemoSet, EpisodeRecord, ReplayMemory, TrajectoryMode, mean_std
from .dynamics import DynamicsModel
from .envs import make_env
from .shield import METRIC_COLUMNS, EpisodeStats, Shield, ShieldConfig, ShieldStats, run_episode

log = logging.getLogger(__name__)


def episode_seed(seed: int, episode: int) -> int:
    return seed * 100_003 + episode


@dataclass
class SessionResult:
    records: List[EpisodeRecord]
    episodes: List[EpisodeStats]
    stats: ShieldStats
    wall_time: float
    agent: object = None
    dynamics: Optional[DynamicsModel] = None

    @property
    def crash_rate(self) -> float:
        return self.stats.crash_rate

    @property
    def steps(self) -> int:
        """Loop iterations, filtered steps included."""
        return sum(e.steps for e in self.episodes)


def run_session(
    env_id: str,
    agent,
    episodes: int,
    seed: int,
    shield: Optional[Shield] = None,
    memory: Optional[ReplayMemory] = None,
    dynamics: Optional[DynamicsModel] = None,
    learn: bool = True,
    dynamics_warmup: int = 1000,
    keep_records: bool = True,
    stop: Optional[Callable[[List[EpisodeRecord]], bool]] = None,
    explore: bool = True,
) -> SessionResult:
    """Run consecutive episodes. Non-learning agents are reseeded per episode so
    that shielded and unshielded sessions see paired randomness."""
    env = make_env(env_id)
    if shield is None:
        shield = Shield(ShieldConfig(None, TrajectoryMode.STATE, env.spec.min_reward, enabled=False))
    stats = ShieldStats()
    records, per_episode = [], []
    t0 = time.perf_counter()
    for ep in range(episodes):
        s = episode_seed(seed, ep)
        if hasattr(agent, "reseed"):
            agent.reseed(s)
        rec, ep_stats = run_episode(shield, env, agent, s, memory, dynamics, learn, dynamics_warmup, explore)
        stats.update(ep_stats)
        per_episode.append(ep_stats)
        if keep_records:
            records.append(rec)
        if stop is not None and stop(records):
            break
    return SessionResult(records, per_episode, stats, time.perf_counter() - t0, agent, dynamics)


def collect_demos(
    env_id: str,
    n_per_group: int,
    agent_kind: str = "random",
    seed: int = 0,
    max_episodes: int = 100_000,
    agent_cfg: Optional[AgentConfig] = None,
) -> Tuple[List[EpisodeRecord], List[EpisodeRecord]]:
    """Run the agent unshielded until it has produced N safe and N crashed episodes.

    Returns the (safe, unsafe) lists holding the most recent N of each class.
    """
    if n_per_group < 1:
        raise ConfigError("need at least one demonstration per group")
    agent = make_agent(agent_kind, env_id, seed, agent_cfg)
    memory = ReplayMemory() if agent_kind == "actor-critic" else None
    counts = {"safe": 0, "unsafe": 0}

    def enough(records):
        last = records[-1]
        counts["unsafe" if last.crashed else "safe"] += 1
        return min(counts.values()) >= n_per_group

    result = run_session(env_id, agent, max_episodes, seed, memory=memory, stop=enough)
    safe = [r for r in result.records if not r.crashed][-n_per_group:]
    unsafe = [r for r in result.records if r.crashed][-n_per_group:]
    if len(safe) < n_per_group or len(unsafe) < n_per_group:
        raise ConfigError(
            f"collected only {len(safe)} safe and {len(unsafe)} crashed episodes "
            f"in {len(result.records)} episodes (needed {n_per_group} of each)"
        )
    return safe, unsafe


def chronological(safe: Sequence[EpisodeRecord], unsafe: Sequence[EpisodeRecord]) -> List[EpisodeRecord]:
    return sorted([*safe, *unsafe], key=lambda r: r.seed)


@dataclass
class TrainSettings:
    env_id: str
    episodes: int
    seed: int
    agent: AgentConfig = field(default_factory=AgentConfig)
    shield: Optional[ShieldConfig] = None
    dynamics_hidden: int = 256
    dynamics_warmup: int = 1000
    replay_capacity: int = 1_000_000


def train(settings: TrainSettings, demos: Optional[DemoSet] = None) -> SessionResult:
    env = make_env(settings.env_id)
    spec = env.spec
    cfg = settings.shield or ShieldConfig(None, TrajectoryMode.STATE, spec.min_reward, enabled=False)
    shield = Shield(cfg, demos if cfg.enabled else None, env)
    agent = make_agent(settings.agent.kind, settings.env_id, settings.seed, settings.agent)
    dynamics = DynamicsModel(spec.state_dim, spec.action_dim, settings.dynamics_hidden, seed=settings.seed + 1,
                             lr=settings.agent.lr, batch_size=settings.agent.batch_size)
    memory = ReplayMemory(settings.replay_capacity)
    return run_session(settings.env_id, agent, settings.episodes, settings.seed, shield, memory, dynamics,
                       learn=True, dynamics_warmup=settings.dynamics_warmup, keep_records=False)


def write_metrics(path, episodes: Sequence[EpisodeStats]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for i, ep in enumerate(episodes):
            writer.writerow(ep.row(i))


def read_metrics(path) -> List[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def crash_rate_ci(crashes: int, episodes: int, level: float = 0.95) -> Tuple[float, float]:
    ci = binomtest(crashes, episodes).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _per_step(wall: Sequence[float], steps: Sequence[int]) -> float:
    return float(np.sum(wall)) / max(1, int(np.sum(steps)))


def summarize(results: Sequence[SessionResult], baseline: Optional[dict] = None,
              shield_enabled: bool = True, final_window: int = 100) -> dict:
    """Acc Reward and % Crash as mean/std over seeds, plus relative wall time.

    Acc Reward is the mean episode return over the last ``final_window``
    episodes of each seed. % Time compares wall time per loop iteration with
    the baseline's, because filtered episodes end early and a shielded run
    does less environment work than its baseline. The plain ratio of mean
    wall times is kept as ``pct_wall_time``. A run without the shield is its
    own baseline.
    """
    acc = [float(np.mean([e.acc_reward for e in r.episodes[-final_window:]])) for r in results]
    crash = [100.0 * r.stats.crash_rate for r in results]
    recent = [100.0 * r.stats.recent_crash_rate for r in results]
    wall = [r.wall_time for r in results]
    steps = [r.steps for r in results]
    crashes = sum(r.stats.crashes for r in results)
    episodes = sum(r.stats.episodes for r in results)
    lo, hi = crash_rate_ci(crashes, episodes)
    if baseline is not None:
        pct_time = 100.0 * _per_step(wall, steps) / baseline["seconds_per_step"]
        pct_wall = 100.0 * float(np.mean(wall)) / baseline["wall_time_mean_s"]
    elif not shield_enabled:
        pct_time = pct_wall = 100.0
    else:
        pct_time = pct_wall = None
    acc_m, acc_s = mean_std(acc)
    crash_m, crash_s = mean_std(crash)
    recent_m, recent_s = mean_std(recent)
    return {
        "seeds": len(results),
        "episodes": episodes,
        "steps": int(sum(steps)),
        "acc_reward_mean": acc_m,
        "acc_reward_std": acc_s,
        "crash_pct_mean": crash_m,
        "crash_pct_std": crash_s,
        "crash_pct_ci95": [100.0 * lo, 100.0 * hi],
        "recent_crash_pct_mean": recent_m,
        "recent_crash_pct_std": recent_s,
        "filtered_episodes": sum(r.stats.filtered_episodes for r in results),
        "wall_time_mean_s": float(np.mean(wall)),
        "shield_time_s": sum(r.stats.wall_time_shield for r in results),
        "pct_time": pct_time,
        "pct_wall_time": pct_wall,
    }


def write_timing(path, results: Sequence[SessionResult], shield_enabled: bool) -> None:
    wall = [r.wall_time for r in results]
    steps = [r.steps for r in results]
    obj = {
        "shield_enabled": shield_enabled,
        "wall_time_s": wall,
        "steps": steps,
        "wall_time_mean_s": float(np.mean(wall)),
        "seconds_per_step": _per_step(wall, steps),
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_timing(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such timing file: {path}")
    obj = json.loads(path.read_text(encoding="utf-8"))
    try:
        out = {key: float(obj[key]) for key in ("wall_time_mean_s", "seconds_per_step")}
    except KeyError as exc:
        raise ConfigError(f"{path}: timing file lacks {exc}") from None
    if not all(v > 0 for v in out.values()):
        raise ConfigError(f"{path}: baseline times must be positive")
    return out


def format_summary(summary: dict) -> str:
    pct = summary["pct_time"]
    return (
        f"Acc Reward {summary['acc_reward_mean']:.1f}±{summary['acc_reward_std']:.1f}  "
        f"% Crash {summary['crash_pct_mean']:.1f}±{summary['crash_pct_std']:.1f} "
        f"(95% CI {summary['crash_pct_ci95'][0]:.1f}-{summary['crash_pct_ci95'][1]:.1f})  "
        f"% Time {'n/a' if pct is None else f'{pct:.0f}'}"
    )
