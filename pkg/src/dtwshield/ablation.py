"""Offline ranking of filtering strategies by replaying recorded episodes.

Each recorded episode is replayed step by step with its recorded actions.
A strategy's filtered length is the step at which it first blocks an
action; the episode is safe if it never crashed or if the block happens no
later than the crashing step. A strategy scores
``mean(filtered length / original length) * fraction of safe episodes``.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, DemoSet, EpisodeRecord, TrajectoryMode, encode_step
from .filters import (
    AGGREGATIONS,
    SHAPES,
    GroupTracker,
    StrategyScorer,
    StrategySpec,
    enumerate_methods,
    enumerate_strategies,
)


@dataclass(frozen=True)
class StrategyScore:
    strategy: StrategySpec
    mean_length_ratio: float
    safe_rate: float

    @property
    def score(self) -> float:
        return self.mean_length_ratio * self.safe_rate


@dataclass(frozen=True)
class RankEntry:
    strategy: StrategySpec
    per_env: Dict[str, StrategyScore]

    @property
    def mean_score(self) -> float:
        return float(np.mean([s.score for s in self.per_env.values()]))


def _check_mode(demos: DemoSet, mode: Optional[TrajectoryMode]) -> TrajectoryMode:
    if mode is not None and TrajectoryMode.parse(mode) is not demos.mode:
        raise ConfigError(f"replay mode {mode} differs from the demo set mode {demos.mode}")
    return demos.mode


def _step_vectors(episode: EpisodeRecord, mode: TrajectoryMode, dim: Optional[int] = None):
    if len(episode) == 0:
        raise ConfigError("episode has no steps to replay")
    for i in range(len(episode)):
        vec = encode_step(episode.states[i], episode.actions[i], mode)
        if dim is not None and vec.size != dim:
            raise ConfigError(f"episode step dimension {vec.size} does not match demonstrations ({dim})")
        yield vec


def _outcome(n_steps: int, crashed: bool, filter_step: Optional[int]) -> Tuple[float, bool]:
    if filter_step is None:
        return 1.0, not crashed
    return filter_step / n_steps, True


def episode_outcome(
    strategy: StrategySpec,
    episode: EpisodeRecord,
    demos: DemoSet,
    mode: Optional[TrajectoryMode] = None,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> Tuple[float, bool]:
    """(filtered length / original length, safe) for one recorded episode.

    The decision at step i sees the trajectory up to and including the state
    (or state-action pair) from which the i-th recorded action is taken.
    """
    mode = _check_mode(demos, mode)
    scorer = StrategyScorer(strategy, demos, normalize_features, normalize_dtw)
    for i, vec in enumerate(_step_vectors(episode, mode, scorer.dim), start=1):
        if scorer.push(vec).filtered:
            return _outcome(len(episode), episode.crashed, i)
    return _outcome(len(episode), episode.crashed, None)


def score_outcomes(strategy: StrategySpec, outcomes: Sequence[Tuple[float, bool]]) -> StrategyScore:
    if not outcomes:
        raise ConfigError("cannot score a strategy on an empty corpus")
    ratios = np.array([r for r, _ in outcomes])
    safe = np.array([s for _, s in outcomes], dtype=float)
    return StrategyScore(strategy, float(ratios.mean()), float(safe.mean()))


def score_strategy(
    strategy: StrategySpec,
    corpus: Sequence[EpisodeRecord],
    demos: DemoSet,
    mode: Optional[TrajectoryMode] = None,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> StrategyScore:
    outcomes = [episode_outcome(strategy, ep, demos, mode, normalize_features, normalize_dtw) for ep in corpus]
    return score_outcomes(strategy, outcomes)


def method_profiles(
    episode: EpisodeRecord, demos: DemoSet, normalize_features: bool = False, normalize_dtw: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Group costs of all 24 methods at every replay step.

    Returns (safe, unsafe) arrays of shape (24, len(episode)) with rows in
    ``enumerate_methods()`` order.
    """
    scaler = demos.scaler() if normalize_features else None
    safe_demos, unsafe_demos = demos.trajectories(scaler)
    trackers = (GroupTracker(safe_demos, SHAPES, normalize_dtw), GroupTracker(unsafe_demos, SHAPES, normalize_dtw))
    n = len(episode)
    profiles = (np.empty((len(SHAPES) * len(AGGREGATIONS), n)), np.empty((len(SHAPES) * len(AGGREGATIONS), n)))
    for i, vec in enumerate(_step_vectors(episode, demos.mode, trackers[0].dim)):
        if scaler is not None:
            vec = scaler(vec)
        for tracker, prof in zip(trackers, profiles):
            costs = tracker.push(vec)
            for s, shape in enumerate(SHAPES):
                for a, agg in enumerate(AGGREGATIONS):
                    prof[s * len(AGGREGATIONS) + a, i] = agg.reduce(costs[shape])
    return profiles


def episode_outcome_table(
    episode: EpisodeRecord, demos: DemoSet, normalize_features: bool = False, normalize_dtw: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Length ratios and safe flags for every strategy, shape (24, 24).

    Entry [i, j] belongs to safe method i and unsafe method j.
    """
    safe_prof, unsafe_prof = method_profiles(episode, demos, normalize_features, normalize_dtw)
    blocked = safe_prof[:, None, :] >= unsafe_prof[None, :, :]
    ever = blocked.any(axis=2)
    first = blocked.argmax(axis=2) + 1
    n = len(episode)
    ratios = np.where(ever, first / n, 1.0)
    safe = ever | (not episode.crashed)
    return ratios, safe


_WORKER_STATE: dict = {}


def _init_worker(demos, normalize_features, normalize_dtw):
    _WORKER_STATE.update(demos=demos, normalize_features=normalize_features, normalize_dtw=normalize_dtw)


def _table_job(episode):
    st = _WORKER_STATE
    return episode_outcome_table(episode, st["demos"], st["normalize_features"], st["normalize_dtw"])


def corpus_tables(
    corpus: Sequence[EpisodeRecord],
    demos: DemoSet,
    workers: int = 1,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked outcome tables, shapes (n_episodes, 24, 24)."""
    if not corpus:
        raise ConfigError("cannot rank strategies on an empty corpus")
    if workers <= 1:
        tables = [episode_outcome_table(ep, demos, normalize_features, normalize_dtw) for ep in corpus]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(demos, normalize_features, normalize_dtw)) as pool:
            tables = list(pool.map(_table_job, corpus, chunksize=max(1, len(corpus) // (4 * workers))))
    return np.stack([t[0] for t in tables]), np.stack([t[1] for t in tables])


def score_all(
    corpus: Sequence[EpisodeRecord],
    demos: DemoSet,
    mode: Optional[TrajectoryMode] = None,
    workers: int = 1,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> List[StrategyScore]:
    """Scores of all 576 strategies on one corpus, in enumeration order."""
    _check_mode(demos, mode)
    ratios, safe = corpus_tables(corpus, demos, workers, normalize_features, normalize_dtw)
    mean_ratio = ratios.mean(axis=0)
    safe_rate = safe.mean(axis=0)
    methods = enumerate_methods()
    out = []
    for i, sm in enumerate(methods):
        for j, um in enumerate(methods):
            out.append(StrategyScore(StrategySpec(sm, um), float(mean_ratio[i, j]), float(safe_rate[i, j])))
    return out


def rank_all(
    corpora: Mapping[str, Sequence[EpisodeRecord]],
    demos: Mapping[str, DemoSet],
    mode: Optional[TrajectoryMode] = None,
    top_k: Optional[int] = None,
    workers: int = 1,
    normalize_features: bool = False,
    normalize_dtw: bool = False,
) -> List[RankEntry]:
    """Strategies sorted by score averaged over environments (best first)."""
    if not corpora:
        raise ConfigError("need at least one environment corpus")
    missing = sorted(set(corpora) - set(demos))
    if missing:
        raise ConfigError(f"no demonstrations for env(s) {missing}")
    per_env = {
        env_id: score_all(corpora[env_id], demos[env_id], mode, workers, normalize_features, normalize_dtw)
        for env_id in sorted(corpora)
    }
    entries = [
        RankEntry(strategy, {env_id: scores[k] for env_id, scores in per_env.items()})
        for k, strategy in enumerate(enumerate_strategies())
    ]
    entries.sort(key=lambda e: (-e.mean_score, e.strategy.sort_key))
    return entries if top_k is None else entries[:top_k]


def write_ranking(path, entries: Sequence[RankEntry]) -> None:
    env_ids = sorted(entries[0].per_env) if entries else []
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy_id_safe", "strategy_id_unsafe", *(f"score_{e}" for e in env_ids), "mean_score"])
        for entry in entries:
            writer.writerow([
                entry.strategy.safe_method.id,
                entry.strategy.unsafe_method.id,
                *(repr(entry.per_env[e].score) for e in env_ids),
                repr(entry.mean_score),
            ])


def read_ranking(path) -> List[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
