import numpy as np
import pytest

from conftest import make_record
from dtwshield.agent import RandomAgent
from dtwshield.core import ConfigError, DemoSet, ReplayMemory, TrajectoryMode
from dtwshield.dynamics import DynamicsModel
from dtwshield.envs import make_env
from dtwshield.experiment import run_session
from dtwshield.filters import StrategySpec, enumerate_strategies
from dtwshield.shield import EpisodeStats, Shield, ShieldConfig, ShieldStats, run_episode


class CountingEnv:
    """Wraps an env and records every step call together with the shield's latest verdict."""

    def __init__(self, env, shield=None):
        self.env = env
        self.spec = env.spec
        self.shield = shield
        self.calls = 0
        self.calls_on_filter = 0

    def reset(self, seed):
        return self.env.reset(seed)

    def step(self, action):
        self.calls += 1
        decision = self.shield.last_decision if self.shield is not None else None
        if decision is not None and decision.filtered:
            self.calls_on_filter += 1
        return self.env.step(action)


def cliff_demos(n=5, seed=0):
    result = run_session("cliff2d", RandomAgent(2), 60, seed=seed)
    safe = [r for r in result.records if not r.crashed][:n]
    unsafe = [r for r in result.records if r.crashed][:n]
    return DemoSet(safe, unsafe, TrajectoryMode.STATE)


def test_penalty_must_not_exceed_min_reward(toy_demos):
    env = make_env("cliff2d")
    with pytest.raises(ConfigError):
        Shield(ShieldConfig(StrategySpec.parse("MinFull", "MinFull"), TrajectoryMode.STATE, -1.0), toy_demos, env)


def test_enabled_shield_needs_demos_and_matching_mode(toy_demos):
    strategy = StrategySpec.parse("MinFull", "MinFull")
    with pytest.raises(ConfigError):
        Shield(ShieldConfig(strategy, TrajectoryMode.STATE, -2.0))
    with pytest.raises(ConfigError):
        Shield(ShieldConfig(strategy, TrajectoryMode.STATE_ACTION, -2.0), toy_demos)


def test_step_matching_unsafe_demo_is_filtered():
    # the unsafe demo is exactly the one-step trajectory; the safe demo is far away
    start = np.array([0.3, 0.3, 0.0, 0.0])
    unsafe = make_record(start[None], True, action_dim=2)
    safe = make_record(np.vstack([start + 0.5, start + 0.6]), False, action_dim=2)
    demos = DemoSet([safe], [unsafe], TrajectoryMode.STATE)
    dyn = DynamicsModel(4, 2, hidden=8, seed=0)
    r_task = -2.0
    shield = Shield(ShieldConfig(StrategySpec.parse("MinFull", "MinFull"), TrajectoryMode.STATE, r_task), demos)
    env = CountingEnv(make_env("cliff2d"), shield)
    env.env.set_state(start)
    tr = shield.step(env, dyn, start, np.array([0.5, 0.5]))
    assert tr.filtered and tr.done and not tr.crashed
    assert tr.reward == r_task
    assert shield.last_decision.unsafe_cost == 0.0
    np.testing.assert_array_equal(tr.next_state, dyn.predict_next(start, np.array([0.5, 0.5])))
    assert env.calls == 0


def test_windowed_strategy_decides_on_first_step(toy_demos):
    shield = Shield(ShieldConfig(StrategySpec.parse("MeanBothW10", "MaxTrajW5"), TrajectoryMode.STATE, -2.0),
                    toy_demos)
    decision = shield.check(np.array([0.2]), np.array([0.0]))
    assert len(shield.traj) == 1
    assert np.isfinite(decision.safe_cost) and np.isfinite(decision.unsafe_cost)


def test_gate_never_steps_env_on_filter():
    demos = cliff_demos()
    rng = np.random.default_rng(0)
    strategies = enumerate_strategies()
    dyn = DynamicsModel(4, 2, hidden=8, seed=0)
    steps = filtered = 0
    for k in range(40):
        strategy = strategies[int(rng.integers(len(strategies)))]
        shield = Shield(ShieldConfig(strategy, TrajectoryMode.STATE, -2.0), demos, make_env("cliff2d"))
        env = CountingEnv(make_env("cliff2d"), shield)
        mem = ReplayMemory()
        _, stats = run_episode(shield, env, RandomAgent(2, seed=k), seed=k, memory=mem, dynamics=dyn)
        for tr in mem.transitions():
            if tr.filtered:
                filtered += 1
                assert (tr.reward, tr.done, tr.crashed) == (-2.0, True, False)
                np.testing.assert_array_equal(tr.next_state, dyn.predict_next(tr.state, tr.action))
        steps += stats.steps
        assert env.calls_on_filter == 0
        assert env.calls == stats.steps - int(stats.filtered)
    assert filtered > 0 and steps > 40


def bare_loop(env_id, seed, agent):
    env = make_env(env_id)
    s = env.reset(seed)
    out = [s]
    done = False
    while not done:
        res = env.step(agent.act(s))
        out.extend([res.next_state, [res.reward, res.done, res.crashed]])
        s, done = res.next_state, res.done
    return np.concatenate(out)


def test_disabled_shield_matches_bare_loop():
    shield = Shield(ShieldConfig(None, TrajectoryMode.STATE, -2.0, enabled=False))
    env = make_env("cliff2d")
    for seed in range(5):
        mem = ReplayMemory()
        run_episode(shield, env, RandomAgent(2, seed=seed), seed=seed, memory=mem)
        got = [mem.transitions()[0].state]
        for tr in mem.transitions():
            got.extend([tr.next_state, [tr.reward, tr.done, tr.crashed]])
            assert not tr.filtered
        np.testing.assert_array_equal(np.concatenate(got), bare_loop("cliff2d", seed, RandomAgent(2, seed=seed)))


def test_shield_only_truncates_with_paired_randomness():
    demos = cliff_demos()
    base = run_session("cliff2d", RandomAgent(2), 30, seed=9)
    shield = Shield(ShieldConfig(StrategySpec.parse("MinDemoW5", "MinDemoW10"), TrajectoryMode.STATE, -2.0), demos)
    shielded = run_session("cliff2d", RandomAgent(2), 30, seed=9, shield=shield)
    for a, b in zip(base.records, shielded.records):
        assert len(b) <= len(a)
        np.testing.assert_array_equal(b.actions, a.actions[: len(b)])
    assert shielded.stats.crashes + shielded.stats.filtered_episodes <= shielded.stats.episodes


def test_episode_record_matches_transitions():
    demos = cliff_demos()
    shield = Shield(ShieldConfig(StrategySpec.parse("MeanDemoW5", "MeanDemoW10"), TrajectoryMode.STATE, -2.0), demos)
    mem = ReplayMemory()
    rec, stats = run_episode(shield, make_env("cliff2d"), RandomAgent(2, seed=1), seed=1, memory=mem)
    trs = mem.transitions()
    assert len(rec) == len(trs) == stats.steps
    assert rec.total_reward == pytest.approx(stats.acc_reward)
    assert stats.filtered == trs[-1].filtered and rec.crashed == trs[-1].crashed
    assert 0.0 <= stats.shield_time <= stats.total_time


def test_stats_windows():
    stats = ShieldStats(window=3)
    for crashed in (True, True, False, False, False):
        stats.update(EpisodeStats(0.0, crashed, not crashed, 5, 0.0, 0.0))
    assert stats.crash_rate == pytest.approx(0.4)
    assert stats.recent_crash_rate == 0.0
    assert stats.filtered_episodes == 3 and stats.env_steps == 5 * 5 - 3
