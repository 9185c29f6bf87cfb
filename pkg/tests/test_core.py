import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from dtwshield.core import (
    ConfigError,
    DatasetError,
    DemoSet,
    EpisodeRecord,
    ReplayMemory,
    Trajectory,
    TrajectoryMode,
    Transition,
    encode_step,
    episode_to_trajectory,
    load_demo_set,
    load_episodes,
    save_episodes,
)
from dtwshield.experiment import run_session
from dtwshield.agent import RandomAgent

STATE, PAIR = TrajectoryMode.STATE, TrajectoryMode.STATE_ACTION


def test_encode_step():
    assert encode_step([1, 2], [3], STATE).tolist() == [1, 2]
    assert encode_step([1, 2], [3], PAIR).tolist() == [1, 2, 3]
    assert encode_step([0, 0], [0], PAIR).tolist() == [0, 0, 0]


def test_trajectory_rejects_dimension_change():
    traj = Trajectory(PAIR)
    traj.extend([1, 2], [3])
    with pytest.raises(ConfigError):
        traj.extend([1, 2], [3, 4])
    assert traj.steps.tolist() == [[1, 2, 3]]


def test_trajectory_grows_past_initial_buffer():
    traj = Trajectory(STATE)
    for i in range(100):
        traj.extend([i, -i], [0])
    assert len(traj) == 100 and traj.steps[-1].tolist() == [99, -99]
    traj.clear()
    assert len(traj) == 0


def test_count_law_examples():
    rec = EpisodeRecord([[0.0], [1.0], [2.0]], [[0.5], [0.6]], [0.0, 0.0], False)
    assert len(episode_to_trajectory(rec, STATE)) == 3
    pairs = episode_to_trajectory(rec, PAIR)
    assert pairs.tolist() == [[0.0, 0.5], [1.0, 0.6]]
    with pytest.raises(ConfigError):
        episode_to_trajectory(EpisodeRecord([[0.0]], np.zeros((0, 1)), [], False), PAIR)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 20), st.integers(1, 4), st.integers(1, 3))
def test_count_laws(n_actions, sdim, adim):
    rng = np.random.default_rng(n_actions)
    rec = EpisodeRecord(rng.normal(size=(n_actions + 1, sdim)), rng.normal(size=(n_actions, adim)),
                        rng.normal(size=n_actions), False)
    assert episode_to_trajectory(rec, STATE).shape == (n_actions + 1, sdim)
    if n_actions:
        traj = episode_to_trajectory(rec, PAIR)
        assert traj.shape == (n_actions, sdim + adim)
        np.testing.assert_array_equal(traj[:, :sdim], rec.states[:-1])


def test_record_validation():
    with pytest.raises(ConfigError):
        EpisodeRecord([[0.0], [1.0]], [[0.0], [0.0]], [0.0, 0.0], False)
    with pytest.raises(ConfigError):
        EpisodeRecord([[0.0], [np.nan]], [[0.0]], [0.0], False)
    with pytest.raises(ConfigError):
        EpisodeRecord([[0.0], [1.0]], [[0.0]], [0.0], False, seed=-1)


def corpus(n=10):
    return run_session("cliff2d", RandomAgent(2), n, seed=4).records


def test_jsonl_round_trip_is_byte_identical(tmp_path):
    records = corpus()
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    save_episodes(first, records)
    loaded = load_episodes(first)
    save_episodes(second, loaded)
    assert first.read_bytes() == second.read_bytes()
    for a, b in zip(records, loaded):
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.rewards, b.rewards)
        assert (a.crashed, a.seed, a.env_id) == (b.crashed, b.seed, b.env_id)


def test_canonical_line_layout():
    rec = make_record([0.0, 0.1], True, seed=3, env_id="cliff2d")
    line = rec.to_json_line()
    assert line == '{"env_id":"cliff2d","seed":3,"states":[[0.0],[0.1]],"actions":[[0.0]],"rewards":[0.0],"crashed":true}'
    assert list(json.loads(line)) == ["env_id", "seed", "states", "actions", "rewards", "crashed"]


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = make_record([0.0, 1.0], False).to_json_line()
    path.write_text(good + "\n" + good + "\n{not json\n")
    with pytest.raises(DatasetError, match=r"bad.jsonl:3"):
        load_episodes(path)
    path.write_text(good + "\n" + good.replace('"crashed"', '"crash"') + "\n")
    with pytest.raises(DatasetError, match=r":2"):
        load_episodes(path)


def test_mixed_dimensions_rejected(tmp_path):
    path = tmp_path / "mixed.jsonl"
    save_episodes(path, [make_record([0.0, 1.0], False), make_record([[0.0, 0.0], [1.0, 1.0]], True)])
    with pytest.raises(DatasetError, match="mixed"):
        load_episodes(path)


def test_demo_set_partition(tmp_path):
    records = [make_record([0.0, float(i)], i % 2 == 0, seed=i) for i in range(100)]
    path = tmp_path / "demos.jsonl"
    save_episodes(path, records)
    demos = load_demo_set(path, "state")
    assert len(demos.safe) == 50 and len(demos.unsafe) == 50
    assert all(r.crashed for r in demos.unsafe) and not any(r.crashed for r in demos.safe)
    assert {r.seed for r in demos.safe} | {r.seed for r in demos.unsafe} == set(range(100))

    save_episodes(path, [r for r in records if not r.crashed])
    with pytest.raises(DatasetError):
        load_demo_set(path, "state")


def test_demo_set_rejects_mislabelled_groups():
    ok = make_record([0.0, 1.0], False)
    bad = make_record([0.0, 1.0], True)
    with pytest.raises(DatasetError):
        DemoSet([ok, bad], [bad], STATE)
    with pytest.raises(DatasetError):
        DemoSet([ok], [ok], STATE)


def test_feature_scaler_zscores_demo_data():
    demos = DemoSet([make_record([[0.0, 5.0], [2.0, 5.0]], False)], [make_record([[4.0, 5.0], [6.0, 5.0]], True)], STATE)
    scaler = demos.scaler()
    safe, unsafe = demos.trajectories(scaler)
    pooled = np.vstack(safe + unsafe)
    np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(pooled[:, 0].std(), 1.0)
    assert np.all(pooled[:, 1] == 0.0)  # constant column is centred, not divided by zero


def transition(i, filtered=False):
    s = np.array([float(i), 0.0])
    return Transition(s, np.array([0.1]), -1.0 if filtered else 0.5, s + 1, done=filtered, filtered=filtered)


def test_transition_invariants():
    s = np.zeros(2)
    with pytest.raises(ValueError):
        Transition(s, s, 0.0, s, done=False, filtered=True)
    with pytest.raises(ValueError):
        Transition(s, s, 0.0, s, done=True, crashed=True, filtered=True)
    with pytest.raises(ValueError):
        Transition(s, s, 0.0, s, done=False, crashed=True)


def test_replay_ring_keeps_newest():
    mem = ReplayMemory(capacity=5)
    for i in range(12):
        mem.add(transition(i, filtered=(i % 3 == 0)))
    assert len(mem) == 5
    kept = mem.transitions()
    assert [t.state[0] for t in kept] == [7, 8, 9, 10, 11]
    assert mem.n_real == sum(not t.filtered for t in kept) == 4


def test_replay_sampling():
    mem = ReplayMemory()
    for i in range(3000):
        mem.add(transition(i, filtered=(i % 2 == 1)))
    rng = np.random.default_rng(0)
    batch = mem.sample(256, rng)
    assert batch.states.shape == (256, 2) and batch.dones.shape == (256,)
    real = mem.sample_real(512, np.random.default_rng(1))
    assert np.all(real.states[:, 0] % 2 == 0)
    assert np.all(real.dones == 0.0)
    # uniform: both halves of the buffer show up in roughly equal shares
    big = mem.sample(20_000, rng).states[:, 0]
    assert abs(np.mean(big < 1500) - 0.5) < 0.02


def test_replay_rejects_dimension_change():
    mem = ReplayMemory()
    mem.add(transition(0))
    with pytest.raises(ConfigError):
        mem.add(Transition(np.zeros(3), np.zeros(1), 0.0, np.zeros(3), False))
