"""Datasets: return-to-go, windows, generators, scores, and the JSONL format."""

import numpy as np
import pytest

from spikedt.data import (
    DataError,
    DatasetMeta,
    GenerationError,
    KeyDoorEnv,
    ReacherEnv,
    Trajectory,
    TrajectoryDataset,
    compute_rtg,
    gen_keydoor,
    gen_reacher,
    make_env,
    normalized_score,
    sample_window,
)
from spikedt.tensor import ContractError

from oracles import suffix_sums_quadratic

RNG = np.random.default_rng(31)


def tiny_meta(state_dim=3, action_dim=2, space="continuous"):
    return DatasetMeta(
        env_name="reacher", state_dim=state_dim, action_dim=action_dim,
        action_space=space, rtg_scale=2.0, random_score=0.0, expert_score=1.0,
        state_mean=np.zeros(state_dim), state_std=np.ones(state_dim),
        env_params={"max_len": 10},
    )


class TestReturnToGo:
    def test_hand_example(self):
        np.testing.assert_array_equal(compute_rtg([1.0, 2.0, 3.0]), [6.0, 5.0, 3.0])

    def test_zeros(self):
        np.testing.assert_array_equal(compute_rtg([0.0] * 5, ), np.zeros(5))

    def test_matches_double_loop_oracle(self):
        r = RNG.normal(size=100)
        np.testing.assert_allclose(compute_rtg(r), suffix_sums_quadratic(r), atol=1e-12)

    def test_recurrence_property(self):
        r = RNG.normal(size=50)
        rtg = compute_rtg(r)
        for l in range(49):
            assert abs(rtg[l] - (r[l] + rtg[l + 1])) < 1e-12
        assert abs(rtg[49] - r[49]) < 1e-12


class TestSampleWindow:
    def make_traj(self, length=9, state_dim=3, action_dim=2):
        return Trajectory(
            states=RNG.normal(size=(length + 1, state_dim)),
            actions=RNG.uniform(-1, 1, size=(length, action_dim)),
            rewards=RNG.normal(size=length),
            terminal=True,
        )

    def test_first_step_pads_all_but_one(self):
        traj = self.make_traj()
        w = sample_window(traj, 0, 5, tiny_meta())
        np.testing.assert_array_equal(w["mask"], [0, 0, 0, 0, 1])
        np.testing.assert_array_equal(w["actions"][-1], 0.0)  # no previous action

    def test_late_step_has_no_padding(self):
        traj = self.make_traj()
        w = sample_window(traj, 7, 5, tiny_meta())
        np.testing.assert_array_equal(w["mask"], 1.0)

    def test_alignment_indices(self):
        meta = tiny_meta()
        traj = self.make_traj()
        n, l = 4, 6
        w = sample_window(traj, l, n, meta)
        for k in range(n):
            m = l - n + 1 + k
            np.testing.assert_allclose(
                w["states"][k], (traj.states[m] - meta.state_mean) / meta.state_std
            )
            np.testing.assert_allclose(w["target"][k], traj.actions[m])
            if m >= 1:
                np.testing.assert_allclose(w["actions"][k], traj.actions[m - 1])

    def test_rtg_scaling(self):
        meta = tiny_meta()
        traj = self.make_traj()
        w = sample_window(traj, 3, 2, meta)
        rtg = compute_rtg(traj.rewards)
        assert w["rtg"][-1, 0] == rtg[3] / meta.rtg_scale

    def test_out_of_range_rejected(self):
        traj = self.make_traj()
        with pytest.raises(ContractError):
            sample_window(traj, 9, 4, tiny_meta())

    def test_padded_positions_never_read_trajectory(self):
        traj = self.make_traj()
        w = sample_window(traj, 1, 6, tiny_meta())
        np.testing.assert_array_equal(w["states"][:4], 0.0)
        np.testing.assert_array_equal(w["rtg"][:4], 0.0)


class TestKeyDoor:
    def test_expert_total_reward_is_one(self):
        for sparse in (False, True):
            ds = gen_keydoor(20, grid=6, max_len=60, behavior_quality="expert",
                             sparse=sparse, seed=5)
            for t in ds.trajectories:
                assert t.total_reward == 1.0

    def test_sparse_rewards_zero_until_final(self):
        ds = gen_keydoor(20, grid=6, max_len=40, behavior_quality="medium",
                         sparse=True, seed=6)
        for t in ds.trajectories:
            np.testing.assert_array_equal(t.rewards[:-1], 0.0)

    def test_sparse_rtg_constant_until_termination(self):
        ds = gen_keydoor(10, grid=6, max_len=60, behavior_quality="expert",
                         sparse=True, seed=8)
        for t, rtg in zip(ds.trajectories, ds.rtgs):
            np.testing.assert_array_equal(rtg, 1.0)

    def test_dense_and_sparse_share_streams(self):
        dense = gen_keydoor(15, grid=6, max_len=40, behavior_quality="medium",
                            sparse=False, seed=11)
        sparse = gen_keydoor(15, grid=6, max_len=40, behavior_quality="medium",
                             sparse=True, seed=11)
        for td, ts in zip(dense.trajectories, sparse.trajectories):
            np.testing.assert_array_equal(td.states, ts.states)
            np.testing.assert_array_equal(td.actions, ts.actions)
            assert abs(td.total_reward - ts.total_reward) < 1e-12

    def test_grid_too_small_rejected(self):
        with pytest.raises(GenerationError):
            KeyDoorEnv(grid=3, max_len=10)

    def test_behavior_quality_ordering(self):
        scores = {}
        for q in ("random", "medium", "expert"):
            ds = gen_keydoor(40, grid=8, max_len=30, behavior_quality=q, seed=13)
            scores[q] = np.mean([t.total_reward for t in ds.trajectories])
        assert scores["random"] <= scores["medium"] <= scores["expert"]


class TestReacher:
    def test_zero_action_from_rest_keeps_position(self):
        env = ReacherEnv(max_len=5)
        s0 = env.reset(np.random.default_rng(0))
        s1, r, done = env.step(np.zeros(2))
        np.testing.assert_array_equal(s0[:2], s1[:2])

    def test_rewards_nonpositive(self):
        ds = gen_reacher(10, max_len=30, behavior_quality="random", seed=2)
        for t in ds.trajectories:
            assert np.all(t.rewards <= 0)

    def test_expert_beats_random_via_rollout_oracle(self):
        ds = gen_reacher(5, max_len=40, behavior_quality="medium", seed=3)
        assert ds.meta.expert_score > ds.meta.random_score


class TestJsonl:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = gen_reacher(8, max_len=15, behavior_quality="medium", seed=21)
        path = tmp_path / "d.jsonl"
        ds.save_jsonl(path)
        back = TrajectoryDataset.load_jsonl(path)
        assert back.meta.rtg_scale == ds.meta.rtg_scale
        np.testing.assert_array_equal(back.meta.state_mean, ds.meta.state_mean)
        for a, b in zip(ds.trajectories, back.trajectories):
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.actions, b.actions)
            np.testing.assert_array_equal(a.rewards, b.rewards)
            assert a.terminal == b.terminal

    def test_discrete_round_trip(self, tmp_path):
        ds = gen_keydoor(5, grid=6, max_len=20, behavior_quality="random", seed=1)
        path = tmp_path / "kd.jsonl"
        ds.save_jsonl(path)
        back = TrajectoryDataset.load_jsonl(path)
        for a, b in zip(ds.trajectories, back.trajectories):
            np.testing.assert_array_equal(a.actions, b.actions)
            assert b.actions.dtype == np.int64

    def test_meta_only_file_is_valid(self, tmp_path):
        ds = gen_keydoor(0, grid=6, max_len=20, seed=1)
        path = tmp_path / "empty.jsonl"
        ds.save_jsonl(path)
        back = TrajectoryDataset.load_jsonl(path)
        assert len(back) == 0

    def test_malformed_line_reports_number(self, tmp_path):
        ds = gen_keydoor(2, grid=6, max_len=20, seed=1)
        path = tmp_path / "bad.jsonl"
        ds.save_jsonl(path)
        with open(path, "a") as f:
            f.write("{not json\n")
        with pytest.raises(DataError, match="line 4"):
            TrajectoryDataset.load_jsonl(path)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "dim.jsonl"
        ds = gen_reacher(1, max_len=5, seed=1)
        ds.save_jsonl(path)
        lines = path.read_text().splitlines()
        import json

        rec = json.loads(lines[1])
        rec["states"] = [s[:-1] for s in rec["states"]]  # drop one state dim
        path.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(DataError, match="line 2"):
            TrajectoryDataset.load_jsonl(path)

    def test_hand_written_fixture_parses(self, tmp_path):
        path = tmp_path / "fixture.jsonl"
        path.write_text(
            '{"env_name": "reacher", "state_dim": 2, "action_dim": 1, '
            '"action_space": "continuous", "rtg_scale": 1.0, "random_score": 0.0, '
            '"expert_score": 1.0, "state_mean": [0.0, 0.0], "state_std": [1.0, 1.0], '
            '"env_params": {"max_len": 2}}\n'
            '{"states": [[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]], '
            '"actions": [[0.125], [-0.5]], "rewards": [1.5, -0.25], "terminal": true}\n'
        )
        ds = TrajectoryDataset.load_jsonl(path)
        t = ds.trajectories[0]
        assert t.states[1, 1] == 0.25
        assert t.actions[0, 0] == 0.125
        assert t.rewards[1] == -0.25
        np.testing.assert_array_equal(ds.rtgs[0], [1.25, -0.25])


class TestNormalizedScore:
    def test_endpoints_and_midpoint(self):
        meta = tiny_meta()
        assert normalized_score(meta.expert_score, meta) == 100.0
        assert normalized_score(meta.random_score, meta) == 0.0
        mid = (meta.expert_score + meta.random_score) / 2
        assert normalized_score(mid, meta) == 50.0

    def test_degenerate_meta_rejected(self):
        with pytest.raises(DataError):
            DatasetMeta(
                env_name="x", state_dim=1, action_dim=1, action_space="discrete",
                rtg_scale=1.0, random_score=1.0, expert_score=1.0,
                state_mean=np.zeros(1), state_std=np.ones(1),
            )


class TestDatasetPlumbing:
    def test_make_env_round_trip(self):
        ds = gen_keydoor(3, grid=7, max_len=25, sparse=True, seed=2)
        env = make_env(ds.meta)
        assert isinstance(env, KeyDoorEnv)
        assert env.grid == 7 and env.max_len == 25 and env.sparse

    def test_sample_batch_shapes(self):
        ds = gen_keydoor(10, grid=6, max_len=20, seed=3)
        batch = ds.sample_batch(np.random.default_rng(0), 8, 12)
        assert batch["actions"].shape == (8, 12, 5)
        assert batch["rtg"].shape == (8, 12, 1)
        assert batch["states"].shape == (8, 12, 7)
        assert batch["mask"].shape == (8, 12)
        assert batch["target"].shape == (8, 12)

    def test_deterministic_generation(self):
        a = gen_keydoor(10, grid=6, max_len=20, seed=9)
        b = gen_keydoor(10, grid=6, max_len=20, seed=9)
        for x, y in zip(a.trajectories, b.trajectories):
            np.testing.assert_array_equal(x.states, y.states)
            np.testing.assert_array_equal(x.actions, y.actions)
