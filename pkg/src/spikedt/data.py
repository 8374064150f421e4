"""Offline trajectory datasets for two synthetic control tasks.

KeyDoor: a gridworld where the agent must pick up a key and then open a
door; the reward budget is 1.0 per completed episode (0.5 at the key,
0.5 at the door), delivered densely or as a single terminal payout.
Reacher: a 2-D point mass steered to a goal under damped dynamics with a
negative-distance dense reward.

Trajectories serialize to a line-oriented JSON format whose float fields
round-trip bit-exactly.  Window sampling produces the (previous action,
return-to-go, state) token triples the model trains on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


class DataError(ValueError):
    """Malformed dataset file or meta/trajectory inconsistency."""


class GenerationError(RuntimeError):
    """Environment generation cannot satisfy its constraints."""


@dataclass
class Trajectory:
    """One episode: L actions/rewards bracketed by L+1 states."""

    states: np.ndarray  # (L+1, state_dim)
    actions: np.ndarray  # (L,) int for discrete, (L, action_dim) for continuous
    rewards: np.ndarray  # (L,)
    terminal: bool

    def __post_init__(self):
        if len(self.actions) != len(self.rewards) or len(self.states) != len(self.actions) + 1:
            raise DataError(
                f"inconsistent lengths: states {len(self.states)}, "
                f"actions {len(self.actions)}, rewards {len(self.rewards)}"
            )

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass
class DatasetMeta:
    env_name: str
    state_dim: int
    action_dim: int
    action_space: str
    rtg_scale: float
    random_score: float
    expert_score: float
    state_mean: np.ndarray
    state_std: np.ndarray
    env_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.expert_score <= self.random_score:
            raise DataError(
                f"expert_score {self.expert_score} must exceed random_score "
                f"{self.random_score}"
            )
        self.state_std = np.maximum(np.asarray(self.state_std, dtype=np.float64), 1e-6)
        self.state_mean = np.asarray(self.state_mean, dtype=np.float64)

    def to_json_dict(self) -> dict:
        return {
            "env_name": self.env_name,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "action_space": self.action_space,
            "rtg_scale": self.rtg_scale,
            "random_score": self.random_score,
            "expert_score": self.expert_score,
            "state_mean": self.state_mean.tolist(),
            "state_std": self.state_std.tolist(),
            "env_params": self.env_params,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "DatasetMeta":
        try:
            return DatasetMeta(
                env_name=d["env_name"],
                state_dim=int(d["state_dim"]),
                action_dim=int(d["action_dim"]),
                action_space=d["action_space"],
                rtg_scale=float(d["rtg_scale"]),
                random_score=float(d["random_score"]),
                expert_score=float(d["expert_score"]),
                state_mean=np.asarray(d["state_mean"], dtype=np.float64),
                state_std=np.asarray(d["state_std"], dtype=np.float64),
                env_params=d.get("env_params", {}),
            )
        except KeyError as e:
            raise DataError(f"meta line missing field {e}") from None


def compute_rtg(rewards) -> np.ndarray:
    """Suffix sums: rtg[l] = sum of rewards from l to the end."""
    r = np.asarray(rewards, dtype=np.float64)
    return np.cumsum(r[::-1])[::-1].copy()


def normalized_score(raw: float, meta: DatasetMeta) -> float:
    """100 at expert level, 0 at random level, linear in between."""
    span = meta.expert_score - meta.random_score
    if span <= 0:
        raise ContractError("degenerate meta: expert_score <= random_score")
    return 100.0 * (raw - meta.random_score) / span


class TrajectoryDataset:
    """Immutable episode collection with derived return-to-go arrays."""

    def __init__(self, meta: DatasetMeta, trajectories: list[Trajectory]):
        self.meta = meta
        self.trajectories = trajectories
        self.rtgs = [compute_rtg(t.rewards) for t in trajectories]
        self._index = np.array(
            [(i, l) for i, t in enumerate(trajectories) for l in range(len(t))],
            dtype=np.int64,
        ).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n_steps(self) -> int:
        return int(self._index.shape[0])

    @property
    def max_return(self) -> float:
        return max((t.total_reward for t in self.trajectories), default=0.0)

    def one_hot(self, idx: np.ndarray) -> np.ndarray:
        a = np.zeros(idx.shape + (self.meta.action_dim,))
        np.put_along_axis(a, idx[..., None].astype(np.int64), 1.0, axis=-1)
        return a

    def sample_batch(self, rng: np.random.Generator, batch_size: int, n: int) -> dict:
        """Uniform over all (episode, step) pairs; returns model-ready arrays."""
        picks = self._index[rng.integers(self.n_steps, size=batch_size)]
        batch = {
            "actions": np.zeros((batch_size, n, self.meta.action_dim)),
            "rtg": np.zeros((batch_size, n, 1)),
            "states": np.zeros((batch_size, n, self.meta.state_dim)),
            "mask": np.zeros((batch_size, n)),
        }
        if self.meta.action_space == "discrete":
            batch["target"] = np.zeros((batch_size, n), dtype=np.int64)
        else:
            batch["target"] = np.zeros((batch_size, n, self.meta.action_dim))
        for row, (ti, l) in enumerate(picks):
            w = sample_window(self.trajectories[ti], int(l), n, self.meta, self.rtgs[ti])
            for key in batch:
                batch[key][row] = w[key]
        return batch

    # -- serialization ------------------------------------------------------------

    def save_jsonl(self, path) -> None:
        with open(path, "w") as f:
            f.write(json.dumps(self.meta.to_json_dict()) + "\n")
            for t in self.trajectories:
                if self.meta.action_space == "discrete":
                    actions = [int(a) for a in t.actions]
                else:
                    actions = t.actions.tolist()
                rec = {
                    "states": t.states.tolist(),
                    "actions": actions,
                    "rewards": t.rewards.tolist(),
                    "terminal": bool(t.terminal),
                }
                f.write(json.dumps(rec) + "\n")

    @staticmethod
    def load_jsonl(path) -> "TrajectoryDataset":
        try:
            with open(path) as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise DataError(f"cannot read dataset: {e}") from None
        if not lines:
            raise DataError(f"{path}: empty file, missing meta line")
        try:
            meta = DatasetMeta.from_json_dict(json.loads(lines[0]))
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: line 1: {e}") from None
        trajs = []
        for no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: line {no}: {e}") from None
            try:
                states = np.asarray(rec["states"], dtype=np.float64)
                rewards = np.asarray(rec["rewards"], dtype=np.float64)
                if meta.action_space == "discrete":
                    actions = np.asarray(rec["actions"], dtype=np.int64)
                else:
                    actions = np.asarray(rec["actions"], dtype=np.float64)
                traj = Trajectory(states, actions, rewards, bool(rec["terminal"]))
            except (KeyError, DataError, ValueError) as e:
                raise DataError(f"{path}: line {no}: {e}") from None
            if states.ndim != 2 or states.shape[1] != meta.state_dim:
                raise DataError(
                    f"{path}: line {no}: state dim {states.shape} != meta "
                    f"state_dim {meta.state_dim}"
                )
            if meta.action_space == "continuous" and (
                actions.ndim != 2 or actions.shape[1] != meta.action_dim
            ):
                raise DataError(
                    f"{path}: line {no}: action dim {actions.shape} != meta "
                    f"action_dim {meta.action_dim}"
                )
            trajs.append(traj)
        return TrajectoryDataset(meta, trajs)


def sample_window(
    traj: Trajectory, l: int, n: int, meta: DatasetMeta, rtg: np.ndarray | None = None
) -> dict:
    """Token window ending at step l: triples (a_{m-1}, rtg_m, s_m) for
    m = l-n+1 .. l, left-zero-padded with a loss mask."""
    if not (0 <= l < len(traj)):
        raise ContractError(f"step {l} outside [0, {len(traj)})")
    if rtg is None:
        rtg = compute_rtg(traj.rewards)
    actions = np.zeros((n, meta.action_dim))
    rtgs = np.zeros((n, 1))
    states = np.zeros((n, meta.state_dim))
    mask = np.zeros(n)
    if meta.action_space == "discrete":
        target = np.zeros(n, dtype=np.int64)
    else:
        target = np.zeros((n, meta.action_dim))
    for k in range(n):
        m = l - n + 1 + k
        if m < 0:
            continue
        mask[k] = 1.0
        states[k] = (traj.states[m] - meta.state_mean) / meta.state_std
        rtgs[k, 0] = rtg[m] / meta.rtg_scale
        if m >= 1:
            if meta.action_space == "discrete":
                actions[k, int(traj.actions[m - 1])] = 1.0
            else:
                actions[k] = traj.actions[m - 1]
        target[k] = traj.actions[m]
    return {"actions": actions, "rtg": rtgs, "states": states, "mask": mask,
            "target": target}


# -- KeyDoor gridworld ----------------------------------------------------------------

KEYDOOR_ACTIONS = 5  # stay, +x, -x, +y, -y
_MOVES = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])


class KeyDoorEnv:
    """Reach the key cell, then the door cell, on a square grid.

    Dense rewards pay 0.5 at each subgoal; the sparse variant pays the
    episode total at the final step.  State: (agent, key, door) coordinates
    plus a has-key flag, all raw floats.
    """

    def __init__(self, grid: int, max_len: int, sparse: bool = False):
        if grid < 4:
            raise GenerationError(f"grid must be >= 4, got {grid}")
        if max_len < 2:
            raise GenerationError(f"max_len must be >= 2, got {max_len}")
        self.grid = grid
        self.max_len = max_len
        self.sparse = sparse
        self.state_dim = 7
        self.action_dim = KEYDOOR_ACTIONS
        self.action_space = "discrete"

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        cells = rng.choice(self.grid * self.grid, size=3, replace=False)
        self._agent = np.array([cells[0] % self.grid, cells[0] // self.grid])
        self._key = np.array([cells[1] % self.grid, cells[1] // self.grid])
        self._door = np.array([cells[2] % self.grid, cells[2] // self.grid])
        self._has_key = False
        self._steps = 0
        self._pending = 0.0
        return self._state()

    def _state(self) -> np.ndarray:
        return np.array(
            [*self._agent, *self._key, *self._door, float(self._has_key)],
            dtype=np.float64,
        )

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        self._agent = np.clip(self._agent + _MOVES[int(action)], 0, self.grid - 1)
        reward = 0.0
        if not self._has_key and np.array_equal(self._agent, self._key):
            self._has_key = True
            reward += 0.5
        done = False
        if self._has_key and np.array_equal(self._agent, self._door):
            reward += 0.5
            done = True
        self._steps += 1
        if self._steps >= self.max_len:
            done = True
        if self.sparse:
            self._pending += reward
            reward = self._pending if done else 0.0
        return self._state(), reward, done

    def optimal_length(self) -> int:
        leg1 = np.abs(self._agent - self._key).sum()
        leg2 = np.abs(self._key - self._door).sum()
        return int(leg1 + leg2)

    def expert_action(self, rng: np.random.Generator) -> int:
        """Greedy shortest-path step toward the current subgoal, 10% noise."""
        if rng.random() < 0.1:
            return int(rng.integers(KEYDOOR_ACTIONS))
        target = self._door if self._has_key else self._key
        gap = target - self._agent
        options = []
        if gap[0] > 0:
            options.append(1)
        elif gap[0] < 0:
            options.append(2)
        if gap[1] > 0:
            options.append(3)
        elif gap[1] < 0:
            options.append(4)
        if not options:
            return 0
        return int(options[0]) if len(options) == 1 else int(rng.choice(options))

    def random_action(self, rng: np.random.Generator) -> int:
        return int(rng.integers(KEYDOOR_ACTIONS))


# -- Reacher point mass ------------------------------------------------------------------

REACHER_KP = 4.0
REACHER_KD = 2.0


class ReacherEnv:
    """Damped 2-D point mass: x' = x + 0.1 v, v' = 0.9 v + 0.1 a,
    reward = -||position - goal|| each step."""

    def __init__(self, max_len: int):
        if max_len < 1:
            raise GenerationError(f"max_len must be >= 1, got {max_len}")
        self.max_len = max_len
        self.state_dim = 6
        self.action_dim = 2
        self.action_space = "continuous"

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._pos = rng.uniform(-1, 1, size=2)
        self._vel = np.zeros(2)
        self._goal = rng.uniform(-1, 1, size=2)
        self._steps = 0
        return self._state()

    def _state(self) -> np.ndarray:
        return np.concatenate([self._pos, self._vel, self._goal])

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self._pos = self._pos + 0.1 * self._vel
        self._vel = 0.9 * self._vel + 0.1 * a
        self._steps += 1
        reward = -float(np.linalg.norm(self._pos - self._goal))
        return self._state(), reward, self._steps >= self.max_len

    def expert_action(self, rng: np.random.Generator) -> np.ndarray:
        a = REACHER_KP * (self._goal - self._pos) - REACHER_KD * self._vel
        return np.clip(a, -1.0, 1.0)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1, 1, size=2)


def _behavior_action(env, quality: str, rng: np.random.Generator):
    if quality == "random":
        return env.random_action(rng)
    if quality == "expert":
        return env.expert_action(rng)
    if quality == "medium":
        if env.action_space == "discrete":
            if rng.random() < 0.5:
                return env.expert_action(rng)
            return env.random_action(rng)
        return np.clip(env.expert_action(rng) + rng.normal(0, 0.5, size=2), -1, 1)
    raise GenerationError(f"unknown behavior quality {quality!r}")


def _rollout(env, policy, rng: np.random.Generator) -> Trajectory:
    states = [env.reset(rng)]
    actions, rewards = [], []
    done = False
    while not done:
        a = policy(rng)
        s, r, done = env.step(a)
        states.append(s)
        actions.append(a)
        rewards.append(r)
    if env.action_space == "discrete":
        act_arr = np.asarray(actions, dtype=np.int64)
    else:
        act_arr = np.asarray(actions, dtype=np.float64)
    return Trajectory(np.asarray(states), act_arr, np.asarray(rewards), True)


def _score_policies(env, rng: np.random.Generator, episodes: int = 200):
    """Rollout oracle fixing random/expert reference returns in the meta."""
    returns = {}
    for name in ("random", "expert"):
        totals = []
        for _ in range(episodes):
            traj = _rollout(env, lambda r, q=name: _behavior_action(env, q, r), rng)
            totals.append(traj.total_reward)
        returns[name] = float(np.mean(totals))
    return returns["random"], returns["expert"]


def _build_dataset(env, env_name, episodes, quality, seed, env_params) -> TrajectoryDataset:
    ss = np.random.SeedSequence(seed)
    gen_rng, score_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    trajs = [
        _rollout(env, lambda r: _behavior_action(env, quality, r), gen_rng)
        for _ in range(episodes)
    ]
    random_score, expert_score = _score_policies(env, score_rng)
    if expert_score <= random_score:
        raise GenerationError(
            f"expert policy ({expert_score:.4f}) does not beat random "
            f"({random_score:.4f}); unusable score scale"
        )
    if trajs:
        all_states = np.concatenate([t.states for t in trajs])
        state_mean, state_std = all_states.mean(axis=0), all_states.std(axis=0)
    else:
        state_mean, state_std = np.zeros(env.state_dim), np.ones(env.state_dim)
    max_ret = max((t.total_reward for t in trajs), default=0.0)
    meta = DatasetMeta(
        env_name=env_name,
        state_dim=env.state_dim,
        action_dim=env.action_dim,
        action_space=env.action_space,
        rtg_scale=max(max_ret, 1e-8),
        random_score=random_score,
        expert_score=expert_score,
        state_mean=state_mean,
        state_std=state_std,
        env_params=env_params,
    )
    return TrajectoryDataset(meta, trajs)


def gen_keydoor(
    episodes: int, grid: int = 6, max_len: int = 40,
    behavior_quality: str = "medium", sparse: bool = False, seed: int = 0,
) -> TrajectoryDataset:
    env = KeyDoorEnv(grid, max_len, sparse)
    return _build_dataset(
        env, "keydoor", episodes, behavior_quality, seed,
        {"grid": grid, "max_len": max_len, "sparse": sparse},
    )


def gen_reacher(
    episodes: int, max_len: int = 60, behavior_quality: str = "medium", seed: int = 0
) -> TrajectoryDataset:
    env = ReacherEnv(max_len)
    return _build_dataset(
        env, "reacher", episodes, behavior_quality, seed, {"max_len": max_len}
    )


def make_env(meta: DatasetMeta):
    """Reconstruct the generating environment from dataset metadata."""
    p = meta.env_params
    if meta.env_name == "keydoor":
        return KeyDoorEnv(int(p["grid"]), int(p["max_len"]), bool(p.get("sparse", False)))
    if meta.env_name == "reacher":
        return ReacherEnv(int(p["max_len"]))
    raise DataError(f"unknown environment {meta.env_name!r}")
