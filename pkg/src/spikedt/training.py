"""Supervised autoregressive training with blend-weight scheduling, plus
return-conditioned rollout evaluation in the synthetic environments.

The loop is deterministic end to end: weight init, batch sampling, and
evaluation episodes each draw from independent sub-seeds, and the batch
for step k is derived statelessly from (seed, k) so a resumed run
reproduces the original loss trace exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .data import DatasetMeta, TrajectoryDataset, make_env, normalized_score
from .model import DecisionModel, ModelConfig
from .norm import theta_schedule
from .serialize import load_checkpoint, save_checkpoint
from .tensor import ContractError, Tensor, backward, no_grad
from .tensor import exp as texp
from .tensor import log as tlog


class NumericError(RuntimeError):
    """Non-finite loss or gradients; carries a diagnostic dump."""


@dataclass
class TrainConfig:
    total_steps: int = 5000
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    grad_clip_norm: float = 0.25
    ptbn_fraction: float = 0.8
    warmup_steps: int = -1  # -1: 10% of total_steps
    lr_schedule: str = "constant"  # or "cosine" (decay to 10% after warmup)
    eval_every: int = 500
    eval_episodes: int = 10
    final_eval_episodes: int = 30
    target_return_multiplier: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ContractError(f"total_steps must be >= 1, got {self.total_steps}")
        if not (0.0 < self.ptbn_fraction <= 1.0):
            raise ContractError(f"ptbn_fraction must be in (0, 1], got {self.ptbn_fraction}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ContractError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.warmup_steps < 0:
            self.warmup_steps = self.total_steps // 10

    @property
    def blend_budget(self) -> int:
        return max(1, math.ceil(self.ptbn_fraction * self.total_steps))


DATA_TAG, EVAL_TAG, INIT_TAG = 101, 202, 303


def sub_rng(seed: int, tag: int, k: int = 0) -> np.random.Generator:
    """Stateless per-purpose generator: independent streams for weight
    init, batch sampling, and evaluation, logged by (seed, tag, k)."""
    return np.random.default_rng(np.random.SeedSequence((seed, tag, k)))


class AdamW:
    """Adaptive moments with decoupled weight decay.  Decay applies only to
    matrix weights (names ending '.w'), never to biases, norm affines,
    position tables, or the attention bias."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 weight_decay: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.b1**t
        bc2 = 1.0 - self.b2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and name.endswith(".w"):
                p.data -= lr * self.weight_decay * p.data
            p.data -= lr * update

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([float(self.step_count)])}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam.step"][0])
        for k in self.params:
            self.m[k][...] = arrays[f"adam.m.{k}"]
            self.v[k][...] = arrays[f"adam.v.{k}"]


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def action_loss(pred: Tensor, target, mask, action_space: str) -> Tensor:
    """Masked MSE for continuous actions, masked cross-entropy for
    discrete logits; normalized by the count of valid positions."""
    mask = np.asarray(mask, dtype=np.float64)
    valid = mask.sum()
    if valid == 0:
        raise ContractError("loss mask selects no positions")
    if action_space == "continuous":
        target_t = Tensor(np.asarray(target, dtype=np.float64))
        diff = pred - target_t
        sq = (diff * diff) * Tensor(mask[..., None])
        return sq.sum() / (valid * pred.shape[-1])
    onehot = np.zeros(pred.shape)
    np.put_along_axis(onehot, np.asarray(target, dtype=np.int64)[..., None], 1.0, axis=-1)
    m = pred.max(axis=-1, keepdims=True).detach()
    z = pred - m
    logp = z - tlog(texp(z).sum(axis=-1, keepdims=True))
    picked = (logp * Tensor(onehot)).sum(axis=-1)
    return -(picked * Tensor(mask)).sum() / valid


def lr_at(cfg: TrainConfig, step: int) -> float:
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    if cfg.lr_schedule == "cosine":
        span = max(1, cfg.total_steps - cfg.warmup_steps)
        frac = (step - cfg.warmup_steps) / span
        return cfg.learning_rate * (0.1 + 0.9 * 0.5 * (1 + math.cos(math.pi * frac)))
    return cfg.learning_rate


def train_step(
    model: DecisionModel, batch: dict, optim: AdamW, cfg: TrainConfig, step: int
) -> dict:
    """One optimizer update; theta follows the step index."""
    model.ptbn_state.t_cur = step
    stats: dict = {}
    pred = model.forward(
        batch["actions"], batch["rtg"], batch["states"], training=True, stats=stats
    )
    loss = action_loss(pred, batch["target"], batch["mask"], model.cfg.action_space)
    loss_val = loss.item()
    if not math.isfinite(loss_val):
        dump = {k: round(v, 6) for k, v in stats.items()}
        raise NumericError(f"non-finite loss at step {step}; spike rates: {dump}")
    backward(loss)
    grad_norm = clip_global_norm(optim.params, cfg.grad_clip_norm)
    lr = lr_at(cfg, step)
    optim.step(lr)
    optim.zero_grad()
    rates = [v for v in stats.values()]
    return {
        "loss": loss_val,
        "grad_norm": grad_norm,
        "lr": lr,
        "theta": model.ptbn_state.theta,
        "spike_rate_mean": float(np.mean(rates)) if rates else 0.0,
    }


# -- evaluation ------------------------------------------------------------------------


def model_policy(model: DecisionModel):
    """Wrap a model as a rollout policy over standardized window arrays."""

    def predict(actions: np.ndarray, rtg: np.ndarray, states: np.ndarray):
        with no_grad():
            out = model.forward(actions[None], rtg[None], states[None], training=False)
        last = out.data[0, -1]
        if model.cfg.action_space == "discrete":
            return int(np.argmax(last))
        return last

    return predict


def eval_rollout(
    predict,
    env,
    target_return: float,
    meta: DatasetMeta,
    context_len: int,
    rng: np.random.Generator,
    max_len: int | None = None,
) -> float:
    """Return-conditioned episode: feed the rolling token window, take the
    last token's action, and decrement the running return-to-go by each
    observed reward."""
    n = context_len
    state = env.reset(rng)
    raw_states = [state]
    raw_rtgs = [target_return]
    raw_actions: list = []  # action taken before each state; none yet
    total = 0.0
    horizon = max_len if max_len is not None else env.max_len
    for _ in range(horizon):
        length = len(raw_states)
        take = min(length, n)
        actions = np.zeros((n, meta.action_dim))
        rtg = np.zeros((n, 1))
        states = np.zeros((n, meta.state_dim))
        for k in range(take):
            idx = length - take + k
            pos = n - take + k
            states[pos] = (raw_states[idx] - meta.state_mean) / meta.state_std
            rtg[pos, 0] = raw_rtgs[idx] / meta.rtg_scale
            if idx >= 1:
                a_prev = raw_actions[idx - 1]
                if meta.action_space == "discrete":
                    actions[pos, int(a_prev)] = 1.0
                else:
                    actions[pos] = a_prev
        action = predict(actions, rtg, states)
        state, reward, done = env.step(action)
        total += reward
        raw_actions.append(action)
        raw_states.append(state)
        raw_rtgs.append(raw_rtgs[-1] - reward)
        if done:
            break
    return total


def rollout_batch(
    model: DecisionModel,
    meta: DatasetMeta,
    episodes: int,
    target_return: float,
    seed: int,
    eval_round: int = 0,
) -> np.ndarray:
    """Run episodes in lockstep as one forward batch per environment step.

    Inference has no batch-coupled operations, so per-episode returns are
    identical to running eval_rollout one episode at a time (same seeds).
    """
    n = model.cfg.context_len
    envs = [make_env(meta) for _ in range(episodes)]
    states = [
        [env.reset(sub_rng(seed, EVAL_TAG, eval_round * 1_000_003 + ep))]
        for ep, env in enumerate(envs)
    ]
    rtgs = [[target_return] for _ in range(episodes)]
    acts: list[list] = [[] for _ in range(episodes)]
    totals = np.zeros(episodes)
    alive = list(range(episodes))
    horizon = min(max(env.max_len for env in envs), model.cfg.max_episode_len)
    discrete = meta.action_space == "discrete"
    for _ in range(horizon):
        if not alive:
            break
        b = len(alive)
        actions = np.zeros((b, n, meta.action_dim))
        rtg = np.zeros((b, n, 1))
        obs = np.zeros((b, n, meta.state_dim))
        for row, ep in enumerate(alive):
            length = len(states[ep])
            take = min(length, n)
            for k in range(take):
                idx = length - take + k
                pos = n - take + k
                obs[row, pos] = (states[ep][idx] - meta.state_mean) / meta.state_std
                rtg[row, pos, 0] = rtgs[ep][idx] / meta.rtg_scale
                if idx >= 1:
                    a_prev = acts[ep][idx - 1]
                    if discrete:
                        actions[row, pos, int(a_prev)] = 1.0
                    else:
                        actions[row, pos] = a_prev
        with no_grad():
            out = model.forward(actions, rtg, obs, training=False)
        last = out.data[:, -1]
        next_alive = []
        for row, ep in enumerate(alive):
            action = int(np.argmax(last[row])) if discrete else last[row]
            state, reward, done = envs[ep].step(action)
            totals[ep] += reward
            acts[ep].append(action)
            states[ep].append(state)
            rtgs[ep].append(rtgs[ep][-1] - reward)
            if not done:
                next_alive.append(ep)
        alive = next_alive
    return totals


def evaluate(
    model_or_policy,
    meta: DatasetMeta,
    episodes: int,
    target_return: float,
    seed: int,
    eval_round: int = 0,
    context_len: int | None = None,
) -> dict:
    """Mean/std of raw and normalized scores over fresh episodes."""
    if isinstance(model_or_policy, DecisionModel):
        raws = rollout_batch(model_or_policy, meta, episodes, target_return,
                             seed, eval_round)
    else:
        if context_len is None:
            raise ContractError("policy evaluation needs an explicit context_len")
        env = make_env(meta)
        raws = np.asarray([
            eval_rollout(
                model_or_policy, env, target_return, meta, context_len,
                sub_rng(seed, EVAL_TAG, eval_round * 1_000_003 + ep),
            )
            for ep in range(episodes)
        ])
    norms = np.asarray([normalized_score(r, meta) for r in raws])
    return {
        "raw_mean": float(raws.mean()),
        "raw_std": float(raws.std()),
        "normalized_mean": float(norms.mean()),
        "normalized_std": float(norms.std()),
        "episodes": episodes,
    }


# -- full loop -------------------------------------------------------------------------


def train_and_evaluate(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset: TrajectoryDataset,
    out_dir,
    resume_from: str | None = None,
    quiet: bool = False,
) -> dict:
    """Run the supervised loop with periodic rollout evaluation; write
    metrics JSONL, periodic checkpoints, and a final folded checkpoint."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    model = DecisionModel(model_cfg, sub_rng(train_cfg.seed, INIT_TAG))
    model.ptbn_state.t_p = train_cfg.blend_budget
    optim = AdamW(model.named_parameters(), train_cfg.learning_rate,
                  train_cfg.weight_decay)
    start_step = 0
    if resume_from is not None:
        arrays, folded = load_checkpoint(resume_from)
        if folded:
            raise ContractError("cannot resume training from a folded checkpoint")
        model.load_arrays(arrays, folded=False)
        opt_arrays, _ = load_checkpoint(str(resume_from) + ".optim")
        optim.load_arrays(opt_arrays)
        start_step = int(opt_arrays["adam.step"][0])

    target_return = train_cfg.target_return_multiplier * dataset.meta.expert_score
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    rows = []
    window_losses: list[float] = []
    eval_round = 0
    mode = "a" if resume_from else "w"
    best = -float("inf")

    def emit(row: dict) -> None:
        rows.append(row)
        with open(metrics_path, mode_holder[0]) as f:
            f.write(json.dumps(row) + "\n")
        mode_holder[0] = "a"
        if not quiet:
            bits = " ".join(
                f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                for k, v in row.items()
            )
            print(bits, flush=True)

    mode_holder = [mode]
    for step in range(start_step, train_cfg.total_steps):
        batch = dataset.sample_batch(
            sub_rng(train_cfg.seed, DATA_TAG, step), train_cfg.batch_size,
            model_cfg.context_len,
        )
        m = train_step(model, batch, optim, train_cfg, step)
        window_losses.append(m["loss"])
        done_steps = step + 1
        if done_steps % train_cfg.eval_every == 0 or done_steps == train_cfg.total_steps:
            ev = evaluate(model, dataset.meta, train_cfg.eval_episodes,
                          target_return, train_cfg.seed, eval_round)
            eval_round += 1
            row = {
                "step": done_steps,
                "loss": float(np.mean(window_losses)),
                "theta": theta_schedule(model.ptbn_state.t_p, done_steps),
                "lr": m["lr"],
                "spike_rate_mean": m["spike_rate_mean"],
                "eval_score_raw": ev["raw_mean"],
                "eval_score_normalized": ev["normalized_mean"],
            }
            emit(row)
            window_losses.clear()
            ckpt = os.path.join(out_dir, f"ckpt_{done_steps}.ckpt")
            model.save(ckpt)
            save_checkpoint(ckpt + ".optim", optim.state_arrays())
            if ev["normalized_mean"] > best:
                best = ev["normalized_mean"]
                model.save(os.path.join(out_dir, "best.ckpt"))
                with open(os.path.join(out_dir, "best.json"), "w") as f:
                    json.dump({"step": done_steps, "normalized": best}, f)

    model.ptbn_state.t_cur = train_cfg.total_steps
    final_path = os.path.join(out_dir, "final.ckpt")
    model.save(final_path)
    save_checkpoint(final_path + ".optim", optim.state_arrays())
    report: dict = {
        "steps": train_cfg.total_steps,
        "wall_time_s": time.time() - t0,
        "metrics_path": metrics_path,
        "final_checkpoint": final_path,
        "best_checkpoint": os.path.join(out_dir, "best.ckpt") if best > -float("inf") else None,
        "best_normalized": best,
    }
    if model.is_spiking:
        folded = model.fold()
        folded_path = os.path.join(out_dir, "final_folded.ckpt")
        folded.save(folded_path)
        report["folded_checkpoint"] = folded_path
        ev = evaluate(folded, dataset.meta, train_cfg.final_eval_episodes,
                      target_return, train_cfg.seed, eval_round=10_000)
    else:
        ev = evaluate(model, dataset.meta, train_cfg.final_eval_episodes,
                      target_return, train_cfg.seed, eval_round=10_000)
    report["final_eval"] = ev
    report["final_normalized"] = ev["normalized_mean"]
    report["best_normalized"] = max(best, ev["normalized_mean"])
    report["rows"] = rows
    return report
