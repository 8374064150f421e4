"""Decision-transformer assembly: spiking blocks or the real-valued reference.

Token windows of (previous action, return-to-go, state) triples are embedded,
repeated along the SNN time axis, passed through decoder blocks with
membrane-shortcut residuals, mean-pooled over time, and mapped to action
predictions.  In spiking blocks every matrix operand is a spike tensor:
each sublayer opens with neuron(norm(.)) on the real-valued residual, and
every linear output passes a progressive norm before rejoining the stream.

The "vla" mode swaps progressive norms for plain channel norms, spiking
attention for softmax attention, and drops the time axis; it is the ANN
baseline used for score, parameter, and energy comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttnConfig,
    PositionalBias,
    pssa_attention,
    sssa_attention,
    tssa_attention,
    vla_attention,
)
from .neurons import LifParams, SpikingLayer
from .norm import (
    LayerNorm,
    NormParams,
    ProgressiveNorm,
    PtbnState,
    fold_into_linear,
)
from .serialize import load_checkpoint, save_checkpoint
from .tensor import ContractError, DimensionError, Tensor, repeat_axis, tanh


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are sized for minutes-scale
    CPU training."""

    state_dim: int
    action_dim: int
    action_space: str = "discrete"
    n_blocks: int = 2
    d_model: int = 64
    context_len: int = 20
    snn_timesteps: int = 4
    n_heads: int = 1
    attn_mode: str = "pssa"
    window: int = 8
    mlp_ratio: int = 4
    max_episode_len: int = 1000
    attn_scale: float = 0.125
    alpha: float = 1.0
    norm_momentum: float = 0.1
    norm_epsilon: float = 1e-5
    pool_over_time: bool = True
    readout_mode: str = "mean"
    lif_u_th: float = 1.0
    lif_u_reset: float = 0.0
    lif_gamma: float = 0.5
    surrogate_width: float = 2.0
    surrogate: str = "atan"

    def __post_init__(self):
        if self.n_blocks < 1 or self.context_len < 1 or self.snn_timesteps < 1:
            raise ContractError("n_blocks, context_len and snn_timesteps must be >= 1")
        if self.action_space not in ("continuous", "discrete"):
            raise ContractError(f"unknown action_space {self.action_space!r}")
        if self.readout_mode not in ("mean", "norm_mean"):
            raise ContractError(f"unknown readout_mode {self.readout_mode!r}")
        if self.attn_mode == "vla" and self.snn_timesteps != 1:
            # the reference model has no SNN time axis
            object.__setattr__(self, "snn_timesteps", 1)
        if self.attn_mode != "pssa":
            # window only matters for pssa; keep it within bounds elsewhere
            object.__setattr__(self, "window", min(self.window, self.context_len))
        AttnConfig(
            self.d_model, self.n_heads, self.context_len, self.snn_timesteps,
            self.attn_mode, self.window, self.attn_scale,
        )

    @property
    def token_dim(self) -> int:
        return self.action_dim + 1 + self.state_dim


class Linear:
    """y = x W + b on the trailing axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, w_scale=0.02):
        self.w = Tensor(rng.normal(0.0, w_scale, size=(d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    @staticmethod
    def from_arrays(w: np.ndarray, b: np.ndarray) -> "Linear":
        lin = Linear.__new__(Linear)
        lin.w = Tensor(w)
        lin.b = Tensor(b)
        return lin


def repeat_temporal(x: Tensor, t: int) -> Tensor:
    """(B, N, D) -> (B, N, T, D) with every timestep slice equal."""
    return repeat_axis(x, 2, t)


def temporal_readout(x: Tensor, mode: str = "mean") -> Tensor:
    """(B, N, T, D) -> (B, N, D) by pooling over the time axis."""
    if mode == "mean":
        return x.mean(axis=2)
    if mode == "norm_mean":
        mu = x.mean(axis=-1, keepdims=True)
        d = x - mu
        var = (d * d).mean(axis=-1, keepdims=True)
        return (d * ((var + 1e-5) ** -0.5)).mean(axis=2)
    raise ContractError(f"unknown readout mode {mode!r}")


def qkv_project(x: Tensor, weights, norms, neurons, training: bool,
                relaxed: bool = False, stats: dict | None = None):
    """Spike Q/K/V generation: neuron(norm(x W)) per projection."""
    out = []
    for lin, nrm, sn in zip(weights, norms, neurons):
        out.append(sn(nrm(lin(x), training), relaxed=relaxed, stats=stats))
    return tuple(out)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(B, N, T, D) -> (B*H, N, T, C)."""
    if n_heads == 1:
        return x
    b, n, t, d = x.shape
    c = d // n_heads
    return x.reshape(b, n, t, n_heads, c).transpose(0, 3, 1, 2, 4).reshape(
        b * n_heads, n, t, c
    )


def _join_heads(x: Tensor, n_heads: int) -> Tensor:
    if n_heads == 1:
        return x
    bh, n, t, c = x.shape
    b = bh // n_heads
    return x.reshape(b, n_heads, n, t, c).transpose(0, 2, 3, 1, 4).reshape(
        b, n, t, n_heads * c
    )


class SpikeAttentionSublayer:
    """neuron(norm(.)) entry, spike Q/K/V projections, one spiking
    attention mode, and a linear + norm back onto the residual stream."""

    def __init__(self, cfg: ModelConfig, state: PtbnState, rng, name: str):
        d = cfg.d_model
        self.cfg = cfg
        self.name = name
        lif = LifParams(cfg.lif_u_th, cfg.lif_u_reset, cfg.lif_gamma,
                        cfg.surrogate_width, cfg.surrogate)
        mk_norm = lambda nm: ProgressiveNorm(
            NormParams.create(d, cfg.alpha, cfg.lif_u_th, cfg.norm_epsilon,
                              cfg.norm_momentum,
                              stat_shape=None if cfg.pool_over_time else (cfg.snn_timesteps, d)),
            state, cfg.pool_over_time, name=f"{name}.{nm}",
        )
        self.norm_in = mk_norm("norm_in")
        self.sn_in = SpikingLayer(lif, name=f"{name}.sn_in")
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.norm_q = mk_norm("norm_q")
        self.norm_k = mk_norm("norm_k")
        self.norm_v = mk_norm("norm_v")
        self.sn_q = SpikingLayer(lif, name=f"{name}.sn_q")
        self.sn_k = SpikingLayer(lif, name=f"{name}.sn_k")
        self.sn_v = SpikingLayer(lif, name=f"{name}.sn_v")
        self.wo = Linear(d, d, rng)
        self.norm_o = mk_norm("norm_o")
        self.folded = False
        self.bias = (
            PositionalBias(cfg.context_len, cfg.window, rng)
            if cfg.attn_mode == "pssa"
            else None
        )

    def __call__(self, x: Tensor, training: bool, relaxed=False,
                 stats=None, energy_stats=None) -> Tensor:
        cfg = self.cfg
        s1 = self.sn_in(self.norm_in(x, training), relaxed=relaxed, stats=stats)
        if self.folded:
            q = self.sn_q(self.wq(s1), relaxed=relaxed, stats=stats)
            k = self.sn_k(self.wk(s1), relaxed=relaxed, stats=stats)
            v = self.sn_v(self.wv(s1), relaxed=relaxed, stats=stats)
        else:
            q, k, v = qkv_project(
                s1, (self.wq, self.wk, self.wv),
                (self.norm_q, self.norm_k, self.norm_v),
                (self.sn_q, self.sn_k, self.sn_v),
                training, relaxed, stats,
            )
        qh, kh, vh = (_split_heads(t, cfg.n_heads) for t in (q, k, v))
        if cfg.attn_mode == "sssa":
            attn = sssa_attention(qh, kh, vh, cfg.attn_scale)
        elif cfg.attn_mode == "tssa":
            attn = tssa_attention(qh, kh, vh, cfg.attn_scale)
        else:
            attn = pssa_attention(qh, kh, vh, self.bias.effective(), cfg.attn_scale)
        if energy_stats is not None:
            self._record_energy(qh, kh, vh, attn, energy_stats)
        out = _join_heads(attn, cfg.n_heads)
        if self.folded:
            return self.wo(out)
        return self.norm_o(self.wo(out), training)

    def _record_energy(self, qh: Tensor, kh: Tensor, vh: Tensor, attn: Tensor,
                       rec: dict) -> None:
        """Exact accumulate-event counts for the spiking attention stages,
        measured from the binary activations of this forward pass."""
        from .attention import causal_mask

        cfg = self.cfg
        bh, n, t, c = qh.shape
        qm = qh.data.reshape(bh, n, t * c)
        km = kh.data.reshape(bh, n, t * c)
        vm = vh.data.reshape(bh, n, t * c)
        out_density = float((attn.data != 0).mean())
        if cfg.attn_mode == "sssa":
            tril = causal_mask(n)
            score_ac = av_ac = 0.0
            for ts in range(t):
                qs = qh.data[:, :, ts, :]
                ks = kh.data[:, :, ts, :]
                amap = (qs @ ks.transpose(0, 2, 1)) * tril
                score_ac += amap.sum()
                vsum = vh.data[:, :, ts, :].sum(axis=-1)
                av_ac += ((amap != 0) * vsum[:, None, :]).sum()
            stage = {"score_ac": float(score_ac), "av_ac": float(av_ac)}
        elif cfg.attn_mode == "tssa":
            tril = causal_mask(n)
            amap = (qm @ km.transpose(0, 2, 1)) * tril
            vsum = vm.sum(axis=-1)
            av_ac = ((amap != 0) * vsum[:, None, :]).sum()
            stage = {"score_ac": float(amap.sum()), "av_ac": float(av_ac)}
        else:
            kv = km * vm
            kvsum = kv.sum(axis=-1)
            live = (self.bias.effective().data != 0).astype(np.float64)
            p_ac = (live @ kvsum.transpose(1, 0)).sum()
            stage = {"score_ac": float(p_ac), "av_ac": 0.0}
        stage["out_density"] = out_density
        rec[f"{self.name}.attn"] = stage

    def fold(self) -> None:
        """Merge each linear-then-norm pair; entry norm stays as an
        inference-time affine on the real-valued residual."""
        for lin, nrm in ((self.wq, self.norm_q), (self.wk, self.norm_k),
                        (self.wv, self.norm_v), (self.wo, self.norm_o)):
            w2, b2 = fold_into_linear(lin.w, lin.b, nrm.params, nrm.state)
            lin.w, lin.b = Tensor(w2), Tensor(b2)
        self.folded = True


class SpikeMlpSublayer:
    """neuron(norm(.)) entry, expand linear -> norm -> neuron -> project
    linear -> norm."""

    def __init__(self, cfg: ModelConfig, state: PtbnState, rng, name: str):
        d, hd = cfg.d_model, cfg.d_model * cfg.mlp_ratio
        lif = LifParams(cfg.lif_u_th, cfg.lif_u_reset, cfg.lif_gamma,
                        cfg.surrogate_width, cfg.surrogate)
        mk_norm = lambda nm, width: ProgressiveNorm(
            NormParams.create(width, cfg.alpha, cfg.lif_u_th, cfg.norm_epsilon,
                              cfg.norm_momentum,
                              stat_shape=None if cfg.pool_over_time else (cfg.snn_timesteps, width)),
            state, cfg.pool_over_time, name=f"{name}.{nm}",
        )
        self.name = name
        self.folded = False
        self.norm_in = mk_norm("norm_in", d)
        self.sn_in = SpikingLayer(lif, name=f"{name}.sn_in")
        self.w1 = Linear(d, hd, rng)
        self.norm_h = mk_norm("norm_h", hd)
        self.sn_h = SpikingLayer(lif, name=f"{name}.sn_h")
        self.w2 = Linear(hd, d, rng)
        self.norm_out = mk_norm("norm_out", d)

    def __call__(self, x: Tensor, training: bool, relaxed=False, stats=None) -> Tensor:
        s = self.sn_in(self.norm_in(x, training), relaxed=relaxed, stats=stats)
        if self.folded:
            h = self.sn_h(self.w1(s), relaxed=relaxed, stats=stats)
            return self.w2(h)
        h = self.sn_h(self.norm_h(self.w1(s), training), relaxed=relaxed, stats=stats)
        return self.norm_out(self.w2(h), training)

    def fold(self) -> None:
        for lin, nrm in ((self.w1, self.norm_h), (self.w2, self.norm_out)):
            w2, b2 = fold_into_linear(lin.w, lin.b, nrm.params, nrm.state)
            lin.w, lin.b = Tensor(w2), Tensor(b2)
        self.folded = True


class SpikingBlock:
    def __init__(self, cfg: ModelConfig, state: PtbnState, rng, name: str):
        self.attn = SpikeAttentionSublayer(cfg, state, rng, f"{name}.attn")
        self.mlp = SpikeMlpSublayer(cfg, state, rng, f"{name}.mlp")

    def __call__(self, x, training, relaxed=False, stats=None, energy_stats=None):
        y = x + self.attn(x, training, relaxed, stats, energy_stats)
        return y + self.mlp(y, training, relaxed, stats)


def gelu(x: Tensor) -> Tensor:
    inner = (x + (x * x * x) * 0.044715) * 0.7978845608028654
    return (x * 0.5) * (tanh(inner) + 1.0)


class VanillaBlock:
    """Pre-norm transformer block used by the reference model (no spikes,
    no time axis)."""

    def __init__(self, cfg: ModelConfig, rng, name: str):
        d, hd = cfg.d_model, cfg.d_model * cfg.mlp_ratio
        self.cfg = cfg
        self.name = name
        self.ln1 = LayerNorm.create(d, cfg.norm_epsilon)
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)
        self.ln2 = LayerNorm.create(d, cfg.norm_epsilon)
        self.w1 = Linear(d, hd, rng)
        self.w2 = Linear(hd, d, rng)

    def __call__(self, x, training, relaxed=False, stats=None, energy_stats=None):
        h = self.ln1(x)
        q, k, v = self.wq(h), self.wk(h), self.wv(h)
        nh = self.cfg.n_heads
        if nh > 1:
            b, n, d = q.shape
            c = d // nh
            qh, kh, vh = (
                t.reshape(b, n, nh, c).transpose(0, 2, 1, 3).reshape(b * nh, n, c)
                for t in (q, k, v)
            )
            attn = vla_attention(qh, kh, vh)
            attn = attn.reshape(b, nh, n, c).transpose(0, 2, 1, 3).reshape(b, n, d)
        else:
            attn = vla_attention(q, k, v)
        y = x + self.wo(attn)
        z = self.w2(gelu(self.w1(self.ln2(y))))
        return y + z


class DecisionModel:
    """Full network plus parameter registry and checkpoint support."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.folded = False
        self.is_spiking = cfg.attn_mode != "vla"
        self.ptbn_state = PtbnState(t_p=1, t_cur=0)  # budget set by the trainer
        self.embed = Linear(cfg.token_dim, cfg.d_model, rng)
        self.pos = Tensor(rng.normal(0, 0.02, size=(cfg.context_len, cfg.d_model)),
                          requires_grad=True)
        if self.is_spiking:
            self.blocks = [
                SpikingBlock(cfg, self.ptbn_state, rng, f"block{i}")
                for i in range(cfg.n_blocks)
            ]
            self.ln_f = None
        else:
            self.blocks = [VanillaBlock(cfg, rng, f"block{i}") for i in range(cfg.n_blocks)]
            self.ln_f = LayerNorm.create(cfg.d_model, cfg.norm_epsilon)
        self.head = Linear(cfg.d_model, cfg.action_dim, rng)

    # -- forward ---------------------------------------------------------------

    def embed_tokens(self, actions: Tensor, rtg: Tensor, states: Tensor) -> Tensor:
        """Per token: concat [prev_action; return-to-go; state], embed, add
        learned position."""
        from .tensor import concat

        b, n = actions.shape[0], actions.shape[1]
        if n != self.cfg.context_len:
            raise ContractError(
                f"window length {n} != configured context_len {self.cfg.context_len}"
            )
        if actions.shape[-1] != self.cfg.action_dim or states.shape[-1] != self.cfg.state_dim:
            raise ContractError(
                f"token dims (action {actions.shape[-1]}, state {states.shape[-1]}) "
                f"disagree with config ({self.cfg.action_dim}, {self.cfg.state_dim})"
            )
        tokens = concat([actions, rtg, states], axis=-1)
        return self.embed(tokens) + self.pos

    def forward(
        self,
        actions,
        rtg,
        states,
        training: bool = False,
        relaxed: bool = False,
        stats: dict | None = None,
        energy_stats: dict | None = None,
    ) -> Tensor:
        """actions (B,N,A), rtg (B,N,1), states (B,N,S) -> (B,N,A)."""
        if self.folded and training:
            raise ContractError("folded models are inference-only")
        actions, rtg, states = (
            t if isinstance(t, Tensor) else Tensor(t) for t in (actions, rtg, states)
        )
        x = self.embed_tokens(actions, rtg, states)
        if self.is_spiking:
            x = repeat_temporal(x, self.cfg.snn_timesteps)
            for blk in self.blocks:
                x = blk(x, training, relaxed, stats, energy_stats)
            x = temporal_readout(x, self.cfg.readout_mode)
        else:
            for blk in self.blocks:
                x = blk(x, training, relaxed, stats, energy_stats)
            x = self.ln_f(x)
        return self.predict_action(x)

    __call__ = forward

    def predict_action(self, readout: Tensor) -> Tensor:
        out = self.head(readout)
        if self.cfg.action_space == "continuous":
            out = tanh(out)
        return out

    # -- parameter registry ------------------------------------------------------

    def _modules(self):
        for i, blk in enumerate(self.blocks):
            yield f"block{i}", blk

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {"embed.w": self.embed.w, "embed.b": self.embed.b,
                                     "pos": self.pos}
        for name, blk in self._modules():
            if isinstance(blk, SpikingBlock):
                a, m = blk.attn, blk.mlp
                subs = [
                    (f"{name}.attn.norm_in", a.norm_in), (f"{name}.attn.norm_q", a.norm_q),
                    (f"{name}.attn.norm_k", a.norm_k), (f"{name}.attn.norm_v", a.norm_v),
                    (f"{name}.attn.norm_o", a.norm_o),
                    (f"{name}.mlp.norm_in", m.norm_in), (f"{name}.mlp.norm_h", m.norm_h),
                    (f"{name}.mlp.norm_out", m.norm_out),
                ]
                lins = [
                    (f"{name}.attn.wq", a.wq), (f"{name}.attn.wk", a.wk),
                    (f"{name}.attn.wv", a.wv), (f"{name}.attn.wo", a.wo),
                    (f"{name}.mlp.w1", m.w1), (f"{name}.mlp.w2", m.w2),
                ]
                for nm, lin in lins:
                    params[f"{nm}.w"] = lin.w
                    params[f"{nm}.b"] = lin.b
                if self.folded:
                    # only the sublayer-entry norms survive folding (they
                    # act on the residual, which has no preceding linear)
                    subs = [(f"{name}.attn.norm_in", a.norm_in),
                            (f"{name}.mlp.norm_in", m.norm_in)]
                for nm, nrm in subs:
                    params[f"{nm}.lam"] = nrm.params.lam
                    params[f"{nm}.beta"] = nrm.params.beta
                if a.bias is not None:
                    params[f"{name}.attn.pos_bias"] = a.bias.p
            else:
                for nm, lin in [
                    (f"{name}.wq", blk.wq), (f"{name}.wk", blk.wk),
                    (f"{name}.wv", blk.wv), (f"{name}.wo", blk.wo),
                    (f"{name}.w1", blk.w1), (f"{name}.w2", blk.w2),
                ]:
                    params[f"{nm}.w"] = lin.w
                    params[f"{nm}.b"] = lin.b
                for nm, ln in [(f"{name}.ln1", blk.ln1), (f"{name}.ln2", blk.ln2)]:
                    params[f"{nm}.lam"] = ln.params.lam
                    params[f"{nm}.beta"] = ln.params.beta
        if self.ln_f is not None:
            params["ln_f.lam"] = self.ln_f.params.lam
            params["ln_f.beta"] = self.ln_f.params.beta
        params["head.w"] = self.head.w
        params["head.b"] = self.head.b
        return params

    def _norm_layers(self):
        for name, blk in self._modules():
            if isinstance(blk, SpikingBlock):
                a, m = blk.attn, blk.mlp
                yield from [
                    (f"{name}.attn.norm_in", a.norm_in), (f"{name}.attn.norm_q", a.norm_q),
                    (f"{name}.attn.norm_k", a.norm_k), (f"{name}.attn.norm_v", a.norm_v),
                    (f"{name}.attn.norm_o", a.norm_o),
                    (f"{name}.mlp.norm_in", m.norm_in), (f"{name}.mlp.norm_h", m.norm_h),
                    (f"{name}.mlp.norm_out", m.norm_out),
                ]

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Everything a checkpoint stores: parameters plus norm buffers."""
        arrays = {k: v.data for k, v in self.named_parameters().items()}
        if self.is_spiking and not self.folded:
            for nm, nrm in self._norm_layers():
                arrays[f"{nm}.running_mean"] = nrm.params.running_mean
                arrays[f"{nm}.running_var"] = nrm.params.running_var
        if self.is_spiking and self.folded:
            for name, blk in self._modules():
                for nm, nrm in [(f"{name}.attn.norm_in", blk.attn.norm_in),
                                (f"{name}.mlp.norm_in", blk.mlp.norm_in)]:
                    arrays[f"{nm}.running_mean"] = nrm.params.running_mean
                    arrays[f"{nm}.running_var"] = nrm.params.running_var
        return arrays

    def param_count(self) -> int:
        return sum(v.size for v in self.named_parameters().values())

    # -- folding -------------------------------------------------------------------

    def fold(self) -> "DecisionModel":
        """Return an inference-only copy with norms merged into linears."""
        if not self.is_spiking:
            raise ContractError("only spiking models fold; the reference keeps LayerNorm")
        if self.ptbn_state.theta > 0:
            raise ContractError(
                f"cannot fold at theta={self.ptbn_state.theta:.4f} > 0"
            )
        clone = self.copy()
        for blk in clone.blocks:
            blk.attn.fold()
            blk.mlp.fold()
        clone.folded = True
        return clone

    def copy(self) -> "DecisionModel":
        rng = np.random.default_rng(0)
        clone = DecisionModel(self.cfg, rng)
        clone.ptbn_state.t_p = self.ptbn_state.t_p
        clone.ptbn_state.t_cur = self.ptbn_state.t_cur
        src, dst = self.named_parameters(), clone.named_parameters()
        for k in src:
            dst[k].data[...] = src[k].data
        if self.is_spiking:
            for (nm, s_nrm), (_, d_nrm) in zip(self._norm_layers(), clone._norm_layers()):
                d_nrm.params.running_mean[...] = s_nrm.params.running_mean
                d_nrm.params.running_var[...] = s_nrm.params.running_var
        if self.folded:
            clone.folded = True
            for blk in clone.blocks:
                blk.attn.folded = True
                blk.mlp.folded = True
        return clone

    # -- checkpoints ------------------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, self.state_arrays(), folded=self.folded)

    def load_arrays(self, arrays: dict[str, np.ndarray], folded: bool) -> None:
        if folded and not self.folded:
            raise ContractError("folded checkpoint loaded into unfolded model")
        params = self.named_parameters()
        for k, t in params.items():
            if k not in arrays:
                raise ContractError(f"checkpoint missing parameter {k}")
            if arrays[k].shape != t.data.shape:
                raise DimensionError(
                    f"checkpoint {k}: shape {arrays[k].shape} != {t.data.shape}"
                )
            t.data[...] = arrays[k]
        if self.is_spiking:
            for nm, nrm in self._norm_layers():
                key = f"{nm}.running_mean"
                if key in arrays:
                    nrm.params.running_mean[...] = arrays[key]
                    nrm.params.running_var[...] = arrays[f"{nm}.running_var"]


def load_model(path, cfg: ModelConfig) -> DecisionModel:
    arrays, folded = load_checkpoint(path)
    model = DecisionModel(cfg, np.random.default_rng(0))
    if folded:
        model.ptbn_state.t_cur = model.ptbn_state.t_p  # theta = 0
        model = model.fold()
    model.load_arrays(arrays, folded)
    return model
