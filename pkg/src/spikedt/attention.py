"""Causal self-attention variants over spike tensors, with op accounting.

All spiking modes take binary Q, K, V of shape (B, N, T, C) where N is the
token axis, T the SNN time axis, and C the per-head channel width (callers
fold heads into the batch axis).  There is no softmax and no division on
the spiking paths; attention maps are integer co-activation counts.

  * stepwise ("sssa"):   mask(Q^t K^t') V^t independently per timestep.
  * temporal ("tssa"):   timestep slices concatenated along channels first,
                         giving one shared N x N map per head.
  * positional ("pssa"): windowed learnable pair bias, element-wise
                         gathering of K (*) V, gated by Q; linear in N.
  * vanilla ("vla"):     real-valued softmax(QK'/sqrt(dk))V reference.

Operation counts (scalar multiplies and adds) have closed forms per mode,
cross-checked against an instrumented loop implementation that doubles as
the naive reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import ContractError, DimensionError, Tensor
from .tensor import exp as texp

MODES = ("vla", "sssa", "tssa", "pssa")


@dataclass(frozen=True)
class AttnConfig:
    """Shape and mode parameters for one attention layer."""

    d_model: int
    n_heads: int
    context_len: int
    snn_timesteps: int
    mode: str
    window: int = 8
    attn_scale: float = 0.125

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.d_model % self.n_heads != 0:
            raise DimensionError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not (1 <= self.window <= self.context_len):
            raise ContractError(
                f"window {self.window} outside [1, context_len={self.context_len}]"
            )
        if self.snn_timesteps < 1:
            raise ContractError(f"snn_timesteps must be >= 1, got {self.snn_timesteps}")


@lru_cache(maxsize=32)
def causal_mask(n: int) -> np.ndarray:
    """Lower-triangular multiplicative mask (1 where j <= i)."""
    return np.tril(np.ones((n, n)))


@lru_cache(maxsize=32)
def window_causal_mask(n: int, s: int) -> np.ndarray:
    """1 where 0 <= i - j < s, else 0."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return ((i - j >= 0) & (i - j < s)).astype(np.float64)


class PositionalBias:
    """Learnable pair bias, nonzero only inside the causal window."""

    def __init__(self, context_len: int, window: int, rng: np.random.Generator):
        if window < 1:
            raise ContractError(f"window must be >= 1, got {window}")
        self.context_len = context_len
        self.window = window
        mask = window_causal_mask(context_len, window)
        init = rng.uniform(-0.02, 0.02, size=(context_len, context_len)) * mask
        self.p = Tensor(init, requires_grad=True)

    def effective(self) -> Tensor:
        """Bias with positions outside the window hard-zeroed; gradients
        only reach in-window entries."""
        return self.p * Tensor(window_causal_mask(self.context_len, self.window))


def _require_binary(name: str, t: Tensor) -> None:
    d = t.data
    if not np.all((d == 0.0) | (d == 1.0)):
        raise ContractError(f"{name} must be a binary spike tensor")


def _merge_time(x: Tensor) -> Tensor:
    """(B, N, T, C) -> (B, N, T*C): timestep slices concatenated along
    channels (row-major flattening keeps slices contiguous)."""
    b, n, t, c = x.shape
    return x.reshape(b, n, t * c)


def _split_time(x: Tensor, t: int, c: int) -> Tensor:
    b, n, _ = x.shape
    return x.reshape(b, n, t, c)


def sssa_attention(
    q: Tensor, k: Tensor, v: Tensor, attn_scale: float = 0.125,
    check_binary: bool = False,
) -> Tensor:
    """Per-timestep causal spike attention: out^t = mask(Q^t K^t')V^t."""
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if check_binary:
        for name, t in (("Q", q), ("K", k), ("V", v)):
            _require_binary(name, t)
    b, n, t_steps, c = q.shape
    qm = q.transpose(0, 2, 1, 3).reshape(b * t_steps, n, c)
    km = k.transpose(0, 2, 1, 3).reshape(b * t_steps, n, c)
    vm = v.transpose(0, 2, 1, 3).reshape(b * t_steps, n, c)
    scores = qm @ km.transpose(0, 2, 1)
    masked = scores * Tensor(causal_mask(n))
    out = (masked @ vm) * attn_scale
    return out.reshape(b, t_steps, n, c).transpose(0, 2, 1, 3)


def tssa_attention(
    q: Tensor, k: Tensor, v: Tensor, attn_scale: float = 0.125,
    check_binary: bool = False,
) -> Tensor:
    """Temporally concatenated causal spike attention: one N x N map of
    co-activation counts in [0, T*C] shared by all timesteps."""
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if check_binary:
        for name, t in (("Q", q), ("K", k), ("V", v)):
            _require_binary(name, t)
    b, n, t_steps, c = q.shape
    qm, km, vm = _merge_time(q), _merge_time(k), _merge_time(v)
    scores = qm @ km.transpose(0, 2, 1)
    masked = scores * Tensor(causal_mask(n))
    out = (masked @ vm) * attn_scale
    return _split_time(out, t_steps, c)


def pssa_attention(
    q: Tensor, k: Tensor, v: Tensor, bias_eff: Tensor,
    attn_scale: float = 0.125, check_binary: bool = False,
) -> Tensor:
    """Windowed positional spike attention on the time-concatenated layout:

        out_i = scale * Q_i (*) sum_{0 <= i-j < S} P_ij (K_j (*) V_j)

    bias_eff must already be zero outside the causal window.
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if check_binary:
        for name, t in (("Q", q), ("K", k), ("V", v)):
            _require_binary(name, t)
    b, n, t_steps, c = q.shape
    if bias_eff.shape != (n, n):
        raise DimensionError(f"bias shape {bias_eff.shape} != ({n}, {n})")
    qm, km, vm = _merge_time(q), _merge_time(k), _merge_time(v)
    kv = km * vm
    ctx = bias_eff @ kv
    out = (qm * ctx) * attn_scale
    return _split_time(out, t_steps, c)


def vla_attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = True) -> Tensor:
    """Real-valued softmax attention (the non-spiking reference path)."""
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"Q/K/V shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    b, n, c = q.shape
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(c))
    if causal:
        neg = (1.0 - causal_mask(n)) * -1e30
        scores = scores + Tensor(neg)
    m = scores.max(axis=-1, keepdims=True).detach()
    e = texp(scores - m)
    attn = e / e.sum(axis=-1, keepdims=True)
    return attn @ v


# -- operation accounting --------------------------------------------------------
#
# Counting conventions (shared by the closed forms and the instrumented
# loops): a length-k dot product is k multiplies and k-1 adds; accumulating
# m terms costs m-1 adds; masked-out entries are never computed; exp() is
# neither an add nor a multiply.


@dataclass(frozen=True)
class OpCount:
    muls: int
    adds: int

    @property
    def total(self) -> int:
        return self.muls + self.adds

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(self.muls + other.muls, self.adds + other.adds)


def causal_pairs(n: int) -> int:
    return n * (n + 1) // 2


def window_pairs(n: int, s: int) -> int:
    if n >= s:
        return n * s - s * (s - 1) // 2
    return causal_pairs(n)


def count_attention_ops(cfg: AttnConfig, batch: int = 1) -> OpCount:
    """Exact scalar mul/add counts for one attention application."""
    h = cfg.n_heads
    c = cfg.d_model // h
    n = cfg.context_len
    t = cfg.snn_timesteps
    d = cfg.d_model
    pc = causal_pairs(n)
    if cfg.mode == "sssa":
        muls = h * t * (2 * pc * c) + n * t * d
        adds = h * t * (pc * (c - 1) + (pc - n) * c)
    elif cfg.mode == "tssa":
        tc = t * c
        muls = h * 2 * pc * tc + n * t * d
        adds = h * (pc * (tc - 1) + (pc - n) * tc)
    elif cfg.mode == "pssa":
        tc = t * c
        wp = window_pairs(n, cfg.window)
        muls = h * wp * tc + 3 * n * t * d
        adds = h * (wp - n) * tc
    else:  # vla (no time axis)
        muls = h * (2 * pc * c + 2 * pc)
        adds = h * (pc * (c - 1) + (pc - n) + (pc - n) * c)
    return OpCount(batch * muls, batch * adds)


class _Counter:
    __slots__ = ("muls", "adds")

    def __init__(self):
        self.muls = 0
        self.adds = 0


def instrumented_attention(
    mode: str,
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    n_heads: int = 1,
    window: int | None = None,
    bias: np.ndarray | None = None,
    attn_scale: float = 0.125,
) -> tuple[np.ndarray, OpCount]:
    """Literal loop implementation that counts every scalar multiply and
    add it executes.  Serves as both the runtime op counter and the naive
    reference for the fast paths."""
    ctr = _Counter()
    if mode == "vla":
        out = _loop_vla(q, k, v, n_heads, ctr)
    elif mode == "sssa":
        out = _loop_sssa(q, k, v, n_heads, attn_scale, ctr)
    elif mode == "tssa":
        out = _loop_tssa(q, k, v, n_heads, attn_scale, ctr)
    elif mode == "pssa":
        if bias is None or window is None:
            raise ContractError("pssa requires bias and window")
        out = _loop_pssa(q, k, v, n_heads, bias, window, attn_scale, ctr)
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return out, OpCount(ctr.muls, ctr.adds)


def _dot(a, b, ctr) -> float:
    acc = 0.0
    first = True
    for x, y in zip(a, b):
        ctr.muls += 1
        if first:
            acc = x * y
            first = False
        else:
            ctr.adds += 1
            acc += x * y
    return acc


def _loop_sssa(q, k, v, n_heads, scale, ctr):
    b, n, t_steps, d = q.shape
    c = d // n_heads
    out = np.zeros_like(q)
    for bi in range(b):
        for h in range(n_heads):
            sl = slice(h * c, (h + 1) * c)
            for t in range(t_steps):
                for i in range(n):
                    acc = np.zeros(c)
                    for j in range(i + 1):
                        a_ij = _dot(q[bi, i, t, sl], k[bi, j, t, sl], ctr)
                        term = np.empty(c)
                        for ci in range(c):
                            ctr.muls += 1
                            term[ci] = a_ij * v[bi, j, t, sl][ci]
                        if j == 0:
                            acc = term
                        else:
                            ctr.adds += c
                            acc = acc + term
                    for ci in range(c):
                        ctr.muls += 1
                        out[bi, i, t, h * c + ci] = acc[ci] * scale
    return out


def _merged(x, n_heads):
    """(B, N, T, D) -> per-head time-concatenated rows (B, H, N, T*C)."""
    b, n, t_steps, d = x.shape
    c = d // n_heads
    m = np.empty((b, n_heads, n, t_steps * c))
    for h in range(n_heads):
        m[:, h] = x[:, :, :, h * c : (h + 1) * c].reshape(b, n, t_steps * c)
    return m


def _loop_tssa(q, k, v, n_heads, scale, ctr):
    b, n, t_steps, d = q.shape
    c = d // n_heads
    qm, km, vm = _merged(q, n_heads), _merged(k, n_heads), _merged(v, n_heads)
    tc = t_steps * c
    outm = np.zeros_like(qm)
    for bi in range(b):
        for h in range(n_heads):
            for i in range(n):
                acc = np.zeros(tc)
                for j in range(i + 1):
                    a_ij = _dot(qm[bi, h, i], km[bi, h, j], ctr)
                    term = np.empty(tc)
                    for ci in range(tc):
                        ctr.muls += 1
                        term[ci] = a_ij * vm[bi, h, j, ci]
                    if j == 0:
                        acc = term
                    else:
                        ctr.adds += tc
                        acc = acc + term
                for ci in range(tc):
                    ctr.muls += 1
                    outm[bi, h, i, ci] = acc[ci] * scale
    return _unmerge(outm, t_steps, c)


def _loop_pssa(q, k, v, n_heads, bias, window, scale, ctr):
    b, n, t_steps, d = q.shape
    c = d // n_heads
    qm, km, vm = _merged(q, n_heads), _merged(k, n_heads), _merged(v, n_heads)
    tc = t_steps * c
    outm = np.zeros_like(qm)
    for bi in range(b):
        for h in range(n_heads):
            kv = np.empty((n, tc))
            for j in range(n):
                for ci in range(tc):
                    ctr.muls += 1
                    kv[j, ci] = km[bi, h, j, ci] * vm[bi, h, j, ci]
            for i in range(n):
                acc = np.zeros(tc)
                first = True
                for j in range(max(0, i - window + 1), i + 1):
                    term = np.empty(tc)
                    for ci in range(tc):
                        ctr.muls += 1
                        term[ci] = bias[i, j] * kv[j, ci]
                    if first:
                        acc = term
                        first = False
                    else:
                        ctr.adds += tc
                        acc = acc + term
                for ci in range(tc):
                    ctr.muls += 1
                    acc[ci] = qm[bi, h, i, ci] * acc[ci]
                for ci in range(tc):
                    ctr.muls += 1
                    outm[bi, h, i, ci] = acc[ci] * scale
    return _unmerge(outm, t_steps, c)


def _unmerge(outm, t_steps, c):
    b, n_heads, n, tc = outm.shape
    out = np.empty((b, n, t_steps, n_heads * c))
    for h in range(n_heads):
        out[:, :, :, h * c : (h + 1) * c] = outm[:, h].reshape(b, n, t_steps, c)
    return out


def _loop_vla(q, k, v, n_heads, ctr):
    b, n, d = q.shape
    c = d // n_heads
    out = np.zeros_like(q)
    inv_sqrt = 1.0 / math.sqrt(c)
    for bi in range(b):
        for h in range(n_heads):
            sl = slice(h * c, (h + 1) * c)
            for i in range(n):
                logits = np.empty(i + 1)
                for j in range(i + 1):
                    s = _dot(q[bi, i, sl], k[bi, j, sl], ctr)
                    ctr.muls += 1
                    logits[j] = s * inv_sqrt
                m = logits.max()
                weights = np.exp(logits - m)
                z = weights[0]
                for j in range(1, i + 1):
                    ctr.adds += 1
                    z += weights[j]
                acc = np.zeros(c)
                for j in range(i + 1):
                    ctr.muls += 1
                    w = weights[j] / z
                    term = np.empty(c)
                    for ci in range(c):
                        ctr.muls += 1
                        term[ci] = w * v[bi, j, sl][ci]
                    if j == 0:
                        acc = term
                    else:
                        ctr.adds += c
                        acc = acc + term
                out[bi, i, sl] = acc
    return out
