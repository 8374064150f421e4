"""Threshold-scaled normalization family with progressive blending.

Three related layers over (B, N, T, D) activations, all scaled by
alpha * u_th so normalized magnitudes line up with the spiking threshold:

  * channel norm ("tdLN"): statistics over D per (batch, token, timestep)
    position; no state, works on any batch composition.
  * batch-channel norm ("tdBN"): statistics per channel pooled over
    (B, N, T) with running estimates for inference.
  * progressive norm ("PTBN"): theta * tdLN + (1 - theta) * tdBN during
    training, where theta anneals linearly from 1 to 0; pure tdBN at
    inference, which folds into the preceding linear layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, Tensor


@dataclass
class NormParams:
    """Learnable affine plus threshold scaling and running statistics."""

    lam: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    alpha: float = 1.0
    u_th: float = 1.0
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")

    @staticmethod
    def create(
        d: int,
        alpha: float = 1.0,
        u_th: float = 1.0,
        epsilon: float = 1e-5,
        momentum: float = 0.1,
        stat_shape: tuple[int, ...] | None = None,
    ) -> "NormParams":
        if d <= 0:
            raise ContractError(f"channel width must be positive, got {d}")
        shape = stat_shape if stat_shape is not None else (d,)
        return NormParams(
            lam=Tensor(np.ones(d), requires_grad=True),
            beta=Tensor(np.zeros(d), requires_grad=True),
            running_mean=np.zeros(shape),
            running_var=np.ones(shape),
            alpha=alpha,
            u_th=u_th,
            epsilon=epsilon,
            momentum=momentum,
        )


@dataclass
class PtbnState:
    """Training-progress blend: theta = clamp((t_p - t_cur)/t_p, 0, 1)."""

    t_p: int
    t_cur: int = 0

    def __post_init__(self):
        if self.t_p <= 0:
            raise ContractError(f"t_p must be positive, got {self.t_p}")

    @property
    def theta(self) -> float:
        return theta_schedule(self.t_p, self.t_cur)


def theta_schedule(t_p: int, t_cur: int) -> float:
    if t_p <= 0:
        raise ContractError(f"t_p must be positive, got {t_p}")
    if t_cur < 0:
        raise ContractError(f"t_cur must be non-negative, got {t_cur}")
    return min(1.0, max(0.0, (t_p - t_cur) / t_p))


def _standardize(xd: np.ndarray, axes, eps: float):
    """Returns (xhat, inv, mu, var); xhat owns its buffer."""
    mu = xd.mean(axis=axes, keepdims=True)
    xc = xd - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xc *= inv
    return xc, inv, mu, var


def _fused_norm(
    x: Tensor, lam: Tensor, beta: Tensor, scale_const: float, eps: float,
    axes: tuple[int, ...], stats_sink: dict | None = None,
) -> Tensor:
    """Normalize over the given axes with a single graph node.

    out = xhat * (scale_const * lam) + beta, xhat = (x - mean) / sqrt(var + eps).
    The hand-derived backward avoids the dozen intermediate arrays the
    composite formulation would record.  stats_sink, when given, receives
    the batch mean/var (for running-statistic updates) at no extra cost.
    """
    xhat, inv, mu, var = _standardize(x.data, axes, eps)
    if stats_sink is not None:
        stats_sink["mean"] = mu
        stats_sink["var"] = var
    s = scale_const * lam.data
    out_data = xhat * s + beta.data

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=lead))
        if lam.requires_grad:
            lam._accumulate(scale_const * (g * xhat).sum(axis=lead))
        if x.requires_grad:
            dxhat = g * s
            term = dxhat - dxhat.mean(axis=axes, keepdims=True)
            term -= xhat * (dxhat * xhat).mean(axis=axes, keepdims=True)
            term *= inv
            x._accumulate(term)

    out = Tensor._result(out_data, (x, lam, beta), backward_fn)
    return out


def _fused_blend_norm(
    x: Tensor, lam: Tensor, beta: Tensor, scale_const: float, eps: float,
    bn_axes: tuple[int, ...], theta: float, stats_sink: dict | None = None,
) -> Tensor:
    """theta * channel-norm + (1 - theta) * batch-norm in one node, sharing
    the affine: out = (theta xhat_ln + (1-theta) xhat_bn) * s + beta."""
    xd = x.data
    xhat_ln, inv_ln, _, _ = _standardize(xd, (-1,), eps)
    xhat_bn, inv_bn, mu_bn, var_bn = _standardize(xd, bn_axes, eps)
    if stats_sink is not None:
        stats_sink["mean"] = mu_bn
        stats_sink["var"] = var_bn
    s = scale_const * lam.data
    blend = theta * xhat_ln + (1.0 - theta) * xhat_bn
    out_data = blend * s + beta.data

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=lead))
        if lam.requires_grad:
            lam._accumulate(scale_const * (g * blend).sum(axis=lead))
        if x.requires_grad:
            G = g * s
            gl = theta * G
            term = gl - gl.mean(axis=-1, keepdims=True)
            term -= xhat_ln * (gl * xhat_ln).mean(axis=-1, keepdims=True)
            term *= inv_ln
            gb = (1.0 - theta) * G
            t2 = gb - gb.mean(axis=bn_axes, keepdims=True)
            t2 -= xhat_bn * (gb * xhat_bn).mean(axis=bn_axes, keepdims=True)
            t2 *= inv_bn
            term += t2
            x._accumulate(term)

    return Tensor._result(out_data, (x, lam, beta), backward_fn)


def _channel_norm(x: Tensor, p: NormParams) -> Tensor:
    """Normalize over the trailing channel axis, any leading layout."""
    if x.shape[-1] == 0:
        raise ContractError("channel dimension must be non-empty")
    return _fused_norm(x, p.lam, p.beta, p.alpha * p.u_th, p.epsilon, (-1,))


def tdln_forward(x: Tensor, p: NormParams) -> Tensor:
    """Per-(b, n, t) channel normalization; no running statistics."""
    if x.ndim != 4:
        raise ContractError(f"expected (B, N, T, D) input, got shape {x.shape}")
    return _channel_norm(x, p)


def _batch_axes(x: Tensor, pool_over_time: bool) -> tuple[int, ...]:
    return (0, 1, 2) if pool_over_time else (0, 1)


def update_running_stats(x_data: np.ndarray, p: NormParams, pool_over_time: bool = True) -> None:
    """Momentum update of running mean/var from a training batch (detached)."""
    axes = (0, 1, 2) if pool_over_time else (0, 1)
    _apply_running(p, x_data.mean(axis=axes), x_data.var(axis=axes))


def _apply_running(p: NormParams, batch_mean, batch_var) -> None:
    m = p.momentum
    p.running_mean *= 1.0 - m
    p.running_mean += m * np.asarray(batch_mean).reshape(p.running_mean.shape)
    p.running_var *= 1.0 - m
    p.running_var += m * np.asarray(batch_var).reshape(p.running_var.shape)


def tdbn_forward(
    x: Tensor, p: NormParams, training: bool, pool_over_time: bool = True,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization pooled over (B, N, T); running stats at
    inference.  Gradients flow through the batch statistics."""
    if x.ndim != 4:
        raise ContractError(f"expected (B, N, T, D) input, got shape {x.shape}")
    if training:
        axes = _batch_axes(x, pool_over_time)
        sink: dict | None = {} if update_stats else None
        out = _fused_norm(x, p.lam, p.beta, p.alpha * p.u_th, p.epsilon, axes, sink)
        if update_stats:
            _apply_running(p, sink["mean"], sink["var"])
        return out
    scale = p.lam * (
        p.alpha * p.u_th / np.sqrt(p.running_var + p.epsilon)
    )
    shift = p.beta - scale * Tensor(p.running_mean)
    return x * scale + shift


def ptbn_forward(
    x: Tensor,
    p: NormParams,
    s: PtbnState,
    training: bool,
    pool_over_time: bool = True,
) -> Tensor:
    """Blend channel norm and batch-channel norm by the training-progress
    weight; exactly the batch-channel (running-stat) form at inference.

    Running statistics update on every training call, including while
    theta > 0, so the inference form has converged estimates by fold time.
    """
    if not training:
        return tdbn_forward(x, p, training=False, pool_over_time=pool_over_time)
    theta = s.theta
    if theta >= 1.0:
        update_running_stats(x.data, p, pool_over_time)
        return tdln_forward(x, p)
    if theta <= 0.0:
        return tdbn_forward(x, p, training=True, pool_over_time=pool_over_time)
    if x.ndim != 4:
        raise ContractError(f"expected (B, N, T, D) input, got shape {x.shape}")
    sink: dict = {}
    out = _fused_blend_norm(
        x, p.lam, p.beta, p.alpha * p.u_th, p.epsilon,
        _batch_axes(x, pool_over_time), theta, sink,
    )
    _apply_running(p, sink["mean"], sink["var"])
    return out


def fold_into_linear(
    w, b, p: NormParams, state: PtbnState | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Merge the inference-time norm into the preceding linear layer.

    w: (D_in, D_out), b: (D_out,).  Returns (w', b') such that
    Linear_{w',b'}(x) == norm(Linear_{w,b}(x)) at inference.
    """
    if state is not None and state.theta > 0.0:
        raise ContractError(
            f"cannot fold while theta={state.theta:.4f} > 0: channel-norm "
            "statistics are input-dependent"
        )
    w = w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    b = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64)
    if p.running_mean.ndim != 1:
        raise ContractError(
            "folding requires per-channel statistics; per-timestep statistics "
            f"(shape {p.running_mean.shape}) cannot merge into a single linear layer"
        )
    scale = p.lam.data * p.alpha * p.u_th / np.sqrt(p.running_var + p.epsilon)
    w_folded = w * scale[None, :]
    b_folded = (b - p.running_mean) * scale + p.beta.data
    return w_folded, b_folded


@dataclass
class ProgressiveNorm:
    """Module wrapper: one NormParams bound to a model-wide blend state."""

    params: NormParams
    state: PtbnState
    pool_over_time: bool = True
    name: str = "norm"

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ptbn_forward(x, self.params, self.state, training, self.pool_over_time)


@dataclass
class LayerNorm:
    """Plain channel norm (used by the real-valued reference model)."""

    params: NormParams
    name: str = "ln"

    @staticmethod
    def create(d: int, epsilon: float = 1e-5) -> "LayerNorm":
        return LayerNorm(NormParams.create(d, alpha=1.0, u_th=1.0, epsilon=epsilon))

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        return _channel_norm(x, self.params)
