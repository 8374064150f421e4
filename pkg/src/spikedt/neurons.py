"""Leaky integrate-and-fire neurons with surrogate-gradient training.

Forward dynamics per timestep, with membrane H carried between steps:

    U = H + I
    S = 1 if U >= threshold else 0
    H' = u_reset * S + gamma * U * (1 - S)

The step function is non-differentiable, so the backward pass substitutes
a surrogate derivative (arctangent by default).  A "relaxed" mode replaces
the hard step with the surrogate's smooth primitive in the forward pass as
well, which makes the whole network differentiable for gradient checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, DimensionError, Tensor, custom_unary

SURROGATE_KINDS = ("atan", "rect")


@dataclass(frozen=True)
class LifParams:
    """Neuron constants shared by every element of a layer."""

    u_th: float = 1.0
    u_reset: float = 0.0
    gamma: float = 0.5
    surrogate_width: float = 2.0
    surrogate: str = "atan"

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ContractError(f"gamma must be in (0, 1], got {self.gamma}")
        if not self.u_reset < self.u_th:
            raise ContractError(
                f"u_reset ({self.u_reset}) must be below u_th ({self.u_th})"
            )
        if self.surrogate_width <= 0:
            raise ContractError(f"surrogate_width must be positive, got {self.surrogate_width}")
        if self.surrogate not in SURROGATE_KINDS:
            raise ContractError(f"surrogate must be one of {SURROGATE_KINDS}")


@dataclass
class LifState:
    """Per-element membrane potential carried across timesteps."""

    membrane: Tensor

    @staticmethod
    def zeros(shape: tuple[int, ...]) -> "LifState":
        return LifState(Tensor(np.zeros(shape)))


def surrogate_gradient(u_minus_threshold, surrogate_width: float, kind: str = "atan"):
    """d(spike)/dU stand-in used in the backward pass.

    atan: a / (2 * (1 + (pi/2 * a * x)^2)); unit integral over the reals.
    rect: 1/a on |x| < a/2, else 0; unit integral.
    """
    if surrogate_width <= 0:
        raise ContractError(f"surrogate_width must be positive, got {surrogate_width}")
    x = u_minus_threshold.data if isinstance(u_minus_threshold, Tensor) else np.asarray(
        u_minus_threshold, dtype=np.float64
    )
    a = surrogate_width
    if kind == "atan":
        return a / (2.0 * (1.0 + (math.pi / 2.0 * a * x) ** 2))
    if kind == "rect":
        return np.where(np.abs(x) < a / 2.0, 1.0 / a, 0.0)
    raise ContractError(f"unknown surrogate kind {kind!r}")


def smooth_spike(u_minus_threshold, surrogate_width: float, kind: str = "atan"):
    """Smooth primitive of the surrogate: a sigmoid-like relaxation of the
    Heaviside step whose exact derivative is surrogate_gradient."""
    x = u_minus_threshold.data if isinstance(u_minus_threshold, Tensor) else np.asarray(
        u_minus_threshold, dtype=np.float64
    )
    a = surrogate_width
    if kind == "atan":
        return np.arctan(math.pi / 2.0 * a * x) / math.pi + 0.5
    if kind == "rect":
        return np.clip(x / a + 0.5, 0.0, 1.0)
    raise ContractError(f"unknown surrogate kind {kind!r}")


def heaviside(x: np.ndarray) -> np.ndarray:
    """1.0 for x >= 0, else 0.0."""
    return (x >= 0.0).astype(np.float64)


def spike_fn(u_minus_threshold: Tensor, params: LifParams, relaxed: bool = False) -> Tensor:
    """Binary spike emission (or its smooth relaxation) as a graph op.

    The backward rule is the surrogate derivative in both modes; in relaxed
    mode that rule is the true derivative of the forward function.
    """
    width, kind = params.surrogate_width, params.surrogate
    forward = (lambda x: smooth_spike(x, width, kind)) if relaxed else heaviside
    return custom_unary(
        u_minus_threshold, forward, lambda x: surrogate_gradient(x, width, kind)
    )


def lif_step(
    input_current: Tensor,
    state: LifState,
    params: LifParams,
    relaxed: bool = False,
) -> tuple[Tensor, LifState]:
    """One membrane update: integrate, fire, reset-or-decay."""
    if input_current.shape != state.membrane.shape:
        raise DimensionError(
            f"input shape {input_current.shape} does not match membrane {state.membrane.shape}"
        )
    u = state.membrane + input_current
    spikes = spike_fn(u - params.u_th, params, relaxed)
    keep = 1.0 - spikes
    new_membrane = spikes * params.u_reset + (u * keep) * params.gamma
    return spikes, LifState(new_membrane)


def lif_sequence(
    inputs: Tensor,
    params: LifParams,
    initial: LifState | None = None,
    relaxed: bool = False,
) -> Tensor:
    """Run lif_step over the leading (time) axis, threading the state.

    inputs: (T, ...); returns spikes of the same shape.
    """
    if inputs.ndim < 1 or inputs.shape[0] == 0:
        raise ContractError(f"lif_sequence needs T >= 1, got shape {inputs.shape}")
    from .tensor import concat, split

    t_steps = inputs.shape[0]
    slices = split(inputs, [1] * t_steps, axis=0)
    state = initial if initial is not None else LifState.zeros(slices[0].shape)
    outs = []
    for x_t in slices:
        spikes, state = lif_step(x_t, state, params, relaxed)
        outs.append(spikes)
    return concat(outs, axis=0) if t_steps > 1 else outs[0]


def lif_sequence_fused(
    x: Tensor, params: LifParams, time_axis: int, relaxed: bool = False
) -> Tensor:
    """lif_sequence as a single graph node: the forward recurrence runs in
    plain numpy and the backward replays it in reverse (BPTT), applying the
    surrogate at each step.  Bit-identical to the composite version."""
    t_steps = x.shape[time_axis]
    if t_steps == 0:
        raise ContractError(f"lif_sequence needs T >= 1, got shape {x.shape}")
    gamma, u_th, u_reset = params.gamma, params.u_th, params.u_reset
    width, kind = params.surrogate_width, params.surrogate
    xd = x.data
    idx = [slice(None)] * xd.ndim

    out_data = np.empty_like(xd)
    memb_u = []  # potentials U_t, saved for the backward sweep
    spikes = []
    h = 0.0
    for t in range(t_steps):
        idx[time_axis] = t
        u = h + xd[tuple(idx)]
        s = smooth_spike(u - u_th, width, kind) if relaxed else heaviside(u - u_th)
        h = u_reset * s + (u * (1.0 - s)) * gamma
        out_data[tuple(idx)] = s
        memb_u.append(u)
        spikes.append(s)

    def backward_fn(g):
        if not x.requires_grad:
            return
        dx = np.empty_like(g)
        h_grad = 0.0
        for t in range(t_steps - 1, -1, -1):
            idx[time_axis] = t
            u, s = memb_u[t], spikes[t]
            sigma = surrogate_gradient(u - u_th, width, kind)
            du = g[tuple(idx)] * sigma
            if t < t_steps - 1:
                du = du + h_grad * (gamma * (1.0 - s) + (u_reset - gamma * u) * sigma)
            dx[tuple(idx)] = du
            h_grad = du
        x._accumulate(dx)

    return Tensor._result(out_data, (x,), backward_fn)


@dataclass
class SpikingLayer:
    """LIF layer operating on (B, N, T, D) activations along the T axis.

    Membrane starts at zero for every forward pass.  When a stats dict is
    supplied the layer records its mean firing rate under its name.
    """

    params: LifParams = field(default_factory=LifParams)
    name: str = "sn"

    def __call__(
        self, x: Tensor, relaxed: bool = False, stats: dict | None = None
    ) -> Tensor:
        if x.ndim != 4:
            raise DimensionError(f"expected (B, N, T, D) input, got {x.shape}")
        out = lif_sequence_fused(x, self.params, time_axis=2, relaxed=relaxed)
        if stats is not None:
            stats[self.name] = float(out.data.mean())
        return out
