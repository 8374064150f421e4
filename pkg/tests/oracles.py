"""Independent reference implementations used to derive expected values.

Everything here is deliberately naive (loops, two-pass statistics, central
finite differences) and shares no code with the fast paths it checks.
"""

from __future__ import annotations

import numpy as np


def finite_difference(f, x: np.ndarray, indices, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar f at the given flat indices."""
    x = x.copy()
    flat = x.reshape(-1)
    out = np.empty(len(indices))
    for n, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        out[n] = (fp - fm) / (2.0 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def two_pass_mean_var(x: np.ndarray, axis) -> tuple[np.ndarray, np.ndarray]:
    """Literal two-pass mean and biased variance."""
    mean = x.sum(axis=axis, keepdims=True) / np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    var = ((x - mean) ** 2).sum(axis=axis, keepdims=True) / np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mean, var


def scalar_lif_recurrence(
    currents, u_th: float, u_reset: float, gamma: float
) -> tuple[list[float], list[float]]:
    """Direct simulation of one LIF element; returns (spikes, membranes)."""
    h = 0.0
    spikes, membranes = [], []
    for i in currents:
        u = h + i
        s = 1.0 if u - u_th >= 0.0 else 0.0
        h = u_reset * s + gamma * u * (1.0 - s)
        spikes.append(s)
        membranes.append(h)
    return spikes, membranes


def suffix_sums_quadratic(rewards) -> list[float]:
    """O(L^2) double-loop return-to-go."""
    L = len(rewards)
    return [sum(rewards[j] for j in range(i, L)) for i in range(L)]


def plugin_entropy(samples: list[tuple]) -> float:
    """Entropy (nats) of the empirical distribution of hashable samples."""
    counts: dict = {}
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
    n = len(samples)
    return -sum((c / n) * np.log(c / n) for c in counts.values())
