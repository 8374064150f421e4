"""Operation-level energy accounting from measured spike statistics.

Synaptic work is tallied as accumulates (AC) on spike-driven paths and
multiply-accumulates (MAC) on real-valued paths, then priced with
per-operation device constants (45 nm convention: 4.6 pJ per MAC, 0.9 pJ
per AC).  Counts are reported per input sequence (batch-averaged).

Accounting rules, chosen to mirror standard SNN practice:
  * linear layers fed by spike tensors: AC count = rate * positions * fan_in * fan_out;
  * the embedding and the prediction head see real inputs: dense MACs;
  * the attention output projection sees integer co-activation counts:
    ACs gated by its input's nonzero density;
  * attention stages on spiking paths count measured accumulate events
    (spike coincidences for QK'; bias-weighted sums gated by K (*) V);
  * the real-valued reference attention is all MACs;
  * threshold comparisons, resets, and inference-time affine shifts from
    folded normalization are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttnConfig, count_attention_ops
from .model import DecisionModel
from .tensor import ContractError, no_grad


@dataclass(frozen=True)
class EnergyModel:
    """Per-operation energy in picojoules."""

    e_mac: float = 4.6
    e_ac: float = 0.9

    def __post_init__(self):
        if not (self.e_mac > self.e_ac > 0):
            raise ContractError(
                f"need e_mac > e_ac > 0, got e_mac={self.e_mac}, e_ac={self.e_ac}"
            )


@dataclass
class EnergyLine:
    layer: str
    kind: str  # "AC" | "MAC"
    count: float
    spike_rate: float

    def energy_pj(self, em: EnergyModel) -> float:
        return self.count * (em.e_ac if self.kind == "AC" else em.e_mac)


@dataclass
class EnergyReport:
    energy_model: EnergyModel
    lines: list[EnergyLine] = field(default_factory=list)

    def add(self, layer: str, kind: str, count: float, rate: float = 1.0) -> None:
        self.lines.append(EnergyLine(layer, kind, float(count), float(rate)))

    @property
    def total_uj(self) -> float:
        return sum(l.energy_pj(self.energy_model) for l in self.lines) / 1e6

    @property
    def attention_core_uj(self) -> float:
        """Attention-stage subtotal (score/value paths), the quantity the
        mode comparison ranks."""
        return sum(
            l.energy_pj(self.energy_model) for l in self.lines if ".attn_core" in l.layer
        ) / 1e6

    def subtotal_uj(self, substring: str) -> float:
        return sum(
            l.energy_pj(self.energy_model) for l in self.lines if substring in l.layer
        ) / 1e6

    def to_json_dict(self) -> dict:
        return {
            "e_mac_pj": self.energy_model.e_mac,
            "e_ac_pj": self.energy_model.e_ac,
            "total_uj": self.total_uj,
            "attention_core_uj": self.attention_core_uj,
            "lines": [
                {
                    "layer": l.layer,
                    "kind": l.kind,
                    "count": l.count,
                    "spike_rate": l.spike_rate,
                    "energy_uj": l.energy_pj(self.energy_model) / 1e6,
                }
                for l in self.lines
            ],
        }

    def to_table(self) -> str:
        rows = [f"{'layer':38s} {'kind':4s} {'count':>14s} {'rate':>7s} {'uJ':>12s}"]
        for l in self.lines:
            rows.append(
                f"{l.layer:38s} {l.kind:4s} {l.count:14.1f} {l.spike_rate:7.4f} "
                f"{l.energy_pj(self.energy_model) / 1e6:12.6f}"
            )
        rows.append(f"{'TOTAL':38s} {'':4s} {'':>14s} {'':>7s} {self.total_uj:12.6f}")
        rows.append(
            f"{'attention core subtotal':38s} {'':4s} {'':>14s} {'':>7s} "
            f"{self.attention_core_uj:12.6f}"
        )
        return "\n".join(rows)


def count_linear_sops(fan_in: int, fan_out: int, n_positions: int, spike_rate: float) -> float:
    """Accumulate count for a spike-fed linear layer."""
    if not (0.0 <= spike_rate <= 1.0):
        raise ContractError(f"spike_rate must be in [0, 1], got {spike_rate}")
    return spike_rate * n_positions * fan_in * fan_out


def measure_spike_rates(model: DecisionModel, batch: dict) -> dict[str, float]:
    """Mean firing rate per spiking layer over one inference forward."""
    stats: dict[str, float] = {}
    with no_grad():
        model.forward(batch["actions"], batch["rtg"], batch["states"],
                      training=False, stats=stats)
    return stats


def estimate_energy(model: DecisionModel, batch: dict, em: EnergyModel | None = None) -> EnergyReport:
    """Per-sequence energy estimate on a frozen model.

    Spiking models must be folded first: an explicit normalization layer
    after every linear would add dense float work the AC accounting
    deliberately excludes.
    """
    em = em or EnergyModel()
    cfg = model.cfg
    if model.is_spiking and not model.folded:
        raise ContractError("fold the model before estimating energy")
    b = np.asarray(batch["states"]).shape[0]
    stats: dict[str, float] = {}
    energy_stats: dict[str, dict] = {}
    with no_grad():
        model.forward(batch["actions"], batch["rtg"], batch["states"],
                      training=False, stats=stats, energy_stats=energy_stats)

    report = EnergyReport(em)
    n, d, t = cfg.context_len, cfg.d_model, cfg.snn_timesteps
    report.add("embed", "MAC", n * cfg.token_dim * d)
    if not model.is_spiking:
        hd = d * cfg.mlp_ratio
        attn_cfg = AttnConfig(d, cfg.n_heads, n, 1, "vla",
                              cfg.window, cfg.attn_scale)
        attn_macs = count_attention_ops(attn_cfg, batch=1).muls
        for i in range(cfg.n_blocks):
            for nm in ("wq", "wk", "wv", "wo"):
                report.add(f"block{i}.attn.{nm}", "MAC", n * d * d)
            report.add(f"block{i}.attn_core", "MAC", attn_macs)
            report.add(f"block{i}.mlp.w1", "MAC", n * d * hd)
            report.add(f"block{i}.mlp.w2", "MAC", n * hd * d)
        report.add("head", "MAC", n * d * cfg.action_dim)
        return report

    positions = n * t
    hd = d * cfg.mlp_ratio
    for i, blk in enumerate(model.blocks):
        a_rate = stats[f"block{i}.attn.sn_in"]
        for nm in ("wq", "wk", "wv"):
            report.add(
                f"block{i}.attn.{nm}", "AC",
                count_linear_sops(d, d, positions, a_rate), a_rate,
            )
        core = energy_stats[f"block{i}.attn.attn"]
        report.add(f"block{i}.attn_core.score", "AC", core["score_ac"] / b)
        if core["av_ac"]:
            report.add(f"block{i}.attn_core.value", "AC", core["av_ac"] / b)
        out_density = core["out_density"]
        report.add(
            f"block{i}.attn.wo", "AC",
            count_linear_sops(d, d, positions, out_density), out_density,
        )
        m_rate = stats[f"block{i}.mlp.sn_in"]
        h_rate = stats[f"block{i}.mlp.sn_h"]
        report.add(f"block{i}.mlp.w1", "AC",
                   count_linear_sops(d, hd, positions, m_rate), m_rate)
        report.add(f"block{i}.mlp.w2", "AC",
                   count_linear_sops(hd, d, positions, h_rate), h_rate)
    report.add("head", "MAC", n * d * cfg.action_dim)
    return report
