"""Figure renderers produce files from already-written report rows."""

from spikedt.plots import (
    plot_attention_scaling,
    plot_energy_breakdown,
    plot_eval_episodes,
    plot_sweep_heatmap,
    plot_training_curves,
)


def test_training_curves(tmp_path):
    rows = [
        {"step": s, "loss": 2.0 / (s + 1), "theta": max(0.0, 1 - s / 100),
         "eval_score_normalized": s / 2.0}
        for s in (50, 100, 150, 200)
    ]
    out = tmp_path / "curves.png"
    plot_training_curves(rows, out)
    assert out.stat().st_size > 0


def test_attention_scaling(tmp_path):
    rows = [
        {"mode": m, "n": n, "total_ops": n ** e * 100, "wall_time_s": n * 1e-4}
        for m, e in (("pssa", 1), ("tssa", 2))
        for n in (16, 32, 64)
    ]
    out = tmp_path / "scaling.png"
    plot_attention_scaling(rows, {"pssa": 1.0, "tssa": 2.0}, out)
    assert out.stat().st_size > 0


def test_energy_breakdown(tmp_path):
    report = {
        "total_uj": 1.5,
        "attention_core_uj": 0.25,
        "lines": [
            {"layer": "embed", "kind": "MAC", "count": 100, "spike_rate": 1.0,
             "energy_uj": 1.0},
            {"layer": "block0.attn_core.score", "kind": "AC", "count": 50,
             "spike_rate": 0.2, "energy_uj": 0.5},
        ],
    }
    out = tmp_path / "energy.png"
    plot_energy_breakdown(report, out)
    assert out.stat().st_size > 0


def test_sweep_heatmap_with_failed_cell(tmp_path):
    rows = [
        {"snn_timesteps": 1, "window": 2, "normalized_score": 50.0},
        {"snn_timesteps": 2, "window": 2, "normalized_score": 80.0},
        {"snn_timesteps": 2, "window": 8, "normalized_score": None},  # failed cell
        {"snn_timesteps": 1, "window": 8, "normalized_score": 60.0},
    ]
    out = tmp_path / "sweep.png"
    plot_sweep_heatmap(rows, out)
    assert out.stat().st_size > 0


def test_eval_episodes(tmp_path):
    out = tmp_path / "eval.png"
    plot_eval_episodes([0.0, 0.5, 1.0, 1.0], out)
    assert out.stat().st_size > 0
