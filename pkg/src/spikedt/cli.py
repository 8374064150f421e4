"""Command-line interface.

Subcommands: gen-data, train, eval, bench-attn, energy, sweep.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Every command is deterministic given its flags (including --seed), writes
only under --out, and drops a rendered figure next to each delimited
output unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .config import (
    ConfigError,
    build_configs,
    load_config_file,
    load_run_config,
    save_run_config,
)
from .data import (
    DataError,
    GenerationError,
    TrajectoryDataset,
    gen_keydoor,
    gen_reacher,
)
from .model import DecisionModel, load_model
from .training import NumericError, TrainConfig, evaluate, train_and_evaluate


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, GenerationError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spikedt",
        description="Spike-driven decision transformer: data, training, "
        "evaluation, attention benchmarks, and energy reports.",
    )
    sub = p.add_subparsers(required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset")
    g.add_argument("--env", choices=("keydoor", "reacher"), required=True)
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--quality", choices=("random", "medium", "expert"), default="medium")
    g.add_argument("--sparse", action="store_true", help="single terminal reward")
    g.add_argument("--grid", type=int, default=6, help="keydoor grid size")
    g.add_argument("--max-len", type=int, default=40, help="episode cap")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output JSONL path")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="TOML config file")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--no-figures", action="store_true")
    t.add_argument("--quiet", action="store_true")
    _model_flags(t)
    _train_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint with rollouts")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--run-config", help="config.json written by train "
                   "(default: sibling of the checkpoint)")
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--target-multiplier", type=float, default=1.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench-attn", help="op counts, wall time and scaling fits")
    b.add_argument("--n-list", default="16,32,64,128")
    b.add_argument("--modes", default="vla,sssa,tssa,pssa")
    b.add_argument("--d-model", type=int, default=64)
    b.add_argument("--timesteps", type=int, default=4)
    b.add_argument("--window", type=int, default=8)
    b.add_argument("--batch", type=int, default=4)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--no-figures", action="store_true")
    b.set_defaults(func=cmd_bench_attn)

    n = sub.add_parser("energy", help="operation-level energy report")
    n.add_argument("--checkpoint", required=True)
    n.add_argument("--data", required=True)
    n.add_argument("--run-config")
    n.add_argument("--batch", type=int, default=16)
    n.add_argument("--e-mac", type=float, default=4.6, help="pJ per MAC")
    n.add_argument("--e-ac", type=float, default=0.9, help="pJ per AC")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    n.add_argument("--no-figures", action="store_true")
    n.set_defaults(func=cmd_energy)

    s = sub.add_parser("sweep", help="grid over timesteps T and window S")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="TOML config file")
    s.add_argument("--t-list", default="1,2,4")
    s.add_argument("--s-list", default="2,8")
    s.add_argument("--seeds", default="0")
    s.add_argument("--no-figures", action="store_true")
    _model_flags(s)
    _train_flags(s)
    s.set_defaults(func=cmd_sweep)
    return p


def _model_flags(p) -> None:
    p.add_argument("--attn", choices=("vla", "sssa", "tssa", "pssa"), dest="attn_mode")
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--blocks", type=int, dest="n_blocks")
    p.add_argument("--context", type=int, dest="context_len")
    p.add_argument("--timesteps", type=int, dest="snn_timesteps")
    p.add_argument("--window", type=int, dest="window")
    p.add_argument("--heads", type=int, dest="n_heads")


def _train_flags(p) -> None:
    p.add_argument("--steps", type=int, dest="total_steps")
    p.add_argument("--batch", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p.add_argument("--ptbn-fraction", type=float, dest="ptbn_fraction")
    p.add_argument("--seed", type=int, dest="seed")


def _gather(args, names) -> dict:
    return {n: getattr(args, n, None) for n in names}


MODEL_FLAG_NAMES = ("attn_mode", "d_model", "n_blocks", "context_len",
                    "snn_timesteps", "window", "n_heads")
TRAIN_FLAG_NAMES = ("total_steps", "batch_size", "learning_rate", "eval_every",
                    "eval_episodes", "ptbn_fraction", "seed")


def cmd_gen_data(args) -> int:
    if args.env == "keydoor":
        ds = gen_keydoor(args.episodes, args.grid, args.max_len, args.quality,
                         args.sparse, args.seed)
    else:
        ds = gen_reacher(args.episodes, args.max_len, args.quality, args.seed)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    ds.save_jsonl(args.out)
    print(f"wrote {len(ds)} episodes ({ds.n_steps} steps) to {args.out}")
    return 0


def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else None
    dataset = TrajectoryDataset.load_jsonl(args.data)
    mcfg, tcfg = build_configs(
        dataset.meta, file_cfg, _gather(args, MODEL_FLAG_NAMES),
        _gather(args, TRAIN_FLAG_NAMES),
    )
    os.makedirs(args.out, exist_ok=True)
    save_run_config(os.path.join(args.out, "config.json"), mcfg, tcfg)
    report = train_and_evaluate(mcfg, tcfg, dataset, args.out,
                                resume_from=args.resume, quiet=args.quiet)
    if not args.no_figures and report["rows"]:
        from .plots import plot_training_curves

        plot_training_curves(report["rows"], os.path.join(args.out, "training_curves.png"))
    summary = {k: v for k, v in report.items() if k != "rows"}
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump(summary, f, indent=2)
    print(json.dumps(summary["final_eval"], indent=2))
    return 0


def _load_checkpoint_model(checkpoint, run_config_path) -> DecisionModel:
    if run_config_path is None:
        run_config_path = os.path.join(os.path.dirname(os.path.abspath(checkpoint)),
                                       "config.json")
    mcfg, _ = load_run_config(run_config_path)
    model = load_model(checkpoint, mcfg)
    if model.is_spiking and not model.folded:
        print("notice: unfolded checkpoint; folding for inference "
              "(assumes training ran to completion)")
        model.ptbn_state.t_cur = model.ptbn_state.t_p
        model = model.fold()
    return model


def cmd_eval(args) -> int:
    dataset = TrajectoryDataset.load_jsonl(args.data)
    model = _load_checkpoint_model(args.checkpoint, args.run_config)
    target = args.target_multiplier * dataset.meta.expert_score
    os.makedirs(args.out, exist_ok=True)
    from .data import normalized_score
    from .training import EVAL_TAG, eval_rollout, model_policy, sub_rng
    from .data import make_env

    env = make_env(dataset.meta)
    predict = model_policy(model)
    raws = [
        eval_rollout(predict, env, target, dataset.meta, model.cfg.context_len,
                     sub_rng(args.seed, EVAL_TAG, ep))
        for ep in range(args.episodes)
    ]
    norms = [normalized_score(r, dataset.meta) for r in raws]
    result = {
        "episodes": args.episodes,
        "raw_mean": float(np.mean(raws)),
        "raw_std": float(np.std(raws)),
        "normalized_mean": float(np.mean(norms)),
        "normalized_std": float(np.std(norms)),
        "target_return": target,
        "per_episode_raw": raws,
    }
    with open(os.path.join(args.out, "eval.json"), "w") as f:
        json.dump(result, f, indent=2)
    if not args.no_figures:
        from .plots import plot_eval_episodes

        plot_eval_episodes(raws, os.path.join(args.out, "eval_episodes.png"))
    print(f"normalized score: {result['normalized_mean']:.2f} "
          f"+/- {result['normalized_std']:.2f} over {args.episodes} episodes")
    return 0


def cmd_bench_attn(args) -> int:
    from .attention import (
        AttnConfig,
        count_attention_ops,
        pssa_attention,
        sssa_attention,
        tssa_attention,
        vla_attention,
        window_causal_mask,
    )
    from .tensor import Tensor, no_grad

    ns = [int(x) for x in args.n_list.split(",")]
    modes = [m.strip() for m in args.modes.split(",")]
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for mode in modes:
        for n in ns:
            t = 1 if mode == "vla" else args.timesteps
            s = min(args.window, n)
            cfg = AttnConfig(args.d_model, 1, n, t, mode, s)
            ops = count_attention_ops(cfg, batch=args.batch)
            if mode == "vla":
                q, k, v = (Tensor(rng.normal(size=(args.batch, n, args.d_model)))
                           for _ in range(3))
            else:
                q, k, v = (
                    Tensor((rng.random((args.batch, n, t, args.d_model)) < 0.3)
                           .astype(np.float64))
                    for _ in range(3)
                )
            bias = Tensor(
                rng.uniform(-0.02, 0.02, size=(n, n)) * window_causal_mask(n, s)
            )
            best = float("inf")
            for _ in range(args.reps):
                t0 = time.perf_counter()
                with no_grad():
                    if mode == "vla":
                        vla_attention(q, k, v)
                    elif mode == "sssa":
                        sssa_attention(q, k, v)
                    elif mode == "tssa":
                        tssa_attention(q, k, v)
                    else:
                        pssa_attention(q, k, v, bias)
                best = min(best, time.perf_counter() - t0)
            rows.append({
                "mode": mode, "n": n, "t": t, "d": args.d_model, "s": s,
                "batch": args.batch, "muls": ops.muls, "adds": ops.adds,
                "total_ops": ops.total, "wall_time_s": best,
            })
    fits = {}
    for mode in modes:
        sub = [r for r in rows if r["mode"] == mode]
        logn = np.log([r["n"] for r in sub])
        logc = np.log([r["total_ops"] for r in sub])
        fits[mode] = float(np.polyfit(logn, logc, 1)[0])
    csv_path = os.path.join(args.out, "bench_attn.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    fit_path = os.path.join(args.out, "bench_attn_fit.csv")
    with open(fit_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "count_growth_exponent"])
        for mode, e in fits.items():
            w.writerow([mode, f"{e:.4f}"])
    if not args.no_figures:
        from .plots import plot_attention_scaling

        plot_attention_scaling(rows, fits, os.path.join(args.out, "attn_scaling.png"))
    for mode, e in fits.items():
        print(f"{mode}: count growth exponent {e:.3f}")
    return 0


def cmd_energy(args) -> int:
    from .energy import EnergyModel, estimate_energy
    from .training import DATA_TAG, sub_rng

    dataset = TrajectoryDataset.load_jsonl(args.data)
    model = _load_checkpoint_model(args.checkpoint, args.run_config)
    batch = dataset.sample_batch(sub_rng(args.seed, DATA_TAG, 0), args.batch,
                                 model.cfg.context_len)
    report = estimate_energy(model, batch, EnergyModel(args.e_mac, args.e_ac))
    os.makedirs(args.out, exist_ok=True)
    d = report.to_json_dict()
    with open(os.path.join(args.out, "energy.json"), "w") as f:
        json.dump(d, f, indent=2)
    if not args.no_figures:
        from .plots import plot_energy_breakdown

        plot_energy_breakdown(d, os.path.join(args.out, "energy_breakdown.png"))
    print(report.to_table())
    return 0


def _sweep_cell(cell_args: dict) -> dict:
    """One (T, S, seed) training cell; runs in a worker process."""
    try:
        dataset = TrajectoryDataset.load_jsonl(cell_args["data"])
        mcfg, tcfg = build_configs(
            dataset.meta, cell_args["file_cfg"],
            cell_args["model_flags"], cell_args["train_flags"],
        )
        report = train_and_evaluate(mcfg, tcfg, dataset, cell_args["out"], quiet=True)
        return {
            "snn_timesteps": mcfg.snn_timesteps,
            "window": mcfg.window,
            "seed": tcfg.seed,
            "normalized_score": report["final_normalized"],
            "best_normalized": report["best_normalized"],
            "wall_time_s": report["wall_time_s"],
            "error": "",
        }
    except Exception as e:  # cell isolation: record and continue
        return {
            "snn_timesteps": cell_args["model_flags"].get("snn_timesteps"),
            "window": cell_args["model_flags"].get("window"),
            "seed": cell_args["train_flags"].get("seed"),
            "normalized_score": None,
            "best_normalized": None,
            "wall_time_s": None,
            "error": f"{type(e).__name__}: {e}",
        }


def cmd_sweep(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else None
    ts = [int(x) for x in args.t_list.split(",")]
    ss = [int(x) for x in args.s_list.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    os.makedirs(args.out, exist_ok=True)
    cells = []
    for t in ts:
        for s in ss:
            for seed in seeds:
                model_flags = _gather(args, MODEL_FLAG_NAMES)
                model_flags.update({"snn_timesteps": t, "window": s})
                train_flags = _gather(args, TRAIN_FLAG_NAMES)
                train_flags["seed"] = seed
                cells.append({
                    "data": args.data,
                    "file_cfg": file_cfg,
                    "model_flags": model_flags,
                    "train_flags": train_flags,
                    "out": os.path.join(args.out, f"t{t}_s{s}_seed{seed}"),
                })
    workers = max(1, int(os.environ.get("DSF_THREADS", "1")))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    if not args.no_figures:
        from .plots import plot_sweep_heatmap

        plot_sweep_heatmap(rows, os.path.join(args.out, "sweep_heatmap.png"))
    for r in rows:
        status = r["error"] or f"score {r['normalized_score']:.2f}"
        print(f"T={r['snn_timesteps']} S={r['window']} seed={r['seed']}: {status}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
