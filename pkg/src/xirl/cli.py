"""Command-line front end.

Verbs: gen-demos, train-repr, eval-repr, train-policy, eval-policy,
export-embeddings, plot, run-xmagical-suite. Every run directory gets
the fully-resolved config plus a run manifest with input and output
hashes. Exit codes: 0 success, 1 runtime failure, 2 usage or config
error. The XIRL_OUT environment variable overrides the configured
output root for default output locations.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .alignment import alignment_report
from .checkpoint import FormatError
from .config import (
    ConfigError,
    config_hash,
    file_hash,
    load_config,
    tree_hash,
    write_config,
    write_manifest,
)
from .demos import generate_demo_set, load_demo, load_video_dir
from .embedding import embed_sequence, load_model
from .env import EMBODIMENT_NAMES
from .reward import fit_reward_model, load_reward_model, reward_trace, save_reward_model
from .sac import SacConfig, evaluate, load_policy, save_policy, train_policy
from .svgplot import CsvError, plot_csvs, write_csv
from .training import ReprTrainConfig, train

ALGO_CHOICES = ("tcc", "tcn", "lifs", "goal_classifier")
REWARD_CHOICES = ("env", "learned", "learned+sparse")


def _out_dir(arg_out: str | None, cfg: dict, default_name: str) -> Path:
    """--out wins as given; otherwise <root>/<name> with XIRL_OUT override."""
    if arg_out is not None:
        path = Path(arg_out)
    else:
        root = Path(os.environ.get("XIRL_OUT") or cfg["out_root"])
        path = root / default_name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _finish_run(out: Path, command: str, cfg: dict, inputs: dict, outputs: list[str]):
    write_config(cfg, out / "config.json")
    write_manifest(out, command, cfg, inputs, outputs + ["config.json"])


# ------------------------------------------------------------------ gen-demos


def cmd_gen_demos(args) -> int:
    cfg = load_config(args.config)
    count = args.count if args.count is not None else cfg["demos"]["count"]
    seed = args.seed if args.seed is not None else cfg["demos"]["seed"]
    grid = args.grid if args.grid is not None else cfg["grid"]
    names = (
        tuple(cfg["demos"]["embodiments"])
        if args.embodiment == "all"
        else (args.embodiment,)
    )
    out = _out_dir(args.out, cfg, "demos")
    demoset = generate_demo_set(out, count, seed, grid, embodiments=names)
    outputs = ["manifest.json"]
    for name in names:
        lengths = np.array([len(load_demo(p)) for p in demoset.paths(name)])
        outputs += [str(p.relative_to(out)) for p in demoset.paths(name)]
        print(
            f"{name}: n={count} mean_len={lengths.mean():.1f} "
            f"std_len={lengths.std():.1f}"
        )
    _finish_run(out, "gen-demos", cfg, {}, outputs)
    return 0


# ------------------------------------------------------------------ train-repr


def _repr_config(cfg: dict, algo: str | None, iterations: int | None, seed: int | None):
    r = dict(cfg["repr"])
    if algo is not None:
        r["algorithm"] = algo
    if iterations is not None:
        r["iterations"] = iterations
    if seed is not None:
        r["seed"] = seed
    try:
        return ReprTrainConfig(**r)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"repr config: {e}") from e


def cmd_train_repr(args) -> int:
    cfg = load_config(args.config)
    rcfg = _repr_config(cfg, args.algo, args.iterations, args.seed)
    cfg["repr"].update(
        algorithm=rcfg.algorithm, iterations=rcfg.iterations, seed=rcfg.seed
    )
    videos = [v for d in args.demos for v in load_video_dir(d)]
    heldout = [v for d in (args.heldout or []) for v in load_video_dir(d)]
    out = _out_dir(args.out, cfg, f"repr_{rcfg.algorithm}")
    ckpt = out / "encoder.xckp"
    log_path = out / "train_log.csv"
    header = ["iteration", "loss", "train_tau"] + (
        ["heldout_tau"] if heldout else []
    )
    rows_csv: list[list] = []

    def on_eval(model, row):
        # keep the newest finite checkpoint so divergence never erases progress
        rm = fit_reward_model(
            model,
            videos,
            distance=cfg["reward"]["distance"],
            augment_sparse=cfg["reward"]["augment_sparse"],
        )
        save_reward_model(rm, {"config_hash": config_hash(cfg)}, ckpt)
        it, loss, tr, ho = row
        rows_csv.append([it, loss, tr] + ([ho] if heldout else []))
        write_csv(log_path, header, rows_csv)
        print(f"iter {it}: loss={loss:.6f} train_tau={tr:.3f}", flush=True)

    model, rows, meta = train(videos, rcfg, heldout=heldout or None, on_eval=on_eval)
    rm = fit_reward_model(
        model,
        videos,
        distance=cfg["reward"]["distance"],
        augment_sparse=cfg["reward"]["augment_sparse"],
    )
    save_reward_model(rm, {**meta, "config_hash": config_hash(cfg)}, ckpt)
    if not rows:  # zero-iteration run still leaves a checkpoint and a log
        write_csv(log_path, header, [[0, float("nan"), float("nan")] + ([float("nan")] if heldout else [])])
    inputs = {str(d): tree_hash(d, "*.xmdm") for d in args.demos}
    inputs.update({str(d): tree_hash(d, "*.xmdm") for d in (args.heldout or [])})
    _finish_run(out, "train-repr", cfg, inputs, ["encoder.xckp", "train_log.csv"])
    print(f"encoder: {ckpt}")
    return 0


# ------------------------------------------------------------------ eval-repr


def cmd_eval_repr(args) -> int:
    cfg = load_config(args.config)
    encoder, meta = load_model(args.ckpt)
    out = _out_dir(args.out, cfg, "eval_repr")
    seqs, videos = [], []
    for d in args.demos:
        for v in load_video_dir(d):
            videos.append(v)
            seqs.append(embed_sequence(encoder, v.frames_f64(), v.embodiment))
    report = alignment_report(seqs)
    write_csv(
        out / "alignment.csv",
        ["embodiment_i", "embodiment_j", "tau"],
        [[a, b, t] for a, b, t in report.pair_taus],
    )
    write_csv(
        out / "alignment_summary.csv",
        ["mean_tau", "mean_same_embodiment", "mean_cross_embodiment"],
        [[report.mean_tau, report.mean_same_embodiment, report.mean_cross_embodiment]],
    )
    outputs = ["alignment.csv", "alignment_summary.csv"]
    if "source" in meta:  # reward fit present: emit traces for the first demos
        rmodel, _ = load_reward_model(args.ckpt)
        for i, v in enumerate(videos[: args.traces]):
            learned, env_r = reward_trace(rmodel, v)
            name = f"trace_{i:03d}.csv"
            write_csv(
                out / name,
                ["frame_index", "learned_reward", "env_reward"],
                [[k, float(learned[k]), float(env_r[k])] for k in range(len(v))],
            )
            outputs.append(name)
    print(
        f"mean_tau={report.mean_tau:.4f} same={report.mean_same_embodiment:.4f} "
        f"cross={report.mean_cross_embodiment:.4f}"
    )
    _finish_run(
        out,
        "eval-repr",
        cfg,
        {str(args.ckpt): file_hash(args.ckpt)},
        outputs,
    )
    return 0


# ---------------------------------------------------------------- train-policy


def _sac_config(cfg: dict, steps: int | None, seed: int | None) -> SacConfig:
    s = dict(cfg["sac"])
    if steps is not None:
        s["total_steps"] = steps
    if seed is not None:
        s["seed"] = seed
    try:
        return SacConfig(**s)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"sac config: {e}") from e


def cmd_train_policy(args) -> int:
    cfg = load_config(args.config)
    scfg = _sac_config(cfg, args.steps, args.seed)
    cfg["sac"].update(total_steps=scfg.total_steps, seed=scfg.seed)
    rmodel = None
    inputs: dict[str, str] = {}
    if args.reward != "env":
        if args.ckpt is None:
            raise ConfigError(f"--reward {args.reward} needs --ckpt")
        rmodel, _ = load_reward_model(args.ckpt)
        inputs[str(args.ckpt)] = file_hash(args.ckpt)
    out = _out_dir(args.out, cfg, f"policy_{args.embodiment}_{args.reward}")
    curve_path = out / "curve.csv"
    policy_path = out / "policy.xckp"
    header = [
        "step",
        "success_rate",
        "mean_episode_reward",
        "actor_loss",
        "critic_loss",
        "temperature",
    ]
    meta = {
        "embodiment": args.embodiment,
        "reward_source": args.reward,
        "config_hash": config_hash(cfg),
    }
    rows_csv: list[list] = []

    def on_eval(agent, row):
        rows_csv.append(list(row))
        write_csv(curve_path, header, rows_csv)
        save_policy(agent, meta, policy_path)
        print(
            f"step {row[0]}: success={row[1]:.3f} return={row[2]:.2f}", flush=True
        )

    agent, rows = train_policy(
        args.embodiment,
        args.reward,
        scfg,
        reward_model=rmodel,
        on_eval=on_eval,
        stop_success=args.stop_success,
    )
    save_policy(agent, meta, policy_path)
    write_csv(curve_path, header, [list(r) for r in rows])
    _finish_run(out, "train-policy", cfg, inputs, ["policy.xckp", "curve.csv"])
    print(f"policy: {policy_path}")
    return 0


# ----------------------------------------------------------------- eval-policy


def cmd_eval_policy(args) -> int:
    agent, meta = load_policy(args.policy)
    embodiment = args.embodiment or meta.get("embodiment")
    if embodiment not in EMBODIMENT_NAMES:
        raise ConfigError(
            "embodiment not recorded in the checkpoint; pass --embodiment"
        )
    success = evaluate(agent.policy(), embodiment, args.episodes, args.seed)
    print(repr(success))
    return 0


# ----------------------------------------------------------- export-embeddings


def cmd_export_embeddings(args) -> int:
    encoder, _ = load_model(args.ckpt)
    rows: list[list] = []
    for d in args.demos:
        for i, v in enumerate(load_video_dir(d)):
            z = embed_sequence(encoder, v.frames_f64(), v.embodiment).z
            for k in range(z.shape[0]):
                rows.append([v.embodiment, i, k] + [float(x) for x in z[k]])
    header = ["embodiment", "demo_index", "frame_index"] + [
        f"z{j}" for j in range(encoder.dim)
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, header, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


# ------------------------------------------------------------------------ plot


def cmd_plot(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_csvs(args.inputs, args.kind, out)
    print(f"wrote {out}")
    return 0


# ------------------------------------------------------------------- the suite


def cmd_run_suite(args) -> int:
    """Hold-one-out protocol: per embodiment, train an encoder on the other
    three and a policy on the learned reward."""
    cfg = load_config(args.config)
    out = _out_dir(args.out, cfg, "xmagical")
    demos_dir = out / "demos"
    if not (demos_dir / "manifest.json").is_file():
        print("== generating demos ==", flush=True)
        rc = cmd_gen_demos(
            argparse.Namespace(
                config=args.config,
                count=None,
                seed=None,
                grid=None,
                embodiment="all",
                out=str(demos_dir),
            )
        )
        if rc != 0:
            return rc
    names = tuple(cfg["demos"]["embodiments"])
    for target in names:
        train_dirs = [str(demos_dir / n) for n in names if n != target]
        enc_dir = out / "encoders" / f"no_{target}"
        print(f"== encoder holding out {target} ==", flush=True)
        rc = cmd_train_repr(
            argparse.Namespace(
                config=args.config,
                algo=None,
                iterations=None,
                seed=None,
                demos=train_dirs,
                heldout=[str(demos_dir / target)],
                out=str(enc_dir),
            )
        )
        if rc != 0:
            return rc
        print(f"== policy on {target} with learned reward ==", flush=True)
        pol_dir = out / "policies" / target
        rc = cmd_train_policy(
            argparse.Namespace(
                config=args.config,
                steps=None,
                seed=None,
                embodiment=target,
                reward="learned",
                ckpt=str(enc_dir / "encoder.xckp"),
                out=str(pol_dir),
                stop_success=args.stop_success,
            )
        )
        if rc != 0:
            return rc
        plot_csvs([pol_dir / "curve.csv"], "curve", pol_dir / "curve.svg")
    print(f"suite complete under {out}")
    return 0


# ----------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xirl",
        description="Cross-embodiment imitation workbench: demos, embeddings, "
        "learned rewards, and SAC policies on a 2D sweeping task.",
    )
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--out", default=None, help="output directory")

    g = sub.add_parser("gen-demos", help="generate scripted demonstrations")
    common(g)
    g.add_argument(
        "--embodiment", choices=("all",) + EMBODIMENT_NAMES, default="all"
    )
    g.add_argument("--count", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--grid", type=int, default=None)
    g.set_defaults(handler=cmd_gen_demos)

    t = sub.add_parser("train-repr", help="train a video embedding")
    common(t)
    t.add_argument("--algo", choices=ALGO_CHOICES, default=None)
    t.add_argument("--demos", nargs="+", required=True, help="demo directories")
    t.add_argument("--heldout", nargs="+", default=None)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(handler=cmd_train_repr)

    e = sub.add_parser("eval-repr", help="alignment report and reward traces")
    common(e)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--demos", nargs="+", required=True)
    e.add_argument("--traces", type=int, default=8)
    e.set_defaults(handler=cmd_eval_repr)

    tp = sub.add_parser("train-policy", help="train SAC on an embodiment")
    common(tp)
    tp.add_argument("--embodiment", choices=EMBODIMENT_NAMES, required=True)
    tp.add_argument("--reward", choices=REWARD_CHOICES, default="env")
    tp.add_argument("--ckpt", default=None, help="reward checkpoint")
    tp.add_argument("--steps", type=int, default=None)
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--stop-success", type=float, default=None)
    tp.set_defaults(handler=cmd_train_policy)

    ep = sub.add_parser("eval-policy", help="evaluate a policy checkpoint")
    ep.add_argument("--policy", required=True)
    ep.add_argument("--episodes", type=int, default=50)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--embodiment", choices=EMBODIMENT_NAMES, default=None)
    ep.set_defaults(handler=cmd_eval_policy)

    ex = sub.add_parser("export-embeddings", help="dump embeddings to CSV")
    ex.add_argument("--ckpt", required=True)
    ex.add_argument("--demos", nargs="+", required=True)
    ex.add_argument("--out", required=True)
    ex.set_defaults(handler=cmd_export_embeddings)

    pl = sub.add_parser("plot", help="render CSVs to an SVG")
    pl.add_argument("--in", dest="inputs", nargs="+", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--kind", choices=("curve", "reward-trace"), default="curve")
    pl.set_defaults(handler=cmd_plot)

    su = sub.add_parser(
        "run-xmagical-suite", help="hold-one-out encoders plus learned-reward policies"
    )
    common(su)
    su.add_argument("--stop-success", type=float, default=None)
    su.set_defaults(handler=cmd_run_suite)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    if getattr(args, "command", None) is None:
        parser.print_help()
        return 2
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CsvError, FormatError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
