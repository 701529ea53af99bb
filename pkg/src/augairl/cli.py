"""Command-line entry point: ``augairl {collect,train,eval,replay,plot}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import List, Optional

from .checkpoint import CheckpointError, load_checkpoint
from .config import apply_config, read_config
from .demos import DatasetFormatError, save_dataset
from .evaluation import (ReportError, emit_csv, emit_curves, expert_report, policy_from_checkpoint,
                         run_eval, traffic_from_checkpoint)
from .expert import ExpertRegressionError, collect_demos
from .seeding import EVAL, episode_seed
from .sim import build_observation, reset, step_inplace
from .training import ConfigError, TrainConfig, train


class CliError(Exception):
    pass


def _load_config(path):
    if not path:
        return TrainConfig(), None
    train_cfg, expert_cfg = apply_config(read_config(path))
    return train_cfg, expert_cfg


def cmd_collect(args) -> int:
    train_cfg, expert_cfg = _load_config(args.config)
    kwargs = {"config": train_cfg.traffic}
    if expert_cfg is not None:
        kwargs["expert_config"] = expert_cfg
    ds = collect_demos(args.episodes, args.seed, **kwargs)
    save_dataset(ds, args.out)
    print(f"collected {len(ds)} successful expert episodes ({ds.n_transitions} decisions) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg, _ = _load_config(args.config)
    overrides = {"algo": args.algo.replace("-", "_")}
    for name, key in (("demos", "demo_path"), ("iters", "iterations"), ("horizon", "horizon"),
                      ("seed", "seed"), ("checkpoint_interval", "checkpoint_interval")):
        v = getattr(args, name)
        if v is not None:
            overrides[key] = v
    if args.shaping_ablation:
        overrides["shaping_ablation"] = True
    cfg = replace(cfg, **overrides)
    cfg.validate()

    def progress(row):
        if not args.quiet and (row["iteration"] % 10 == 0 or row["iteration"] == cfg.iterations):
            print(f"iter {row['iteration']:6d}  success {row['success_ratio']!s:>6.6}  "
                  f"reward {row['total_reward']!s:>8.8}  kl {row['kl']:.4f}", flush=True)

    train(cfg, args.out, progress=progress)
    print(f"run written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.expert:
        train_cfg, expert_cfg = _load_config(args.config)
        report = expert_report(args.episodes, args.seed, train_cfg.traffic,
                               *(() if expert_cfg is None else (expert_cfg,)))
    else:
        if not args.checkpoint:
            raise CliError("eval needs --checkpoint PATH (or --expert)")
        report = run_eval(args.checkpoint, args.episodes, args.seed)
    if args.csv:
        emit_csv([report], args.csv)
    m, s = report.mean, report.std
    print(f"{report.algo} @ {report.iteration}: success {m['success_ratio']:.3f}  "
          f"reward {m['total_reward']:.2f}±{s['total_reward']:.2f}  "
          f"decision {m['decision_steps']:.1f}±{s['decision_steps']:.1f}  "
          f"changing {m['changing_steps']:.1f}±{s['changing_steps']:.1f}")
    return 0


def trace_records(act, traffic, seed: int):
    """Per-tick trace of one evaluation episode (the first held-out episode for ``seed``)."""
    world = reset(traffic, episode_seed(seed, 0, EVAL))
    while not world.terminated:
        obs = build_observation(world)
        action = act(world, obs)
        out = step_inplace(world, action)
        vehicles = [{"id": world.ego.id, "lon_pos": world.ego.lon_pos, "lat_pos": world.ego.lat_pos,
                     "lon_speed": world.ego.lon_speed, "lane_index": world.ego.lane_index, "ego": True}]
        for v in world.others:
            vehicles.append({"id": v.id, "lon_pos": v.lon_pos, "lat_pos": v.lat_pos,
                             "lon_speed": v.lon_speed, "lane_index": v.lane_index, "ego": False})
        yield {"t": world.time_step, "action": int(action), "phase": world.maneuver_phase.value,
               "events": {"success": out.success, "crash": out.crash,
                          "margin_invasion": out.margin_invasion, "lateral_move": out.lateral_move},
               "terminated": out.terminated, "termination_reason": out.termination_reason,
               "vehicles": vehicles}


def cmd_replay(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    policy = policy_from_checkpoint(ckpt)

    def act(world, obs):
        return int(policy.greedy(obs)[0])

    n = 0
    try:
        with open(args.trace, "w") as fh:
            for rec in trace_records(act, traffic_from_checkpoint(ckpt), args.seed):
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                n += 1
    except OSError as exc:
        raise CliError(f"cannot write trace {args.trace!r}: {exc.strerror}") from None
    print(f"wrote {n} ticks to {args.trace}")
    return 0


def cmd_plot(args) -> int:
    for d in args.runs:
        if not os.path.exists(os.path.join(d, "log.csv")):
            raise CliError(f"run directory {d!r} has no log.csv")
    expert = None
    if args.expert_csv:
        import csv
        with open(args.expert_csv, newline="") as fh:
            row = next(csv.DictReader(fh))
        expert = {m: float(row[f"{m}_mean"]) for m in
                  ("total_reward", "success_ratio", "decision_steps", "changing_steps")}
    emit_curves(args.runs, args.out, expert=expert)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="augairl", description="Lane-change imitation learning toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="run the rule-based expert and store demonstrations")
    c.add_argument("--episodes", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="train one algorithm")
    t.add_argument("--algo", required=True, choices=("augairl", "airl", "gail", "trpo", "bc-trpo"))
    t.add_argument("--demos")
    t.add_argument("--iters", type=int)
    t.add_argument("--horizon", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--checkpoint-interval", type=int)
    t.add_argument("--shaping-ablation", action="store_true")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint with greedy actions")
    e.add_argument("--checkpoint")
    e.add_argument("--expert", action="store_true", help="evaluate the rule-based expert instead")
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--csv")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="write a per-tick JSON-lines trace of one episode")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", required=True)
    r.set_defaults(func=cmd_replay)

    pl = sub.add_parser("plot", help="draw training curves of one or more runs as SVG")
    pl.add_argument("--runs", nargs="+", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--expert-csv", help="eval CSV of the expert, drawn as dashed reference lines")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
    except (CheckpointError, DatasetFormatError, ExpertRegressionError, ReportError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
