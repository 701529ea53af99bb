"""Desk-scale paired-seed comparison of the imitation learners against TRPO.

``run_trend`` trains every (algorithm, seed) pair, evaluates each final
checkpoint greedily and writes ``summary.json``; ``trend_verdict`` checks the
expected orderings on such a summary.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import replace
from typing import Dict, Sequence

import numpy as np

from .demos import load_dataset
from .evaluation import run_eval
from .training import TrainConfig, train

TREND_ALGOS = ("augairl", "airl", "trpo")
TREND_SEEDS = (0, 1, 2)
TREND_ITERATIONS = 1500
MIN_IMITATION_SUCCESS = 0.6


def run_trend(out_root, demo_path, iterations: int = TREND_ITERATIONS, seeds: Sequence[int] = TREND_SEEDS,
              algos: Sequence[str] = TREND_ALGOS, eval_episodes: int = 50, eval_seed: int = 0,
              base: TrainConfig = TrainConfig()) -> dict:
    os.makedirs(out_root, exist_ok=True)
    demos = load_dataset(demo_path)
    summary_path = os.path.join(out_root, "summary.json")
    summary = {"iterations": iterations, "eval_episodes": eval_episodes, "eval_seed": eval_seed, "runs": []}
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            summary = json.load(fh)
    done = {(r["algo"], r["seed"]) for r in summary["runs"]}
    for seed in seeds:
        for algo in algos:
            if (algo, seed) in done:
                continue
            run_dir = os.path.join(out_root, f"{algo}_s{seed}")
            cfg = replace(base, algo=algo, iterations=iterations, seed=seed,
                          checkpoint_interval=max(iterations // 5, 1), demo_path=demo_path)
            t0 = time.time()
            train(cfg, run_dir, demos=demos)
            wall = time.time() - t0
            rep = run_eval(os.path.join(run_dir, "final.ckpt"), eval_episodes, eval_seed)
            summary["runs"].append({"algo": algo, "seed": seed, "run_dir": run_dir, "wall_seconds": wall,
                                    "mean": rep.mean, "std": rep.std,
                                    "disc_loss_mean": rep.disc_loss_mean})
            tmp = summary_path + ".tmp"
            with open(tmp, "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, summary_path)
    return summary


def _by_algo(summary: dict, metric: str) -> Dict[str, Dict[int, float]]:
    out: Dict[str, Dict[int, float]] = {}
    for r in summary["runs"]:
        out.setdefault(r["algo"], {})[r["seed"]] = r["mean"][metric]
    return out


def trend_verdict(summary: dict) -> Dict[str, tuple]:
    """``{check: (passed, detail)}`` over the seeds every algorithm completed."""
    succ = _by_algo(summary, "success_ratio")
    reward = _by_algo(summary, "total_reward")
    missing = [a for a in TREND_ALGOS if a not in succ]
    if missing:
        return {"complete": (False, f"no runs for {missing}")}
    seeds = sorted(set.intersection(*(set(succ[a]) for a in TREND_ALGOS)))
    if not seeds:
        return {"complete": (False, "no seed completed by every algorithm")}

    def mean(d, a):
        return float(np.mean([d[a][s] for s in seeds]))

    s_aug, s_airl, s_trpo = mean(succ, "augairl"), mean(succ, "airl"), mean(succ, "trpo")
    r_aug, r_airl = mean(reward, "augairl"), mean(reward, "airl")
    return {
        "complete": (len(seeds) == len(TREND_SEEDS), f"paired seeds {seeds}"),
        "a_success_order": (s_aug >= s_airl, f"augairl {s_aug:.3f} vs airl {s_airl:.3f}"),
        "a_success_floor": (min(s_aug, s_airl) >= MIN_IMITATION_SUCCESS,
                            f"min(augairl, airl) = {min(s_aug, s_airl):.3f} vs {MIN_IMITATION_SUCCESS}"),
        "b_reward_order": (r_aug >= r_airl, f"augairl {r_aug:.2f} vs airl {r_airl:.2f}"),
        "c_beats_trpo": (min(s_aug, s_airl) > s_trpo,
                         f"augairl {s_aug:.3f}, airl {s_airl:.3f} vs trpo {s_trpo:.3f}"),
    }


if __name__ == "__main__":
    import argparse

    p = argparse.ArgumentParser(description="paired-seed desk-scale trend runs")
    p.add_argument("--out", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--iters", type=int, default=TREND_ITERATIONS)
    args = p.parse_args()
    s = run_trend(args.out, args.demos, args.iters)
    for k, (ok, detail) in trend_verdict(s).items():
        print(f"{'PASS' if ok else 'FAIL'} {k}: {detail}")
