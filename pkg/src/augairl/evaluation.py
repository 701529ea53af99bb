"""Checkpoint evaluation, metric aggregation and CSV / SVG reports."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint
from .expert import ExpertConfig, expert_action
from .policy import CategoricalMlpPolicy
from .seeding import EVAL
from .sim import OBS_DIM, TrafficConfig
from .training import EpisodeMetrics, EpisodeRunner, read_log

METRICS = ("total_reward", "success_ratio", "decision_steps", "changing_steps")
DISC_LOSS_WINDOW = 100


class ReportError(OSError):
    """A report could not be written."""


def success_ratio(episodes: Sequence[EpisodeMetrics]) -> float:
    if len(episodes) == 0:
        raise ValueError("success_ratio needs at least one episode")
    return sum(bool(e.success) for e in episodes) / len(episodes)


def decision_steps(episode: EpisodeMetrics) -> int:
    return episode.decision_steps


def changing_steps(episode: EpisodeMetrics) -> int:
    return episode.changing_steps


@dataclass
class CheckpointReport:
    iteration: int
    algo: str
    n_episodes: int
    seed: int
    mean: Dict[str, float]
    std: Dict[str, float]
    disc_loss_mean: Optional[float] = None
    disc_loss_std: Optional[float] = None
    episodes: List[EpisodeMetrics] = field(default_factory=list, repr=False)


def run_episodes(act: Callable, traffic: TrafficConfig, n_episodes: int, seed: int) -> List[EpisodeMetrics]:
    """Play ``n_episodes`` evaluation episodes with ``act(world, obs) -> action``."""
    runner = EpisodeRunner(traffic, seed, EVAL)
    done: List[EpisodeMetrics] = []
    while len(done) < n_episodes:
        _, _, finished = runner.step(act(runner.world, runner.obs))
        if finished is not None:
            done.append(finished)
    return done


def greedy_actor(policy: CategoricalMlpPolicy) -> Callable:
    def act(world, obs):
        return int(policy.greedy(obs)[0])
    return act


def expert_actor(cfg: ExpertConfig = ExpertConfig()) -> Callable:
    def act(world, obs):
        return expert_action(world, cfg)
    return act


def summarize(episodes: Sequence[EpisodeMetrics]):
    cols = {
        "total_reward": [e.total_reward for e in episodes],
        "success_ratio": [float(e.success) for e in episodes],
        "decision_steps": [e.decision_steps for e in episodes],
        "changing_steps": [e.changing_steps for e in episodes],
    }
    mean = {k: float(np.mean(v)) for k, v in cols.items()}
    std = {k: float(np.std(v)) for k, v in cols.items()}
    mean["success_ratio"] = success_ratio(episodes)
    return mean, std


def policy_from_checkpoint(ckpt: Checkpoint) -> CategoricalMlpPolicy:
    hidden = tuple(ckpt.metadata.get("policy_hidden", (100, 100)))
    policy = CategoricalMlpPolicy(hidden=hidden, seed=0)
    if ckpt.policy.size != policy.n_params:
        raise ValueError(
            f"checkpoint policy has {ckpt.policy.size} parameters; a {OBS_DIM}-feature policy with hidden "
            f"sizes {hidden} needs {policy.n_params} (incompatible observation dimension or network)")
    policy.set_flat_params(ckpt.policy)
    return policy


def traffic_from_checkpoint(ckpt: Checkpoint) -> TrafficConfig:
    cfg = ckpt.metadata.get("config", {}).get("traffic")
    return TrafficConfig.from_dict(cfg) if cfg else TrafficConfig()


def run_eval(checkpoint, n_episodes: int = 50, seed: int = 0) -> CheckpointReport:
    """Greedy evaluation of a checkpoint (object or path) over seeded held-out episodes.

    The discriminator loss is not re-estimated: its mean and standard
    deviation are taken over the last logged training iterations.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    policy = policy_from_checkpoint(ckpt)
    episodes = run_episodes(greedy_actor(policy), traffic_from_checkpoint(ckpt), n_episodes, seed)
    mean, std = summarize(episodes)
    losses = [r["disc_loss"] for r in ckpt.metadata.get("log", []) if r.get("disc_loss") is not None]
    losses = losses[-DISC_LOSS_WINDOW:]
    return CheckpointReport(
        iteration=ckpt.iteration, algo=ckpt.metadata.get("algo", "unknown"), n_episodes=n_episodes,
        seed=seed, mean=mean, std=std,
        disc_loss_mean=float(np.mean(losses)) if losses else None,
        disc_loss_std=float(np.std(losses)) if losses else None,
        episodes=episodes)


def expert_report(n_episodes: int = 50, seed: int = 0, traffic: TrafficConfig = TrafficConfig(),
                  cfg: ExpertConfig = ExpertConfig()) -> CheckpointReport:
    episodes = run_episodes(expert_actor(cfg), traffic, n_episodes, seed)
    mean, std = summarize(episodes)
    return CheckpointReport(0, "expert", n_episodes, seed, mean, std, episodes=episodes)


# -- CSV ------------------------------------------------------------------------

CSV_COLUMNS = ("algo", "iteration", "episodes", "seed",
               "total_reward_mean", "total_reward_std", "success_ratio_mean", "success_ratio_std",
               "decision_steps_mean", "decision_steps_std", "changing_steps_mean", "changing_steps_std",
               "disc_loss_mean", "disc_loss_std")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def report_rows(reports: Sequence[CheckpointReport]) -> List[List[str]]:
    rows = []
    for r in reports:
        row = [r.algo, _num(r.iteration), _num(r.n_episodes), _num(r.seed)]
        for m in METRICS:
            row += [_num(r.mean[m]), _num(r.std[m])]
        row += [_num(r.disc_loss_mean), _num(r.disc_loss_std)]
        rows.append(row)
    return rows


def emit_csv(reports: Sequence[CheckpointReport], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(report_rows(reports))
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ReportError(f"cannot write {os.fspath(path)!r}: {exc.strerror}") from None


# -- SVG curves -------------------------------------------------------------------

PANEL_W, PANEL_H, MARGIN = 360, 240, 40
COLORS = ("#1f77b4", "#ff7f0e", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
TITLES = {"total_reward": "total reward", "success_ratio": "success ratio",
          "decision_steps": "decision steps", "changing_steps": "changing steps"}


def _run_series(run_dir) -> Dict[str, np.ndarray]:
    rows = read_log(os.path.join(run_dir, "log.csv"))
    it = np.array([r["iteration"] for r in rows], dtype=np.float64)
    series = {"iteration": it}
    for m in METRICS:
        series[m] = np.array([np.nan if r[m] is None else r[m] for r in rows], dtype=np.float64)
    return series


def _run_label(run_dir) -> str:
    cfg_path = os.path.join(run_dir, "config.json")
    name = os.path.basename(os.path.normpath(run_dir))
    if os.path.exists(cfg_path):
        with open(cfg_path) as fh:
            cfg = json.load(fh)
        return f"{cfg.get('algo', name)} ({name})"
    return name


def _f(x: float) -> str:
    return format(x, ".2f")


def emit_curves(run_dirs: Sequence, path, expert: Optional[Dict[str, float]] = None) -> None:
    """Four panels (one per metric) with one polyline per run and dashed expert levels."""
    if not run_dirs:
        raise ValueError("emit_curves needs at least one run directory")
    runs = [(_run_label(d), _run_series(d)) for d in run_dirs]
    width, height = 2 * PANEL_W, 2 * PANEL_H + 30
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<style>text{font-family:sans-serif;font-size:11px}</style>']
    for k, metric in enumerate(METRICS):
        ox, oy = (k % 2) * PANEL_W, (k // 2) * PANEL_H
        x0, y0 = ox + MARGIN, oy + 20
        pw, ph = PANEL_W - MARGIN - 10, PANEL_H - 50
        xs = np.concatenate([s["iteration"] for _, s in runs])
        ys = np.concatenate([s[metric][np.isfinite(s[metric])] for _, s in runs])
        if expert is not None and metric in expert:
            ys = np.append(ys, expert[metric])
        xmin, xmax = float(xs.min()), float(xs.max())
        ymin, ymax = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if xmax == xmin:
            xmax = xmin + 1.0
        if ymax == ymin:
            ymin, ymax = ymin - 0.5, ymax + 0.5

        def px(x):
            return x0 + (x - xmin) / (xmax - xmin) * pw

        def py(y):
            return y0 + ph - (y - ymin) / (ymax - ymin) * ph

        out.append(f'<g class="panel" id="panel-{metric}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>')
        out.append(f'<text x="{x0 + pw / 2}" y="{oy + 14}" text-anchor="middle">{TITLES[metric]}</text>')
        out.append(f'<text x="{x0 - 4}" y="{_f(y0 + 4)}" text-anchor="end">{ymax:.3g}</text>')
        out.append(f'<text x="{x0 - 4}" y="{_f(y0 + ph)}" text-anchor="end">{ymin:.3g}</text>')
        out.append(f'<text x="{x0}" y="{_f(y0 + ph + 14)}">{xmin:.0f}</text>')
        out.append(f'<text x="{_f(x0 + pw)}" y="{_f(y0 + ph + 14)}" text-anchor="end">{xmax:.0f}</text>')
        for j, (label, s) in enumerate(runs):
            ok = np.isfinite(s[metric])
            pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(s["iteration"][ok], s[metric][ok]))
            out.append(f'<polyline class="run" fill="none" stroke="{COLORS[j % len(COLORS)]}" '
                       f'stroke-width="1.2" points="{pts}"><title>{label}</title></polyline>')
        if expert is not None and metric in expert:
            y = py(expert[metric])
            out.append(f'<line class="expert" x1="{x0}" y1="{_f(y)}" x2="{x0 + pw}" y2="{_f(y)}" '
                       f'stroke="black" stroke-dasharray="5,4"/>')
        out.append("</g>")
    ly = 2 * PANEL_H + 15
    for j, (label, _) in enumerate(runs):
        lx = 10 + j * 170
        out.append(f'<text x="{lx}" y="{ly}" fill="{COLORS[j % len(COLORS)]}">{label}</text>')
    out.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write {os.fspath(path)!r}: {exc.strerror}") from None
