import csv
import hashlib
import re

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augairl.checkpoint import Checkpoint, save_checkpoint
from augairl.evaluation import (CSV_COLUMNS, METRICS, CheckpointReport, ReportError, changing_steps,
                                decision_steps, emit_csv, emit_curves, expert_report, run_episodes, run_eval,
                                success_ratio)
from augairl.expert import collect_demos
from augairl.policy import CategoricalMlpPolicy
from augairl.sim import TrafficConfig
from augairl.training import EpisodeMetrics, Trainer, TrainConfig, train


def ep(success=True, decision=24, changing=24, reward=1.0):
    return EpisodeMetrics(success, decision, changing, reward)


@pytest.fixture(scope="module")
def policy_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "p.ckpt"
    tr = Trainer(TrainConfig(algo="trpo", horizon=32, value_hidden=(8,)))
    tr.iterate()
    save_checkpoint(tr.checkpoint(), path)
    return path


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    dirs = []
    for algo in ("trpo", "augairl"):
        d = root / algo
        cfg = TrainConfig(algo=algo, iterations=4, horizon=32, policy_hidden=(8,), value_hidden=(8,),
                          disc_hidden=(8,), checkpoint_interval=4)
        train(cfg, d, demos=collect_demos(2, seed=1) if algo == "augairl" else None)
        dirs.append(str(d))
    return dirs


# -- metric definitions --------------------------------------------------------------

def test_success_ratio_cases():
    assert success_ratio([ep()] * 46 + [ep(False, 200, 0)] * 4) == pytest.approx(0.92)
    assert success_ratio([ep()] * 3) == 1.0
    assert success_ratio([ep(False, 200, 0)] * 3) == 0.0
    with pytest.raises(ValueError):
        success_ratio([])


@given(st.integers(1, 60), st.data())
def test_success_ratio_is_monotone(n, data):
    k = data.draw(st.integers(0, n - 1))
    eps = [ep(i < k, 50, 0) for i in range(n)]
    more = [ep(i <= k, 50, 0) for i in range(n)]
    assert success_ratio(eps) < success_ratio(more)


def test_step_counters():
    assert decision_steps(ep(decision=24, changing=24)) == 24
    assert changing_steps(ep(False, 200, 0)) == 0
    assert decision_steps(ep(False, 200, 0)) == 200
    with pytest.raises(ValueError):
        EpisodeMetrics(True, 10, 11, 0.0)
    with pytest.raises(ValueError):
        EpisodeMetrics(True, 0, 0, 0.0)


def test_timeout_episode_has_max_decision_steps():
    # lane keeping never completes the request; the episode ends by timeout
    eps = run_episodes(lambda w, o: 1, TrafficConfig(), 3, seed=2)
    for e in eps:
        assert e.termination_reason == "timeout" and not e.success
        assert e.changing_steps == 0
        assert e.decision_steps <= 200


def test_expert_wrapper_succeeds():
    rep = expert_report(20, seed=9)
    assert rep.mean["success_ratio"] == 1.0
    assert all(e.changing_steps <= e.decision_steps for e in rep.episodes)


def test_uniform_random_policy_rarely_succeeds():
    rng = np.random.default_rng(0)
    eps = run_episodes(lambda w, o: int(rng.integers(0, 5)), TrafficConfig(), 50, seed=0)
    assert success_ratio(eps) < 0.2


# -- checkpoint evaluation -----------------------------------------------------------

def test_run_eval_is_deterministic_and_side_effect_free(policy_ckpt):
    before = hashlib.sha256(policy_ckpt.read_bytes()).hexdigest()
    a = run_eval(policy_ckpt, 5, seed=3)
    b = run_eval(policy_ckpt, 5, seed=3)
    assert a.mean == b.mean and a.std == b.std
    assert a.n_episodes == 5 and a.algo == "trpo"
    assert all(v >= 0 for v in a.std.values())
    assert a.disc_loss_mean is None
    assert hashlib.sha256(policy_ckpt.read_bytes()).hexdigest() == before


def test_incompatible_observation_dimension(tmp_path):
    pol = CategoricalMlpPolicy(obs_dim=40, input_scale=None)
    path = tmp_path / "odd.ckpt"
    save_checkpoint(Checkpoint(1, pol.get_flat_params(), np.zeros(3), metadata={"policy_hidden": [100, 100]}), path)
    with pytest.raises(ValueError, match="observation dimension"):
        run_eval(path, 1)


def test_disc_loss_comes_from_the_logged_window():
    log = [{"disc_loss": float(i)} for i in range(150)] + [{"disc_loss": None}]
    pol = CategoricalMlpPolicy(seed=0)
    ck = Checkpoint(150, pol.get_flat_params(), np.zeros(1), metadata={"log": log, "algo": "airl"})
    rep = run_eval(ck, 1, seed=0)
    assert rep.disc_loss_mean == pytest.approx(np.mean(np.arange(50, 150)))
    assert rep.disc_loss_std == pytest.approx(np.std(np.arange(50, 150)))


# -- CSV -----------------------------------------------------------------------------

def report(seed=0):
    rng = np.random.default_rng(seed)
    mean = {m: float(rng.normal()) * 1e3 / 7 for m in METRICS}
    std = {m: float(rng.random()) / 3 for m in METRICS}
    return CheckpointReport(3000, "augairl", 50, 0, mean, std, 0.6931471805599453, 1e-3 / 3)


def test_csv_single_row_round_trips_exactly(tmp_path):
    r = report()
    path = tmp_path / "r.csv"
    emit_csv([r], path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    for m in METRICS:
        assert float(row[f"{m}_mean"]) == r.mean[m]
        assert float(row[f"{m}_std"]) == r.std[m]
    assert float(row["disc_loss_mean"]) == r.disc_loss_mean
    assert int(row["iteration"]) == 3000


def test_csv_is_byte_identical_on_repeat(tmp_path):
    emit_csv([report(1), report(2)], tmp_path / "a.csv")
    emit_csv([report(1), report(2)], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_unwritable_csv_is_a_structured_error(tmp_path):
    with pytest.raises(ReportError):
        emit_csv([report()], tmp_path / "missing" / "r.csv")


# -- SVG -----------------------------------------------------------------------------

def test_svg_structure(two_runs, tmp_path):
    path = tmp_path / "c.svg"
    emit_curves(two_runs, path, expert={"success_ratio": 1.0, "total_reward": 10.0})
    text = path.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert len(re.findall(r'<g class="panel"', text)) == 4
    assert len(re.findall(r"<polyline", text)) == 4 * len(two_runs)
    assert len(re.findall(r'<line class="expert"', text)) == 2
    assert 'stroke-dasharray' in text


def test_svg_one_polyline_per_run(two_runs, tmp_path):
    emit_curves(two_runs[:1], tmp_path / "one.svg")
    assert len(re.findall(r"<polyline", (tmp_path / "one.svg").read_text())) == 4


def test_svg_is_byte_identical_on_repeat(two_runs, tmp_path):
    emit_curves(two_runs, tmp_path / "a.svg")
    emit_curves(two_runs, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_svg_errors(two_runs, tmp_path):
    with pytest.raises(ValueError):
        emit_curves([], tmp_path / "x.svg")
    with pytest.raises(ReportError):
        emit_curves(two_runs, tmp_path / "missing" / "x.svg")
