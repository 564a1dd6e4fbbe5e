import numpy as np
import pytest

from safe_explore.harness import metrics as M
from safe_explore.harness.config import ExperimentConfig
from safe_explore.harness.report import load_runs, make_report
from safe_explore.harness.runner import (
    SHAPING_AGENTS,
    RunResult,
    csv_path,
    reward_shaping_compare,
    run_experiment,
    summarize,
    train,
)


def small(**kw):
    base = dict(episodes=30, dqn_episodes=20, learn_start=50, learner_episodes=50, learner_epochs=100)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.mark.parametrize("agent", ["q", "q+ge", "q+fg", "q+learnedrule", "dqn", "dqn+ge", "dqn+fg", "dqn+negreward"])
def test_every_agent_runs(agent):
    cfg = small()
    r = train(cfg, agent, 1)
    assert len(r.episodes) == cfg.episodes_for(agent)
    assert [m.episode for m in r.episodes] == list(range(len(r.episodes)))
    assert all(m.reward in (-1.0, 0.0, 1.0) for m in r.episodes)
    assert r.audited_steps == sum(m.steps for m in r.episodes)
    if "+" not in agent or agent.endswith("negreward"):
        assert all(m.overrides == 0 for m in r.episodes)


def test_fg_never_violates():
    r = train(small(episodes=200), "q+fg", 2)
    assert r.violations == 0
    assert sum(m.overrides for m in r.episodes) > 0


def test_vanilla_violates_and_dies():
    r = train(small(episodes=200), "q", 2)
    assert r.violations > 0 and r.deaths > 0


def test_csv_rows_and_determinism(tmp_path):
    cfg = small(episodes=40)
    run_experiment(cfg, ["q+ge"], [1], tmp_path / "a")
    run_experiment(cfg, ["q+ge"], [1], tmp_path / "b")
    a = csv_path(tmp_path / "a", "q+ge", 1).read_bytes()
    b = csv_path(tmp_path / "b", "q+ge", 1).read_bytes()
    assert a == b
    assert len(a.decode().splitlines()) == 41
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_seeds_differ():
    cfg = small(episodes=60)
    assert train(cfg, "q", 1).episodes != train(cfg, "q", 2).episodes


def test_workers_give_same_results(tmp_path):
    cfg = small(episodes=20)
    one = run_experiment(cfg, ["q", "q+fg"], [1, 2], tmp_path / "one")
    two = run_experiment(cfg.replace(workers=2), ["q", "q+fg"], [1, 2], tmp_path / "two")
    assert [r.episodes for r in one] == [r.episodes for r in two]


def fake(agent, seed, rewards, deaths=None):
    deaths = deaths if deaths is not None else [0] * len(rewards)
    eps = [M.EpisodeMetrics(i, float(r), 1, d, 0) for i, (r, d) in enumerate(zip(rewards, deaths))]
    return RunResult(agent, seed, eps)


def test_summarize_relative_to_family_base():
    base = fake("q", 1, np.linspace(0, 0.5, 100), [2] * 100)
    fg = fake("q+fg", 1, np.linspace(0, 1, 100), [1] * 50 + [0] * 50)
    per_agent, per_seed = summarize([base, fg], window=1)
    row = next(p for p in per_seed if p["agent"] == "q+fg")
    assert row["relative_deaths"] == 0.25
    assert row["episodes_to_baseline"] == 50
    assert row["baseline_first_max"] == 99
    base_row = next(p for p in per_seed if p["agent"] == "q")
    assert base_row["relative_deaths"] == 1.0
    assert {a["agent"] for a in per_agent} == {"q", "q+fg"}


def test_report_from_disk(tmp_path):
    runs = [fake("q", s, np.linspace(0, 0.5, 50), [1] * 50) for s in (1, 2)]
    runs += [fake("q+fg", s, np.linspace(0, 1, 50)) for s in (1, 2)]
    for r in runs:
        M.write_csv(csv_path(tmp_path, r.agent, r.seed), r.episodes)
    loaded = load_runs(tmp_path)
    assert sorted((r.agent, r.seed) for r in loaded) == sorted((r.agent, r.seed) for r in runs)
    written = make_report(tmp_path, tmp_path / "rep", window=5)
    names = {p.name for p in written}
    assert {"summary.csv", "per_seed.csv", "learning_curves.png", "relative_deaths.png"} <= names
    assert all(p.exists() and p.stat().st_size > 0 for p in written)


def shaping_fixture(tmp_path, finals):
    tmp_path.mkdir()
    for agent, value in finals.items():
        M.write_csv(csv_path(tmp_path, agent, 1), fake(agent, 1, [value] * 10).episodes)
    results = load_runs(tmp_path)
    return {r.agent: M.final_smoothed(r.rewards, 5) for r in results}


def test_shaping_verdict_from_synthetic_csvs(tmp_path):
    finals = shaping_fixture(tmp_path / "a", {"dqn": 0.9, "dqn+ge": 0.9, "dqn+fg": 0.9, "dqn+negreward": 0.6})
    assert M.shaping_verdict(finals)
    finals = shaping_fixture(tmp_path / "b", {a: 0.7 for a in SHAPING_AGENTS})
    assert not M.shaping_verdict(finals)


def test_reward_shaping_compare_small(tmp_path):
    cfg = small(dqn_episodes=15, seeds=(1,))
    summary = reward_shaping_compare(cfg, outdir=tmp_path)
    assert set(summary["per_seed"][1]["final"]) == set(SHAPING_AGENTS)
    assert (tmp_path / "shaping.json").exists()
    for agent in SHAPING_AGENTS:
        rewards = M.rewards_of(M.read_csv(csv_path(tmp_path, agent, 1)))
        assert set(np.unique(rewards)) <= {0.0, 1.0}
