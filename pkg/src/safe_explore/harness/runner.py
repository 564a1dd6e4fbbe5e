"""Seeded training runs and the experiment batches built from them."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from safe_explore.agents.dqn import DQNLearner, featurize
from safe_explore.agents.policies import FULL, GUIDED, VANILLA, EpsilonSchedule, select
from safe_explore.agents.tabular import Experience, QTable, q_update
from safe_explore.envs import GridRoadEnv
from safe_explore.harness import metrics as M
from safe_explore.harness.config import ExperimentConfig, parse_agent
from safe_explore.rule_learner import FeatureVocabulary, LearnedShield, collect_dataset, train_logistic
from safe_explore.rules import BUILTIN_RULES, RuleShield, load_rules

log = logging.getLogger(__name__)

# independent streams derived from one run seed
_POLICY, _NETWORK, _LEARNER, _LAYOUT = 0, 1, 2, 3


@dataclass
class RunResult:
    agent: str
    seed: int
    episodes: list[M.EpisodeMetrics]
    violations: int = 0
    audited_steps: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def rewards(self) -> np.ndarray:
        return M.rewards_of(self.episodes)

    @property
    def deaths(self) -> int:
        return M.deaths_of(self.episodes)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def audit_rules(cfg: ExperimentConfig):
    """Hand-written rules used to audit every run, whatever its own shield."""
    source = cfg.rules if cfg.rules != "learned" else cfg.env.kind
    if source in BUILTIN_RULES or Path(source).exists():
        return load_rules(source, actions=cfg.env.actions)
    return None


def train_learned_shield(cfg: ExperimentConfig, seed: int, env: GridRoadEnv | None = None) -> LearnedShield:
    env = env or GridRoadEnv(cfg.env.replace(seed=seed))
    vocab = FeatureVocabulary()
    data = collect_dataset(
        GridRoadEnv(env.config),
        cfg.learner_episodes,
        _rng(seed, _LEARNER),
        cfg.region_radius,
        cfg.d_close,
        vocab,
    )
    model = train_logistic(
        data, cfg.learner_step_size, cfg.learner_epochs, cfg.learner_threshold, feature_names=vocab.names
    )
    return LearnedShield(model, env.forward_model, env.actions, cfg.region_radius, cfg.d_close, vocab)


def build_shield(cfg: ExperimentConfig, variant: str, seed: int, env: GridRoadEnv):
    if variant in ("", "negreward"):
        return None
    if variant == "learnedrule" or cfg.rules == "learned":
        return train_learned_shield(cfg, seed, env)
    return RuleShield(load_rules(cfg.rules, actions=env.actions), env.actions, cfg.region_radius, cfg.d_close)


def _mode(variant: str) -> str:
    if variant == "fg":
        return FULL
    if variant in ("ge", "learnedrule"):
        return GUIDED
    return VANILLA


def train(cfg: ExperimentConfig, agent: str, seed: int) -> RunResult:
    """Train one agent for its episode budget and record every episode.

    The road layout is drawn from ``seed`` and reused each episode unless
    ``cfg.layout == "random"``. Every chosen action is audited against the
    hand-written rules: a *violation* is an action they flag as unsafe while
    some other action was safe.
    """
    base, variant = parse_agent(agent)
    env = GridRoadEnv(cfg.env.replace(seed=seed))
    actions = env.actions
    shield = build_shield(cfg, variant, seed, env)
    mode = _mode(variant)
    rules = audit_rules(cfg)
    auditor = RuleShield(rules, actions, cfg.region_radius, cfg.d_close) if rules is not None else None
    if isinstance(shield, RuleShield) and auditor is not None and shield.rules == auditor.rules:
        auditor = shield
    penalty = cfg.collision_penalty if variant == "negreward" else 0.0

    rng = _rng(seed, _POLICY)
    layout_rng = _rng(seed, _LAYOUT)
    n_episodes = cfg.episodes_for(agent)
    schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, int(round(cfg.eps_decay_fraction * n_episodes)))
    if base == "q":
        table = QTable(len(actions), cfg.alpha, cfg.gamma)
        learner = None
    else:
        table = None
        state_dim = len(featurize(env.reset()))
        learner = DQNLearner(
            state_dim,
            len(actions),
            _rng(seed, _NETWORK),
            hidden=cfg.hidden,
            lr=cfg.lr,
            gamma=cfg.gamma,
            batch_size=cfg.batch_size,
            buffer_capacity=cfg.buffer_capacity,
            sync_every=cfg.sync_every,
            learn_start=cfg.learn_start,
            train_every=cfg.train_every,
            value_bound=cfg.value_bound if cfg.value_bound > 0 else None,
        )

    episodes = []
    violations = 0
    audited = 0
    for ep in range(n_episodes):
        t0 = time.perf_counter() if cfg.timing else 0.0
        eps = schedule.value
        reset_seed = int(layout_rng.integers(2**31)) if cfg.layout == "random" else None
        obs = env.reset(seed=reset_seed)
        key = obs.key()
        feat = featurize(obs) if learner is not None else None
        total = 0.0
        deaths = overrides = steps = 0
        done = False
        while not done:
            q = table.values(key) if learner is None else learner.q_values(feat)
            choice = select(q, obs, eps, shield, rng, mode)
            a = choice.index
            if auditor is not None:
                mask = auditor.safe_mask(obs)
                if not mask[a] and any(mask):
                    violations += 1
                audited += 1
            res = env.step(actions[a])
            steps += 1
            total += res.reward
            overrides += choice.overridden
            deaths += res.collided
            done = res.done
            terminal = env.terminal(res)
            r_learn = res.reward + (penalty if res.collided else 0.0)
            nobs = res.obs
            if learner is None:
                nkey = nobs.key()
                q_update(table, Experience(key, a, r_learn, nkey, terminal))
                key = nkey
            else:
                nfeat = featurize(nobs)
                learner.observe(feat, a, r_learn, nfeat, terminal)
                feat = nfeat
            obs = nobs
        schedule.tick()
        ms = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
        episodes.append(M.EpisodeMetrics(ep, total, steps, deaths, overrides, ms))
    extra = {"states": len(table) if table is not None else None}
    if learner is not None:
        extra["updates"] = learner.params.updates
    return RunResult(agent, seed, episodes, violations, audited, extra)


def _train_job(args):
    cfg, agent, seed = args
    return train(cfg, agent, seed)


def run_matrix(cfg: ExperimentConfig, agents=None, seeds=None) -> list[RunResult]:
    agents = tuple(agents or cfg.agents)
    seeds = tuple(seeds or cfg.seeds)
    jobs = [(cfg, a, s) for a in agents for s in seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_train_job, jobs))
    return [_train_job(j) for j in jobs]


def csv_path(outdir: Path, agent: str, seed: int) -> Path:
    return Path(outdir) / f"{agent}_{seed}.csv"


SUMMARY_HEADER = (
    "agent",
    "seeds",
    "max_reward",
    "final_reward",
    "total_deaths",
    "relative_deaths",
    "episodes_to_baseline",
    "violations",
)


def summarize(results: list[RunResult], window: int, base: str | None = None) -> tuple[list[dict], list[dict]]:
    """Per-seed and per-agent summary rows.

    ``base`` is the reference agent for relative deaths and
    episodes-to-baseline; by default the vanilla agent of the same family.
    """
    by_agent: dict[str, dict[int, RunResult]] = {}
    for r in results:
        by_agent.setdefault(r.agent, {})[r.seed] = r

    def ref_for(agent: str) -> str | None:
        if base is not None:
            return base if base in by_agent else None
        fam = agent.partition("+")[0]
        return fam if fam in by_agent else None

    per_seed = []
    for agent, runs in by_agent.items():
        ref = ref_for(agent)
        for seed, r in sorted(runs.items()):
            row = {
                "agent": agent,
                "seed": seed,
                "max_reward": M.max_smoothed(r.rewards, window),
                "final_reward": M.final_smoothed(r.rewards, window),
                "deaths": r.deaths,
                "relative_deaths": None,
                "episodes_to_baseline": None,
                "baseline_first_max": None,
                "violations": r.violations,
                "overrides": int(sum(m.overrides for m in r.episodes)),
            }
            b = by_agent.get(ref, {}).get(seed) if ref else None
            if b is not None:
                row["relative_deaths"] = r.deaths / b.deaths if b.deaths else None
                row["episodes_to_baseline"] = M.episodes_to_baseline(b.rewards, r.rewards, window)
                row["baseline_first_max"] = M.first_max_episode(b.rewards, window)
            per_seed.append(row)

    per_agent = []
    for agent, runs in by_agent.items():
        rows = [p for p in per_seed if p["agent"] == agent]
        rel = [p["relative_deaths"] for p in rows if p["relative_deaths"] is not None]
        etb = [p["episodes_to_baseline"] for p in rows]
        per_agent.append(
            {
                "agent": agent,
                "seeds": len(rows),
                "max_reward": float(np.mean([p["max_reward"] for p in rows])),
                "final_reward": float(np.mean([p["final_reward"] for p in rows])),
                "total_deaths": int(sum(p["deaths"] for p in rows)),
                "relative_deaths": float(np.mean(rel)) if rel else None,
                "episodes_to_baseline": (
                    float(np.median(etb)) if etb and all(e is not None for e in etb) else None
                ),
                "violations": int(sum(p["violations"] for p in rows)),
            }
        )
    return per_agent, per_seed


def _fmt(v) -> str:
    if v is None:
        return "never"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_summary(outdir: Path, per_agent: list[dict], per_seed: list[dict]) -> None:
    outdir = Path(outdir)
    with open(outdir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in per_agent:
            w.writerow([_fmt(row[k]) for k in SUMMARY_HEADER])
    if per_seed:
        keys = list(per_seed[0])
        with open(outdir / "per_seed.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in per_seed:
                w.writerow([_fmt(row[k]) for k in keys])


RUN_INFO = "runs.json"


def write_run_info(outdir: Path, results: list[RunResult]) -> None:
    """Per-run facts that do not fit the per-episode CSV (audit counts, extras)."""
    path = Path(outdir) / RUN_INFO
    info = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    for r in results:
        info[f"{r.agent}_{r.seed}"] = {
            "agent": r.agent,
            "seed": r.seed,
            "violations": r.violations,
            "audited_steps": r.audited_steps,
            **{k: v for k, v in r.extra.items() if v is not None},
        }
    path.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(cfg: ExperimentConfig, agents=None, seeds=None, outdir: Path | None = None) -> list[RunResult]:
    """Train every (agent, seed) pair, stream CSVs and write the summary files."""
    cfg.validate()
    outdir = Path(outdir or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = run_matrix(cfg, agents, seeds)
    for r in results:
        M.write_csv(csv_path(outdir, r.agent, r.seed), r.episodes)
    write_run_info(outdir, results)
    per_agent, per_seed = summarize(results, cfg.window)
    write_summary(outdir, per_agent, per_seed)
    log.info("wrote %d runs to %s", len(results), outdir)
    return results


SHAPING_AGENTS = ("dqn", "dqn+ge", "dqn+fg", "dqn+negreward")


def reward_shaping_compare(cfg: ExperimentConfig, seeds=None, outdir: Path | None = None) -> dict:
    """Safe agents vs a collision-penalised agent on the 0/1 reward road.

    Every agent sees the 0/1 task reward; only ``dqn+negreward`` also
    learns from a penalty on collision. Logged rewards are task rewards.
    """
    cfg = cfg.with_env(reward_mode="zero_one")
    seeds = tuple(seeds or cfg.seeds)
    results = run_experiment(cfg, SHAPING_AGENTS, seeds, outdir)
    final = {
        (r.agent, r.seed): M.final_smoothed(r.rewards, cfg.window) for r in results
    }
    per_seed = {}
    for s in seeds:
        f = {a: final[(a, s)] for a in SHAPING_AGENTS}
        per_seed[s] = {"final": f, "verdict": M.shaping_verdict(f)}
    mean_final = {a: float(np.mean([final[(a, s)] for s in seeds])) for a in SHAPING_AGENTS}
    summary = {
        "per_seed": per_seed,
        "mean_final": mean_final,
        "verdict": M.shaping_verdict(mean_final),
        "seeds_with_verdict": sum(v["verdict"] for v in per_seed.values()),
    }
    out = Path(outdir or cfg.output_dir)
    (out / "shaping.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
