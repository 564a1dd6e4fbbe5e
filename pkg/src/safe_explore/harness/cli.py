"""``safe-explore`` command line: train, compare, shape, learn-rules, report.

Global options come before the subcommand::

    safe-explore --config exp.ini --set dqn.lr=0.0005 compare --agents dqn,dqn+fg

``SAFE_EXPLORE_OUTDIR`` overrides the output directory of every command.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from safe_explore.envs import GridRoadEnv, InvalidConfig
from safe_explore.harness import metrics as M
from safe_explore.harness.config import ExperimentConfig, apply_settings, dump_config, load_config, parse_overrides
from safe_explore.harness.runner import (
    csv_path,
    reward_shaping_compare,
    run_experiment,
    summarize,
    train,
    write_run_info,
)
from safe_explore.rules import RuleError, RuleShield, load_rules

log = logging.getLogger("safe_explore")


def _csv_list(text: str | None, cast=str):
    if not text:
        return None
    return tuple(cast(v.strip()) for v in text.split(",") if v.strip())


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.set:
        cfg = apply_settings(cfg, parse_overrides(args.set))
    if args.outdir:
        cfg = cfg.replace(outdir=args.outdir)
    if getattr(args, "episodes", None):
        cfg = cfg.replace(episodes=args.episodes, dqn_episodes=args.episodes)
    cfg.validate()
    return cfg


def cmd_train(args, cfg: ExperimentConfig) -> int:
    seeds = _csv_list(args.seeds, int) or cfg.seeds
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in seeds:
        r = train(cfg, args.agent, seed)
        path = csv_path(outdir, r.agent, seed)
        M.write_csv(path, r.episodes)
        results.append(r)
        print(
            f"{args.agent} seed {seed}: {len(r.episodes)} episodes, deaths {r.deaths}, "
            f"max {M.max_smoothed(r.rewards, cfg.window):.3f}, "
            f"final {M.final_smoothed(r.rewards, cfg.window):.3f} -> {path}"
        )
    write_run_info(outdir, results)
    return 0


def cmd_compare(args, cfg: ExperimentConfig) -> int:
    from safe_explore.harness.report import format_table, make_report

    agents = _csv_list(args.agents) or cfg.agents
    seeds = _csv_list(args.seeds, int) or cfg.seeds
    cfg = cfg.replace(agents=agents, seeds=seeds)
    cfg.validate()
    results = run_experiment(cfg, agents, seeds)
    outdir = cfg.output_dir
    (outdir / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    if args.plots:
        make_report(outdir, window=cfg.window)
    per_agent, _ = summarize(results, cfg.window)
    print(format_table(per_agent))
    return 0


def cmd_shape(args, cfg: ExperimentConfig) -> int:
    seeds = _csv_list(args.seeds, int) or cfg.seeds
    summary = reward_shaping_compare(cfg, seeds)
    if args.plots:
        from safe_explore.harness.report import make_report

        make_report(cfg.output_dir, window=cfg.window)
    for seed, row in summary["per_seed"].items():
        finals = "  ".join(f"{a}={v:.3f}" for a, v in row["final"].items())
        print(f"seed {seed}: {finals}  verdict={row['verdict']}")
    print(f"negreward below both safe agents on {summary['seeds_with_verdict']}/{len(seeds)} seeds")
    return 0


def cmd_learn_rules(args, cfg: ExperimentConfig) -> int:
    from safe_explore.rule_learner import (
        FeatureVocabulary,
        LearnedShield,
        accuracy,
        as_arrays,
        collect_dataset,
        sample_states,
        save_model,
        shield_agreement,
        train_logistic,
    )

    env = GridRoadEnv(cfg.env.replace(seed=args.seed))
    rng = np.random.default_rng([args.seed, 2])
    vocab = FeatureVocabulary()
    data = collect_dataset(env, cfg.learner_episodes, rng, cfg.region_radius, cfg.d_close, vocab)
    X, y = as_arrays(data)
    model = train_logistic(
        (X, y), cfg.learner_step_size, cfg.learner_epochs, cfg.learner_threshold, feature_names=vocab.names
    )
    learned = LearnedShield(model, env.forward_model, env.actions, cfg.region_radius, cfg.d_close, vocab)
    source = cfg.rules if cfg.rules != "learned" else cfg.env.kind
    reference = RuleShield(load_rules(source, env.actions), env.actions, cfg.region_radius, cfg.d_close)
    eval_rng = np.random.default_rng([args.seed, 5])
    states = sample_states(GridRoadEnv(env.config), args.eval_episodes, eval_rng)
    agree = shield_agreement(learned, reference, states, env.actions, args.pairs, eval_rng)
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.save) if args.save else outdir / "learned_rules.txt"
    save_model(model, model_path)
    result = {
        "examples": int(len(y)),
        "unsafe_fraction": float(y.mean()),
        "train_accuracy": accuracy(model, (X, y)),
        "agreement": agree.rate,
        "pairs": agree.n_pairs,
        "learned_only_safe": agree.learned_only_safe,
        "reference_only_safe": agree.reference_only_safe,
        "model": str(model_path),
    }
    (outdir / "learn_rules.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(
        f"{result['examples']} examples ({100 * result['unsafe_fraction']:.1f}% unsafe), "
        f"train accuracy {result['train_accuracy']:.4f}, "
        f"agreement with hand rules {agree.rate:.4f} on {agree.n_pairs} pairs -> {model_path}"
    )
    return 0


def cmd_report(args, cfg: ExperimentConfig) -> int:
    from safe_explore.harness.report import format_table, load_runs, make_report

    indir = Path(args.indir) if args.indir else cfg.output_dir
    if args.plots:
        written = make_report(indir, args.out, window=cfg.window)
        for p in written:
            print(p)
    per_agent, _ = summarize(load_runs(indir), cfg.window)
    print(format_table(per_agent))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safe-explore", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with [experiment], [env], [dqn], ... sections")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one setting; repeatable")
    p.add_argument("--outdir", help="output directory (SAFE_EXPLORE_OUTDIR wins over this)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one agent on one environment")
    t.add_argument("agent", help="q, q+ge, q+fg, q+learnedrule, dqn, dqn+ge, dqn+fg or dqn+negreward")
    t.add_argument("--seeds", help="comma-separated seeds (default: from config)")
    t.add_argument("--episodes", type=int, help="episode budget for this run")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="train an agent x seed matrix and summarise it")
    c.add_argument("--agents", help="comma-separated agent kinds (default: from config)")
    c.add_argument("--seeds")
    c.add_argument("--episodes", type=int)
    c.add_argument("--no-plots", dest="plots", action="store_false", help="skip the PNG figures")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("shape", help="safe agents vs collision-penalised DQN on 0/1 rewards")
    s.add_argument("--seeds")
    s.add_argument("--episodes", type=int)
    s.add_argument("--no-plots", dest="plots", action="store_false")
    s.set_defaults(func=cmd_shape)

    lr = sub.add_parser("learn-rules", help="fit the logistic safety classifier and check it against the rules")
    lr.add_argument("--seed", type=int, default=1)
    lr.add_argument("--pairs", type=int, default=10_000, help="state-action pairs for the agreement check")
    lr.add_argument("--eval-episodes", type=int, default=3000, help="random-play episodes that supply those states")
    lr.add_argument("--save", help="model file (default: <outdir>/learned_rules.txt)")
    lr.set_defaults(func=cmd_learn_rules)

    r = sub.add_parser("report", help="summary table and figures from existing CSVs")
    r.add_argument("indir", nargs="?", help="directory of <agent>_<seed>.csv files (default: outdir)")
    r.add_argument("--out", help="where to write tables and figures (default: indir)")
    r.add_argument("--no-plots", dest="plots", action="store_false")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (InvalidConfig, RuleError, ValueError, OSError) as exc:
        print(f"safe-explore: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
