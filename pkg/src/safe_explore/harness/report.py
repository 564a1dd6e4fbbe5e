"""Summary tables and figures from a directory of per-run CSVs.

Everything here works from files on disk, so a report can be rebuilt
long after training: ``<agent>_<seed>.csv`` per run plus the optional
``runs.json`` sidecar with audit counts.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from safe_explore.harness import metrics as M  # noqa: E402
from safe_explore.harness.runner import RUN_INFO, RunResult, summarize, write_summary  # noqa: E402

log = logging.getLogger(__name__)


class NoRuns(FileNotFoundError):
    pass


def _split_name(stem: str) -> tuple[str, int] | None:
    agent, _, seed = stem.rpartition("_")
    if not agent or not seed.isdigit():
        return None
    return agent, int(seed)


def load_runs(indir: str | Path) -> list[RunResult]:
    indir = Path(indir)
    info = {}
    if (indir / RUN_INFO).exists():
        info = json.loads((indir / RUN_INFO).read_text(encoding="utf-8"))
    results = []
    for path in sorted(indir.glob("*.csv")):
        parsed = _split_name(path.stem)
        if parsed is None:
            continue  # summary.csv, per_seed.csv
        agent, seed = parsed
        extra = info.get(path.stem, {})
        results.append(
            RunResult(
                agent,
                seed,
                M.read_csv(path),
                violations=int(extra.get("violations", 0)),
                audited_steps=int(extra.get("audited_steps", 0)),
            )
        )
    if not results:
        raise NoRuns(f"no <agent>_<seed>.csv files in {indir}")
    return results


def _by_agent(results):
    out: dict[str, list[RunResult]] = {}
    for r in results:
        out.setdefault(r.agent, []).append(r)
    for runs in out.values():
        runs.sort(key=lambda r: r.seed)
    return out


def plot_learning_curves(results, window: int, path: Path, title: str = "Learning curves") -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    for agent, runs in _by_agent(results).items():
        curves = [M.smooth(r.rewards, window) for r in runs]
        n = min(len(c) for c in curves)
        stack = np.array([c[:n] for c in curves])
        mean = stack.mean(axis=0)
        x = np.arange(n)
        ax.plot(x, mean, label=f"{agent} (n={len(runs)})")
        if len(runs) > 1:
            ax.fill_between(x, stack.min(axis=0), stack.max(axis=0), alpha=0.15)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"reward, trailing mean of {window}")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_relative_deaths(per_seed: list[dict], path: Path) -> Path | None:
    rows = [p for p in per_seed if p["relative_deaths"] is not None and "+" in p["agent"]]
    if not rows:
        return None
    agents = sorted({p["agent"] for p in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, agent in enumerate(agents):
        vals = [p["relative_deaths"] for p in rows if p["agent"] == agent]
        ax.bar(i, np.mean(vals), color=f"C{i}", alpha=0.7)
        ax.scatter(np.full(len(vals), i), vals, color="k", s=12, zorder=3)
    ax.axhline(1.0, color="grey", lw=1, ls="--")
    ax.set_xticks(range(len(agents)), agents)
    ax.set_ylabel("deaths / vanilla deaths")
    ax.set_title("Relative deaths")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_episodes_to_baseline(per_seed: list[dict], path: Path) -> Path | None:
    rows = [p for p in per_seed if p["baseline_first_max"] is not None and "+" in p["agent"]]
    if not rows:
        return None
    agents = sorted({p["agent"] for p in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    base = [p["baseline_first_max"] for p in rows if p["agent"] == agents[0]]
    ax.scatter(np.zeros(len(base)), base, color="grey", s=16, label="vanilla first max")
    for i, agent in enumerate(agents, start=1):
        vals = [p["episodes_to_baseline"] for p in rows if p["agent"] == agent]
        hit = [v for v in vals if v is not None]
        ax.scatter(np.full(len(hit), i), hit, color=f"C{i - 1}", s=16)
        missed = len(vals) - len(hit)
        if missed:
            ax.annotate(f"{missed} never", (i, 0), ha="center", va="bottom", fontsize="small")
    ax.set_xticks(range(len(agents) + 1), ["vanilla", *agents])
    ax.set_ylabel("episode")
    ax.set_title("Episodes to reach the vanilla maximum")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def make_report(indir: str | Path, outdir: str | Path | None = None, window: int = 100) -> list[Path]:
    """Rewrite the summary tables and draw every figure; returns the files written."""
    indir = Path(indir)
    outdir = Path(outdir or indir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = load_runs(indir)
    per_agent, per_seed = summarize(results, window)
    write_summary(outdir, per_agent, per_seed)
    written = [outdir / "summary.csv", outdir / "per_seed.csv"]
    written.append(plot_learning_curves(results, window, outdir / "learning_curves.png"))
    for p in (
        plot_relative_deaths(per_seed, outdir / "relative_deaths.png"),
        plot_episodes_to_baseline(per_seed, outdir / "episodes_to_baseline.png"),
    ):
        if p is not None:
            written.append(p)
    log.info("report for %d runs written to %s", len(results), outdir)
    return written


def format_table(per_agent: list[dict]) -> str:
    """Plain-text version of the per-agent summary for the terminal."""
    cols = ("agent", "seeds", "max_reward", "final_reward", "total_deaths", "relative_deaths", "episodes_to_baseline")
    rows = [[_cell(r[c]) for c in cols] for r in per_agent]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)
