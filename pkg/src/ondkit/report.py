"""Reporting: per-session metric tables and rendered figures.

emit_report() returns the dual-evaluation table (per session, per eval
group, per method); render_report() additionally writes the delimited
history plus matplotlib figures (FPR/AUROC trends per group, id-ood score
histograms) into a figures directory.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import evalkit  # noqa: E402
from .looprunner import write_history  # noqa: E402


def emit_report(history: list[dict]) -> str:
    """Fixed-width table of the metric history, stable across re-emission."""
    if not history:
        raise ValueError("metric history is empty")
    header = f"{'session':>7}  {'group':<8} {'method':<10} {'FPR@95':>8} {'AUROC':>8} {'n_id':>6} {'n_ood':>6}"
    lines = [header, "-" * len(header)]
    for row in sorted(history, key=lambda r: (r["session"], r["group"], r["method"])):
        lines.append(
            f"{row['session']:>7}  {row['group']:<8} {row['method']:<10} "
            f"{row['fpr95']:>8.4f} {row['auroc']:>8.4f} {row['n_id']:>6} {row['n_ood']:>6}")
    return "\n".join(lines) + "\n"


def plot_metric_trends(history: list[dict], out_dir):
    """One figure per eval group: FPR@95 and AUROC vs session, per method."""
    os.makedirs(out_dir, exist_ok=True)
    groups = sorted({row["group"] for row in history})
    paths = []
    for group in groups:
        rows = [r for r in history if r["group"] == group]
        methods = sorted({r["method"] for r in rows})
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for metric, ax, better in (("fpr95", axes[0], "lower"), ("auroc", axes[1], "higher")):
            for method in methods:
                pts = sorted((r["session"], r[metric]) for r in rows
                             if r["method"] == method)
                style = "--" if method in (evalkit.MSP, evalkit.MAXLOGIT, evalkit.ENERGY) else "-"
                ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                        marker="o", label=method)
            ax.set_xlabel("session")
            ax.set_ylabel(f"{metric} ({better} is better)")
            ax.grid(alpha=0.3)
        axes[0].legend(fontsize=8)
        fig.suptitle(f"eval group: {group}")
        fig.tight_layout()
        path = os.path.join(out_dir, f"trend_{group}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_score_histogram(scores: evalkit.ScoreSet, path, bins: int = evalkit.HIST_BINS):
    """Overlaid id vs ood score histogram for one (method, group)."""
    payload = evalkit.histogram_payload(scores, bins)
    edges = payload["edges"]
    centers = [(a + b) / 2 for a, b in zip(edges[:-1], edges[1:])]
    width = (edges[-1] - edges[0]) / bins
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, payload["id_counts"], width=width, alpha=0.6, label="id")
    ax.bar(centers, payload["ood_counts"], width=width, alpha=0.6, label="ood")
    ax.set_xlabel("score")
    ax.set_ylabel("count")
    ax.set_title(f"{scores.method} on {scores.group}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(state, run_dir) -> str:
    """Write the table, the delimited history, and the figures; return the table."""
    table = emit_report(state.history)
    with open(os.path.join(run_dir, "report.txt"), "w") as f:
        f.write(table)
    write_history(state.history, os.path.join(run_dir, "history.tsv"))
    fig_dir = os.path.join(run_dir, "figures")
    plot_metric_trends(state.history, fig_dir)
    holdout = state.group_records(state.benchmark.holdout)
    ss = evalkit.model_score(state.model, holdout, group="holdout", method=state.method)
    plot_score_histogram(ss, os.path.join(fig_dir, f"scores_{state.method}_holdout.png"))
    for method in (evalkit.MAXLOGIT,):
        bs = evalkit.baseline_score_set(holdout, method, group="holdout")
        plot_score_histogram(bs, os.path.join(fig_dir, f"scores_{method}_holdout.png"))
    return table
