"""Evaluation report rendering: delimited output, a text table, and figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport


def write_records_csv(path, report: MetricReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["case", "strategy", "dice", "nsd", "points", "error"])
        for r in report.records:
            writer.writerow(
                [
                    r.case,
                    r.strategy,
                    f"{r.dice:.6f}",
                    f"{r.nsd:.6f}",
                    ";".join(f"{z},{y},{x}:{lab[:2]}" for z, y, x, lab in r.points),
                    r.error or "",
                ]
            )


def write_summary_csv(path, report: MetricReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["strategy", "dice_mean_pct", "nsd_mean_pct", "cases"])
        for row in report.summary():
            writer.writerow(
                [row["strategy"], f"{100 * row['dice_mean']:.2f}",
                 f"{100 * row['nsd_mean']:.2f}", row["cases"]]
            )
        if report.icc_dice is not None:
            writer.writerow(["ICC", f"{100 * report.icc_dice:.2f}",
                             f"{100 * report.icc_nsd:.2f}" if report.icc_nsd is not None else "",
                             ""])


def render_table(report: MetricReport) -> str:
    """Strategy-comparison table: one row per strategy plus an ICC row."""
    lines = []
    header = f"{'Selection Strategy':<20} {'Dice (%)':>10} {'NSD (%)':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.summary():
        lines.append(
            f"{row['strategy']:<20} {100 * row['dice_mean']:>10.2f} {100 * row['nsd_mean']:>10.2f}"
        )
    lines.append("-" * len(header))
    icc_d = f"{100 * report.icc_dice:.2f}" if report.icc_dice is not None else "n/a"
    icc_n = f"{100 * report.icc_nsd:.2f}" if report.icc_nsd is not None else "n/a"
    lines.append(f"{'ICC (%)':<20} {icc_d:>10} {icc_n:>10}")
    return "\n".join(lines)


def render_figures(out_dir, report: MetricReport) -> list[Path]:
    """Bar chart of per-strategy means and a per-case scatter, as PNG files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary = report.summary()
    strategies = [r["strategy"] for r in summary]
    x = np.arange(len(strategies))

    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    ax.bar(x - width / 2, [100 * r["dice_mean"] for r in summary], width, label="Dice")
    ax.bar(x + width / 2, [100 * r["nsd_mean"] for r in summary], width, label="NSD")
    ax.set_xticks(x)
    ax.set_xticklabels(strategies, rotation=20)
    ax.set_ylabel("score (%)")
    title = "Point-selection strategies"
    if report.icc_dice is not None:
        title += f"  (ICC Dice {100 * report.icc_dice:.1f}%)"
    ax.set_title(title)
    ax.set_ylim(0, 105)
    ax.legend()
    fig.tight_layout()
    path = out_dir / "strategy_means.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    names, mat = report.matrix("dice")
    if mat.size:
        fig, ax = plt.subplots(figsize=(6, 4))
        for j, s in enumerate(report.strategies):
            ax.plot(np.arange(len(names)), 100 * mat[:, j], "o-", label=s, alpha=0.8)
        ax.set_xticks(np.arange(len(names)))
        ax.set_xticklabels(names, rotation=30, fontsize=7)
        ax.set_ylabel("Dice (%)")
        ax.set_title("Per-case agreement across strategies")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "per_case_dice.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def write_report(out_dir, report: MetricReport) -> dict:
    """Write delimited records, summary, rendered table and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records_csv(out_dir / "records.csv", report)
    write_summary_csv(out_dir / "summary.csv", report)
    table = render_table(report)
    (out_dir / "table.txt").write_text(table + "\n")
    figures = render_figures(out_dir, report)
    return {
        "records": out_dir / "records.csv",
        "summary": out_dir / "summary.csv",
        "table": out_dir / "table.txt",
        "figures": figures,
    }


__all__ = ["write_report", "render_table", "render_figures", "write_records_csv", "write_summary_csv"]
