"""Rendering score reports to files: JSON, an aligned text table, and figures.

All outputs are byte-deterministic for a given report: keys are sorted,
floats are written at full precision in the JSON and at fixed precision in
the table, and nothing time- or host-dependent is embedded.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import F1Report, TypeCounts


def report_to_json(report: F1Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _fmt_pct(value: float) -> str:
    return f"{100 * value:.2f}"


def _fmt_count(value: float) -> str:
    return f"{value:g}"


def _counts_block(title: str, rows: Mapping[str, TypeCounts], f1s: Mapping[str, float]) -> list[str]:
    width = max([len(t) for t in rows] + [4])
    lines = [title, f"  {'type'.ljust(width)}  {'tp':>8}  {'fp':>8}  {'fn':>8}  {'f1':>7}"]
    for t in sorted(rows):
        c = rows[t]
        lines.append(
            f"  {t.ljust(width)}  {_fmt_count(c.tp):>8}  {_fmt_count(c.fp):>8}"
            f"  {_fmt_count(c.fn):>8}  {_fmt_pct(f1s[t]):>7}"
        )
    return lines


def report_to_text(report: F1Report, label: str = "") -> str:
    """A compact aligned table: micro/macro summary plus per-type breakdowns."""
    header = f"results: {label}" if label else "results"
    lines = [
        header,
        "",
        f"  {'':12}  {'F1-micro':>9}  {'F1-macro':>9}",
        f"  {'entities':12}  {_fmt_pct(report.entity_micro):>9}  {_fmt_pct(report.entity_macro):>9}",
        f"  {'relations':12}  {_fmt_pct(report.relation_micro):>9}  {_fmt_pct(report.relation_macro):>9}",
        "",
    ]
    lines += _counts_block("entity counts per type:", report.counts.entity, report.entity_f1)
    lines.append("")
    lines += _counts_block("relation counts per type:", report.counts.relation, report.relation_f1)
    lines.append("")
    return "\n".join(lines)


def _bar_panel(ax, labels: list[str], values: list[float], title: str) -> None:
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.0)
    ax.set_title(title, fontsize=10)
    ax.grid(axis="y", alpha=0.3)


def save_f1_figure(report: F1Report, path: str | Path) -> None:
    """Per-type F1 bars, entities and relations side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ent_types = sorted(report.entity_f1)
    rel_types = sorted(report.relation_f1)
    _bar_panel(axes[0], ent_types, [report.entity_f1[t] for t in ent_types], "entity F1 by type")
    _bar_panel(axes[1], rel_types, [report.relation_f1[t] for t in rel_types], "relation F1 by type")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def save_counts_figure(report: F1Report, path: str | Path) -> None:
    """Grouped tp/fp/fn bars per type, entities and relations side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for ax, rows, title in (
        (axes[0], report.counts.entity, "entity counts by type"),
        (axes[1], report.counts.relation, "relation counts by type"),
    ):
        types = sorted(rows)
        xs = range(len(types))
        width = 0.27
        for offset, column, color in (
            (-width, "tp", "#3d8a57"),
            (0.0, "fp", "#b0543f"),
            (width, "fn", "#8a7a3d"),
        ):
            values = [getattr(rows[t], column) for t in types]
            ax.bar([x + offset for x in xs], values, width=width, label=column, color=color)
        ax.set_xticks(list(xs))
        ax.set_xticklabels(types, rotation=45, ha="right", fontsize=8)
        ax.set_title(title, fontsize=10)
        ax.grid(axis="y", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def write_report_files(report: F1Report, out_dir: str | Path, label: str = "") -> list[Path]:
    """Write report.json, report.txt, and the two figures into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out_dir / "report.json"
    json_path.write_text(report_to_json(report), encoding="utf-8")
    written.append(json_path)

    text_path = out_dir / "report.txt"
    text_path.write_text(report_to_text(report, label), encoding="utf-8")
    written.append(text_path)

    f1_path = out_dir / "report_f1.png"
    save_f1_figure(report, f1_path)
    written.append(f1_path)

    counts_path = out_dir / "report_counts.png"
    save_counts_figure(report, counts_path)
    written.append(counts_path)
    return written
