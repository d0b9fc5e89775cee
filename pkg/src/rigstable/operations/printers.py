"""
Human-readable output formatting.

Summaries go to stderr so that machine output on stdout (reports, loss JSON)
stays clean for pipes.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

from rich.console import Console
from rich.table import Table

from ..report import COLUMN_LABELS, FinetuneReport, LossReport, MetricReport

_console = Console(stderr=True)


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def print_written(paths: Sequence[Path], what: str = "file") -> None:
    """List files a command wrote."""
    for p in paths:
        _console.print(f"[green]✓[/] wrote {what} [cyan]{p}[/]")


def print_metric_report(report: MetricReport, verbose: bool = False) -> None:
    """
    Aggregate table; with ``verbose`` one row per clip as well.
    """
    cols = [c for c in report.columns if c in report.aggregate.means]
    rows = [(r.clip_id, [r.metrics.get(c) for c in cols]) for r in report.clips] if verbose else []
    rows.append(("mean", [report.aggregate.means[c] for c in cols]))

    table = Table(title=f"{report.kind} metrics ({report.aggregate.clip_count} clip(s))")
    table.add_column("Clip", style="cyan")
    for c in cols:
        table.add_column(COLUMN_LABELS.get(c, c), justify="right")
    for name, values in rows:
        table.add_row(name, *("" if v is None else _fmt(v) for v in values))
    _console.print(table)
    if verbose:
        for r in report.clips:
            if r.cons_j:
                _console.print(f"{r.clip_id} Cons_j: {[_fmt(c) for c in r.cons_j]}")
    for s in report.skipped:
        _console.print(f"[yellow]skipped[/] {s.clip_id}: {s.code} {s.message}")


def _print_terms(title: str, terms: Dict[str, float]) -> None:
    table = Table(title=title)
    table.add_column("Term", style="cyan")
    table.add_column("Value", justify="right")
    for k, v in terms.items():
        table.add_row(k, _fmt(v))
    _console.print(table)


def print_loss_report(report: LossReport) -> None:
    _print_terms(f"{report.kind} loss: {report.clip_id}", report.terms)


def print_finetune_summary(report: FinetuneReport) -> None:
    """Before/after consistency with relative reductions."""
    table = Table(title=f"Fine-tuning {report.clip_id}")
    table.add_column("Metric", style="cyan")
    table.add_column("Before", justify="right")
    table.add_column("After", justify="right")
    table.add_column("Reduction %", justify="right")
    for key in ("l1_bca", "symkl_bca", "entropy"):
        red = report.reduction_pct.get(key)
        table.add_row(key, _fmt(report.before[key]), _fmt(report.after[key]), "" if red is None else f"{red:.1f}")
    _console.print(table)
    _console.print(f"Most improved joints: {report.top_improved_joints}")
    if report.ablation:
        _print_terms("Ablation: mean final symkl_bca", {
            k: sum(v) / len(v) for k, v in report.ablation.items()
        })
