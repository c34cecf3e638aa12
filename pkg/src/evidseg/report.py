"""Render metric CSVs into SVG line plots and a plain-text summary table.

Each requested metric becomes one SVG: perturbation settings on the x-axis
(ordered by kind, then magnitude) and one polyline per fusion mode. Figures
are written deterministically — fixed hash salt, no embedded timestamps —
so identical inputs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ParseError
from .metrics import CSV_COLUMNS

DEFAULT_METRICS = ("dgs", "dcs", "ece", "neg_log_ece", "ueo", "mean_u_fused")

_TEXT_FIELDS = ("run_id", "fusion", "perturb_kind", "perturb_param")
_KIND_ORDER = {"none": 0, "noise": 1, "blur": 2, "missing": 3}


def read_metrics_csv(path: str | Path) -> list[dict]:
    """Parse one metrics CSV into row dicts; metric fields become floats."""
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines:
        raise ParseError(f"{path}: empty CSV")
    header = lines[0].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ParseError(f"{path}: unexpected header {header!r}")
    if len(lines) == 1:
        raise ParseError(f"{path}: no data rows")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ParseError(f"{path}:{i}: expected {len(CSV_COLUMNS)} fields, got {len(parts)}")
        row: dict = dict(zip(CSV_COLUMNS, parts))
        for key in CSV_COLUMNS:
            if key in _TEXT_FIELDS:
                continue
            try:
                row[key] = float(row[key])
            except ValueError as exc:
                raise ParseError(f"{path}:{i}: bad number in column {key!r}") from exc
        rows.append(row)
    return rows


def _magnitude(kind: str, param: str) -> float:
    if kind == "none":
        return 0.0
    head = param.split(";")[0]
    try:
        return float(head)
    except ValueError:
        return float("inf")


def _setting_label(kind: str, param: str) -> str:
    return "none" if kind == "none" else f"{kind}:{param}"


def _ordered_settings(rows: list[dict]) -> list[tuple[str, str]]:
    settings = {(row["perturb_kind"], row["perturb_param"]) for row in rows}
    return sorted(
        settings, key=lambda s: (_KIND_ORDER.get(s[0], 99), _magnitude(s[0], s[1]), s[1])
    )


def render_metric_svg(rows: list[dict], metric: str, out_path: str | Path) -> None:
    """Plot one metric across perturbation settings, one line per fusion mode."""
    if metric not in CSV_COLUMNS or metric in _TEXT_FIELDS:
        raise ParseError(f"unknown metric {metric!r}")
    settings = _ordered_settings(rows)
    positions = {setting: i for i, setting in enumerate(settings)}
    with plt.rc_context({"svg.hashsalt": "evidseg-report"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for fusion in sorted({row["fusion"] for row in rows}):
            points = sorted(
                (
                    positions[(row["perturb_kind"], row["perturb_param"])],
                    row[metric],
                )
                for row in rows
                if row["fusion"] == fusion
            )
            ax.plot(
                [x for x, _ in points],
                [y for _, y in points],
                marker="o",
                label=fusion,
            )
        ax.set_xticks(range(len(settings)))
        ax.set_xticklabels(
            [_setting_label(kind, param) for kind, param in settings],
            rotation=30,
            ha="right",
        )
        ax.set_xlabel("perturbation")
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} vs perturbation")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)


def summary_table(rows: list[dict]) -> str:
    """Fixed-width text table of every row, run ids echoed in a comment."""
    run_ids = sorted({row["run_id"] for row in rows})
    lines = [f"# runs: {', '.join(run_ids)}"]
    formatted = []
    for row in rows:
        formatted.append(
            [
                row[key] if key in _TEXT_FIELDS else f"{row[key]:.4f}"
                for key in CSV_COLUMNS
            ]
        )
    widths = [
        max(len(CSV_COLUMNS[i]), *(len(r[i]) for r in formatted)) if formatted else len(CSV_COLUMNS[i])
        for i in range(len(CSV_COLUMNS))
    ]
    lines.append("  ".join(name.ljust(widths[i]) for i, name in enumerate(CSV_COLUMNS)))
    for r in formatted:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(CSV_COLUMNS))))
    return "\n".join(lines) + "\n"


def render_report(
    csv_paths: list[str | Path],
    out_dir: str | Path,
    metric_names: tuple[str, ...] = DEFAULT_METRICS,
) -> list[Path]:
    """Read CSVs, write one SVG per metric plus summary.txt; returns paths."""
    rows: list[dict] = []
    for path in csv_paths:
        rows.extend(read_metrics_csv(path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in metric_names:
        svg_path = out / f"{metric}.svg"
        render_metric_svg(rows, metric, svg_path)
        written.append(svg_path)
    summary_path = out / "summary.txt"
    summary_path.write_text(summary_table(rows))
    written.append(summary_path)
    return written
