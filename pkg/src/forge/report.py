"""Sweep post-processing: Pareto flags and plot-ready summary files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import MissingFile, ParseError

SWEEP_COLUMNS = ["budget", "error", "cost", "n_models", "ids", "algo", "feasible"]
REPORT_COLUMNS = SWEEP_COLUMNS + ["pareto_flag"]
ID_SEPARATOR = "|"


@dataclass
class ReportRow:
    budget: float | None
    error: float | None
    cost: float | None
    n_models: int
    ids: tuple[str, ...]
    algo: str
    feasible: bool
    pareto_flag: str = ""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_sweep_csv(rows, path: str | Path) -> Path:
    """Serialize sweep rows (SweepRow-shaped or ReportRow) deterministically."""
    path = Path(path)
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    _fmt(r.budget),
                    _fmt(r.error),
                    _fmt(r.cost),
                    str(r.n_models),
                    ID_SEPARATOR.join(r.ids),
                    r.algo,
                    "true" if r.feasible else "false",
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_sweep_rows(path: str | Path) -> list[ReportRow]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"sweep file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty sweep file")
        missing = [c for c in SWEEP_COLUMNS[:5] if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        rows: list[ReportRow] = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    ReportRow(
                        budget=float(rec["budget"]) if rec["budget"] else None,
                        error=float(rec["error"]) if rec["error"] else None,
                        cost=float(rec["cost"]) if rec["cost"] else None,
                        n_models=int(rec["n_models"]),
                        ids=tuple(x for x in (rec["ids"] or "").split(ID_SEPARATOR) if x),
                        algo=rec.get("algo") or "smobf",
                        feasible=(rec.get("feasible") or "true").lower() != "false",
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: sweep has no data rows")
    return rows


def mark_pareto(rows: list[ReportRow]) -> list[ReportRow]:
    """Flag each feasible row against the rows of the other algorithms.

    A row is dominated when some other-algorithm row is at least as good on
    both cost and error and strictly better on one.
    """
    comparable = [r for r in rows if r.feasible and r.error is not None and r.cost is not None]
    for row in rows:
        if not (row.feasible and row.error is not None and row.cost is not None):
            row.pareto_flag = "infeasible"
            continue
        dominated = any(
            other.algo != row.algo
            and other.cost <= row.cost
            and other.error <= row.error
            and (other.cost < row.cost or other.error < row.error)
            for other in comparable
        )
        row.pareto_flag = "dominated" if dominated else "non_dominated"
    return rows


def write_report_csv(rows: list[ReportRow], path: str | Path) -> Path:
    path = Path(path)
    lines = [",".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    _fmt(r.budget),
                    _fmt(r.error),
                    _fmt(r.cost),
                    str(r.n_models),
                    ID_SEPARATOR.join(r.ids),
                    r.algo,
                    "true" if r.feasible else "false",
                    r.pareto_flag,
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def build_report(sweep_path: str | Path, out_dir: str | Path) -> dict:
    """Read a sweep, flag Pareto status, write report.csv plus figures."""
    from .plotting import plot_cost_vs_error, plot_error_vs_budget

    rows = mark_pareto(load_sweep_rows(sweep_path))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_csv = write_report_csv(rows, out_dir / "report.csv")
    figures = [
        plot_error_vs_budget(rows, out_dir / "error_vs_budget.png"),
        plot_cost_vs_error(rows, out_dir / "cost_vs_error.png"),
    ]
    return {
        "report": str(report_csv),
        "figures": [str(f) for f in figures],
        "rows": len(rows),
        "dominated": sum(1 for r in rows if r.pareto_flag == "dominated"),
    }
