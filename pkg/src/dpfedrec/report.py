"""Run reports and comparison tables.

A run directory holds ``report.jsonl`` (one JSON object per line: a header
with the resolved config, one record per round, then a final record),
``timing.json`` with wall-clock measurements and a short ``summary.txt``.
Timing lives in its own file so the report itself is byte-reproducible.
Key names are listed in ``docs/report_format.md``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Any, Iterable

from .config import MODE_ORDER, Mode
from .federation import ExperimentResult

REPORT_FILE = "report.jsonl"
TIMING_FILE = "timing.json"
SUMMARY_FILE = "summary.txt"
FORMAT_VERSION = 1


class NoReports(FileNotFoundError):
    pass


class ReportError(ValueError):
    pass


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def report_records(result: ExperimentResult) -> list[dict[str, Any]]:
    cfg = result.config
    header = {
        "type": "header",
        "format": FORMAT_VERSION,
        "dataset": result.dataset,
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
    }
    return [header, *(r.to_record() for r in result.rounds), result.final]


def report_text(result: ExperimentResult) -> str:
    return "".join(_dumps(rec) + "\n" for rec in report_records(result))


def summary_text(result: ExperimentResult) -> str:
    f = result.final
    lines = [
        f"{f['system']} on {f['dataset']}: l={f['clients']} K={f['k'] if f['k'] is not None else '-'} "
        f"R={f['rounds']} seed={f['master_seed']}",
        f"MAE {f['mae']:.4f}  MSE {f['mse']:.4f}  RMSE {f['rmse']:.4f}  ({f['test_edges']} test edges)",
        f"avg client graph: {f['client_graphs']['avg_users']:.1f} users, "
        f"{f['client_graphs']['avg_items']:.1f} items, {f['client_graphs']['avg_edges']:.1f} edges",
        f"avg extended graph: {f['extended_graphs']['avg_edges']:.1f} edges",
        f"bytes: psi {f['bytes']['psi']}, share {f['bytes']['share']}, model {f['bytes']['model']}",
        f"noising time per client (mean): {result.timing['mean_noising_time_s']:.4f} s",
        f"wall clock: {result.timing['wall_clock_s']:.1f} s",
    ]
    return "\n".join(lines) + "\n"


def write_run(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(report_text(result))
    (out / TIMING_FILE).write_text(json.dumps(result.timing, indent=2, sort_keys=True) + "\n")
    (out / SUMMARY_FILE).write_text(summary_text(result))
    return out / REPORT_FILE


def read_report(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}:{lineno}: {exc}") from None
    if not records or records[0].get("type") != "header" or records[-1].get("type") != "final":
        raise ReportError(f"{path}: expected a header record first and a final record last")
    return records


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    l: int
    mode: str
    k: int | None
    mae: float
    mse: float
    rmse: float
    noising_time_s: float | None
    total_bytes: int
    wall_clock_s: float | None

    @property
    def system(self) -> str:
        return Mode(self.mode).label


def row_from_run(report_path: str | Path) -> ReportRow:
    path = Path(report_path)
    records = read_report(path)
    header, final = records[0], records[-1]
    timing: dict[str, Any] = {}
    tpath = path.with_name(TIMING_FILE)
    if tpath.is_file():
        timing = json.loads(tpath.read_text())
    return ReportRow(
        dataset=final["dataset"],
        # Centralized runs are filed under the client count they are compared against
        l=header["config"]["experiment"]["clients"],
        mode=final["mode"],
        k=final["k"],
        mae=final["mae"],
        mse=final["mse"],
        rmse=final["rmse"],
        noising_time_s=timing.get("mean_noising_time_s"),
        total_bytes=sum(final["bytes"].values()),
        wall_clock_s=timing.get("wall_clock_s"),
    )


def collect_rows(report_dir: str | Path) -> list[ReportRow]:
    root = Path(report_dir)
    paths = sorted(root.rglob(REPORT_FILE)) if root.is_dir() else []
    if not paths:
        raise NoReports(f"no {REPORT_FILE} found under {root}")
    return [row_from_run(p) for p in paths]


def _order(row: ReportRow):
    return (MODE_ORDER.index(Mode(row.mode)), -1 if row.k is None else row.k)


def group_rows(rows: Iterable[ReportRow]) -> dict[tuple[str, int], list[ReportRow]]:
    groups: dict[tuple[str, int], list[ReportRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.l), []).append(row)
    return {key: sorted(groups[key], key=_order) for key in sorted(groups)}


def _fmt(x, spec: str) -> str:
    return "-" if x is None else format(x, spec)


def format_table(rows: Iterable[ReportRow]) -> str:
    out = []
    head = f"{'System':<15}{'K':>3}{'MAE':>9}{'MSE':>9}{'RMSE':>9}{'Noising(s)':>12}{'Bytes':>12}{'Wall(s)':>9}"
    for (dataset, l), group in group_rows(rows).items():
        out.append(f"{dataset}, {l} clients")
        out.append(head)
        out.append("-" * len(head))
        for r in group:
            out.append(
                f"{r.system:<15}{_fmt(r.k, 'd'):>3}{r.mae:>9.4f}{r.mse:>9.4f}{r.rmse:>9.4f}"
                f"{_fmt(r.noising_time_s, '.4f'):>12}{r.total_bytes:>12d}{_fmt(r.wall_clock_s, '.1f'):>9}"
            )
        out.append("")
    return "\n".join(out)


def write_csv(rows: Iterable[ReportRow], path: str | Path) -> Path:
    path = Path(path)
    names = [f.name for f in fields(ReportRow)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["system", *names])
        for group in group_rows(rows).values():
            for r in group:
                w.writerow([r.system, *("" if v is None else v for v in astuple(r))])
    return path
