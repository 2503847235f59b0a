"""
Result Files
CSV emission and parsing, plus a rich summary table for the terminal
"""

import csv
import logging
from pathlib import Path
from typing import Iterable

from rich.table import Table

from agb_feedback.harness.config import ResultRow

logger = logging.getLogger(__name__)

CSV_HEADER = ("scenario", "x", "method", "mean_rate", "stderr", "trials", "seed", "discards")


def emit_csv(rows: Iterable[ResultRow], path: Path) -> Path:
    """UTF-8, LF-terminated CSV; floats written with repr so they parse back exactly"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.scenario,
                    repr(row.x),
                    row.method,
                    repr(row.mean_rate),
                    repr(row.stderr),
                    row.trials,
                    row.seed,
                    row.discards,
                ]
            )
            count += 1
    logger.info(f"Wrote {count} result row(s) to {path}")
    return path


def read_csv(path: Path) -> list[ResultRow]:
    with Path(path).open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            ResultRow(
                scenario=scenario,
                x=float(x),
                method=method,
                mean_rate=float(mean_rate),
                stderr=float(stderr),
                trials=int(trials),
                seed=int(seed),
                discards=int(discards),
            )
            for scenario, x, method, mean_rate, stderr, trials, seed, discards in reader
        ]


def results_table(rows: list[ResultRow], title: str = "Results") -> Table:
    table = Table(title=title)
    table.add_column("x", justify="right")
    table.add_column("method")
    table.add_column("mean", justify="right")
    table.add_column("stderr", justify="right")
    table.add_column("trials", justify="right")
    table.add_column("discards", justify="right")
    for row in rows:
        table.add_row(
            f"{row.x:g}",
            row.method,
            f"{row.mean_rate:.4f}",
            f"{row.stderr:.4f}",
            str(row.trials),
            str(row.discards),
        )
    return table
