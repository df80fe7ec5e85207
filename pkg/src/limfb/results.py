"""Curve rows and their CSV / JSON serialization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

CSV_COLUMNS = ("x", "series", "value", "ci_low", "ci_high", "source", "status")


@dataclass(frozen=True)
class CurveRow:
    x: float
    series: str
    value: float
    ci_low: float = math.nan
    ci_high: float = math.nan
    source: str = "analytic"
    status: str = "ok"


@dataclass
class CurveResult:
    rows: list[CurveRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def extend(self, other) -> None:
        self.rows.extend(other)

    def sorted(self) -> "CurveResult":
        return CurveResult(sorted(self.rows, key=lambda r: (r.series, r.x)))

    def series(self, name: str) -> list[CurveRow]:
        return sorted((r for r in self.rows if r.series == name), key=lambda r: r.x)

    def values(self, name: str) -> list[float]:
        return [r.value for r in self.series(name)]

    def series_names(self) -> list[str]:
        return sorted({r.series for r in self.rows})

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.sorted().rows:
                writer.writerow([_fmt(v) for v in asdict(row).values()])
        return path

    @classmethod
    def read_csv(cls, path: str | Path) -> "CurveResult":
        rows = []
        with Path(path).open(newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(CurveRow(
                    _parse(rec["x"]), rec["series"], _parse(rec["value"]),
                    _parse(rec["ci_low"]), _parse(rec["ci_high"]), rec["source"], rec["status"],
                ))
        return cls(rows)


def _fmt(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return v


def _parse(text: str) -> float:
    return math.nan if text == "" else float(text)


def write_metadata(path: str | Path, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path
