"""CSV serialization of Monte Carlo results and the run manifest."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import yaml

from . import __version__
from .config import config_to_dict
from .errors import FormationError
from .experiment import METRICS, MonteCarloReport, ScenarioConfig, Summary

SUMMARY_COLUMNS = ("method", "trial", "V100", "Vinf", "AUC", "T1pct", "diverged")


class CsvFormatError(FormationError):
    def __init__(self, message, row=None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


def fmt(value) -> str:
    """Shortest string that parses back to the identical value."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_summary(path, report: MonteCarloReport, extra: Optional[dict] = None) -> None:
    extra = extra or {}
    header = list(extra) + list(SUMMARY_COLUMNS)
    rows = ([*extra.values(), *(row[c] for c in SUMMARY_COLUMNS)] for row in report.rows())
    write_csv(path, header, rows)


def trajectory_rows(report: MonteCarloReport, positions: Optional[dict] = None):
    """Long-format rows ``(method, trial, k, V, *coords)``.

    ``positions`` maps ``(method, trial)`` to a ``(steps, N, n)`` array.
    """
    for name, rep in report.methods.items():
        for r in rep.records:
            pos = positions.get((name, r.trial)) if positions else None
            for k, v in enumerate(r.trajectory):
                row = [name, r.trial, k, float(v)]
                if pos is not None:
                    row.extend(float(c) for c in pos[k].ravel())
                yield row


def trajectory_header(n_agents: int = 0, dim: int = 0) -> list[str]:
    coords = [f"x{i}_{m}" for i in range(n_agents) for m in range(dim)]
    return ["method", "trial", "k", "V", *coords]


def _relative(value, base: Path):
    if isinstance(value, list):
        return [_relative(v, base) for v in value]
    if isinstance(value, str):
        try:
            return str(Path(value).resolve().relative_to(base))
        except ValueError:
            return value
    return value


def write_manifest(path, cfg: ScenarioConfig, outputs: dict, command: str) -> None:
    """Output paths inside the manifest's directory are stored relative to it."""
    base = Path(path).resolve().parent
    outputs = {k: _relative(v, base) for k, v in outputs.items()}
    doc = {
        "tool": "resilient-formation",
        "version": __version__,
        "command": command,
        "base_seed": cfg.base_seed,
        "config": config_to_dict(cfg),
        "outputs": outputs,
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


def _parse_float(text, column, row):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(f"column {column!r} is not a number: {text!r}", row) from None


def read_summary(path) -> list[dict]:
    """Parse a summary CSV written by ``run`` or ``sweep``.

    Row numbers in errors count the header as row 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("file is empty") from None
        missing = [c for c in SUMMARY_COLUMNS if c not in header]
        if missing:
            raise CsvFormatError(f"missing columns {missing}", 1)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise CsvFormatError(f"expected {len(header)} fields, found {len(raw)}", lineno)
            rec = dict(zip(header, raw))
            try:
                rec["trial"] = int(rec["trial"])
            except ValueError:
                raise CsvFormatError(f"trial is not an integer: {rec['trial']!r}", lineno) from None
            for col in ("V100", "Vinf", "AUC", "T1pct"):
                rec[col] = _parse_float(rec[col], col, lineno)
            if rec["diverged"] not in ("true", "false"):
                raise CsvFormatError(f"diverged must be true/false, got {rec['diverged']!r}", lineno)
            rec["diverged"] = rec["diverged"] == "true"
            rows.append(rec)
    if not rows:
        raise CsvFormatError("no data rows")
    return rows


def read_trajectories(path) -> dict[str, dict[int, list[float]]]:
    """``{method: {trial: [V_0, V_1, ...]}}`` from a trajectory CSV."""
    out: dict[str, dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("trajectory file is empty") from None
        if header[:4] != ["method", "trial", "k", "V"]:
            raise CsvFormatError("trajectory header must start with method,trial,k,V", 1)
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) < 4:
                raise CsvFormatError("truncated trajectory row", lineno)
            try:
                trial, v = int(raw[1]), float(raw[3])
            except ValueError:
                raise CsvFormatError("malformed trajectory row", lineno) from None
            out.setdefault(raw[0], {}).setdefault(trial, []).append(v)
    return out


def format_table(report: MonteCarloReport, stat: str = "mean") -> str:
    """Plain-text table of one statistic per method and metric."""
    lines = [f"{'method':<8} " + " ".join(f"{m:>14}" for m in METRICS) + f"  ({stat} over trials)"]
    for name, rep in report.methods.items():
        cells = []
        for m in METRICS:
            s: Optional[Summary] = rep.stats[m]
            if s is None:
                cells.append(f"{'-':>14}")
            else:
                v = getattr(s, stat)
                cells.append(f"{v:>14.6e}" if m != "T1pct" else f"{v:>14.2f}")
        suffix = f"  diverged={len(rep.diverged)}" if rep.diverged else ""
        lines.append(f"{name:<8} " + " ".join(cells) + suffix)
    return "\n".join(lines)


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
