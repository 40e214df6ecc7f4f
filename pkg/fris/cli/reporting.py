"""Result files: results.csv, timings.csv, per-run traces and report.json."""
import csv
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from fris.cli.runners import DemoReport, ExperimentResult, ResultRecord
from fris.optimize import write_trace_csv

logger = logging.getLogger(__name__)

RESULT_FIELDS = ("experiment", "grid", "active_count", "resolution", "bs_antennas", "mode", "seed", "objective")
TIMING_FIELDS = ("experiment", "grid", "active_count", "resolution", "bs_antennas", "mode", "seed", "runtime_ms")


def _row(record: ResultRecord, last: str) -> list:
    value = record.objective if last == "objective" else record.runtime_ms
    return [record.experiment, record.grid_label, record.active_count, record.resolution,
            record.bs_antennas, record.mode, record.seed, repr(float(value))]


def _write_rows(path: Path, header: tuple, records: Iterable[ResultRecord]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for record in sorted(records, key=ResultRecord.sort_key):
            writer.writerow(_row(record, header[-1]))
    return path


def write_results(records: Iterable[ResultRecord], out_dir: Union[str, Path]) -> tuple[Path, Path]:
    """results.csv is deterministic for a seed set; wall-clock times live in timings.csv"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(records)
    return (_write_rows(out_dir / "results.csv", RESULT_FIELDS, records),
            _write_rows(out_dir / "timings.csv", TIMING_FIELDS, records))


def summarize(records: Iterable[ResultRecord]) -> list[dict]:
    """Median objective per (grid, M̂, resolution, N_t, mode) over seeds"""
    groups = defaultdict(list)
    for record in records:
        key = (record.grid, record.active_count, record.resolution, record.bs_antennas, record.mode)
        groups[key].append(record.objective)
    return [
        {
            "grid": f"{grid[0]}x{grid[1]}",
            "active_count": active_count,
            "resolution": resolution,
            "bs_antennas": antennas,
            "mode": mode,
            "seeds": len(values),
            "median_objective": float(np.median(values)),
        }
        for (grid, active_count, resolution, antennas, mode), values in sorted(groups.items())
    ]


def _write_traces(traces: dict, out_dir: Path) -> None:
    for name in sorted(traces):
        write_trace_csv(traces[name], out_dir / "trace" / f"{name}.csv")


def write_experiment(result: ExperimentResult, out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    write_results(result.records, out_dir)
    _write_traces(result.traces, out_dir)
    report = {
        "experiment": result.experiment,
        "seeds": list(result.seeds),
        "records": len(result.records),
        "summary": summarize(result.records),
    }
    if result.activation_map is not None:
        report["activation_map"] = result.activation_map
        (out_dir / "activation_map.txt").write_text("\n".join(result.activation_map["rows"]) + "\n",
                                                    encoding="utf-8")
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %d records to %s", len(result.records), out_dir)
    return out_dir


def write_demo(reports: Iterable[DemoReport], out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    for report in reports:
        (out_dir / f"demo_seed{report.seed}.json").write_text(report.to_json(), encoding="utf-8")
        _write_traces(report.traces, out_dir)
    combined = {"experiment": "demo", "runs": [report.to_dict() for report in reports]}
    (out_dir / "report.json").write_text(json.dumps(combined, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out_dir
