"""Run-directory persistence.

Layout:

    run/
      manifest.json             config digest, master seed, library version
      config.json               the exact configuration document
      scenarios/<size>-<idx>/   S_sim.mtx, Z_sim.mtx, meta.json
      estimates/<size>-<idx>/   <solver>.mtx, <solver>.json
      metrics/records.csv       one row per scenario x solver
      metrics/aggregates.json   per solver x size summary statistics
      metrics/tables.txt        aligned-text tables

Floats in records.csv are written with repr (shortest round-trip), so a
deterministic re-run reproduces the file byte for byte.
"""

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataIOError
from .matio import read_matrix, write_matrix
from .metrics import METRIC_COLUMNS, MetricsReport, summarize
from .simulate import PatchScenario
from .solvers import SourceEstimate

RECORD_FIELDS = (
    "solver",
    "size",
    "index",
    "seed",
    "patch_size",
    "peak_time",
    "sd_ratio",
    "wasserstein1",
    "l2_ratio",
    "iterations",
    "converged",
    "error",
)


def config_digest(document: dict) -> str:
    """sha256 over the canonical (sorted-key, compact) JSON encoding."""
    canon = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def init_run_dir(run_dir, document: dict, master_seed: int) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    # key order is preserved: the order of the sweep sizes object is
    # semantic (it fixes the record order), so no sort_keys here
    with open(run_dir / "config.json", "w") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")
    manifest = {
        "format": "sgwinv-run",
        "version": __version__,
        "master_seed": int(master_seed),
        "config_sha256": config_digest(document),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return run_dir


def _read_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataIOError(f"{path} not found: not a run directory?")
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{path} is not valid JSON: {exc}")


def read_manifest(run_dir) -> dict:
    manifest = _read_json(Path(run_dir) / "manifest.json")
    if manifest.get("format") != "sgwinv-run":
        raise DataIOError(f"{run_dir}/manifest.json has unknown format")
    return manifest


def read_config(run_dir) -> dict:
    return _read_json(Path(run_dir) / "config.json")


# --------------------------------------------------------------- scenarios


def _slot(label: str, index: int) -> str:
    return f"{label}-{int(index):04d}"


def scenario_dir(run_dir, label: str, index: int) -> Path:
    return Path(run_dir) / "scenarios" / _slot(label, index)


def write_scenario(run_dir, scenario: PatchScenario) -> Path:
    out = scenario_dir(run_dir, scenario.size_label, scenario.index)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "S_sim.mtx", scenario.S_sim)
    write_matrix(out / "Z_sim.mtx", scenario.Z_sim)
    meta = {
        "size_label": scenario.size_label,
        "index": scenario.index,
        "seed": scenario.seed,
        "beta": scenario.beta,
        "psnr": scenario.psnr,
        "active_window": list(scenario.active_window),
        "patch_vertices": scenario.patch_vertices.tolist(),
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_scenario(run_dir, label: str, index: int) -> PatchScenario:
    src = scenario_dir(run_dir, label, index)
    meta = _read_json(src / "meta.json")
    return PatchScenario(
        patch_vertices=np.asarray(meta["patch_vertices"], np.int64),
        size_label=meta["size_label"],
        beta=float(meta["beta"]),
        S_sim=read_matrix(src / "S_sim.mtx"),
        Z_sim=read_matrix(src / "Z_sim.mtx"),
        seed=int(meta["seed"]),
        psnr=float(meta["psnr"]),
        active_window=tuple(meta["active_window"]),
        index=int(meta["index"]),
    )


def list_scenarios(run_dir) -> list[tuple[str, int]]:
    """(label, index) pairs present under scenarios/, sorted."""
    root = Path(run_dir) / "scenarios"
    if not root.is_dir():
        raise DataIOError(f"no scenarios found under {run_dir}")
    slots = []
    for child in sorted(root.iterdir()):
        if child.is_dir() and (child / "meta.json").exists():
            label, _, idx = child.name.rpartition("-")
            slots.append((label, int(idx)))
    if not slots:
        raise DataIOError(f"no scenarios found under {run_dir}")
    return slots


# --------------------------------------------------------------- estimates


def write_estimate(
    run_dir, label: str, index: int, solver: str, estimate: SourceEstimate
) -> Path:
    out = Path(run_dir) / "estimates" / _slot(label, index)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / f"{solver}.mtx", estimate.S)
    meta = {
        "solver": estimate.solver,
        "iterations": estimate.iterations,
        "converged": estimate.converged,
        "objective": estimate.objective,
    }
    with open(out / f"{solver}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# ----------------------------------------------------------------- records


def _encode(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(run_dir, records) -> Path:
    out = Path(run_dir) / "metrics"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "records.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for record in records:
            writer.writerow([_encode(record.get(f)) for f in RECORD_FIELDS])
    return path


_INT_FIELDS = {"index", "seed", "patch_size", "peak_time", "iterations"}
_FLOAT_FIELDS = {"sd_ratio", "wasserstein1", "l2_ratio"}


def _decode(field: str, text: str):
    if field in _INT_FIELDS:
        return int(text) if text else None
    if field in _FLOAT_FIELDS:
        return float(text) if text else None
    if field == "converged":
        return text == "true"
    return text


def read_records(run_dir) -> list[dict]:
    path = Path(run_dir) / "metrics" / "records.csv"
    if not path.exists():
        raise DataIOError(f"no records found under {run_dir}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataIOError(f"no records found under {run_dir}")
    return [{f: _decode(f, row.get(f, "")) for f in RECORD_FIELDS} for row in rows]


def summarize_records(records) -> MetricsReport:
    """Aggregate the scored records (failed rows are excluded)."""
    scored = [r for r in records if not r.get("error")]
    if not scored:
        raise DataIOError("no records found with metric values")
    return summarize(scored)


def report_document(report: MetricsReport, records) -> dict:
    """JSON-friendly aggregate document, deterministically ordered."""
    groups = []
    for gk in sorted(report.aggregates):
        entry = dict(gk)
        stats = report.aggregates[gk]
        entry["count"] = stats["count"]
        entry["metrics"] = {m: stats[m] for m in METRIC_COLUMNS}
        groups.append(entry)
    records = list(records)
    return {
        "groups": groups,
        "n_records": len(records),
        "n_failures": sum(1 for r in records if r.get("error")),
    }


def report_csv(report: MetricsReport) -> str:
    """Long-format CSV mirror of the aggregate tables, one row per
    group x metric."""
    group_keys = sorted(report.aggregates)
    names = [name for name, _ in group_keys[0]]
    stats_cols = ("mean", "median", "std", "iqd")
    lines = [",".join([*names, "metric", "n", *stats_cols])]
    for gk in group_keys:
        entry = dict(gk)
        stats = report.aggregates[gk]
        for metric in METRIC_COLUMNS:
            cells = [str(entry[name]) for name in names]
            cells.append(metric)
            cells.append(str(stats["count"]))
            cells.extend(repr(stats[metric][c]) for c in stats_cols)
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_report(run_dir, report: MetricsReport, records, tables: str) -> Path:
    out = Path(run_dir) / "metrics"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "aggregates.json", "w") as fh:
        json.dump(report_document(report, records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "aggregates.csv").write_text(report_csv(report))
    (out / "tables.txt").write_text(tables)
    return out
