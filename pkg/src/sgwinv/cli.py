"""Command-line front end.

Subcommands: simulate, solve, sweep, report, diagnose-frame, mesh-info.
Configuration is a JSON document validated against CONFIG_SCHEMA.  Exit
codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.  The SGWINV_OUT environment variable sets the default output
root; --out names a run directory explicitly.
"""

import functools
import json
import os
from dataclasses import replace
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, DataIOError, NumericsError
from .frame import build_frame, design_scales, kernel_curves
from .mesh import build_graph, eigendecompose, generate_icosphere, load_mesh
from .metrics import format_metric_tables
from .runio import (
    config_digest,
    init_run_dir,
    list_scenarios,
    read_config,
    read_records,
    read_scenario,
    summarize_records,
    write_estimate,
    write_records,
    write_report,
    write_scenario,
)
from .simulate import (
    SolverSpec,
    SweepConfig,
    evaluate_scenario,
    prepare_study,
    run_sweep,
    scenario_seed,
    simulate_scenario,
)
from .solvers import SolverConfig

ENV_OUT = "SGWINV_OUT"

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["mesh"],
    "properties": {
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "icosphere": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["subdivisions"],
                    "properties": {
                        "subdivisions": {
                            "type": "integer",
                            "minimum": 0,
                            "maximum": 6,
                        },
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "file": {"type": "string"},
            },
            "oneOf": [{"required": ["icosphere"]}, {"required": ["file"]}],
        },
        "frame": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "number", "exclusiveMinimum": 1},
                "N_s": {"type": "integer", "minimum": 1},
            },
        },
        "forward": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_sensors": {"type": "integer", "minimum": 1},
                "radius_factor": {"type": "number", "exclusiveMinimum": 0},
                "offset_factor": {"type": "number", "minimum": 0},
                "noise_condition": {"type": "number", "minimum": 1},
                "noise_seed": {"type": "integer", "minimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sizes", "n_patches", "psnr"],
            "properties": {
                "sizes": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": {"type": "integer", "minimum": 1},
                },
                "n_patches": {"type": "integer", "minimum": 1},
                "psnr": {"type": "number", "exclusiveMinimum": 0},
                "L": {"type": "integer", "minimum": 1},
                "window": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "solvers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "lambda": {"type": "number", "exclusiveMinimum": 0},
                    "rho": {"type": "number", "exclusiveMinimum": 1},
                    "lambda_scale": {"type": "number", "exclusiveMinimum": 0},
                    "mu": {"type": "number", "minimum": 0},
                    "mu_scale": {"type": "number", "minimum": 0},
                    "max_iters": {"type": "integer", "minimum": 1},
                    "tol_rel": {"type": "number", "exclusiveMinimum": 0},
                    "tol_abs": {"type": "number", "exclusiveMinimum": 0},
                    "prune_eps": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "master_seed": {"type": "integer", "minimum": 0},
    },
}

_FRAME_DEFAULTS = {"K": 16.0, "N_s": 3}
_FORWARD_DEFAULTS = {
    "n_sensors": 60,
    "radius_factor": 1.5,
    "offset_factor": 0.35,
    "noise_condition": 10.0,
    "noise_seed": 0,
    "tau": 1e-8,
}

_SOLVER_FIELD_MAP = {
    "lambda": "lambda_",
    "rho": "rho",
    "lambda_scale": "lambda_scale",
    "mu": "mu",
    "mu_scale": "mu_scale",
    "max_iters": "max_iters",
    "tol_rel": "tol_rel",
    "tol_abs": "tol_abs",
    "prune_eps": "prune_eps",
}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    try:
        jsonschema.validate(document, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(part) for part in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}")
    return document


def build_mesh(document: dict):
    spec = document["mesh"]
    if "icosphere" in spec:
        ico = spec["icosphere"]
        return generate_icosphere(ico["subdivisions"], ico.get("radius", 0.1))
    path = Path(spec["file"])
    if not path.exists():
        raise ConfigError(f"mesh file {path} not found")
    return load_mesh(path)


def build_study(document: dict):
    mesh = build_mesh(document)
    frame = {**_FRAME_DEFAULTS, **document.get("frame", {})}
    fwd = {**_FORWARD_DEFAULTS, **document.get("forward", {})}
    return prepare_study(
        mesh,
        n_sensors=fwd["n_sensors"],
        K=frame["K"],
        N_s=frame["N_s"],
        radius_factor=fwd["radius_factor"],
        offset_factor=fwd["offset_factor"],
        noise_condition=fwd["noise_condition"],
        noise_seed=fwd["noise_seed"],
        tau=fwd["tau"],
    )


def parse_solver(entry: dict) -> SolverSpec:
    kwargs = {
        field: entry[key] for key, field in _SOLVER_FIELD_MAP.items() if key in entry
    }
    return SolverSpec(entry["name"], SolverConfig(**kwargs))


def build_sweep_config(document: dict) -> SweepConfig:
    if "sweep" not in document:
        raise ConfigError("config has no sweep section")
    sw = document["sweep"]
    solvers = tuple(
        parse_solver(entry) for entry in document.get("solvers", [{"name": "mne"}])
    )
    window = tuple(sw["window"]) if "window" in sw else None
    return SweepConfig(
        sizes=tuple(sw["sizes"].items()),
        n_patches=sw["n_patches"],
        psnr=sw["psnr"],
        L=sw.get("L", 100),
        active_window=window,
        solvers=solvers,
    )


def resolve_master_seed(document: dict, seed_flag) -> int:
    if seed_flag is not None:
        return int(seed_flag)
    return int(document.get("master_seed", 0))


def resolve_run_dir(out_flag, document: dict, master_seed: int) -> Path:
    if out_flag:
        return Path(out_flag)
    root = Path(os.environ.get(ENV_OUT, "."))
    return root / f"run-{config_digest(document)[:12]}-s{master_seed}"


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(2, exc)
        except NumericsError as exc:
            _fail(3, exc)
        except (DataIOError, OSError) as exc:
            _fail(4, exc)

    return wrapper


def _fail(code: int, exc: Exception):
    click.echo(f"error: {exc}", err=True)
    raise SystemExit(code)


def _table(pairs) -> str:
    return "\n".join(f"{name:<22}{value}" for name, value in pairs)


@click.group()
@click.version_option(__version__, prog_name="sgwinv")
def main():
    """Sparse source estimation on surface graphs, wavelet-domain solvers."""


@main.command("mesh-info")
@click.option("--config", "config_path", required=True, type=click.Path())
@_guard
def cmd_mesh_info(config_path):
    """Vertex, edge, and degree statistics for the configured mesh."""
    mesh = build_mesh(load_config(config_path))
    graph = build_graph(mesh)
    degrees = graph.degrees
    edges = mesh.vertices[graph.edge_list[:, 0]] - mesh.vertices[graph.edge_list[:, 1]]
    lengths = np.linalg.norm(edges, axis=1)
    euler = mesh.N - graph.E + len(mesh.triangles)
    click.echo(
        _table(
            [
                ("vertices", mesh.N),
                ("edges", graph.E),
                ("triangles", len(mesh.triangles)),
                ("euler characteristic", euler),
                ("degree min/mean/max", f"{degrees.min():g}/{degrees.mean():.2f}/{degrees.max():g}"),
                ("edge length mean", f"{lengths.mean():.6g}"),
                ("edge length max", f"{lengths.max():.6g}"),
            ]
        )
    )


@main.command("diagnose-frame")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_guard
def cmd_diagnose_frame(config_path, out_dir):
    """Frame bounds, quality factor, and kernel curves for the config."""
    document = load_config(config_path)
    mesh = build_mesh(document)
    frame_cfg = {**_FRAME_DEFAULTS, **document.get("frame", {})}
    graph = build_graph(mesh)
    spectrum = eigendecompose(graph)
    spec = design_scales(spectrum.lambda_max, frame_cfg["K"], frame_cfg["N_s"])
    frame = build_frame(spectrum, spec)
    a, b = frame.frame_bounds
    click.echo(
        _table(
            [
                ("vertices", mesh.N),
                ("lambda_max", f"{spectrum.lambda_max:.9g}"),
                ("lambda_min (cutoff)", f"{spec.lambda_min:.9g}"),
                ("scales", " ".join(f"{s:.6g}" for s in spec.scales)),
                ("frame bound A", f"{a:.9g}"),
                ("frame bound B", f"{b:.9g}"),
                ("sqrt(A)", f"{np.sqrt(a):.9g}"),
                ("sqrt(B)", f"{np.sqrt(b):.9g}"),
                ("quality factor Q", f"{spec.quality_factor:.9g}"),
                ("coefficients N_W", frame.N_W),
            ]
        )
    )
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        grid = np.linspace(0.0, spectrum.lambda_max, 512)
        table = kernel_curves(spec, grid)
        header = ",".join(
            ["lambda", "h"] + [f"g{j + 1}" for j in range(spec.N_s)]
        )
        path = out / "kernel-curves.csv"
        np.savetxt(path, table, delimiter=",", header=header, comments="")
        click.echo(f"kernel curves written to {path}")


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override master seed")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_guard
def cmd_simulate(config_path, seed, out_dir):
    """Generate the configured scenarios into a run directory."""
    document = load_config(config_path)
    config = build_sweep_config(document)
    master_seed = resolve_master_seed(document, seed)
    run_dir = resolve_run_dir(out_dir, document, master_seed)
    study = build_study(document)
    init_run_dir(run_dir, document, master_seed)
    count = 0
    for label, size in config.sizes:
        for index in range(config.n_patches):
            scenario = simulate_scenario(
                study.graph,
                study.leadfield,
                study.noise,
                config.scenario_config(label, size),
                scenario_seed(master_seed, size, index),
            )
            write_scenario(run_dir, replace(scenario, index=index))
            count += 1
    click.echo(f"wrote {count} scenarios to {run_dir}")


@main.command("solve")
@click.option("--run", "run_dir", required=True, type=click.Path())
@click.option(
    "--config",
    "config_path",
    type=click.Path(),
    default=None,
    help="override the stored config (e.g. a different solver list)",
)
@_guard
def cmd_solve(run_dir, config_path):
    """Run the configured solvers on the scenarios stored in a run."""
    run_dir = Path(run_dir)
    stored = read_config(run_dir)
    document = load_config(config_path) if config_path else stored
    config = build_sweep_config(document)
    study = build_study(stored)
    base = study.base_problem()
    # records come out in sweep order: config size order, then index
    order = {label: k for k, (label, _) in enumerate(config.sizes)}
    slots = sorted(
        list_scenarios(run_dir),
        key=lambda slot: (order.get(slot[0], len(order)), slot[0], slot[1]),
    )
    records = []
    for label, index in slots:
        scenario = read_scenario(run_dir, label, index)
        records.extend(
            evaluate_scenario(
                study,
                base,
                scenario,
                config.solvers,
                estimate_sink=lambda scen, name, est: write_estimate(
                    run_dir, scen.size_label, scen.index, name, est
                ),
            )
        )
    write_records(run_dir, records)
    failures = sum(1 for r in records if r["error"])
    click.echo(f"wrote {len(records)} records ({failures} failures) to {run_dir}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override master seed")
@click.option("--threads", type=int, default=None, help="scenario thread pool size")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_guard
def cmd_sweep(config_path, seed, threads, out_dir):
    """Simulate, solve, and report in one pass."""
    document = load_config(config_path)
    config = build_sweep_config(document)
    master_seed = resolve_master_seed(document, seed)
    run_dir = resolve_run_dir(out_dir, document, master_seed)
    study = build_study(document)
    init_run_dir(run_dir, document, master_seed)
    records = run_sweep(
        study,
        config,
        master_seed,
        estimate_sink=lambda scen, name, est: write_estimate(
            run_dir, scen.size_label, scen.index, name, est
        ),
        scenario_sink=lambda scen: write_scenario(run_dir, scen),
        threads=threads or os.cpu_count() or 1,
    )
    write_records(run_dir, records)
    report = summarize_records(records)
    tables = format_metric_tables(report)
    write_report(run_dir, report, records, tables)
    failures = sum(1 for r in records if r["error"])
    click.echo(f"run directory: {run_dir}")
    click.echo(f"records: {len(records)} ({failures} failures)")
    click.echo("")
    click.echo(tables)


@main.command("report")
@click.option("--run", "run_dir", required=True, type=click.Path())
@_guard
def cmd_report(run_dir):
    """Aggregate stored metric records into summary tables."""
    records = read_records(run_dir)
    report = summarize_records(records)
    tables = format_metric_tables(report)
    write_report(run_dir, report, records, tables)
    click.echo(tables)


if __name__ == "__main__":
    main()
