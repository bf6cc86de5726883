#!/usr/bin/env python3
"""Patch-recovery benchmark: four estimators, two patch sizes, one table.

Defaults reproduce the desk-scale comparison (icosphere-4 = 2562
vertices, 60 sensors, patch sizes 10 and 100, 30 repetitions per size)
in roughly twenty minutes on one core.  Start with --subdivisions 2
--n-patches 5 for a quick look.

Example:
  python3 scripts/run_benchmark.py --out runs/bench --n-patches 5 --subdivisions 2
"""

import argparse
import time

from sgwinv import (
    SolverConfig,
    SolverSpec,
    SweepConfig,
    format_metric_tables,
    prepare_study,
)
from sgwinv.mesh import generate_icosphere
from sgwinv.runio import (
    init_run_dir,
    summarize_records,
    write_records,
    write_report,
    write_scenario,
)
from sgwinv.simulate import run_sweep

SOLVERS = ("mne", "mce", "svbsccd", "sgw-sbl-champagne")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--subdivisions", type=int, default=4)
    parser.add_argument("--sensors", type=int, default=60)
    parser.add_argument("--sizes", type=int, nargs=2, default=[10, 100],
                        metavar=("SMALL", "LARGE"))
    parser.add_argument("--n-patches", type=int, default=30)
    parser.add_argument("--psnr", type=float, default=4.0)
    parser.add_argument("--length", type=int, default=100, help="samples per record")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="runs/benchmark")
    parser.add_argument("--keep-scenarios", action="store_true",
                        help="also write S_sim/Z_sim matrices")
    args = parser.parse_args()

    t0 = time.perf_counter()
    mesh = generate_icosphere(args.subdivisions, 0.1)
    print(f"mesh: {mesh.N} vertices, {args.sensors} sensors")
    study = prepare_study(mesh, n_sensors=args.sensors)
    print(f"setup done in {time.perf_counter() - t0:.1f}s")

    config = SweepConfig(
        sizes=(("small", args.sizes[0]), ("large", args.sizes[1])),
        n_patches=args.n_patches,
        psnr=args.psnr,
        L=args.length,
        solvers=tuple(SolverSpec(name, SolverConfig()) for name in SOLVERS),
    )
    document = {
        "mesh": {"icosphere": {"subdivisions": args.subdivisions, "radius": 0.1}},
        "forward": {"n_sensors": args.sensors},
        "sweep": {
            "sizes": {"small": args.sizes[0], "large": args.sizes[1]},
            "n_patches": args.n_patches,
            "psnr": args.psnr,
            "L": args.length,
        },
        "solvers": [{"name": name} for name in SOLVERS],
        "master_seed": args.seed,
    }
    run_dir = init_run_dir(args.out, document, args.seed)
    sink = (lambda scen: write_scenario(run_dir, scen)) if args.keep_scenarios else None

    records = run_sweep(
        study, config, args.seed, scenario_sink=sink, threads=args.threads
    )
    write_records(run_dir, records)
    report = summarize_records(records)
    tables = format_metric_tables(report)
    write_report(run_dir, report, records, tables)

    failures = sum(1 for r in records if r["error"])
    print(f"{len(records)} records, {failures} failures, "
          f"{time.perf_counter() - t0:.1f}s total")
    print()
    print(tables)


if __name__ == "__main__":
    main()
