#!/usr/bin/env python3
"""Frame bounds and quality factor across icosphere resolutions.

The tightness ratio B/A should stay close to constant as the mesh is
refined, and sqrt(A), sqrt(B) settle near 0.71 / 1.41 for the default
kernel design.

Example:
  python3 scripts/frame_diagnostics.py --subdivisions 0 1 2 3 --scales 3
"""

import argparse
import time

import numpy as np

from sgwinv import build_frame, build_graph, design_scales, eigendecompose
from sgwinv.mesh import generate_icosphere


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--subdivisions", type=int, nargs="+", default=[0, 1, 2, 3])
    parser.add_argument("--radius", type=float, default=0.1)
    parser.add_argument("--K", type=float, default=16.0, help="lambda_max/lambda_min")
    parser.add_argument("--scales", type=int, default=3, help="wavelet band count")
    args = parser.parse_args()

    print(f"kernel design: K={args.K:g}, N_s={args.scales}")
    header = f"{'N':>6} {'lam_max':>9} {'sqrt(A)':>9} {'sqrt(B)':>9} {'B/A':>7} {'Q':>7} {'secs':>6}"
    print(header)
    print("-" * len(header))
    for level in args.subdivisions:
        t0 = time.perf_counter()
        mesh = generate_icosphere(level, args.radius)
        spectrum = eigendecompose(build_graph(mesh))
        spec = design_scales(spectrum.lambda_max, args.K, args.scales)
        frame = build_frame(spectrum, spec)
        a, b = frame.frame_bounds
        dt = time.perf_counter() - t0
        print(
            f"{mesh.N:>6d} {spectrum.lambda_max:>9.4f} {np.sqrt(a):>9.5f} "
            f"{np.sqrt(b):>9.5f} {b / a:>7.3f} {spec.quality_factor:>7.4f} {dt:>6.2f}"
        )


if __name__ == "__main__":
    main()
