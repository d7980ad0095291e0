#!/usr/bin/env python3
"""Benchmark one-step vs two-step torque allocation over random tasks.

Runs the bundled benchmark config and summarizes the current-norm savings
of the one-step solve and the field-dipole angles of both strategies.
"""

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from emnav.cli import cmd_alloc_bench  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=REPO / "results" / "alloc_bench")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    code = cmd_alloc_bench(
        REPO / "scenarios" / "alloc_bench.json", args.out, seed=args.seed
    )
    if code != 0:
        return code

    with open(args.out / "alloc_bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    summary = json.loads((args.out / "alloc_bench_summary.json").read_text())

    ratios = [
        float(r["norm_i_two_step"]) / float(r["norm_i_one_step"]) for r in rows
    ]
    one_angles = [float(r["angle_one_step_deg"]) for r in rows]
    two_angles = [float(r["angle_two_step_deg"]) for r in rows]
    zetas = [abs(float(r["zeta_star"])) for r in rows]

    print(f"samples: {len(rows)}   ordering violations: {summary['violation_count']}")
    print(
        f"two-step / one-step current-norm ratio: "
        f"median {statistics.median(ratios):.4f}, max {max(ratios):.4f}"
    )
    print(
        f"field-dipole angle [deg]: one-step "
        f"{min(one_angles):.3f}..{max(one_angles):.3f}, two-step "
        f"{min(two_angles):.6f}..{max(two_angles):.6f}"
    )
    print(f"|zeta*|: median {statistics.median(zetas):.2e}, max {max(zetas):.2e}")
    print(f"\nartifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
