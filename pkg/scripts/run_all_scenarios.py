#!/usr/bin/env python3
"""Run every bundled simulation scenario and tabulate the outcomes.

Writes one trace CSV and one summary JSON per scenario into --out and
prints a settling/tracking/current table to stdout.
"""

import argparse
import json
import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from emnav.sim import run_scenario, scenario_from_dict  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=REPO / "results" / "scenarios")
    parser.add_argument(
        "--scenario-dir", type=Path, default=REPO / "scenarios",
        help="directory holding the scenario JSON files",
    )
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    header = (
        f"{'scenario':<26} {'ticks':>6} {'settle[s]':>10} {'rms[rad]':>10} "
        f"{'max|i|[A]':>10} {'steady|i|':>10} {'wall[s]':>8}"
    )
    print(header)
    print("-" * len(header))
    for path in sorted(args.scenario_dir.glob("*.json")):
        data = json.loads(path.read_text())
        if data.get("kind", "simulate") != "simulate":
            continue
        scenario = scenario_from_dict(data)
        start = time.perf_counter()
        trace = run_scenario(scenario)
        wall = time.perf_counter() - start
        trace.to_csv(args.out / f"{scenario.name}_trace.csv")
        with open(args.out / f"{scenario.name}_summary.json", "w") as fh:
            json.dump(trace.summary, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        metrics = trace.summary["metrics"]
        settle = metrics["settling_time"]
        settle_txt = ",".join("-" if s is None else f"{s:.2f}" for s in settle)
        rms_txt = ",".join(f"{r:.4f}" for r in metrics["rms_tracking_last_quarter"])
        status = " FAILED" if trace.failure else ""
        print(
            f"{scenario.name:<26} {trace.t.shape[0]:>6} {settle_txt:>10} "
            f"{rms_txt:>10} {metrics['max_current']:>10.3f} "
            f"{metrics['steady_max_current']:>10.2e} {wall:>8.2f}{status}"
        )
    print(f"\nartifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
