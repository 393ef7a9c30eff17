#!/usr/bin/env python3
"""Run the desk-scale sweep plan and print the passive/active traffic ratios.

Equivalent to `bench sweep --plan scripts/plans/desk_sweep.json --out sweep.csv`
but keeps the summary around for further inspection.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from aostore.bench import load_plan, sweep


def main() -> int:
    plan = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "plans" / "desk_sweep.json"
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("sweep.csv")
    configs = load_plan(plan)
    print(f"running {len(configs)} configurations from {plan} ...")
    summary = sweep(configs, out)
    print(json.dumps(summary, indent=2))
    print(f"rows written to {out}")
    return 0 if summary["failures"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
