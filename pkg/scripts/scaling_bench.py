#!/usr/bin/env python3
"""Parallel scaling experiment: the rewritten revenue query at several worker
counts, 4 repetitions each with the first discarded as warm-up.

Usage: python scripts/scaling_bench.py [--rows N] [--seed S] [--workers 1,2,4]
"""

import argparse
import json
import os
import sys

from cvm.cli import bench_q6


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=5_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", default="1,2,4")
    ap.add_argument("--reps", type=int, default=4)
    args = ap.parse_args()

    print(f"host cores: {os.cpu_count()}  rows: {args.rows}  seed: {args.seed}", file=sys.stderr)
    reports = []
    base_ms = None
    for w in (int(x) for x in args.workers.split(",")):
        report = bench_q6(args.rows, w, args.seed, args.reps)
        if base_ms is None:
            base_ms = report.mean_ms
        reports.append(report.to_json() | {"speedup_vs_first": round(base_ms / report.mean_ms, 3)})
        print(
            f"workers={w:2d}  mean={report.mean_ms:8.1f} ms  "
            f"speedup={base_ms / report.mean_ms:5.2f}x",
            file=sys.stderr,
        )
    json.dump(reports, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
