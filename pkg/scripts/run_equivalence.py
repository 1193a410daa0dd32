#!/usr/bin/env python3
"""Seeded differential runs of every mechanism transformer: native engine vs
transformed contract, with per-case pass counts."""

import argparse

from txmonsim.equivalence import run_equivalence_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--instances", type=int, default=200)
    args = parser.parse_args()

    ok = True
    for report in run_equivalence_suite(seed=args.seed, instances=args.instances):
        ok = ok and report.ok
        status = "ok" if report.ok else f"{len(report.failures)} FAILURES"
        print(
            f"{report.case:32s} {status:14s} scenarios={report.scenarios} "
            f"commits={report.commits} aborts={report.aborts}"
        )
        for failure in report.failures[:5]:
            print(f"    seed {failure.seed} tx {failure.tx_index}: {failure.problem}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
