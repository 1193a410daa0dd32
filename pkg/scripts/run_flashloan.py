#!/usr/bin/env python3
"""Run every lender implementation against every client pattern and print the
verdict table with balance movements and the cross-variant agreement check."""

from txmonsim.scenarios import run_flashloan_suite


def main() -> int:
    fl = run_flashloan_suite()
    print(f"{'scenario':30s} {'lender':16s} {'verdict':20s} balances")
    for row in fl.rows:
        pre = ",".join(str(b) for b in row.lender_balances_pre)
        post = ",".join(str(b) for b in row.lender_balances_post)
        print(f"{row.scenario:30s} {row.variant:16s} {row.outcome_kind:20s} {pre} -> {post}")
    disagreements = {k: sorted(v) for k, v in fl.agreement().items() if len(v) > 1}
    violations = fl.safety_violations()
    wrong = fl.wrong_verdicts()
    print()
    print(f"agreement across lender variants: {'ok' if not disagreements else disagreements}")
    print(f"lender-balance safety on commits: {'ok' if not violations else violations}")
    print(f"expected verdicts: {'ok' if not wrong else [r.scenario for r in wrong]}")
    return 0 if fl.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
