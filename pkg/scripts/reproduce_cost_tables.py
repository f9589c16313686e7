#!/usr/bin/env python3
"""Render the analytic FLOP/memory cost tables for the reference workload.

Prints a markdown table comparing dense non-local attention against the
recurrent criss-cross variant at R=1..3 on a 97x97 feature map (C=512,
C'=64), followed by the headline reduction ratios.
"""

import argparse

from crisscross.costmodel import (
    WorkloadSpec,
    flops_cc2d,
    flops_nonlocal,
    render_report,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=int, default=97)
    ap.add_argument("--w", type=int, default=97)
    ap.add_argument("--c", type=int, default=512)
    ap.add_argument("--cred", type=int, default=64)
    ap.add_argument("--format", choices=("md", "csv"), default="md")
    args = ap.parse_args()

    base = dict(h=args.h, w=args.w, c=args.c, c_reduced=args.cred)
    nl = flops_nonlocal(WorkloadSpec(**base))
    ccs = [flops_cc2d(WorkloadSpec(loops=r, **base)) for r in (1, 2, 3)]
    for cc in ccs:
        cc.ratio_vs_nonlocal = cc.flops_total / nl.flops_total
    print(render_report([nl] + ccs, args.format))

    cc2 = ccs[1]
    print(f"FLOP ratio RCCA(R=2)/NL: "
          f"{cc2.flops_total / nl.flops_total:.4f}")
    print(f"attention-buffer ratio NL/RCCA(R=2): "
          f"{nl.attention_bytes / cc2.attention_bytes:.1f}x")


if __name__ == "__main__":
    main()
