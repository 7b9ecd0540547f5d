#!/usr/bin/env python3
"""Run the six shipped case studies and print the result tables.

Scooter (FGT) and moped (FGT and CVT), each on the flat and the hilly
cycle. Writes each study's artifact directory, then a combined comparison
under artifacts/report. Pass --fast for a coarser sweep grid while
iterating on the models.
"""

import argparse
import sys
import time
from pathlib import Path

from microtco.config import load_config
from microtco.design import compare_scenarios
from microtco.study import make_adapter, report, run_study

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = [
    "scooter_flat", "scooter_hilly",
    "moped_fgt_flat", "moped_fgt_hilly",
    "moped_cvt_flat", "moped_cvt_hilly",
]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--fast", action="store_true", help="50 W sweep grid")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    outputs = {}
    for name in CONFIGS:
        config = load_config(ROOT / "configs" / f"{name}.toml")
        if args.fast or args.workers > 1:
            import dataclasses
            sweep = dataclasses.replace(
                config.sweep,
                step_w=50.0 if args.fast else config.sweep.step_w,
                workers=args.workers,
            )
            config = dataclasses.replace(config, sweep=sweep)
        t0 = time.time()
        out = run_study(config, adapter=make_adapter(config))
        best = out.sweep_result.best_point
        print(f"{name:18s} best {best.p_em_max:6.0f} W  TCO {best.tco:8.1f} eur  "
              f"E {best.e_b_max:7.0f} Wh  m_v {best.m_v:6.2f} kg  "
              f"gamma {best.gamma:5.2f}  gap {out.validation['gap_percent']:.2f}%  "
              f"[{time.time() - t0:.0f} s]")
        outputs[name] = out

    print("\nscenario deltas (best designs):")
    pairs = [
        ("scooter_flat", "scooter_hilly"),
        ("moped_fgt_flat", "moped_fgt_hilly"),
        ("moped_cvt_flat", "moped_cvt_hilly"),
        ("moped_fgt_flat", "moped_cvt_flat"),
        ("moped_fgt_hilly", "moped_cvt_hilly"),
    ]
    for a, b in pairs:
        trend = compare_scenarios(outputs[a].sweep_result, outputs[b].sweep_result,
                                  label_a=a, label_b=b)
        print(f"  {a} -> {b}: TCO {trend.d_tco_pct:+.1f}%  "
              f"components {trend.d_comp_pct:+.1f}%  electricity {trend.d_el_pct:+.1f}%")

    # one comparison table per meaningful pair, plus plot data for each study
    report_root = ROOT / "artifacts" / "report"
    for a, b in pairs:
        report([outputs[a].out_dir, outputs[b].out_dir], report_root / f"{a}_vs_{b}")
    print(f"\npairwise comparison tables under {report_root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
