#!/usr/bin/env python3
"""Reproduce the bundled three-mode OPO design example end to end.

Writes plant/controller documents and the comparison report into the output
directory (default ./design_example_out) and prints the human-readable
report.  Equivalent to `qhinf demo-paper --out-dir ...`.
"""

import argparse

from qhinf import demo


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="design_example_out")
    parser.add_argument("--tol-g", type=float, default=5e-3,
                        help="bisection tolerance for the attenuation level")
    parser.add_argument("--paths", type=int, default=20,
                        help="fault paths for the simulation probe")
    parser.add_argument("--quick", action="store_true",
                        help="skip the simulation probe")
    args = parser.parse_args()
    report = demo.run_paper_demo(
        out_dir=args.out_dir, tol_g=args.tol_g, n_paths=args.paths, quick=args.quick
    )
    print(demo.format_demo_report(report))
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
