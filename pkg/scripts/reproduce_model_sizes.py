#!/usr/bin/env python3
"""Print the parameter totals for every bundled architecture variant and,
with --check, verify them against the known reference sizes."""

import argparse
import sys

from atarisal import models

# (label, preset, overrides, reference total with 4 actions)
VARIANTS = [
    ("nature-cnn", "nature-cnn", {}, 1_686_693),
    ("daqn", "daqn", {}, 130_726),
    ("rs-ppo", "rs-ppo", {}, 1_720_999),
    ("sparse-fls", "sparse-fls", {}, 1_836_710),
    ("sparse-fls sum-pool", "sparse-fls", {"readout": "sum-pool"}, 263_846),
    ("dense-fls", "dense-fls", {}, 280_358),
    ("sparse-fls first-conv", "sparse-fls", {"placement": "first-conv"}, 1_762_982),
    ("sparse-fls each-conv", "sparse-fls", {"placement": "each-conv"}, 2_063_016),
    ("mousavi", "mousavi", {}, None),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true",
                    help="exit nonzero if any total deviates from its reference")
    ap.add_argument("--actions", type=int, default=4)
    args = ap.parse_args()

    bad = 0
    print(f"{'variant':<24} {'params':>12} {'reference':>12}")
    for label, preset, overrides, want in VARIANTS:
        cfg = models.preset_config(preset, num_actions=args.actions, **overrides)
        got = models.count_params(cfg)
        ref = f"{want:,}" if want is not None and args.actions == 4 else "-"
        mark = ""
        if args.check and want is not None and args.actions == 4 and got != want:
            mark = "  MISMATCH"
            bad += 1
        print(f"{label:<24} {got:>12,} {ref:>12}{mark}")
    if bad:
        print(f"{bad} variants off reference", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
