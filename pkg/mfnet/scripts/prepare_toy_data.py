#!/usr/bin/env python3
"""Generate the reduced-scale Overlap dataset and reference fractions used by
the toy training and ablation runs, through the host toolkit's CLI."""

import argparse
import subprocess
import sys
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="toy_data")
    ap.add_argument("--count", type=int, default=32)
    ap.add_argument("--seed", type=int, default=9)
    args = ap.parse_args()
    out = Path(args.out)
    ds = out / "dataset"
    fest = out / "fest"
    if not (ds / "manifest.json").exists():
        subprocess.run([sys.executable, "-m", "mfeit", "dataset-gen",
                        "--family", "overlap", "--count", str(args.count),
                        "--seed", str(args.seed), "--vertices", "150",
                        "--electrodes", "16", "--out", str(ds)], check=True)
    if not (fest / "config_echo.json").exists():
        subprocess.run([sys.executable, "-m", "mfeit", "fest",
                        "--dataset", str(ds), "--out", str(fest)], check=True)
    print(f"toy data ready under {out}")


if __name__ == "__main__":
    main()
