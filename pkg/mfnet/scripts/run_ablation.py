#!/usr/bin/env python3
"""Block-count/width ablation on the toy dataset.

Prepares (or reuses) the toy data via the host CLI, trains one model per
(blocks, hidden) combination, and writes the error table plus per-run
checkpoints and training curves.

    python scripts/run_ablation.py --data toy_data --blocks 3 9 --hidden 32
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mfnet.data import ToyDataset
from mfnet.model import GuNetConfig, UnrollConfig
from mfnet.train import (evaluate_errors, save_checkpoint, train,
                         write_training_curve)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="toy_data")
    ap.add_argument("--out", default="ablation_out")
    ap.add_argument("--blocks", type=int, nargs="+", default=[3, 9])
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--train-count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = Path(args.data)
    if not (data / "dataset" / "manifest.json").exists():
        subprocess.run([sys.executable,
                        str(Path(__file__).parent / "prepare_toy_data.py"),
                        "--out", str(data)], check=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dataset = ToyDataset(data / "dataset", data / "fest")
    train_idx = range(args.train_count)
    test_idx = range(args.train_count, dataset.count)
    rows = []
    try:
        for K in args.blocks:
            unroll = UnrollConfig(blocks=K, epochs=args.epochs, seed=args.seed)
            gu = GuNetConfig(depth=args.depth, hidden=args.hidden,
                             channels=dataset.num_tissues)
            t0 = time.perf_counter()
            result = train(dataset, train_idx, unroll, gu, log_every=20)
            dt = time.perf_counter() - t0
            errs = evaluate_errors(dataset, result.model, test_idx,
                                   out_dir=out / f"rec_K{K}")
            tag = f"K{K}_h{args.hidden}"
            save_checkpoint(out / f"model_{tag}.pt", result.model, unroll, gu,
                            dataset.geometry.num_nodes)
            write_training_curve(out / f"curve_{tag}.csv",
                                 result.epoch_losses)
            overall = float(errs.mean())
            rows.append((K, args.hidden, overall, result.best_loss, dt))
            print(f"K={K} h={args.hidden}: held-out mean err {overall:.4f} "
                  f"(per tissue {np.round(errs.mean(0), 4).tolist()}), "
                  f"best loss {result.best_loss:.3f}, {dt / 60:.1f} min")
    finally:
        dataset.close()

    with open(out / "ablation.csv", "w") as fh:
        fh.write("blocks,hidden,mean_err_f,best_train_loss,seconds\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    print(f"table written to {out / 'ablation.csv'}")


if __name__ == "__main__":
    main()
