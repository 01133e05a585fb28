"""Training loop, checkpointing, and the block-count ablation harness."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import ToyDataset
from .model import GuNetConfig, MfNet, UnrollConfig

__all__ = ["TrainResult", "train", "evaluate_errors", "ablation",
           "save_checkpoint", "load_checkpoint", "write_training_curve"]


def save_checkpoint(path, model: MfNet, unroll: UnrollConfig,
                    gu: GuNetConfig, num_nodes: int) -> None:
    """Container: config dicts plus the state dict, torch-serialized."""
    torch.save({"format": "mfnet-checkpoint/1",
                "unroll": asdict(unroll), "gu": asdict(gu),
                "num_nodes": num_nodes,
                "state": model.state_dict()}, path)


def load_checkpoint(path) -> tuple[MfNet, UnrollConfig, GuNetConfig]:
    doc = torch.load(path, weights_only=False)
    if doc.get("format") != "mfnet-checkpoint/1":
        raise ValueError(f"{path}: not an mfnet checkpoint")
    unroll = UnrollConfig(**doc["unroll"])
    gu = GuNetConfig(**doc["gu"])
    model = MfNet(doc["num_nodes"], unroll, gu)
    model.load_state_dict(doc["state"])
    return model, unroll, gu


def write_training_curve(path, losses) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss"])
        w.writerows(enumerate(losses))


@dataclass
class TrainResult:
    model: MfNet
    epoch_losses: list = field(default_factory=list)

    @property
    def best_loss(self) -> float:
        return min(self.epoch_losses)


def train(dataset: ToyDataset, indices, unroll: UnrollConfig,
          gu: GuNetConfig, log_every: int = 0) -> TrainResult:
    """Minimize the mean squared distance of the final block output to the
    ground-truth fractions with ADAM; deterministic for a fixed seed and
    thread count."""
    torch.manual_seed(unroll.seed)
    model = MfNet(dataset.geometry.num_nodes, unroll, gu)
    opt = torch.optim.Adam(model.parameters(), lr=unroll.learning_rate)
    rng = np.random.default_rng(unroll.seed)
    indices = list(indices)
    result = TrainResult(model=model)
    for epoch in range(unroll.epochs):
        order = rng.permutation(indices)
        epoch_loss = 0.0
        for start in range(0, len(order), unroll.batch_size):
            batch = order[start:start + unroll.batch_size]
            opt.zero_grad()
            loss = 0.0
            for i in batch:
                ctx = dataset.context(int(i))
                F = model(ctx, dataset.initial_fractions(int(i)))
                loss = loss + torch.sum((F - dataset.fractions_true(int(i))) ** 2)
            loss = loss / len(batch)
            if not torch.isfinite(loss):
                raise ArithmeticError(
                    f"training diverged at epoch {epoch}: loss {loss.item()}")
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(batch)
        result.epoch_losses.append(epoch_loss / len(order))
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch}: loss {result.epoch_losses[-1]:.5f}",
                  flush=True)
    return result


@torch.no_grad()
def evaluate_errors(dataset: ToyDataset, model: MfNet, indices,
                    out_dir=None) -> np.ndarray:
    """Per-sample per-tissue area-weighted relative errors of the network
    output; optionally writes fraction-field files readable by the host
    toolkit."""
    from mfeit import fileio  # file formats are part of the interop surface
    nodes = dataset.geometry.nodes
    tris = dataset.geometry.triangles
    p = nodes[tris]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    errs = []
    for i in indices:
        ctx = dataset.context(int(i))
        F = model(ctx, dataset.initial_fractions(int(i))).numpy()
        F_true = dataset.fractions_true(int(i)).numpy()
        row = []
        for j in range(dataset.num_tissues):
            d = F[:, j] - F_true[:, j]
            denom = np.sqrt(areas @ F_true[:, j] ** 2)
            num = np.sqrt(areas @ d ** 2)
            row.append(num / denom if denom > 0 else num)
        errs.append(row)
        if out_dir is not None:
            fileio.save_fractions(Path(out_dir) / f"rec_{int(i):04d}.json", F)
    return np.asarray(errs)


def ablation(dataset: ToyDataset, train_idx, test_idx, block_counts,
             hidden: int, epochs: int, depth: int = 3, seed: int = 0,
             curve_file=None) -> dict:
    """Train one model per block count and report the mean fraction error
    over tissues on the held-out samples."""
    out = {}
    rows = []
    for K in block_counts:
        unroll = UnrollConfig(blocks=K, epochs=epochs, seed=seed)
        gu = GuNetConfig(depth=depth, hidden=hidden,
                         channels=dataset.num_tissues)
        result = train(dataset, train_idx, unroll, gu)
        errs = evaluate_errors(dataset, result.model, test_idx)
        out[K] = {"mean_err_f": errs.mean(axis=0),
                  "overall": float(errs.mean()),
                  "best_loss": result.best_loss}
        rows.append([K, hidden, out[K]["overall"], result.best_loss])
    if curve_file is not None:
        with open(curve_file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["blocks", "hidden", "mean_err_f", "best_train_loss"])
            w.writerows(rows)
    return out
