"""Graph convolution and pooling primitives (dense adjacency, float64).

The convolution is the symmetric-normalized product B^{-1/2} A B^{-1/2} X W;
pooling keeps the top-k nodes by their scalar projection onto a trainable
vector and gates the kept features with the sigmoid of their scores.
"""

from __future__ import annotations

import torch

__all__ = ["normalized_adjacency", "gcn_layer", "g_pool", "g_unpool"]


def normalized_adjacency(adj: torch.Tensor) -> torch.Tensor:
    """B^{-1/2} A B^{-1/2} for an adjacency with self-loops."""
    deg = adj.sum(dim=1)
    dinv = deg.rsqrt()
    return dinv[:, None] * adj * dinv[None, :]


def gcn_layer(x: torch.Tensor, adj: torch.Tensor, weight: torch.Tensor
              ) -> torch.Tensor:
    """Graph convolution: B^{-1/2} A B^{-1/2} X W.

    Parameters
    ----------
    x : (N, c_in) node features
    adj : (N, N) adjacency with self-loops (unnormalized)
    weight : (c_in, c_out)
    """
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"feature dim {x.shape[1]} != weight rows "
                         f"{weight.shape[0]}")
    if adj.shape[0] != x.shape[0]:
        raise ValueError("adjacency and features disagree on node count")
    return normalized_adjacency(adj) @ x @ weight


def g_pool(x: torch.Tensor, adj: torch.Tensor, projection: torch.Tensor,
           ratio: float) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Top-k node pooling by projection score.

    Keeps ceil(ratio * N) nodes ranked by x @ p / ||p||, gates their features
    by the sigmoid of the score, and restricts the adjacency to the kept
    nodes. Returns (pooled features, pooled adjacency, kept indices).
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    n = x.shape[0]
    k = max(1, int(-(-ratio * n // 1)))  # ceil
    scores = x @ projection / projection.norm()
    _, idx = torch.topk(scores, k)
    idx, _ = torch.sort(idx)
    gated = x[idx] * torch.sigmoid(scores[idx])[:, None]
    return gated, adj[idx][:, idx], idx


def g_unpool(x_small: torch.Tensor, kept: torch.Tensor, size: int
             ) -> torch.Tensor:
    """Scatter pooled rows back to their original positions, zero elsewhere."""
    if kept.max() >= size:
        raise IndexError("kept index outside the original node range")
    out = x_small.new_zeros((size, x_small.shape[1]))
    out[kept] = x_small
    return out
