"""Graph encoder-decoder denoiser and the unrolled reconstruction network.

Each unrolled block takes one damped Newton point from the physics session
(treated as a constant in the backward pass; only the identity path carries
gradients), denoises it on the node graph, and projects back onto the
feasible set with a row softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from mfeit.interop import physics_step

from .graph import g_pool, g_unpool, gcn_layer

__all__ = ["GuNetConfig", "UnrollConfig", "GuNet", "MfNet", "row_softmax_t"]


@dataclass(frozen=True)
class GuNetConfig:
    """Encoder-decoder denoiser shape: depth encoder layers, total 2*depth."""

    depth: int = 3
    hidden: int = 64
    channels: int = 3            # input/output features = tissue count
    pool_ratio: float = 0.5
    min_bottleneck: int = 4

    def __post_init__(self):
        if self.depth < 1 or self.hidden < 1:
            raise ValueError("depth and hidden must be >= 1")
        if not 0.0 < self.pool_ratio <= 1.0:
            raise ValueError("pool_ratio must be in (0, 1]")


@dataclass(frozen=True)
class UnrollConfig:
    """Unrolled network and training hyperparameters."""

    blocks: int = 9
    shared_weights: bool = False
    learning_rate: float = 1e-3
    epochs: int = 1000
    batch_size: int = 10
    gradient_mode: str = "detached"   # detached | differentiable
    seed: int = 0

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.gradient_mode not in ("detached", "differentiable"):
            raise ValueError("gradient_mode must be detached or differentiable")


def row_softmax_t(x: torch.Tensor) -> torch.Tensor:
    return torch.softmax(x, dim=-1)


class GuNet(torch.nn.Module):
    """Composition of pool+conv encoder layers and unpool+conv decoder layers,
    each followed by a ReLU."""

    def __init__(self, num_nodes: int, cfg: GuNetConfig):
        super().__init__()
        self.cfg = cfg
        n = num_nodes
        dims = []
        for _ in range(cfg.depth):
            n = max(1, int(-(-cfg.pool_ratio * n // 1)))
            dims.append(n)
        if dims[-1] < cfg.min_bottleneck:
            raise ValueError(f"bottleneck keeps {dims[-1]} nodes; "
                             f"need >= {cfg.min_bottleneck}")
        d = 2 * cfg.depth
        sizes = [(cfg.channels if i == 0 else cfg.hidden,
                  cfg.channels if i == d - 1 else cfg.hidden)
                 for i in range(d)]
        self.weights = torch.nn.ParameterList([
            torch.nn.Parameter(torch.empty(cin, cout, dtype=torch.float64))
            for cin, cout in sizes])
        for w in self.weights:
            torch.nn.init.xavier_uniform_(w)
        proj_dims = [cfg.channels] + [cfg.hidden] * (cfg.depth - 1)
        self.projections = torch.nn.ParameterList([
            torch.nn.Parameter(torch.randn(p, dtype=torch.float64))
            for p in proj_dims])

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        size_stack, idx_stack, adj_stack = [], [], []
        cfg = self.cfg
        for layer in range(cfg.depth):
            size_stack.append(x.shape[0])
            adj_stack.append(adj)
            x, adj, idx = g_pool(x, adj, self.projections[layer],
                                 cfg.pool_ratio)
            idx_stack.append(idx)
            x = torch.relu(gcn_layer(x, adj, self.weights[layer]))
        for layer in range(cfg.depth, 2 * cfg.depth):
            idx = idx_stack.pop()
            adj = adj_stack.pop()
            x = g_unpool(x, idx, size_stack.pop())
            x = torch.relu(gcn_layer(x, adj, self.weights[layer]))
        return x


@dataclass
class PhysicsContext:
    """Per-sample physics binding plus the shared resampling operators."""

    handle: int
    tri_to_node: torch.Tensor    # (N_v, N)
    node_to_tri: torch.Tensor    # (N, N_v)
    adjacency: torch.Tensor      # (N_v, N_v) with self-loops
    num_triangles: int
    num_tissues: int


def _physics_z(ctx: PhysicsContext, F: torch.Tensor) -> torch.Tensor:
    """Damped Newton point with the correction detached from autograd."""
    f_np = F.detach().numpy().ravel(order="F")
    z_np = physics_step(ctx.handle, f_np)
    z = torch.from_numpy(np.ascontiguousarray(
        z_np.reshape((ctx.num_triangles, ctx.num_tissues), order="F")))
    return F + (z - F.detach())


class MfNet(torch.nn.Module):
    """K unrolled blocks of physics step, graph denoiser, and row softmax."""

    def __init__(self, num_nodes: int, unroll: UnrollConfig, gu: GuNetConfig):
        super().__init__()
        self.unroll = unroll
        if unroll.gradient_mode == "differentiable":
            raise NotImplementedError(
                "differentiable physics mode is a declared extension point; "
                "vector-Jacobian products through the forward solves are not "
                "implemented")
        count = 1 if unroll.shared_weights else unroll.blocks
        self.denoisers = torch.nn.ModuleList(
            [GuNet(num_nodes, gu) for _ in range(count)])

    def block(self, k: int) -> GuNet:
        return self.denoisers[0 if self.unroll.shared_weights else k]

    def forward(self, ctx: PhysicsContext, F0: torch.Tensor) -> torch.Tensor:
        F = F0
        for k in range(self.unroll.blocks):
            z = _physics_z(ctx, F)
            x = ctx.tri_to_node @ z
            x = self.block(k)(x, ctx.adjacency)
            logits = ctx.node_to_tri @ x
            F = row_softmax_t(logits)
        return F
