"""Dataset-directory consumption and physics-session management.

Everything here reads the documented file formats (mesh/spectra/measurement/
fraction JSON) and talks to the physics through the session interop; no
internal structures of the forward solver are touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from mfeit.interop import open_session, release_session

from .model import PhysicsContext

__all__ = ["MeshGeometry", "ToyDataset", "load_geometry"]


@dataclass(frozen=True)
class MeshGeometry:
    """Node/triangle arrays plus the derived operators the network needs."""

    nodes: np.ndarray
    triangles: np.ndarray
    tri_to_node: torch.Tensor
    node_to_tri: torch.Tensor
    adjacency: torch.Tensor

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def _triangle_areas(nodes, tris):
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def load_geometry(mesh_file) -> MeshGeometry:
    """Build resampling and graph operators from a mesh document."""
    doc = json.loads(Path(mesh_file).read_text())
    nodes = np.asarray(doc["nodes"], dtype=float)
    tris = np.asarray(doc["triangles"], dtype=int)
    nv, nt = len(nodes), len(tris)
    areas = _triangle_areas(nodes, tris)

    t2n = np.zeros((nv, nt))
    for t in range(nt):
        for v in tris[t]:
            t2n[v, t] += areas[t]
    t2n /= t2n.sum(axis=1, keepdims=True)

    n2t = np.zeros((nt, nv))
    for t in range(nt):
        n2t[t, tris[t]] = 1.0 / 3.0

    adj = np.eye(nv)
    for t in range(nt):
        for i in range(3):
            a, b = tris[t][i], tris[t][(i + 1) % 3]
            adj[a, b] = adj[b, a] = 1.0

    return MeshGeometry(nodes=nodes, triangles=tris,
                        tri_to_node=torch.from_numpy(t2n),
                        node_to_tri=torch.from_numpy(n2t),
                        adjacency=torch.from_numpy(adj))


class ToyDataset:
    """A generated dataset directory plus per-sample reference fractions.

    Opens one physics session per sample on demand and keeps it for reuse
    across epochs; call ``close()`` when done.
    """

    def __init__(self, dataset_dir, fest_dir, alpha: float = 1e-9,
                 beta: float = 0.3):
        self.root = Path(dataset_dir)
        self.fest = Path(fest_dir)
        self.alpha = alpha
        self.beta = beta
        manifest = json.loads((self.root / "manifest.json").read_text())
        self.count = len(manifest["samples"])
        self.geometry = load_geometry(self.root / manifest["mesh"])
        spectra = json.loads((self.root / manifest["spectra"]).read_text())
        self.num_tissues = len(spectra["eps0"])
        self._handles: dict[int, int] = {}

    def fractions_true(self, i: int) -> torch.Tensor:
        doc = json.loads((self.root / f"sample_{i:04d}.json").read_text())
        return torch.tensor(doc["fractions"], dtype=torch.float64)

    def reference(self, i: int) -> torch.Tensor:
        doc = json.loads((self.fest / f"fhat_{i:04d}.json").read_text())
        return torch.tensor(doc["values"], dtype=torch.float64)

    def context(self, i: int) -> PhysicsContext:
        if i not in self._handles:
            self._handles[i] = open_session(
                str(self.root / "mesh.json"), str(self.root / "spectra.json"),
                str(self.root / f"meas_{i:04d}.json"), self.alpha, self.beta,
                str(self.fest / f"fhat_{i:04d}.json"))
        g = self.geometry
        return PhysicsContext(handle=self._handles[i],
                              tri_to_node=g.tri_to_node,
                              node_to_tri=g.node_to_tri,
                              adjacency=g.adjacency,
                              num_triangles=g.num_triangles,
                              num_tissues=self.num_tissues)

    def initial_fractions(self, i: int, noise_std: float = 0.1
                          ) -> torch.Tensor:
        rng = np.random.default_rng(np.random.SeedSequence((7, i)))
        logits = np.zeros((self.geometry.num_triangles, self.num_tissues))
        logits[:, 0] = 1.0
        logits += rng.normal(0.0, noise_std, logits.shape)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return torch.from_numpy(e / e.sum(axis=1, keepdims=True))

    def close(self) -> None:
        for h in self._handles.values():
            release_session(h)
        self._handles.clear()
