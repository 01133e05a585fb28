"""Rasterize per-triangle fields to portable pixmaps (flat-shaded triangles).

A fixed three-stop colormap (blue -> white -> red) maps [vmin, vmax]; pixels
outside the mesh stay black. Output is deterministic, so images are suitable
for golden-file comparison.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh

__all__ = ["render_field", "write_ppm", "field_to_csv"]

_STOPS = np.array([[0.10, 0.20, 0.75],
                   [1.00, 1.00, 1.00],
                   [0.80, 0.10, 0.10]])


def _colormap(t: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB via the two-segment linear gradient."""
    t = np.clip(t, 0.0, 1.0)
    lo = _STOPS[0] + (2 * t)[..., None] * (_STOPS[1] - _STOPS[0])
    hi = _STOPS[1] + (2 * t - 1)[..., None] * (_STOPS[2] - _STOPS[1])
    return np.where((t <= 0.5)[..., None], lo, hi)


def render_field(mesh: Mesh, values: np.ndarray, size: int = 256,
                 vmin: float | None = None, vmax: float | None = None
                 ) -> np.ndarray:
    """Rasterize a per-triangle field to an RGB uint8 image of side ``size``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.num_triangles,):
        raise ValueError("one value per triangle required")
    vmin = float(values.min()) if vmin is None else vmin
    vmax = float(values.max()) if vmax is None else vmax
    span = vmax - vmin if vmax > vmin else 1.0

    r = mesh.radius
    axis = (np.arange(size) + 0.5) / size * (2 * r) - r
    xs, ys = np.meshgrid(axis, -axis)  # row 0 at the top
    img = np.zeros((size, size, 3))
    filled = np.zeros((size, size), dtype=bool)

    pix = np.stack([xs, ys], axis=-1)
    for n, tri in enumerate(mesh.triangles):
        a, b, c = mesh.nodes[tri]
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        i0 = max(0, int((lo[0] + r) / (2 * r) * size) - 1)
        i1 = min(size, int((hi[0] + r) / (2 * r) * size) + 2)
        j1 = min(size, int((r - lo[1]) / (2 * r) * size) + 2)
        j0 = max(0, int((r - hi[1]) / (2 * r) * size) - 1)
        box = pix[j0:j1, i0:i1]
        d = box - a
        e1, e2 = b - a, c - a
        det = e1[0] * e2[1] - e1[1] * e2[0]
        u = (d[..., 0] * e2[1] - d[..., 1] * e2[0]) / det
        v = (-d[..., 0] * e1[1] + d[..., 1] * e1[0]) / det
        inside = (u >= 0) & (v >= 0) & (u + v <= 1) & ~filled[j0:j1, i0:i1]
        t = (values[n] - vmin) / span
        img[j0:j1, i0:i1][inside] = _colormap(np.array(t))
        filled[j0:j1, i0:i1] |= inside
    return (img * 255).round().astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """Write an RGB uint8 image as binary PPM (P6)."""
    h, w, _ = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def field_to_csv(path, mesh: Mesh, columns: dict) -> None:
    """Write per-triangle values (one column per named field) with centroids."""
    cents = mesh.nodes[mesh.triangles].mean(axis=1)
    names = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["triangle", "cx", "cy", *names])
        for n in range(mesh.num_triangles):
            writer.writerow([n, cents[n, 0], cents[n, 1],
                             *(columns[k][n] for k in names)])
