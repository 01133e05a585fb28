"""Reconstruction quality metrics: area-weighted relative L2 errors for
conductivity fields and fraction columns, plus dataset-level aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, triangle_areas

__all__ = ["ErrorReport", "err_sigma", "err_fraction", "aggregate"]


@dataclass(frozen=True)
class ErrorReport:
    """Per-sample errors: one value per working frequency and per tissue."""

    err_sigma: np.ndarray
    err_f: np.ndarray
    sample_id: str = ""


def _weighted_norm(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(w @ (x * x)))


def err_sigma(sigma_rec: np.ndarray, sigma_true: np.ndarray, mesh: Mesh) -> float:
    """Area-weighted relative L2 error of a conductivity field."""
    w = triangle_areas(mesh)
    denom = _weighted_norm(np.asarray(sigma_true, dtype=float), w)
    if denom == 0.0:
        raise ValueError("ground-truth conductivity has zero norm")
    return _weighted_norm(np.asarray(sigma_rec) - np.asarray(sigma_true), w) / denom


def err_fraction(F_rec: np.ndarray, F_true: np.ndarray, mesh: Mesh,
                 tissue: int) -> float:
    """Area-weighted relative L2 error of one fraction column.

    Falls back to the absolute error when the ground-truth column vanishes.
    """
    w = triangle_areas(mesh)
    diff = np.asarray(F_rec)[:, tissue] - np.asarray(F_true)[:, tissue]
    denom = _weighted_norm(np.asarray(F_true)[:, tissue], w)
    num = _weighted_norm(diff, w)
    return num / denom if denom > 0 else num


def aggregate(reports: list) -> dict:
    """Arithmetic means across samples.

    Returns per-tissue and per-frequency means plus their scalar mean over
    tissues (the ablation metric).
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    err_f = np.mean([r.err_f for r in reports], axis=0)
    err_s = np.mean([r.err_sigma for r in reports], axis=0)
    return {
        "mean_err_f": err_f,
        "mean_err_sigma": err_s,
        "mean_err_f_overall": float(np.mean(err_f)),
        "num_samples": len(reports),
    }
