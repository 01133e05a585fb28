"""Synthetic phantom sampling, rasterization to triangle fractions, and the
measurement noise model.

Phantoms are 2-3 circular inclusions of non-background tissues inside the
disk; the no-overlap family rejection-samples until all disks are disjoint.
Rasterization subsamples every triangle at 16 interior points and splits
multiply-covered points equally among the covering tissues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import CemSystem, CurrentPatternSet, forward_map_phi
from .fractions import SpectraSet
from .mesh import ElectrodeSetup, Mesh

__all__ = [
    "Inclusion",
    "PhantomSpec",
    "DatasetSample",
    "sample_phantom",
    "rasterize_fractions",
    "simulate_sample",
]

RADIUS_RANGE = (0.15, 0.35)   # relative to the domain radius
CENTER_MARGIN = 0.95          # |center| + radius <= margin * domain radius
DEFAULT_NOISE_LEVEL = 5e-3
MAX_SAMPLE_ATTEMPTS = 1000


@dataclass(frozen=True)
class Inclusion:
    """One circular inclusion of a single tissue (1-based non-background index)."""

    tissue: int
    center: tuple
    radius: float


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry of one synthetic sample."""

    inclusions: tuple
    domain_radius: float = 1.0
    family: str = "overlap"
    seed: int | None = None

    def __post_init__(self):
        for inc in self.inclusions:
            if np.hypot(*inc.center) + inc.radius > CENTER_MARGIN * self.domain_radius + 1e-12:
                raise ValueError(f"inclusion {inc} leaves the admissible disk")
        if self.family == "no-overlap":
            for i, a in enumerate(self.inclusions):
                for b in self.inclusions[i + 1:]:
                    d = np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
                    if d <= a.radius + b.radius:
                        raise ValueError("no-overlap phantom has intersecting disks")


@dataclass
class DatasetSample:
    """Ground truth plus clean and noisy measurements."""

    fractions: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    noise_level: float
    seed: int | None = None
    spec: PhantomSpec | None = None


def sample_phantom(family: str, num_tissues: int, rng: np.random.Generator,
                   domain_radius: float = 1.0) -> PhantomSpec:
    """Draw a random phantom of the given family.

    Radii are uniform in [0.15, 0.35] of the domain radius, centers uniform in
    the disk that keeps each inclusion inside 0.95 of the domain. Tissues are
    assigned from a shuffled cycle over the non-background indices so that
    distinct tissues appear whenever the inclusion count allows.
    """
    if family not in ("overlap", "no-overlap"):
        raise ValueError("family must be 'overlap' or 'no-overlap'")
    if num_tissues < 3:
        raise ValueError("need at least one non-background tissue pair")
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        count = int(rng.integers(2, 4))
        order = rng.permutation(np.arange(1, num_tissues))
        inclusions = []
        for i in range(count):
            radius = rng.uniform(*RADIUS_RANGE) * domain_radius
            rmax = CENTER_MARGIN * domain_radius - radius
            rc = rmax * np.sqrt(rng.random())
            th = rng.uniform(0.0, 2.0 * np.pi)
            inclusions.append(Inclusion(
                tissue=int(order[i % (num_tissues - 1)]),
                center=(float(rc * np.cos(th)), float(rc * np.sin(th))),
                radius=float(radius)))
        if family == "no-overlap":
            ok = all(np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
                     > a.radius + b.radius
                     for i, a in enumerate(inclusions) for b in inclusions[i + 1:])
            if not ok:
                continue
        return PhantomSpec(inclusions=tuple(inclusions),
                           domain_radius=domain_radius, family=family)
    raise RuntimeError(f"no valid {family} phantom in {MAX_SAMPLE_ATTEMPTS} attempts")


def _subsample_points() -> np.ndarray:
    """Barycentric coordinates of the 16 sub-triangle centroids (4x edge split)."""
    pts = []
    for a in range(4):
        for b in range(4 - a):
            c = 3 - a - b
            pts.append(((a + 1 / 3) / 4, (b + 1 / 3) / 4, (c + 1 / 3) / 4))
            if a + b < 3:
                pts.append(((a + 2 / 3) / 4, (b + 2 / 3) / 4, (c - 1 / 3) / 4))
    return np.asarray(pts)


_BARY16 = _subsample_points()


def rasterize_fractions(spec: PhantomSpec, mesh: Mesh,
                        num_tissues: int) -> np.ndarray:
    """Per-triangle area fractions of each tissue.

    Each of the 16 sample points contributes equally; a point covered by
    several inclusions splits its weight equally among the distinct covering
    tissues, and uncovered points count as background.
    """
    xy = np.einsum("kb,nbd->nkd", _BARY16, mesh.nodes[mesh.triangles])
    n_tris = mesh.num_triangles
    covers = np.zeros((len(spec.inclusions), n_tris, 16), dtype=bool)
    for idx, inc in enumerate(spec.inclusions):
        d2 = (xy[..., 0] - inc.center[0]) ** 2 + (xy[..., 1] - inc.center[1]) ** 2
        covers[idx] = d2 <= inc.radius ** 2
    tissue_cover = np.zeros((num_tissues, n_tris, 16), dtype=bool)
    for idx, inc in enumerate(spec.inclusions):
        tissue_cover[inc.tissue] |= covers[idx]
    n_cover = tissue_cover.sum(axis=0)
    weights = np.zeros((n_tris, 16, num_tissues))
    covered = n_cover > 0
    for j in range(1, num_tissues):
        weights[..., j] = np.where(tissue_cover[j], 1.0, 0.0)
    weights[covered] /= n_cover[covered][:, None]
    weights[~covered, 0] = 1.0
    return weights.mean(axis=1)


def simulate_sample(F_true: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                    electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                    noise_level: float, rng: np.random.Generator,
                    system: CemSystem | None = None,
                    spec: PhantomSpec | None = None) -> DatasetSample:
    """Forward-simulate a sample and add scaled white Gaussian noise.

    The noise standard deviation is ``noise_level`` times the mean absolute
    clean measurement.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    clean = forward_map_phi(F_true, spectra, mesh, electrodes, patterns,
                            system=system)
    if noise_level > 0:
        eta = rng.normal(0.0, noise_level * np.abs(clean).mean(), clean.shape)
    else:
        eta = np.zeros_like(clean)
    return DatasetSample(fractions=np.asarray(F_true, dtype=float), clean=clean,
                         noisy=clean + eta, noise_level=float(noise_level),
                         spec=spec)
