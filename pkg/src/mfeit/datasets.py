"""Dataset generation: directory layout, manifest, and exact regeneration.

A dataset directory holds ``manifest.json``, ``mesh.json``, ``spectra.json``
and per-sample ``sample_XXXX.json`` (ground truth + measurements) plus
``meas_XXXX.json`` (the standalone measurement format consumed by sessions).
Per-sample RNG streams derive from (dataset seed, sample index), so samples
can be generated independently and in parallel.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .forward import CemSystem, adjacent_patterns
from .fractions import SpectraSet, no_overlap_spectra, overlap_spectra
from .mesh import DEFAULT_CONTACT_IMPEDANCE, build_disk_mesh
from .phantoms import (DEFAULT_NOISE_LEVEL, Inclusion, PhantomSpec,
                       rasterize_fractions, sample_phantom, simulate_sample)

__all__ = ["DatasetConfig", "generate_dataset", "load_dataset", "DatasetView"]

DEFAULT_AMPLITUDE = 6.9  # calibrated so the paper's fixed step schedule is effective


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to regenerate a dataset bit-for-bit."""

    family: str = "overlap"
    count: int = 50
    seed: int = 0
    noise_level: float = DEFAULT_NOISE_LEVEL
    radius: float = 1.0
    target_vertices: int = 432
    num_electrodes: int = 32
    coverage: float = 0.5
    contact_impedance: float = DEFAULT_CONTACT_IMPEDANCE
    amplitude: float = DEFAULT_AMPLITUDE
    num_tissues: int | None = None  # None: preset default (3 overlap, 4 no-overlap)

    def spectra(self) -> SpectraSet:
        preset = overlap_spectra() if self.family == "overlap" else no_overlap_spectra()
        t = self.num_tissues or preset.num_tissues
        if t != preset.num_tissues:
            if not 3 <= t <= preset.num_tissues:
                raise ValueError(f"num_tissues must be in [3, {preset.num_tissues}]")
            preset = SpectraSet(E=preset.E[:t], eps0=preset.eps0[:t],
                                frequencies=preset.frequencies,
                                tissue_names=preset.tissue_names[:t])
        return preset

    def to_dict(self) -> dict:
        return {
            "family": self.family, "count": self.count, "seed": self.seed,
            "noise_level": self.noise_level, "radius": self.radius,
            "target_vertices": self.target_vertices,
            "num_electrodes": self.num_electrodes, "coverage": self.coverage,
            "contact_impedance": self.contact_impedance,
            "amplitude": self.amplitude,
            "num_tissues": self.num_tissues,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetConfig":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__ if k in doc})


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _generate_one(args):
    out_dir, cfg_doc, index = args
    cfg = DatasetConfig.from_dict(cfg_doc)
    spectra = cfg.spectra()
    mesh, electrodes = build_disk_mesh(cfg.radius, cfg.target_vertices,
                                       cfg.num_electrodes, cfg.coverage,
                                       contact_impedance=cfg.contact_impedance)
    system = CemSystem(mesh, electrodes)
    patterns = adjacent_patterns(cfg.num_electrodes, cfg.amplitude)
    rng = _sample_rng(cfg.seed, index)
    spec = sample_phantom(cfg.family, spectra.num_tissues, rng,
                          domain_radius=cfg.radius)
    F = rasterize_fractions(spec, mesh, spectra.num_tissues)
    sample = simulate_sample(F, spectra, mesh, electrodes, patterns,
                             cfg.noise_level, rng, system=system, spec=spec)
    out = Path(out_dir)
    fileio.write_json(out / f"sample_{index:04d}.json", {
        "format": fileio.SAMPLE_FORMAT,
        "index": index,
        "seed": [cfg.seed, index],
        "noise_level": cfg.noise_level,
        "fractions": sample.fractions.tolist(),
        "y": sample.noisy.tolist(),
        "y_clean": sample.clean.tolist(),
        "inclusions": [{"tissue": i.tissue, "center": list(i.center),
                        "radius": i.radius} for i in spec.inclusions],
    })
    fileio.save_measurement(out / f"meas_{index:04d}.json", sample.noisy,
                            cfg.num_electrodes, patterns.num_patterns,
                            spectra.num_frequencies, patterns.protocol,
                            cfg.amplitude)
    return index


def generate_dataset(out_dir, config: DatasetConfig, jobs: int = 1) -> Path:
    """Write a complete dataset directory; returns its path."""
    if config.count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spectra = config.spectra()
    mesh, electrodes = build_disk_mesh(config.radius, config.target_vertices,
                                       config.num_electrodes, config.coverage,
                                       contact_impedance=config.contact_impedance)
    fileio.save_mesh(out / "mesh.json", mesh, electrodes)
    fileio.save_spectra(out / "spectra.json", spectra)
    fileio.write_json(out / "manifest.json", {
        "format": fileio.MANIFEST_FORMAT,
        "config": config.to_dict(),
        "samples": [f"sample_{i:04d}.json" for i in range(config.count)],
        "measurements": [f"meas_{i:04d}.json" for i in range(config.count)],
        "mesh": "mesh.json",
        "spectra": "spectra.json",
    })
    tasks = [(str(out), config.to_dict(), i) for i in range(config.count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_generate_one, tasks))
    else:
        for t in tasks:
            _generate_one(t)
    return out


@dataclass
class DatasetView:
    """Loaded dataset directory."""

    path: Path
    config: DatasetConfig
    mesh: object
    electrodes: object
    spectra: SpectraSet

    @property
    def count(self) -> int:
        return self.config.count

    def sample(self, index: int) -> dict:
        doc = fileio.read_json(self.path / f"sample_{index:04d}.json",
                               fileio.SAMPLE_FORMAT)
        doc["fractions"] = np.asarray(doc["fractions"], dtype=float)
        doc["y"] = np.asarray(doc["y"], dtype=float)
        doc["y_clean"] = np.asarray(doc["y_clean"], dtype=float)
        return doc

    def measurement_path(self, index: int) -> Path:
        return self.path / f"meas_{index:04d}.json"

    def phantom(self, index: int) -> PhantomSpec:
        doc = fileio.read_json(self.path / f"sample_{index:04d}.json",
                               fileio.SAMPLE_FORMAT)
        incs = tuple(Inclusion(tissue=d["tissue"], center=tuple(d["center"]),
                               radius=d["radius"]) for d in doc["inclusions"])
        return PhantomSpec(inclusions=incs, domain_radius=self.config.radius,
                           family=self.config.family)


def load_dataset(path) -> DatasetView:
    path = Path(path)
    manifest = fileio.read_json(path / "manifest.json", fileio.MANIFEST_FORMAT)
    config = DatasetConfig.from_dict(manifest["config"])
    mesh, electrodes = fileio.load_mesh(path / manifest["mesh"])
    spectra = fileio.load_spectra(path / manifest["spectra"])
    return DatasetView(path=path, config=config, mesh=mesh,
                       electrodes=electrodes, spectra=spectra)
