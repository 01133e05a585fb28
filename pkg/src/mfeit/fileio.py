"""Versioned JSON file formats and dataset layout.

All writers are atomic (temp file + rename) and deterministic: sorted keys,
no timestamps, full-precision floats, so regeneration is hash-equal.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .forward import CurrentPatternSet, adjacent_patterns
from .fractions import SpectraSet
from .mesh import ElectrodeSetup, Mesh

__all__ = [
    "FormatError",
    "write_json",
    "read_json",
    "save_mesh",
    "load_mesh",
    "save_spectra",
    "load_spectra",
    "save_measurement",
    "load_measurement",
    "save_fractions",
    "load_fractions",
]

MESH_FORMAT = "mfeit-mesh/1"
SPECTRA_FORMAT = "mfeit-spectra/1"
MEASUREMENT_FORMAT = "mfeit-measurement/1"
FRACTIONS_FORMAT = "mfeit-fractions/1"
MANIFEST_FORMAT = "mfeit-dataset/1"
SAMPLE_FORMAT = "mfeit-sample/1"


class FormatError(ValueError):
    """Raised when a file does not match its declared schema."""


def write_json(path, payload: dict) -> None:
    """Atomically write a JSON document (sorted keys, stable floats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path, expected_format: str | None = None) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if expected_format is not None and payload.get("format") != expected_format:
        raise FormatError(
            f"{path}: expected format {expected_format!r}, "
            f"found {payload.get('format')!r}")
    return payload


def save_mesh(path, mesh: Mesh, electrodes: ElectrodeSetup) -> None:
    write_json(path, {
        "format": MESH_FORMAT,
        "radius": mesh.radius,
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary_edges": mesh.boundary_edges.tolist(),
        "electrodes": [np.asarray(e).tolist() for e in electrodes.electrode_edges],
        "contact_impedances": electrodes.contact_impedances.tolist(),
        "coverage_fraction": electrodes.coverage_fraction,
    })


def load_mesh(path) -> tuple[Mesh, ElectrodeSetup]:
    doc = read_json(path, MESH_FORMAT)
    mesh = Mesh(nodes=np.asarray(doc["nodes"], dtype=float),
                triangles=np.asarray(doc["triangles"], dtype=int),
                boundary_edges=np.asarray(doc["boundary_edges"], dtype=int),
                radius=float(doc["radius"]))
    setup = ElectrodeSetup(
        electrode_edges=[np.asarray(e, dtype=int) for e in doc["electrodes"]],
        contact_impedances=np.asarray(doc["contact_impedances"], dtype=float),
        coverage_fraction=float(doc.get("coverage_fraction", 0.0)))
    return mesh, setup


def save_spectra(path, spectra: SpectraSet) -> None:
    write_json(path, {
        "format": SPECTRA_FORMAT,
        "frequencies": spectra.frequencies.tolist(),
        "eps0": spectra.eps0.tolist(),
        "E": spectra.E.tolist(),
        "tissue_names": list(spectra.tissue_names),
    })


def load_spectra(path) -> SpectraSet:
    doc = read_json(path, SPECTRA_FORMAT)
    return SpectraSet(E=np.asarray(doc["E"], dtype=float),
                      eps0=np.asarray(doc["eps0"], dtype=float),
                      frequencies=np.asarray(doc["frequencies"], dtype=float),
                      tissue_names=tuple(doc.get("tissue_names", ())))


def save_measurement(path, y: np.ndarray, num_electrodes: int,
                     num_patterns: int, num_frequencies: int,
                     protocol: str, amplitude: float) -> None:
    """Write a stacked frequency-difference measurement vector.

    Order is normative: frequency-major, then pattern-major, then adjacent
    electrode-pair index.
    """
    K = (num_electrodes - 1) * num_patterns
    y = np.asarray(y, dtype=float)
    if y.size != K * num_frequencies:
        raise FormatError(f"y has {y.size} entries, expected K*M = {K * num_frequencies}")
    write_json(path, {
        "format": MEASUREMENT_FORMAT,
        "K": K,
        "M": num_frequencies,
        "H": num_patterns,
        "P": num_electrodes,
        "protocol": protocol,
        "amplitude": amplitude,
        "reference_frequency_index": 0,
        "y": y.tolist(),
    })


def load_measurement(path) -> tuple[np.ndarray, CurrentPatternSet, int]:
    """Load a measurement file; returns (y, reconstructed patterns, M)."""
    doc = read_json(path, MEASUREMENT_FORMAT)
    y = np.asarray(doc["y"], dtype=float)
    P, H, M, K = doc["P"], doc["H"], doc["M"], doc["K"]
    if K != (P - 1) * H:
        raise FormatError(f"K={K} inconsistent with (P-1)*H={(P - 1) * H}")
    if y.size != K * M:
        raise FormatError(f"y has {y.size} entries, expected {K * M}")
    if doc["protocol"] != "adjacent" or H != P:
        raise FormatError(f"unsupported protocol {doc['protocol']!r} with H={H}")
    patterns = adjacent_patterns(P, float(doc["amplitude"]))
    return y, patterns, M


def save_fractions(path, F: np.ndarray, tissue_names=()) -> None:
    F = np.asarray(F, dtype=float)
    write_json(path, {
        "format": FRACTIONS_FORMAT,
        "N": F.shape[0],
        "T": F.shape[1],
        "values": F.tolist(),
        "tissue_names": list(tissue_names),
    })


def load_fractions(path) -> np.ndarray:
    doc = read_json(path, FRACTIONS_FORMAT)
    F = np.asarray(doc["values"], dtype=float)
    if F.shape != (doc["N"], doc["T"]):
        raise FormatError(f"fraction field shape {F.shape} != declared "
                          f"({doc['N']}, {doc['T']})")
    return F
