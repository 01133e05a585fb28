"""Foreign-callable session API over flat float64 arrays.

Sessions bind a reconstruction context loaded from the documented file
formats; ``physics_step`` exposes one damped metric-scaled Newton step as a
pure function of (session, fractions). Only flat row-major float64 arrays and
integer handles cross this boundary, so any host can drive it.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fileio
from .forward import CemSystem
from .fractions import unvec, validate_gamma, vec
from .jacobians import build_state, gradient_step
from .mesh import Mesh, triangle_areas

__all__ = [
    "InteropError",
    "open_session",
    "release_session",
    "physics_step",
    "tri_to_node",
    "node_to_tri",
    "tri_to_node_matrix",
    "node_to_tri_matrix",
]

GAMMA_TOL = 1e-6

ERR_INVALID_HANDLE = "INVALID_HANDLE"
ERR_DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
ERR_GAMMA_VIOLATION = "GAMMA_VIOLATION"
ERR_BAD_FILE = "BAD_FILE"
ERR_SOLVER_FAILURE = "SOLVER_FAILURE"


class InteropError(RuntimeError):
    """Session-boundary failure with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class _Session:
    mesh: Mesh
    electrodes: object
    spectra: object
    patterns: object
    system: CemSystem
    y: np.ndarray
    alpha: float
    beta: float
    F_ref: np.ndarray


_sessions: dict[int, _Session] = {}
_handles = itertools.count(1)
_lock = threading.Lock()


def _get(handle: int) -> _Session:
    try:
        return _sessions[handle]
    except KeyError:
        raise InteropError(ERR_INVALID_HANDLE,
                           f"no open session with handle {handle}") from None


def open_session(mesh_file: str, spectra_file: str, measurement_file: str,
                 alpha: float, beta: float, f_ref_file: str) -> int:
    """Open a reconstruction context; returns an opaque integer handle."""
    try:
        mesh, electrodes = fileio.load_mesh(mesh_file)
        spectra = fileio.load_spectra(spectra_file)
        y, patterns, m = fileio.load_measurement(measurement_file)
        F_ref = fileio.load_fractions(f_ref_file)
    except (OSError, fileio.FormatError, ValueError) as exc:
        raise InteropError(ERR_BAD_FILE, str(exc)) from exc
    if patterns.num_electrodes != electrodes.num_electrodes:
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"measurement P={patterns.num_electrodes} vs mesh "
                           f"P={electrodes.num_electrodes}")
    if m != spectra.num_frequencies:
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"measurement M={m} vs spectra M={spectra.num_frequencies}")
    if F_ref.shape != (mesh.num_triangles, spectra.num_tissues):
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"reference fractions {F_ref.shape} vs "
                           f"({mesh.num_triangles}, {spectra.num_tissues})")
    session = _Session(mesh=mesh, electrodes=electrodes, spectra=spectra,
                       patterns=patterns, system=CemSystem(mesh, electrodes),
                       y=y, alpha=float(alpha), beta=float(beta), F_ref=F_ref)
    with _lock:
        handle = next(_handles)
        _sessions[handle] = session
    return handle


def release_session(handle: int) -> None:
    with _lock:
        if handle not in _sessions:
            raise InteropError(ERR_INVALID_HANDLE,
                               f"no open session with handle {handle}")
        del _sessions[handle]


def physics_step(handle: int, f_flat: np.ndarray) -> np.ndarray:
    """One damped Newton point z for flat fractions (column-block order).

    Deterministic and side-effect free for a given session.
    """
    s = _get(handle)
    f_flat = np.ascontiguousarray(f_flat, dtype=np.float64)
    n, t = s.mesh.num_triangles, s.spectra.num_tissues
    if f_flat.size != n * t:
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"expected {n * t} fractions, got {f_flat.size}")
    # C-contiguous copy: BLAS summation order depends on layout, and the
    # metric solve amplifies last-bit input differences by ~|H|/alpha
    F = np.ascontiguousarray(unvec(f_flat, t))
    report = validate_gamma(F, tol=GAMMA_TOL)
    if not report.passed:
        raise InteropError(ERR_GAMMA_VIOLATION,
                           f"negativity {report.max_negativity:.2e}, row-sum "
                           f"deviation {report.max_row_sum_deviation:.2e}")
    try:
        state = build_state(F, s.y, s.spectra, s.mesh, s.electrodes, s.patterns,
                            s.F_ref, s.alpha, s.beta, system=s.system)
        return gradient_step(state)
    except Exception as exc:  # noqa: BLE001 - boundary contract
        raise InteropError(ERR_SOLVER_FAILURE, str(exc)) from exc


def tri_to_node_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Sparse (N_v, N) area-weighted average of triangles incident to a node."""
    areas = triangle_areas(mesh)
    rows = mesh.triangles.ravel()
    cols = np.repeat(np.arange(mesh.num_triangles), 3)
    vals = np.repeat(areas, 3)
    w = sp.csr_matrix((vals, (rows, cols)),
                      shape=(mesh.num_nodes, mesh.num_triangles))
    inv = 1.0 / np.asarray(w.sum(axis=1)).ravel()
    return sp.diags(inv) @ w


def node_to_tri_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Sparse (N, N_v) mean of the three vertices of each triangle."""
    rows = np.repeat(np.arange(mesh.num_triangles), 3)
    cols = mesh.triangles.ravel()
    vals = np.full(rows.shape, 1.0 / 3.0)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(mesh.num_triangles, mesh.num_nodes))


def tri_to_node(handle: int, field: np.ndarray) -> np.ndarray:
    """Resample a per-triangle field to nodes (area-weighted incidence mean)."""
    s = _get(handle)
    field = np.ascontiguousarray(field, dtype=np.float64)
    if field.size != s.mesh.num_triangles:
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"expected {s.mesh.num_triangles} values, got {field.size}")
    return tri_to_node_matrix(s.mesh) @ field


def node_to_tri(handle: int, field: np.ndarray) -> np.ndarray:
    """Resample a nodal field to triangles (vertex mean)."""
    s = _get(handle)
    field = np.ascontiguousarray(field, dtype=np.float64)
    if field.size != s.mesh.num_nodes:
        raise InteropError(ERR_DIMENSION_MISMATCH,
                           f"expected {s.mesh.num_nodes} values, got {field.size}")
    return node_to_tri_matrix(s.mesh) @ field
