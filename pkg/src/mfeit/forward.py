"""Complete-electrode-model FEM forward solver.

P1 potentials on the triangulation, electrode voltages represented in the
zero-mean basis {e_p - e_{p+1}}, so grounding is structural and the assembled
block system is symmetric positive definite. A factorization is computed per
conductivity field and shared across current patterns and adjoint solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fractions import SpectraSet, fractions_to_conductivity, validate_gamma
from .mesh import ElectrodeSetup, Mesh, triangle_gradients

__all__ = [
    "CurrentPatternSet",
    "ForwardSolution",
    "CemSystem",
    "CemFactorization",
    "ForwardError",
    "adjacent_patterns",
    "assemble_cem_system",
    "solve_forward",
    "forward_map_phi",
]

DEFAULT_AMPLITUDE = 1.0


class ForwardError(RuntimeError):
    """Raised when assembly or factorization of the CEM system fails."""


@dataclass(frozen=True)
class CurrentPatternSet:
    """Injected current patterns, each zero-sum.

    Attributes
    ----------
    patterns : (H, P) float array
        Pattern h injects ``patterns[h, p]`` amperes at electrode p.
    protocol : str
        Protocol name, e.g. "adjacent".
    amplitude : float
        Nominal drive amplitude in amperes.
    """

    patterns: np.ndarray
    protocol: str = "adjacent"
    amplitude: float = DEFAULT_AMPLITUDE

    @property
    def num_patterns(self) -> int:
        return self.patterns.shape[0]

    @property
    def num_electrodes(self) -> int:
        return self.patterns.shape[1]


def adjacent_patterns(num_electrodes: int, amplitude: float = DEFAULT_AMPLITUDE
                      ) -> CurrentPatternSet:
    """Adjacent-pair injection: pattern h drives electrodes (h, h+1 mod P)."""
    if num_electrodes < 4:
        raise ValueError("need at least 4 electrodes")
    P = num_electrodes
    patterns = np.zeros((P, P))
    for h in range(P):
        patterns[h, h] = amplitude
        patterns[h, (h + 1) % P] = -amplitude
    return CurrentPatternSet(patterns=patterns, protocol="adjacent",
                             amplitude=float(amplitude))


@dataclass(frozen=True)
class ForwardSolution:
    """Solution of the CEM system for one conductivity and a pattern set.

    Attributes
    ----------
    nodal : (H, N_v) array
        Interior potentials per pattern.
    voltages : (H, P) array
        Electrode voltages per pattern, each zero-sum.
    measurements : (K,) array
        Adjacent differences U_p - U_{p+1}, p = 1..P-1, concatenated per
        pattern; K = (P-1) H.
    """

    nodal: np.ndarray
    voltages: np.ndarray
    measurements: np.ndarray


class CemFactorization:
    """Factorized CEM system for one conductivity field."""

    def __init__(self, system: "CemSystem", matrix: sp.csc_matrix):
        self._matrix = matrix
        self.system = system
        try:
            self._lu = spla.splu(matrix)
        except RuntimeError as exc:  # pragma: no cover - guarded by sigma > 0
            raise ForwardError(f"CEM factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve with one step of iterative refinement (handles stiff z_p)."""
        x = self._lu.solve(rhs)
        x += self._lu.solve(rhs - self._matrix @ x)
        return x


class CemSystem:
    """Conductivity-independent CEM assembly data for a mesh/electrode pair.

    Electrode boundary blocks and element stiffness matrices are precomputed;
    ``factorize(sigma)`` assembles and factorizes the SPD block system for a
    per-triangle conductivity field.
    """

    def __init__(self, mesh: Mesh, electrodes: ElectrodeSetup):
        self.mesh = mesh
        self.electrodes = electrodes
        self.num_electrodes = electrodes.num_electrodes
        nv = mesh.num_nodes
        tris = mesh.triangles

        areas, grads = triangle_gradients(mesh)
        self.areas = areas
        self.grads = grads
        # Element stiffness without sigma: area * grad_i . grad_j
        self.elem_stiffness = np.einsum("nid,njd,n->nij", grads, grads, areas)
        self._k_rows = np.repeat(tris, 3, axis=1).reshape(-1)
        self._k_cols = np.tile(tris, (1, 3)).reshape(-1)

        P = self.num_electrodes
        z = electrodes.contact_impedances
        if (np.asarray(z) <= 0).any():
            raise ForwardError("contact impedances must be positive")
        bmass = sp.lil_matrix((nv, nv))
        w = np.zeros((nv, P))
        d = np.zeros(P)
        for pidx, edges in enumerate(electrodes.electrode_edges):
            zp = z[pidx]
            for ei in np.atleast_1d(edges):
                a, b = mesh.boundary_edges[ei]
                length = float(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]))
                bmass[a, a] += length / (3 * zp)
                bmass[b, b] += length / (3 * zp)
                bmass[a, b] += length / (6 * zp)
                bmass[b, a] += length / (6 * zp)
                w[a, pidx] += length / (2 * zp)
                w[b, pidx] += length / (2 * zp)
                d[pidx] += length / zp
        # Zero-mean voltage basis n_q = e_q - e_{q+1}
        q = np.zeros((P, P - 1))
        q[np.arange(P - 1), np.arange(P - 1)] = 1.0
        q[np.arange(1, P), np.arange(P - 1)] = -1.0
        self._basis = q
        self._boundary_mass = bmass.tocsr()
        self._coupling = sp.csr_matrix(-w @ q)
        self._electrode_block = sp.csr_matrix(q.T @ (d[:, None] * q))

    def stiffness(self, sigma: np.ndarray) -> sp.csr_matrix:
        """Interior stiffness block for a per-triangle conductivity field."""
        data = (self.elem_stiffness * sigma[:, None, None]).ravel()
        nv = self.mesh.num_nodes
        return sp.csr_matrix((data, (self._k_rows, self._k_cols)), shape=(nv, nv))

    def assemble(self, sigma: np.ndarray) -> sp.csc_matrix:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.mesh.num_triangles,):
            raise ForwardError("sigma must have one value per triangle")
        if (sigma <= 0).any():
            raise ForwardError("conductivity must be positive everywhere")
        k = self.stiffness(sigma) + self._boundary_mass
        return sp.bmat([[k, self._coupling],
                        [self._coupling.T, self._electrode_block]], format="csc")

    def factorize(self, sigma: np.ndarray) -> CemFactorization:
        return CemFactorization(self, self.assemble(sigma))

    def rhs(self, currents: np.ndarray) -> np.ndarray:
        """Right-hand side for an injected current vector (or stack of them)."""
        currents = np.asarray(currents, dtype=float)
        nv = self.mesh.num_nodes
        single = currents.ndim == 1
        cur = np.atleast_2d(currents)
        out = np.zeros((cur.shape[0], nv + self.num_electrodes - 1))
        out[:, nv:] = cur @ self._basis
        return out[0] if single else out

    def voltages_from_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Electrode voltages U from zero-mean basis coordinates."""
        return coeffs @ self._basis.T


def assemble_cem_system(mesh: Mesh, electrodes: ElectrodeSetup,
                        sigma: np.ndarray) -> CemFactorization:
    """Assemble and factorize the CEM block system for one conductivity."""
    return CemSystem(mesh, electrodes).factorize(sigma)


def _measurements_from_voltages(voltages: np.ndarray) -> np.ndarray:
    return (voltages[:, :-1] - voltages[:, 1:]).ravel()


def solve_forward(mesh: Mesh, electrodes: ElectrodeSetup, sigma: np.ndarray,
                  patterns: CurrentPatternSet,
                  system: CemSystem | None = None,
                  factorization: CemFactorization | None = None,
                  ) -> ForwardSolution:
    """Solve the CEM for every current pattern.

    A prebuilt ``CemSystem`` or ``CemFactorization`` may be passed to reuse
    assembly work; otherwise they are created here.
    """
    if patterns.num_electrodes != electrodes.num_electrodes:
        raise ForwardError("pattern electrode count does not match setup")
    if factorization is None:
        system = system or CemSystem(mesh, electrodes)
        factorization = system.factorize(sigma)
    else:
        system = factorization.system
    nv = mesh.num_nodes
    rhs = system.rhs(patterns.patterns)
    x = factorization.solve(rhs.T).T
    nodal = x[:, :nv]
    voltages = system.voltages_from_coeffs(x[:, nv:])
    return ForwardSolution(nodal=nodal, voltages=voltages,
                           measurements=_measurements_from_voltages(voltages))


def forward_map_phi(F: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                    electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                    system: CemSystem | None = None,
                    gamma_tol: float = 1e-8) -> np.ndarray:
    """Frequency-difference forward map.

    Stacks v(sigma_i) - v(sigma_0) for the M working frequencies; exactly
    M + 1 forward solves.
    """
    report = validate_gamma(F, tol=gamma_tol)
    if not report.passed:
        raise ForwardError(
            f"fractions infeasible: negativity {report.max_negativity:.2e}, "
            f"row-sum deviation {report.max_row_sum_deviation:.2e}")
    system = system or CemSystem(mesh, electrodes)
    blocks = []
    v0 = None
    for i in range(spectra.num_frequencies + 1):
        sigma = fractions_to_conductivity(F, spectra, i)
        sol = solve_forward(mesh, electrodes, sigma, patterns, system=system)
        if i == 0:
            v0 = sol.measurements
        else:
            blocks.append(sol.measurements - v0)
    return np.concatenate(blocks)
