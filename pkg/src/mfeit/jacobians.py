"""Adjoint conductivity Jacobians, the chain-rule fraction Jacobian, and the
regularized Gauss-Newton step.

The derivative of measurement (pattern h, adjacent pair p) with respect to a
triangle conductivity is -area * grad(u_h) . grad(w_p), where w_p solves the
same system driven by the unit measurement pattern e_p - e_{p+1}; all solves
share one factorization per conductivity field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .forward import (CemFactorization, CemSystem, CurrentPatternSet,
                      ForwardSolution, solve_forward)
from .fractions import SpectraSet, fractions_to_conductivity, vec
from .mesh import ElectrodeSetup, Mesh

__all__ = [
    "PhiJacobian",
    "GaussNewtonState",
    "conductivity_jacobian",
    "phi_jacobian",
    "linearize_phi",
    "gradient_step",
    "build_state",
]


def _triangle_field_gradients(system: CemSystem, nodal: np.ndarray) -> np.ndarray:
    """Per-triangle gradients of nodal fields; (num_fields, N, 2)."""
    return np.einsum("nid,kni->knd", system.grads, nodal[:, system.mesh.triangles])


def conductivity_jacobian(mesh: Mesh, electrodes: ElectrodeSetup,
                          sigma: np.ndarray, patterns: CurrentPatternSet,
                          forward: ForwardSolution,
                          factorization: CemFactorization) -> np.ndarray:
    """K x N derivative of the measurement vector w.r.t. triangle conductivities.

    Reuses the forward factorization: only P-1 extra triangular solves for the
    adjoint fields of the measurement patterns.
    """
    system = factorization.system
    P = electrodes.num_electrodes
    nv = mesh.num_nodes
    meas_patterns = np.zeros((P - 1, P))
    meas_patterns[np.arange(P - 1), np.arange(P - 1)] = 1.0
    meas_patterns[np.arange(P - 1), np.arange(1, P)] = -1.0
    w = factorization.solve(system.rhs(meas_patterns).T).T[:, :nv]
    grad_u = _triangle_field_gradients(system, forward.nodal)
    grad_w = _triangle_field_gradients(system, w)
    jac = -np.einsum("hnd,mnd,n->hmn", grad_u, grad_w, system.areas)
    H = patterns.num_patterns
    return jac.reshape(H * (P - 1), mesh.num_triangles)


@dataclass
class PhiJacobian:
    """Jacobian of the frequency-difference map, stored as an M x T block grid.

    Attributes
    ----------
    conductivity_jacobians : (M + 1, K, N) array
        d v / d sigma at each frequency, reference first.
    spectra : SpectraSet
    """

    conductivity_jacobians: np.ndarray
    spectra: SpectraSet

    @property
    def shape(self) -> tuple[int, int]:
        m1, K, N = self.conductivity_jacobians.shape
        T = self.spectra.num_tissues
        return ((m1 - 1) * K, T * N)

    def block(self, freq_index: int, tissue: int) -> np.ndarray:
        """K x N block for working frequency i (1-based) and tissue j."""
        jv = self.conductivity_jacobians
        eji = self.spectra.E[tissue, freq_index - 1]
        ej0 = self.spectra.eps0[tissue]
        return jv[freq_index] * eji - jv[0] * ej0

    def full_matrix(self) -> np.ndarray:
        """Dense (M K) x (T N) matrix in column-block fraction ordering."""
        m1, K, N = self.conductivity_jacobians.shape
        M, T = m1 - 1, self.spectra.num_tissues
        out = np.empty((M * K, T * N))
        for i in range(1, M + 1):
            for j in range(T):
                out[(i - 1) * K:i * K, j * N:(j + 1) * N] = self.block(i, j)
        return out

    def matvec(self, f: np.ndarray) -> np.ndarray:
        """J @ f without materializing the full matrix."""
        m1, K, N = self.conductivity_jacobians.shape
        M, T = m1 - 1, self.spectra.num_tissues
        F = f.reshape((N, T), order="F")
        jv = self.conductivity_jacobians
        # sigma-direction per frequency, then one product per frequency
        out = np.empty(M * K)
        d0 = jv[0] @ (F @ self.spectra.eps0)
        for i in range(1, M + 1):
            di = jv[i] @ (F @ self.spectra.E[:, i - 1])
            out[(i - 1) * K:i * K] = di - d0
        return out

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """J.T @ r without materializing the full matrix."""
        m1, K, N = self.conductivity_jacobians.shape
        M, T = m1 - 1, self.spectra.num_tissues
        R = r.reshape(M, K)
        jtr = np.stack([self.conductivity_jacobians[i].T @ R[i - 1]
                        for i in range(1, M + 1)])          # (M, N)
        jt0 = self.conductivity_jacobians[0].T @ R.sum(axis=0)  # (N,)
        out = np.empty((N, T))
        for j in range(T):
            out[:, j] = self.spectra.E[j] @ jtr - self.spectra.eps0[j] * jt0
        return vec(out)

    def normal_matrix(self) -> np.ndarray:
        """J.T @ J assembled from per-frequency Gram blocks (saves a large GEMM)."""
        jv = self.conductivity_jacobians
        m1, K, N = jv.shape
        M, T = m1 - 1, self.spectra.num_tissues
        gram = np.empty((m1, m1, N, N))
        for a in range(m1):
            for b in range(a, m1):
                gram[a, b] = jv[a].T @ jv[b]
                if b != a:
                    gram[b, a] = gram[a, b].T
        E, e0 = self.spectra.E, self.spectra.eps0
        out = np.empty((T * N, T * N))
        for j in range(T):
            for jp in range(j, T):
                blk = np.zeros((N, N))
                for i in range(1, M + 1):
                    blk += (E[j, i - 1] * E[jp, i - 1]) * gram[i, i]
                    blk -= (E[j, i - 1] * e0[jp]) * gram[i, 0]
                    blk -= (e0[j] * E[jp, i - 1]) * gram[0, i]
                    blk += (e0[j] * e0[jp]) * gram[0, 0]
                out[j * N:(j + 1) * N, jp * N:(jp + 1) * N] = blk
                if jp != j:
                    out[jp * N:(jp + 1) * N, j * N:(j + 1) * N] = blk.T
        return out


def linearize_phi(F: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                  electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                  system: CemSystem | None = None
                  ) -> tuple[np.ndarray, PhiJacobian]:
    """Frequency-difference data and its Jacobian at F, sharing the M+1 solves."""
    system = system or CemSystem(mesh, electrodes)
    jvs, meas = [], []
    for i in range(spectra.num_frequencies + 1):
        sigma = fractions_to_conductivity(F, spectra, i)
        fact = system.factorize(sigma)
        sol = solve_forward(mesh, electrodes, sigma, patterns, factorization=fact)
        jvs.append(conductivity_jacobian(mesh, electrodes, sigma, patterns,
                                         sol, fact))
        meas.append(sol.measurements)
    phi = np.concatenate([m - meas[0] for m in meas[1:]])
    return phi, PhiJacobian(conductivity_jacobians=np.stack(jvs), spectra=spectra)


def phi_jacobian(F: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                 electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                 system: CemSystem | None = None) -> PhiJacobian:
    """Jacobian of the frequency-difference map at F (M + 1 adjoint sweeps)."""
    _, jac = linearize_phi(F, spectra, mesh, electrodes, patterns, system=system)
    return jac


@dataclass
class GaussNewtonState:
    """One linearization of the regularized least-squares problem.

    Holds the iterate, residual, Jacobian, and the Cholesky factor of the
    metric H = J.T J + alpha I.
    """

    F: np.ndarray            # (N, T) iterate
    residual: np.ndarray     # (M K,) phi(F) - y
    jacobian: PhiJacobian
    alpha: float
    beta: float
    F_ref: np.ndarray        # (N, T) Tikhonov anchor
    metric: np.ndarray       # (TN, TN) dense H
    cholesky: np.ndarray     # lower factor of H

    def solve_metric(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.cholesky, True), rhs, check_finite=False)


def build_state(F: np.ndarray, y: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                F_ref: np.ndarray, alpha: float, beta: float,
                system: CemSystem | None = None) -> GaussNewtonState:
    """Linearize at F and factorize the Gauss-Newton metric."""
    phi, jac = linearize_phi(F, spectra, mesh, electrodes, patterns, system=system)
    metric = jac.normal_matrix()
    metric[np.diag_indices_from(metric)] += alpha
    try:
        chol = np.linalg.cholesky(metric)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(
            f"Gauss-Newton metric not positive definite at alpha={alpha}; "
            "increase alpha") from exc
    return GaussNewtonState(F=np.asarray(F, dtype=float), residual=phi - y,
                            jacobian=jac, alpha=alpha, beta=beta,
                            F_ref=np.asarray(F_ref, dtype=float),
                            metric=metric, cholesky=chol)


def gradient_step(state: GaussNewtonState) -> np.ndarray:
    """Damped Newton point z = F - beta H^{-1} grad f_alpha, as a flat vector."""
    f = vec(state.F)
    grad = state.jacobian.rmatvec(state.residual) + state.alpha * (f - vec(state.F_ref))
    return f - state.beta * state.solve_metric(grad)


def dump_dense(path, matrix: np.ndarray) -> None:
    """Debug dump: row-major float64 with a (rows, cols) int64 header."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    with open(path, "wb") as fh:
        np.asarray(matrix.shape, dtype=np.int64).tofile(fh)
        matrix.tofile(fh)


def load_dense(path) -> np.ndarray:
    with open(path, "rb") as fh:
        shape = np.fromfile(fh, dtype=np.int64, count=2)
        return np.fromfile(fh, dtype=np.float64).reshape(shape)
