"""Reference-fraction estimation: one-step linearized conductivity estimates
per frequency, then a ridge fit of the non-background fractions.

The conductivity estimates use a single diagonally regularized Gauss-Newton
step from the all-background field against the frequency-difference data; the
fraction fit solves N shared-matrix normal-equation systems and repairs the
result into the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import CemSystem, CurrentPatternSet, solve_forward
from .fractions import SpectraSet, fractions_to_conductivity
from .jacobians import conductivity_jacobian
from .mesh import ElectrodeSetup, Mesh

__all__ = [
    "FestProblem",
    "noser_estimate",
    "fest_solve",
    "ridge_solution",
    "fest_reference",
    "background_fractions",
]

DEFAULT_NOSER_WEIGHT = 1e-2
DEFAULT_RIDGE_WEIGHT = 1e-3


@dataclass(frozen=True)
class FestProblem:
    """Ridge regression data for the fraction fit.

    Attributes
    ----------
    deviations : (N, M) array
        Column i holds the estimated conductivity at working frequency i
        minus the background tissue's conductivity there.
    spectra_diffs : (T - 1, M) array
        Row j-1 holds tissue j's spectrum minus the background spectrum at
        the working frequencies.
    ridge_weight : float
    """

    deviations: np.ndarray
    spectra_diffs: np.ndarray
    ridge_weight: float = DEFAULT_RIDGE_WEIGHT

    def __post_init__(self):
        if self.ridge_weight <= 0:
            raise ValueError("ridge_weight must be positive")
        dev = np.asarray(self.deviations, dtype=float)
        ebar = np.asarray(self.spectra_diffs, dtype=float)
        if dev.shape[1] != ebar.shape[1]:
            raise ValueError("deviations and spectra_diffs disagree on M")
        object.__setattr__(self, "deviations", dev)
        object.__setattr__(self, "spectra_diffs", ebar)

    @classmethod
    def from_spectra(cls, sigma_estimates: np.ndarray, spectra: SpectraSet,
                     ridge_weight: float = DEFAULT_RIDGE_WEIGHT) -> "FestProblem":
        """Build the problem from per-frequency conductivity estimates (N, M)."""
        dev = sigma_estimates - spectra.E[0][None, :]
        ebar = spectra.E[1:] - spectra.E[0]
        return cls(deviations=dev, spectra_diffs=ebar, ridge_weight=ridge_weight)


def background_fractions(num_triangles: int, num_tissues: int) -> np.ndarray:
    F = np.zeros((num_triangles, num_tissues))
    F[:, 0] = 1.0
    return F


def noser_estimate(y_block: np.ndarray, freq_index: int, spectra: SpectraSet,
                   mesh: Mesh, electrodes: ElectrodeSetup,
                   patterns: CurrentPatternSet,
                   noser_weight: float = DEFAULT_NOSER_WEIGHT,
                   system: CemSystem | None = None) -> np.ndarray:
    """One-step conductivity estimate at a working frequency.

    Linearizes the frequency-difference data around the all-background field
    and takes a single step regularized by the diagonal of the normal matrix.

    Parameters
    ----------
    y_block : (K,) array
        The frequency-i block of the difference data.
    freq_index : int
        Working frequency, 1..M.
    """
    if not 1 <= freq_index <= spectra.num_frequencies:
        raise ValueError("freq_index must be a working frequency (1..M)")
    system = system or CemSystem(mesh, electrodes)
    Fbg = background_fractions(mesh.num_triangles, spectra.num_tissues)
    sigma_ref = fractions_to_conductivity(Fbg, spectra, freq_index)
    sigma0_ref = fractions_to_conductivity(Fbg, spectra, 0)

    fact_i = system.factorize(sigma_ref)
    sol_i = solve_forward(mesh, electrodes, sigma_ref, patterns,
                          factorization=fact_i)
    sol_0 = solve_forward(mesh, electrodes, sigma0_ref, patterns, system=system)
    jac = conductivity_jacobian(mesh, electrodes, sigma_ref, patterns,
                                sol_i, fact_i)
    misfit = y_block - (sol_i.measurements - sol_0.measurements)
    normal = jac.T @ jac
    diag = np.diag(normal).copy()
    normal[np.diag_indices_from(normal)] += noser_weight * diag
    try:
        delta = np.linalg.solve(normal, jac.T @ misfit)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(
            f"singular regularized normal matrix (noser_weight={noser_weight})"
        ) from exc
    return sigma_ref + delta


def ridge_solution(problem: FestProblem) -> np.ndarray:
    """Unconstrained minimizer of the ridge functional, shape (N, T-1).

    Solves F (Ebar Ebar^T + lam I) = Sigma Ebar^T, one shared coefficient
    matrix for all N rows.
    """
    ebar = problem.spectra_diffs
    a = ebar @ ebar.T + problem.ridge_weight * np.eye(ebar.shape[0])
    return np.linalg.solve(a, ebar @ problem.deviations.T).T


def fest_solve(problem: FestProblem) -> np.ndarray:
    """Reference fraction matrix: ridge fit, background completion, repair.

    The background column is 1 minus the fitted tissue fractions; rows are
    then clamped to [0, 1] and renormalized (all-zero rows fall back to pure
    background), so the result is feasible to machine precision.
    """
    fbar = ridge_solution(problem)
    F = np.column_stack([1.0 - fbar.sum(axis=1), fbar])
    np.clip(F, 0.0, 1.0, out=F)
    sums = F.sum(axis=1)
    dead = sums <= 0
    F[dead] = 0.0
    F[dead, 0] = 1.0
    F[~dead] /= sums[~dead, None]
    return F


def fest_reference(y: np.ndarray, spectra: SpectraSet, mesh: Mesh,
                   electrodes: ElectrodeSetup, patterns: CurrentPatternSet,
                   noser_weight: float = DEFAULT_NOSER_WEIGHT,
                   ridge_weight: float = DEFAULT_RIDGE_WEIGHT,
                   system: CemSystem | None = None) -> np.ndarray:
    """Full pipeline: per-frequency estimates from y, then the fraction fit."""
    system = system or CemSystem(mesh, electrodes)
    M = spectra.num_frequencies
    K = y.size // M
    if K * M != y.size:
        raise ValueError("measurement length is not a multiple of M")
    sig = np.column_stack([
        noser_estimate(y[(i - 1) * K:i * K], i, spectra, mesh, electrodes,
                       patterns, noser_weight=noser_weight, system=system)
        for i in range(1, M + 1)
    ])
    problem = FestProblem.from_spectra(sig, spectra, ridge_weight=ridge_weight)
    return fest_solve(problem)
