"""Tissue-fraction fields, conductivity spectra, and the fraction-to-conductivity map.

A fraction matrix assigns each triangle a convex combination of T tissues;
its rows live on the probability simplex (the feasible set). Conductivity at
a working frequency is the fraction-weighted mix of the known tissue spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectraSet",
    "GammaReport",
    "fractions_to_conductivity",
    "row_softmax",
    "validate_gamma",
    "vec",
    "unvec",
    "overlap_spectra",
    "no_overlap_spectra",
]


@dataclass(frozen=True)
class SpectraSet:
    """Known per-tissue conductivity spectra.

    Attributes
    ----------
    E : (T, M) float array
        Conductivity of tissue j at working frequency i (S/m).
    eps0 : (T,) float array
        Conductivity at the reference frequency.
    frequencies : (M + 1,) float array
        Frequency labels in Hz, reference first.
    tissue_names : tuple of str
        Tissue 0 is the background.
    """

    E: np.ndarray
    eps0: np.ndarray
    frequencies: np.ndarray
    tissue_names: tuple = ()

    def __post_init__(self):
        E = np.asarray(self.E, dtype=float)
        eps0 = np.asarray(self.eps0, dtype=float)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "eps0", eps0)
        object.__setattr__(self, "frequencies", np.asarray(self.frequencies, dtype=float))
        if E.ndim != 2 or eps0.shape != (E.shape[0],):
            raise ValueError("E must be (T, M) with eps0 of length T")
        if E.shape[0] < 2:
            raise ValueError("need at least two tissues (background + 1)")
        if (E <= 0).any() or (eps0 <= 0).any():
            raise ValueError("conductivities must be positive")

    @property
    def num_tissues(self) -> int:
        return self.E.shape[0]

    @property
    def num_frequencies(self) -> int:
        return self.E.shape[1]

    def column(self, freq_index: int) -> np.ndarray:
        """Spectra column; index 0 is the reference frequency."""
        if freq_index == 0:
            return self.eps0
        if not 1 <= freq_index <= self.num_frequencies:
            raise IndexError(f"freq_index {freq_index} out of range 0..{self.num_frequencies}")
        return self.E[:, freq_index - 1]


def overlap_spectra() -> SpectraSet:
    """Saline/carrot/cucumber preset (T=3, M=2)."""
    return SpectraSet(
        E=np.array([[0.13, 0.13], [0.043, 0.150], [0.066, 0.181]]),
        eps0=np.array([0.13, 0.034, 0.048]),
        frequencies=np.array([1e3, 5e3, 50e3]),
        tissue_names=("saline", "carrot", "cucumber"),
    )


def no_overlap_spectra() -> SpectraSet:
    """Saline/carrot/cucumber/potato preset (T=4, M=2)."""
    return SpectraSet(
        E=np.array([[0.13, 0.13], [0.175, 0.310], [0.250, 0.405], [0.130, 0.230]]),
        eps0=np.array([0.13, 0.100, 0.023, 0.008]),
        frequencies=np.array([1e3, 100e3, 1000e3]),
        tissue_names=("saline", "carrot", "cucumber", "potato"),
    )


def fractions_to_conductivity(F: np.ndarray, spectra: SpectraSet,
                              freq_index: int) -> np.ndarray:
    """Per-triangle conductivity at one frequency.

    Parameters
    ----------
    F : (N, T) array
        Fraction matrix.
    freq_index : int
        0 selects the reference frequency, 1..M the working frequencies.
    """
    F = np.asarray(F, dtype=float)
    col = spectra.column(freq_index)
    if F.shape[1] != len(col):
        raise ValueError(f"fraction columns ({F.shape[1]}) != tissues ({len(col)})")
    return F @ col


def row_softmax(X: np.ndarray) -> np.ndarray:
    """Row-wise softmax; output rows lie on the simplex exactly.

    Invariant under adding a per-row constant. Rejects NaN input.
    """
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise ValueError("row_softmax: NaN in input")
    Y = X - X.max(axis=-1, keepdims=True)
    np.exp(Y, out=Y)
    Y /= Y.sum(axis=-1, keepdims=True)
    return Y


@dataclass(frozen=True)
class GammaReport:
    """Feasibility diagnostics for a fraction matrix."""

    max_negativity: float
    max_row_sum_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_negativity <= self.tol and self.max_row_sum_deviation <= self.tol


def validate_gamma(F: np.ndarray, tol: float = 1e-8) -> GammaReport:
    """Report how far a fraction matrix is from the feasible set."""
    F = np.asarray(F, dtype=float)
    neg = float(max(0.0, -F.min())) if F.size else 0.0
    dev = float(np.abs(F.sum(axis=-1) - 1.0).max()) if F.size else 0.0
    return GammaReport(max_negativity=neg, max_row_sum_deviation=dev, tol=tol)


def vec(F: np.ndarray) -> np.ndarray:
    """Stack fraction columns into a flat vector [f_1; ...; f_T]."""
    return np.asarray(F).ravel(order="F")


def unvec(f: np.ndarray, num_tissues: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a flat column-block vector to (N, T)."""
    f = np.asarray(f)
    n = f.size // num_tissues
    return f.reshape((n, num_tissues), order="F")
