"""Dense Hermitian eigendecomposition, spectral functions, PSD projection,
and first-divided-difference matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SpectralDecomposition",
    "eig_hermitian",
    "apply_spectral",
    "psd_project",
    "divided_difference_matrix",
    "hermitize",
    "matrix_sqrt",
    "matrix_inv_sqrt",
    "eig_floor",
]

_HERM_TOL = 1e-8


def hermitize(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + A.conj().T)


def eig_floor(eigenvalues: np.ndarray) -> np.ndarray:
    """Floor eigenvalues at 1e-10 * max(1, lambda_max) before inverses/logs."""
    floor = 1e-10 * max(1.0, float(np.max(eigenvalues, initial=0.0)))
    return np.maximum(eigenvalues, floor)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray   # real, ascending
    eigenvectors: np.ndarray  # unitary, columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


def eig_hermitian(A) -> SpectralDecomposition:
    """Eigendecomposition of a (numerically) Hermitian matrix.

    The input is symmetrized first; a relative asymmetry beyond 1e-8 or any
    non-finite entry is rejected.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    scale = 1.0 + np.linalg.norm(A)
    asym = np.linalg.norm(A - A.conj().T)
    if asym > _HERM_TOL * scale:
        raise ValueError(f"matrix is not Hermitian (asymmetry {asym:.2e})")
    w, v = np.linalg.eigh(hermitize(A))
    return SpectralDecomposition(eigenvalues=w, eigenvectors=v)


def apply_spectral(fn: Callable, A, floor: bool = False) -> np.ndarray:
    """Spectral function fn(A) = sum_i fn(lambda_i) u_i u_i^*.

    With ``floor=True`` eigenvalues are clipped at the relative floor first
    (for fn needing a positive domain); otherwise an eigenvalue on which fn
    is non-finite raises.
    """
    dec = eig_hermitian(A)
    w = eig_floor(dec.eigenvalues) if floor else dec.eigenvalues
    fw = np.asarray(fn(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise ValueError("eigenvalue outside the domain of the spectral function")
    return (dec.eigenvectors * fw) @ dec.eigenvectors.conj().T


def psd_project(A) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (eigenvalues clipped at 0)."""
    dec = eig_hermitian(A)
    w = np.maximum(dec.eigenvalues, 0.0)
    return (dec.eigenvectors * w) @ dec.eigenvectors.conj().T


def matrix_sqrt(A) -> np.ndarray:
    return apply_spectral(np.sqrt, A, floor=True)


def matrix_inv_sqrt(A) -> np.ndarray:
    return apply_spectral(lambda w: 1.0 / np.sqrt(w), A, floor=True)


def divided_difference_matrix(
    fn: Callable,
    fn_prime: Callable,
    eigenvalues,
    rel_tol: float = 1e-7,
) -> np.ndarray:
    """Matrix of first divided differences (f(li) - f(lj)) / (li - lj).

    Near-equal pairs (|li - lj| < rel_tol * (1 + |li|)) take the derivative.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    fl = np.asarray(fn(lam), dtype=float)
    dl = np.subtract.outer(lam, lam)
    close = np.abs(dl) < rel_tol * (1.0 + np.abs(lam))[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = np.subtract.outer(fl, fl) / dl
    deriv = np.asarray(fn_prime(lam), dtype=float)
    mid = 0.5 * np.add.outer(lam, lam)
    close_vals = np.asarray(fn_prime(np.where(close, mid, 1.0)), dtype=float)
    dd = np.where(close, close_vals, dd)
    np.fill_diagonal(dd, deriv)
    return dd
