"""Small dense linear-algebra helpers shared across the package."""

from __future__ import annotations

import numpy as np

HERM_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a square complex array; raise ``ValueError`` otherwise."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def hermiticity_error(m: np.ndarray) -> float:
    """Largest entrywise deviation from Hermiticity over the trailing two axes."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))))


def hermitian(m, tol: float = HERM_TOL) -> np.ndarray:
    """Validate Hermiticity within ``tol`` and return the exactly Hermitian part."""
    arr = as_matrix(m)
    err = hermiticity_error(arr)
    if err > tol:
        raise ValueError(f"matrix is not Hermitian (max deviation {err:.3g} > {tol:.1g})")
    return (arr + arr.conj().T) / 2


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix, or of each in a stack (min over all)."""
    m = np.asarray(m)
    herm = (m + np.conj(np.swapaxes(m, -1, -2))) / 2
    return float(np.min(np.linalg.eigvalsh(herm)))


def is_density_matrix(rho: np.ndarray, tol: float = HERM_TOL) -> bool:
    rho = np.asarray(rho)
    return (
        hermiticity_error(rho) <= tol
        and min_eigenvalue(rho) >= -tol
        and abs(np.trace(rho) - 1) <= tol
    )


def trace_pairing(f: np.ndarray, s: np.ndarray) -> complex:
    """``sum tr(F_k S_k)`` over all leading indices of two equally shaped stacks."""
    return complex(np.einsum("...ij,...ji->", f, s))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None,
                          real: bool = False) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank))
    if not real:
        g = g + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def psd_inv_sqrt(m: np.ndarray, cutoff: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    inv = np.where(w > cutoff, 1 / np.sqrt(np.where(w > cutoff, w, 1)), 0)
    return (v * inv) @ v.conj().T
