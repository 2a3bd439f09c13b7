"""Small dense complex linear algebra.

Matrices are plain square ``numpy`` arrays of dtype ``complex128``.  The
dimensions handled here are tiny (a few dozen at most), so everything is
done with dense arrays and no attempt is made at in-place tricks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-10
DEFAULT_DEGENERACY_TOL = 1e-9


class LinalgError(ValueError):
    """Raised on malformed matrices or invalid spectral operations."""


def as_matrix(m) -> np.ndarray:
    """Return `m` as a square complex128 array, validating shape and finiteness."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise LinalgError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise LinalgError("matrix has non-finite entries")
    return arr


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise LinalgError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b


def adjoint(m) -> np.ndarray:
    return as_matrix(m).conj().T


def trace(m) -> complex:
    return complex(np.trace(as_matrix(m)))


def frobenius(m) -> float:
    return float(np.linalg.norm(m))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    return a @ b + b @ a


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = as_matrix(m)
    return frobenius(m - m.conj().T) <= tol


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (strictly increasing) with the orthogonal projectors onto
    the corresponding eigenspaces.

    ``projectors`` has shape ``(k, d, d)``; ``vectors[i]`` holds an orthonormal
    basis of the i-th eigenspace as columns.
    """

    eigenvalues: np.ndarray
    projectors: np.ndarray
    vectors: tuple

    @property
    def dim(self) -> int:
        return self.projectors.shape[-1]

    @property
    def ranks(self) -> np.ndarray:
        return np.array([v.shape[1] for v in self.vectors])

    def reconstruct(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.eigenvalues, self.projectors)


def hermitian_eigen(m, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix.

    Eigenvalues closer than ``degeneracy_tol * ||m||_F`` (chained between
    neighbours) are merged into a single eigenspace, so that numerically
    split degeneracies give one projector.

    Raises
    ------
    LinalgError
        If `m` is not Hermitian within 1e-10 (Frobenius norm of m - m^†).
    """
    m = as_matrix(m)
    if not is_hermitian(m):
        raise LinalgError("matrix is not Hermitian")
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    scale = max(frobenius(m), 1.0)
    cut = degeneracy_tol * scale

    groups: list[list[int]] = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] <= cut:
            groups[-1].append(i)
        else:
            groups.append([i])

    values = []
    projectors = []
    vectors = []
    for idx in groups:
        vecs = v[:, idx]
        values.append(float(np.mean(w[idx])))
        projectors.append(vecs @ vecs.conj().T)
        vectors.append(vecs)
    return SpectralDecomposition(np.array(values), np.array(projectors), tuple(vectors))


def matrix_function(m, f: Callable, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum:
    ``sum_i f(lambda_i) P_i``.

    `f` is called on the array of eigenvalues and may return complex values.
    """
    spec = m if isinstance(m, SpectralDecomposition) else hermitian_eigen(m, degeneracy_tol)
    fv = np.asarray(f(spec.eigenvalues), dtype=np.complex128)
    if fv.shape != spec.eigenvalues.shape:
        fv = np.array([complex(f(x)) for x in spec.eigenvalues])
    if not np.all(np.isfinite(fv)):
        raise LinalgError("function is not finite on the spectrum")
    return np.einsum("k,kij->ij", fv, spec.projectors)


def expm_hermitian(h, scale: complex) -> np.ndarray:
    """``exp(scale * h)`` for Hermitian `h`, e.g. ``scale=-1j*t`` for a propagator."""
    return matrix_function(h, lambda x: np.exp(scale * x))


def pauli() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    return x, y, z


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
