"""Dense complex linear-algebra kernels shared by every solver module.

All matrices are plain ``numpy`` arrays in double-precision complex. Values
are treated as immutable; every function returns fresh arrays and never
mutates its inputs, so results can be shared freely across concurrent tasks.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12


def as_cmatrix(a: np.ndarray) -> np.ndarray:
    """Validate and return ``a`` as a dense complex128 matrix."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def check_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate Hermitian symmetry within a relative Frobenius tolerance."""
    m = as_cmatrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"Hermitian matrix must be square, got {m.shape}")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.conj().T) > rtol * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian within tolerance")
    return m


def hermitian_eig(a: np.ndarray, rtol: float = HERMITIAN_RTOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with real eigenvalues ``w`` sorted descending and
    unitary ``v`` whose columns are matching eigenvectors, so that
    ``a = v @ diag(w) @ v.conj().T``.
    """
    m = check_hermitian(a, rtol)
    w, v = np.linalg.eigh(m)
    return w[::-1].copy(), v[:, ::-1].copy()


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two complex matrices."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` into one vector (column-major order)."""
    m = as_cmatrix(a)
    return m.reshape(m.size, order="F").copy()


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`; ``v`` must hold exactly ``rows*cols`` entries."""
    x = np.asarray(v, dtype=np.complex128).reshape(-1)
    if x.size != rows * cols:
        raise ValueError(f"vector of length {x.size} cannot fill a {rows}x{cols} matrix")
    return x.reshape((rows, cols), order="F").copy()


def trace_product(a: np.ndarray, b: np.ndarray) -> complex:
    """tr(a @ b) without forming the product matrix."""
    ma, mb = as_cmatrix(a), as_cmatrix(b)
    if ma.shape[1] != mb.shape[0] or ma.shape[0] != mb.shape[1]:
        raise ValueError(f"incompatible shapes for trace product: {ma.shape} and {mb.shape}")
    return complex(np.sum(ma * mb.T))


def herm(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a).conj().T


def randn_c(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
