"""Dense linear-algebra primitives shared by every other module.

All routines are pure functions of their inputs and reject non-finite data.
"""

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

EPS = np.finfo(float).eps


def _check_finite(A, name="input"):
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")


def qr_orth(Z):
    """Orthonormal basis of range(Z) from a column-pivoted Householder QR.

    Columns whose pivot magnitude falls below ``rows * eps * sigma_max`` are
    dropped, so the returned ``Q`` may have fewer columns than ``Z``.

    Raises:
        ValueError: if ``Z`` has no columns, is non-finite, or has an empty
            range ("empty range").
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] == 0:
        raise ValueError("empty range")
    _check_finite(Z, "Z")
    Q, R, _ = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    smax = np.linalg.norm(R, 2) if d.size else 0.0
    if smax == 0.0:
        raise ValueError("empty range")
    rank = int(np.count_nonzero(d > Z.shape[0] * EPS * smax))
    if rank == 0:
        raise ValueError("empty range")
    return Q[:, :rank]


def sym_eig(A):
    """Eigen-decomposition of the symmetric part of ``A``, ascending order.

    Returns:
        (w, V): eigenvalues sorted ascending and orthonormal eigenvectors.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got shape {A.shape}")
    _check_finite(A, "A")
    w, V = scipy.linalg.eigh(0.5 * (A + A.T))
    return w, V


def pinv_small(M):
    """Moore-Penrose pseudoinverse of a small square matrix.

    Singular values at or below ``q * eps * sigma_max`` are treated as zero.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"pinv_small needs a 2-D array, got shape {M.shape}")
    _check_finite(M, "M")
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = max(M.shape) * EPS * (s[0] if s.size else 0.0)
    keep = s > cutoff
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def inner(A, B):
    """Frobenius inner product tr(A^T B)."""
    return float(np.vdot(A, B))


def read_matrix_market(path, dense=True):
    """Read a Matrix Market file (coordinate or array format).

    Coordinate files come back as CSR matrices unless ``dense`` is set.
    """
    M = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(M):
        M = M.tocsr().astype(float)
        if dense:
            M = M.toarray()
    else:
        M = np.asarray(M, dtype=float)
    _check_finite(M.data if scipy.sparse.issparse(M) else M, str(path))
    return M


def write_matrix_market(path, M, comment="", symmetric=None):
    """Write a dense or sparse matrix in Matrix Market format.

    Dense arrays use the ``array`` layout, sparse ones ``coordinate``. When
    ``symmetric`` is None it is detected exactly.
    """
    if scipy.sparse.issparse(M):
        sym = symmetric
        if sym is None:
            sym = (M != M.T).nnz == 0
        field_sym = "symmetric" if sym else "general"
        scipy.io.mmwrite(str(path), M.tocoo(), comment=comment, symmetry=field_sym)
        return
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    _check_finite(M, "M")
    sym = symmetric
    if sym is None:
        sym = M.shape[0] == M.shape[1] and np.array_equal(M, M.T)
    scipy.io.mmwrite(str(path), M, comment=comment,
                     symmetry="symmetric" if sym else "general")
