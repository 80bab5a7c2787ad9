"""Dense linear algebra for the ridge head.

Vectors and matrices are plain float64 numpy arrays. The tensor product uses
the row-major convention ``out[i * d2 + j] = a[i] * b[j]`` everywhere in the
package; estimators and the stored stage-1 weight depend on it.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def tensor_product(a, b) -> np.ndarray:
    """Return ``vec(a b^T)`` with index ``i * len(b) + j``."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    return np.multiply.outer(a, b).reshape(-1)


def tensor_product3(a, b, c) -> np.ndarray:
    return tensor_product(a, tensor_product(b, c))


def rowwise_tensor(*factors: np.ndarray) -> np.ndarray:
    """Row-by-row tensor product of ``(n, d_k)`` blocks -> ``(n, prod d_k)``.

    Row ``i`` equals ``tensor_product(f1[i], tensor_product(f2[i], ...))``.
    """
    if not factors:
        raise ValueError("need at least one factor")
    out = np.asarray(factors[0], dtype=np.float64)
    n = out.shape[0]
    for f in factors[1:]:
        f = np.asarray(f, dtype=np.float64)
        if f.shape[0] != n:
            raise DimensionMismatch(f"row counts differ: {n} vs {f.shape[0]}")
        out = (out[:, :, None] * f[:, None, :]).reshape(n, -1)
    return out


def spd_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A`` via Cholesky."""
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=np.float64)
    d = A.shape[0]
    if A.shape != (d, d):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if b.shape[0] != d:
        raise DimensionMismatch(f"b has length {b.shape[0]}, expected {d}")
    scale = max(1.0, float(np.max(np.abs(A)))) if d else 1.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * scale):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "Cholesky pivot <= 0 (ridge lambda too small or degenerate features)"
        ) from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def ridge_weight(Phi, y, lam: float) -> np.ndarray:
    """Closed-form minimiser of ``(1/n)||y - Phi w||^2 + lam ||w||^2``.

    Solves ``((1/n) Phi^T Phi + lam I) w = (1/n) Phi^T y``.
    """
    Phi = as_matrix(Phi, "Phi")
    y = as_vector(y, "y")
    n, d = Phi.shape
    if n < 1:
        raise DimensionMismatch("ridge_weight needs at least one row")
    if y.shape[0] != n:
        raise DimensionMismatch(f"y has length {y.shape[0]}, expected {n}")
    if not lam > 0:
        raise ValueError(f"ridge lambda must be positive, got {lam}")
    gram = Phi.T @ Phi / n
    gram[np.diag_indices(d)] += lam
    return spd_solve(gram, Phi.T @ y / n)
