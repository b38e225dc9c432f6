"""Dense primitives and the exact eigen-oracle.

The oracle (:func:`exact_top_eigens`) is only used for ground truth, for the
heavy-row branch (which stores its rows exactly) and in tests. Nothing on the
streaming path materializes a d x d matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class SpectralSummary:
    """Top two eigenvalues of A^T A and the top eigenvector."""

    sigma1_sq: float
    sigma2_sq: float
    v1: np.ndarray

    @property
    def gap_R(self):
        if self.sigma2_sq <= 0.0:
            return float("inf")
        return self.sigma1_sq / self.sigma2_sq

    def to_dict(self):
        return {
            "sigma1_sq": self.sigma1_sq,
            "sigma2_sq": self.sigma2_sq,
            "gap_R": self.gap_R,
            "v1": self.v1.tolist(),
        }


def as_matrix(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ContractViolation(f"expected a 2-d matrix, got shape {A.shape}")
    return A


def unit(v):
    """Return v / ||v||; raises on the zero vector."""
    v = np.asarray(v, dtype=np.float64)
    nrm = np.linalg.norm(v)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ContractViolation("cannot normalize a zero or non-finite vector")
    return v / nrm


def canonical_sign(v):
    """Flip v so that its largest-magnitude coordinate is positive."""
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def gram_apply(rows, z):
    """Compute (A^T A) z = sum_i <a_i, z> a_i without forming A^T A."""
    z = np.asarray(z, dtype=np.float64)
    A = as_matrix(rows)
    if z.ndim != 1 or A.shape[1] != z.shape[0]:
        raise ContractViolation(
            f"dimension mismatch: rows have d={A.shape[1]}, z has shape {z.shape}"
        )
    return A.T @ (A @ z)


def exact_top_eigens(A):
    """Top two eigenvalues of A^T A and its top eigenvector.

    Uses a thin SVD when A has no more rows than columns, otherwise a
    partial symmetric eigensolve of the d x d Gram matrix.
    """
    A = as_matrix(A)
    n, d = A.shape
    if n < 1 or d < 1:
        raise ContractViolation("exact_top_eigens needs n >= 1 and d >= 1")
    if not np.all(np.isfinite(A)):
        raise ContractViolation("matrix has non-finite entries")

    if n <= d:
        _, s, vt = np.linalg.svd(A, full_matrices=False)
        lam = s**2
        v1 = vt[0]
        s1 = float(lam[0])
        s2 = float(lam[1]) if lam.shape[0] > 1 else 0.0
    else:
        gram = A.T @ A
        lo = max(d - 2, 0)
        w, V = sla.eigh(gram, subset_by_index=[lo, d - 1])
        v1 = V[:, -1]
        s1 = float(w[-1])
        s2 = float(w[-2]) if w.shape[0] > 1 else 0.0
    # tiny negative eigenvalues from rounding carry no information
    s1 = max(s1, 0.0)
    s2 = min(max(s2, 0.0), s1)
    return SpectralSummary(s1, s2, canonical_sign(unit(v1)))


def _check_unit(v, name):
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ContractViolation(f"{name} must be a unit vector (norm {np.linalg.norm(v)!r})")


def correlation(u, v):
    """Squared inner product <u, v>^2 of two unit vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractViolation(f"shape mismatch {u.shape} vs {v.shape}")
    _check_unit(u, "u")
    _check_unit(v, "v")
    return float(min(1.0, np.dot(u, v) ** 2))


def gaussian_vector(d, rng):
    return rng.standard_normal(d)


def gaussian_matrix(m, d, rng):
    return rng.standard_normal((m, d))


def spectral_norm_sym(M):
    """Spectral norm of a symmetric matrix."""
    w = np.linalg.eigvalsh(M)
    return float(max(abs(w[0]), abs(w[-1])))


def make_rng(seed, *key):
    """Generator keyed by (seed, *key); distinct keys give independent streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
