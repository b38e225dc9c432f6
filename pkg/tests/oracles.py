"""Independent reference computations used only by the tests."""

import numpy as np


def power_top_two(A, tol=1e-12, max_iter=200000, seed=0):
    """Top two eigenpairs of A^T A by power iteration with deflation."""
    G = A.T @ A
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(2):
        v = rng.standard_normal(G.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = G @ v
            new = float(v @ w)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                lam = 0.0
                break
            v = w / nrm
            if abs(new - lam) <= tol * max(abs(new), 1e-300):
                lam = new
                break
            lam = new
        out.append((lam, v))
        G = G - lam * np.outer(v, v)
    return out[0][0], out[1][0], out[0][1]


def dense_gram_apply(A, z):
    return (A.T @ A) @ z
