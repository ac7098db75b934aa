"""Independent reference computations used by several test modules."""

import mpmath
import numpy as np


def pca_oracle(X, n_dim, dps=40):
    """Standardise, build the covariance with explicit sums, diagonalise in mpmath."""
    X = np.asarray(X, dtype=float)
    n, f = X.shape
    with mpmath.workdps(dps):
        cols = []
        for j in range(f):
            col = [mpmath.mpf(v) for v in X[:, j]]
            mu = mpmath.fsum(col) / n
            sd = mpmath.sqrt(mpmath.fsum((v - mu) ** 2 for v in col) / n)
            sd = sd if sd > 0 else mpmath.mpf(1)
            cols.append([(v - mu) / sd for v in col])
        cov = mpmath.matrix(f, f)
        for a in range(f):
            for b in range(f):
                cov[a, b] = mpmath.fsum(cols[a][i] * cols[b][i] for i in range(n)) / (n - 1)
        evals, evecs = mpmath.eigsy(cov)
        order = sorted(range(f), key=lambda i: -evals[i])[:n_dim]
        values = np.array([float(evals[i]) for i in order])
        basis = np.array([[float(evecs[r, i]) for i in order] for r in range(f)])
    return values, basis


def subspace_cosines(A, B):
    """Cosines of the principal angles between the column spaces of A and B."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), 0, 1)


def brute_neighbors(train, query, c):
    """Slow scan: sort by (distance, index)."""
    d = [(float(np.sum((row - query) ** 2)), i) for i, row in enumerate(train)]
    return sorted(i for _, i in sorted(d)[:c])
