"""Independent oracles used to freeze expected values.

These deliberately avoid the library's own code paths: the minimizer is a
dense grid with local refinement, and the eigenvalue cross-check goes
through the characteristic polynomial via the Faddeev-LeVerrier recurrence.
"""

from __future__ import annotations

import numpy as np


def brute_force_min_variance(C: np.ndarray, span: float = 3.0, coarse: int = 601):
    """Minimize a^T C a over the sum-to-one hyperplane by grid + refinement.

    Supports k in {1, 2, 3}; returns (weights, variance).
    """
    C = np.asarray(C, dtype=np.float64)
    k = C.shape[0]
    if k == 1:
        return np.array([1.0]), float(C[0, 0])

    def value(free):
        a = np.empty(k)
        a[: k - 1] = free
        a[k - 1] = 1.0 - free.sum()
        return float(a @ C @ a), a

    best_val = np.inf
    best = None
    grid = np.linspace(-span, 1.0 + span, coarse)
    if k == 2:
        for a0 in grid:
            val, a = value(np.array([a0]))
            if val < best_val:
                best_val, best = val, a
    else:
        for a0 in grid:
            a1 = grid
            a2 = 1.0 - a0 - a1
            A = np.stack([np.full_like(a1, a0), a1, a2], axis=1)
            vals = np.einsum("ki,ij,kj->k", A, C, A)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val, best = float(vals[i]), A[i].copy()

    width = float(grid[1] - grid[0]) * 2.0
    center = best[: k - 1].copy()
    for _ in range(60):
        axes = [np.linspace(c - width, c + width, 25) for c in center]
        if k == 2:
            for a0 in axes[0]:
                val, a = value(np.array([a0]))
                if val < best_val:
                    best_val, best = val, a
        else:
            for a0 in axes[0]:
                a1 = axes[1]
                a2 = 1.0 - a0 - a1
                A = np.stack([np.full_like(a1, a0), a1, a2], axis=1)
                vals = np.einsum("ki,ij,kj->k", A, C, A)
                i = int(np.argmin(vals))
                if vals[i] < best_val:
                    best_val, best = float(vals[i]), A[i].copy()
        center = best[: k - 1].copy()
        width *= 0.5
    return best, best_val


def random_unit_sum_vectors(count: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random weight vectors summing to one, with entries kept O(1).

    Draws whose sum is close to zero are resampled: normalizing them would
    produce huge entries that amplify representation noise of the covariance
    far past the tolerances under test.
    """
    out = rng.standard_normal((count, k))
    if k == 1:
        return np.ones((count, 1))
    for _ in range(200):
        sums = out.sum(axis=1)
        small = np.abs(sums) < 0.3
        if not small.any():
            break
        out[small] = rng.standard_normal((int(small.sum()), k))
    return out / out.sum(axis=1, keepdims=True)


def char_poly_coefficients(A: np.ndarray) -> np.ndarray:
    """Coefficients of det(lambda I - A) by the Faddeev-LeVerrier recurrence."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    Mk = np.zeros_like(A)
    for k in range(1, n + 1):
        Mk = A @ Mk + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(A @ Mk) / k
    return coeffs


def char_poly_eigenvalues(A: np.ndarray) -> np.ndarray:
    """Eigenvalues as roots of the characteristic polynomial (no eig calls)."""
    return np.roots(char_poly_coefficients(A))


def random_estimator_covariance(k: int, rng: np.random.Generator, deficient: bool = False):
    """Covariance of k unit-sum linear estimators over a random PD base.

    This is the class the fusion routines are specified for: rank deficiency
    comes from duplicated or linearly combined estimators, so the null space
    stays orthogonal to the unbiasedness direction.
    """
    base_dim = k + 3
    B = rng.standard_normal((base_dim, base_dim))
    sigma = (B @ B.T) / base_dim + np.eye(base_dim)
    A = rng.standard_normal((base_dim, k))
    # resample columns whose sum is small: normalizing those would blow the
    # entries up and manufacture artificially ill-conditioned covariances
    for _ in range(200):
        sums = A.sum(axis=0)
        small = np.abs(sums) < 0.3
        if not small.any():
            break
        A[:, small] = rng.standard_normal((base_dim, int(small.sum())))
    A /= A.sum(axis=0, keepdims=True)
    if deficient and k >= 2:
        dup = int(rng.integers(1, k))
        lam = float(rng.uniform(0.2, 0.8))
        A[:, dup] = lam * A[:, 0] + (1.0 - lam) * A[:, (dup + 1) % k]
    C = A.T @ sigma @ A
    return 0.5 * (C + C.T), A, sigma
