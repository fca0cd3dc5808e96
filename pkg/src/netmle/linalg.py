"""Dense symmetric-PSD linear algebra at desk scale.

Everything here is a pure function of its inputs.  The covariance matrices
this library fuses approach rank one as agents reach consensus, so the
routines use relative eigenvalue cutoffs throughout, plus an absolute guard
in the fusion solver for the endgame where the deviation structure sinks
below what the working precision can resolve.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateDenominator, NotPSD, NotStochastic, NotSymmetric

#: Relative eigenvalue floor; eigenvalues below rtol * lambda_max are zero.
DEFAULT_RTOL_FLOOR = 1e-12


def effective_rtol(k: int, floor: float = DEFAULT_RTOL_FLOOR) -> float:
    """Relative cutoff for a k x k problem: max of machine scale and the floor."""
    return max(k * float(np.finfo(np.float64).eps), floor)


def check_symmetric(C: np.ndarray, rtol: float = 1e-12) -> None:
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {C.shape}")
    scale = float(np.abs(C).max()) if C.size else 0.0
    gap = float(np.abs(C - C.T).max())
    if gap > rtol * max(scale, 1.0):
        raise NotSymmetric(f"asymmetry {gap:.3e} exceeds {rtol:.1e} relative")


def pinv_psd(C: np.ndarray, rtol: float = DEFAULT_RTOL_FLOOR) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix.

    Computed by symmetric eigendecomposition; eigenvalues below
    effective_rtol(k, rtol) * lambda_max are treated as exactly zero.
    Raises NotSymmetric / NotPSD.
    """
    C = np.asarray(C, dtype=np.float64)
    check_symmetric(C)
    lam, V = np.linalg.eigh(C)
    lam_max = float(lam[-1])
    lam_min = float(lam[0])
    cut = effective_rtol(C.shape[0], rtol)
    scale = max(lam_max, float(np.abs(C).max()) if C.size else 0.0, 1e-300)
    if lam_min < -cut * scale:
        raise NotPSD(f"eigenvalue {lam_min:.3e} below -{cut:.1e} * {scale:.3e}")
    keep = lam > cut * lam_max
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    return (V * inv) @ V.T


def min_variance_weights(
    C: np.ndarray, rtol: float = DEFAULT_RTOL_FLOOR
) -> tuple[np.ndarray, float]:
    """Minimum-variance unit-sum weights over estimators with covariance C.

    Returns (alpha, variance) with alpha_w = sum_u P_wu / sum_wu P_wu for
    P the pseudo-inverse of C, and variance = 1 / sum_wu P_wu.  Among all
    optimal weight vectors this is the least-sum-of-squares representative.
    """
    P = pinv_psd(C, rtol)
    denom = float(P.sum())
    if abs(denom) < rtol:
        raise DegenerateDenominator(
            f"pseudo-inverse mass {denom:.3e} below rtol {rtol:.1e}"
        )
    return P.sum(axis=1) / denom, 1.0 / denom


def min_norm_affine_point(
    vectors, gram: np.ndarray, rtol: float = DEFAULT_RTOL_FLOOR
) -> np.ndarray:
    """Coefficients of the minimum-norm point of the affine span of `vectors`.

    `gram[i][j]` must equal the inner product of vectors i and j, and every
    vector must have unit inner product with the affine normalizer.  Solved
    through the bordered stationarity system by a minimum-norm least-squares
    solve, an independent route from min_variance_weights; the two agree on
    valid inputs, including rank-deficient grams.
    """
    G = np.asarray(gram, dtype=np.float64)
    check_symmetric(G)
    k = G.shape[0]
    if vectors is not None and len(vectors) != k:
        raise ValueError("gram order does not match the number of vectors")
    if k == 0:
        raise ValueError("need at least one vector")
    # stationarity: 2 G c = mu * ones, ones.c = 1; the multiplier is unique,
    # so the minimum-norm solution of the bordered system minimizes |c|.
    B = np.zeros((k + 1, k + 1))
    B[:k, :k] = 2.0 * G
    B[:k, k] = -1.0
    B[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol, *_ = np.linalg.lstsq(B, rhs, rcond=rtol)
    # one iterative-refinement pass sharpens mildly ill-conditioned solves
    correction, *_ = np.linalg.lstsq(B, rhs - B @ sol, rcond=rtol)
    sol = sol + correction
    c = sol[:k]
    resid = B @ sol - rhs
    scale = max(float(np.abs(G).max()), 1.0)
    if float(np.abs(resid).max()) > 1e-8 * scale:
        raise DegenerateDenominator(
            f"affine stationarity residual {float(np.abs(resid).max()):.3e}"
        )
    return c


def second_eigenvalue_magnitude(P: np.ndarray, rtol: float = 1e-12) -> float:
    """Second-largest eigenvalue magnitude of a row-stochastic matrix."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotStochastic(f"expected a square matrix, got shape {P.shape}")
    rows = P.sum(axis=1)
    if float(np.abs(rows - 1.0).max()) > rtol:
        raise NotStochastic(
            f"row sums deviate from 1 by {float(np.abs(rows - 1.0).max()):.3e}"
        )
    if P.shape[0] == 1:
        return 0.0
    mags = np.sort(np.abs(np.linalg.eigvals(P)))
    return float(mags[-2])


def sym_sqrt_psd(C: np.ndarray, rtol: float = DEFAULT_RTOL_FLOOR) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition (for sampling)."""
    C = np.asarray(C, dtype=np.float64)
    check_symmetric(C)
    lam, V = np.linalg.eigh(C)
    lam_max = float(lam[-1]) if lam.size else 0.0
    cut = effective_rtol(C.shape[0], rtol)
    if lam.size and float(lam[0]) < -cut * max(lam_max, 1.0):
        raise NotPSD(f"most negative eigenvalue {float(lam[0]):.3e}")
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


# ---------------------------------------------------------------------------
# fusion solver used by the process dynamics


def helmert_basis(k: int, dtype=np.float64) -> np.ndarray:
    """Orthonormal basis (columns) of the zero-sum subspace of R^k."""
    N = np.zeros((k, max(k - 1, 0)), dtype=dtype)
    for j in range(1, k):
        N[:j, j - 1] = 1.0
        N[j, j - 1] = -j
        N[:, j - 1] /= np.sqrt(np.asarray(j * (j + 1), dtype=dtype))
    return N


def _eigh_2x2(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form symmetric eigendecomposition for order <= 2, any float dtype.

    Uses the single-Jacobi-rotation form, which stays accurate when the
    off-diagonal entry is tiny relative to the diagonal gap.
    """
    dt = G.dtype
    if G.shape[0] == 1:
        return G.diagonal().copy(), np.eye(1, dtype=dt)
    a, b, c = G[0, 0], G[0, 1], G[1, 1]
    if b == 0:
        lam = np.array([a, c], dtype=dt)
        V = np.eye(2, dtype=dt)
        order = np.argsort(lam)
        return lam[order], V[:, order]
    tau = (c - a) / (2 * b)
    if tau >= 0:
        t = 1 / (tau + np.sqrt(1 + tau * tau))
    else:
        t = -1 / (-tau + np.sqrt(1 + tau * tau))
    cos = 1 / np.sqrt(1 + t * t)
    sin = t * cos
    lam1 = a - t * b
    lam2 = c + t * b
    lam = np.array([lam1, lam2], dtype=dt)
    V = np.array([[cos, sin], [-sin, cos]], dtype=dt)
    order = np.argsort(lam)
    return lam[order], V[:, order]


def _jacobi_eigh(G: np.ndarray, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for dtypes LAPACK does not cover."""
    k = G.shape[0]
    A = G.copy()
    V = np.eye(k, dtype=G.dtype)
    eps = float(np.finfo(G.dtype).eps)
    for _ in range(max_sweeps):
        scale = max(float(np.abs(A.diagonal()).max()), 1e-300)
        off = max(float(np.abs(A[p, p + 1 :]).max()) for p in range(k - 1))
        if off <= eps * scale:
            break
        thresh = G.dtype.type(eps * scale * 1e-2)
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if abs(apq) <= thresh:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * apq)
                if theta != 0:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1))
                else:
                    t = G.dtype.type(1.0)
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    lam = A.diagonal().copy()
    order = np.argsort(lam)
    return lam[order], V[:, order]


def sym_eigh(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition honoring the matrix dtype."""
    if G.shape[0] <= 2:
        return _eigh_2x2(G)
    if G.dtype == np.float64:
        return np.linalg.eigh(G)
    return _jacobi_eigh(G)


def fusion_weights(
    cols: np.ndarray,
    rtol: float = DEFAULT_RTOL_FLOOR,
    guard: float | None = None,
) -> tuple[np.ndarray, float]:
    """Minimum-variance unit-sum weights over estimator coefficient columns.

    `cols` holds the columns in the signal inner-product space (i.e. already
    multiplied by the square root of the initial covariance when it is not
    the identity).  The combination x = xbar + D c, with xbar the column mean
    and D the deviations, carries the mean exactly for any unit-sum c, so the
    quadratic is solved entirely at deviation scale.  This is what keeps the
    fusion stable as the columns coalesce: errors enter at the scale of the
    deviations themselves instead of being squared away against the O(1)
    common component.

    Two cutoffs control the reduced eigensolve: a relative one (`rtol`,
    matching the pseudo-inverse convention) and an absolute guard that drops
    deviation directions once they sink to the precision fog of the stored
    state; with nothing resolvable left the weights fall back to the uniform
    tie-breaking convention.  Default guard: sqrt(machine eps)/2 in the
    column dtype.

    Returns (weights, variance).
    """
    cols = np.asarray(cols)
    n, k = cols.shape
    dt = cols.dtype
    if k == 1:
        return np.ones(1, dtype=dt), float(cols[:, 0] @ cols[:, 0])
    if guard is None:
        guard = float(np.sqrt(np.finfo(dt).eps)) / 2.0
    c0 = np.full(k, 1, dtype=dt) / k
    xbar = cols @ c0
    D = cols - xbar[:, None]
    N = helmert_basis(k, dt)
    A = D @ N
    G = A.T @ A
    rhs = -(A.T @ xbar)
    lam, U = sym_eigh(G)
    lam_max = float(lam[-1]) if lam.size else 0.0
    xscale = float(xbar @ xbar)
    cut = max(rtol * lam_max, guard * guard * xscale)
    keep = np.asarray(lam) > cut
    base_var = xbar @ xbar
    if not keep.any():
        # deviations indistinguishable from ties: least-norm convention
        return c0.copy(), float(base_var)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(keep, (U.T @ rhs) / np.where(keep, lam, dt.type(1)), dt.type(0))
    t = U @ coef
    c = c0 + N @ t
    if not np.all(np.isfinite(np.asarray(c, dtype=np.float64))):
        raise DegenerateDenominator("non-finite fusion weights")
    var = float(base_var - 2 * float(t @ rhs) + float(t @ (G @ t)))
    return c, var
