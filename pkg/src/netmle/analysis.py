"""Closed-form oracles and derived metrics.

The four-vertex path admits a complete closed-form treatment: after two
steps the limit-subtracted coefficient matrix, written in a fixed orthonormal
basis, is described by four scalars per iteration, and those scalars obey a
rational recursion whose ratio limit is xi = 2 - sqrt(3).  The recursion is
seeded here by actually running two exact steps and projecting, which doubles
as an integration test of the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import process
from .errors import FitFailed, InsufficientData, RecursionDiverged, Undetermined
from .graphs import Graph, path_graph
from .process import SignalModel, StopCriteria

XI = 2.0 - math.sqrt(3.0)

_INVARIANT_TOL = 1e-8


def interval4_basis(dtype=np.float64) -> np.ndarray:
    """Columns: the constant direction, two reflection-antisymmetric
    directions, and the symmetric contrast that carries the limit."""
    r2 = np.sqrt(np.asarray(2, dtype=dtype))
    return np.array(
        [
            [0.5, -1 / r2, 0.0, -0.5],
            [0.5, 0.0, -1 / r2, 0.5],
            [0.5, 0.0, 1 / r2, 0.5],
            [0.5, 1 / r2, 0.0, -0.5],
        ],
        dtype=dtype,
    )


def interval4_coordinates(M: np.ndarray, t: int) -> tuple[float, float, float, float]:
    """Project a 4-path coefficient matrix onto the basis and read (x, y, w, z).

    The two antisymmetric rows swap roles with the parity of t and their
    signs alternate; the canonical representatives returned here are the
    nonnegative magnitudes.  y and w live in the symmetric contrast row and
    need no convention.
    """
    M = np.asarray(M)
    B = interval4_basis(M.dtype)
    P = B.T @ (M - np.asarray(0.25, dtype=M.dtype))
    y = float(P[3, 0])
    w = float(P[3, 1])
    if t % 2 == 0:
        x = abs(float(P[1, 0]))
        z = abs(float(P[2, 1]))
    else:
        x = abs(float(P[2, 0]))
        z = abs(float(P[1, 2]))
    return x, y, w, z


@dataclass
class IntervalRecursion:
    """Coordinate sequences for t = 2..t_max and the limit constant."""

    t_max: int
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    z: np.ndarray
    xi: float
    max_invariant_residual: float

    def at(self, t: int) -> tuple[float, float, float, float]:
        if not 2 <= t <= self.t_max:
            raise IndexError(f"t must be in [2, {self.t_max}]")
        i = t - 2
        return (
            float(self.x[i]),
            float(self.y[i]),
            float(self.w[i]),
            float(self.z[i]),
        )

    def z_ratio(self, t: int) -> float:
        """z_{t+1} / z_t, the per-step coordinate contraction."""
        if not 2 <= t < self.t_max:
            raise IndexError(f"t must be in [2, {self.t_max - 1}]")
        return float(self.z[t - 1]) / float(self.z[t - 2])


def interval4_recursion(t_max: int) -> IntervalRecursion:
    """Iterate the closed-form coordinate recursion for the 4-path.

    Seeds (x2, y2, w2, z2) come from two exact minimum-variance steps on the
    4-path with identity initial covariance, projected onto the basis; the
    recursion then advances on its own.  Every step verifies the coordinate
    identities (the half-ratio law, the shifted product relation, the ratio
    quadratic, and the b-variance identity) and raises RecursionDiverged if
    any residual exceeds 1e-8.
    """
    if t_max < 3:
        raise ValueError("t_max must be >= 3")
    g = path_graph(4)
    model = SignalModel()
    s = process.init_state(g)
    s = process.ml_step(g, s, model)
    s = process.ml_step(g, s, model)
    x2, y2, w2, z2 = interval4_coordinates(s.M, 2)

    # x_t = z_{t-1} and y_t = w_{t-1}, so the projection also seeds t=1.
    z = {1: x2, 2: z2}
    w = {1: y2, 2: w2}
    for t in range(2, t_max):
        denom = z[t - 1] ** 2 + (w[t - 1] - w[t]) ** 2
        w[t + 1] = z[t - 1] ** 2 / denom * w[t]
        z[t + 1] = z[t - 1] * z[t] ** 2 / denom

    worst = 0.0
    for t in range(2, t_max + 1):
        worst = max(worst, abs(w[t] - 0.5 * z[t] / z[t - 1]))
        worst = max(worst, abs(w[t - 1] * w[t] - (w[t] ** 2 + z[t] ** 2)))
        worst = max(worst, abs(w[t] ** 2 + z[t] ** 2 + 0.25 - 2 * w[t]))
        if t < t_max:
            worst = max(
                worst,
                abs(z[t] / z[t + 1] - (2.0 + math.sqrt(3.0 - 4.0 * z[t] ** 2))),
            )
    if worst > _INVARIANT_TOL:
        raise RecursionDiverged(f"invariant residual {worst:.3e} exceeds 1e-8")

    ts = range(2, t_max + 1)
    return IntervalRecursion(
        t_max=t_max,
        x=np.array([z[t - 1] for t in ts]),
        y=np.array([w[t - 1] for t in ts]),
        w=np.array([w[t] for t in ts]),
        z=np.array([z[t] for t in ts]),
        xi=XI,
        max_invariant_residual=worst,
    )


def interval4_limit() -> tuple[np.ndarray, float]:
    """Limit weights and variance of the greedy dynamics on the 4-path."""
    weights = 0.25 * np.array([1 - XI, 1 + XI, 1 + XI, 1 - XI])
    return weights, XI


@dataclass(frozen=True)
class StarReport:
    """Closed forms for the star on n vertices (vertex 0 the center)."""

    n: int
    averaging_center_weight: float
    averaging_leaf_weight: float
    averaging_variance: float
    averaging_variance_asymptote: float
    ml_limit_variance: float
    ml_convergence_time: int


def star_closed_forms(n: int) -> StarReport:
    if n < 2:
        raise ValueError("star formulas need n >= 2")
    total = 3 * n - 2
    return StarReport(
        n=n,
        averaging_center_weight=n / total,
        averaging_leaf_weight=2 / total,
        averaging_variance=(n * n + 4 * n - 4) / total**2,
        averaging_variance_asymptote=1.0 / 9.0,
        ml_limit_variance=1.0 / n,
        # the center finds the optimum in one step, everyone copies it in the
        # next; the two-vertex star is a single edge and settles in one
        ml_convergence_time=2 if n >= 3 else 1,
    )


def variance_gap_factor(trace: process.Trace) -> float:
    """Per-step contraction factor of the mean variance gap.

    Least-squares slope of log(Vbar(t) - rho_hat) over the final third of
    iterations; rho_hat is the final common variance, tail-corrected by one
    Aitken extrapolation step so the last recorded points are not biased by
    the stopping offset.  Returns 0 when the run settles before any gap is
    measurable.
    """
    if not trace.converged:
        raise InsufficientData("run did not converge")
    vbar = trace.variances.mean(axis=1)
    T = len(vbar) - 1
    rho = float(vbar[-1])
    if T >= 2:
        # one Aitken step removes the stopping offset exactly for geometric decay
        d1 = float(vbar[T] - vbar[T - 1])
        d2 = float(vbar[T] - 2 * vbar[T - 1] + vbar[T - 2])
        if d2 != 0.0 and abs(d1 * d1 / d2) <= 10.0 * abs(d1):
            rho = rho - d1 * d1 / d2
    gaps = np.abs(vbar - rho)
    floor = 1e-14 * max(1.0, float(vbar[0]))
    usable_all = [t for t in range(1, T + 1) if gaps[t] > floor]
    if not usable_all:
        return 0.0
    if T < 10:
        raise InsufficientData(f"only {T} iterations recorded")
    lo = max(1, T - max(T // 3, 2))
    pts = [t for t in usable_all if t >= lo]
    if len(pts) < 3:
        pts = usable_all[-10:]
    if len(pts) < 3:
        raise InsufficientData("too few usable variance gaps to fit")
    tt = np.array(pts, dtype=np.float64)
    yy = np.log(gaps[pts])
    slope = float(np.polyfit(tt, yy, 1)[0])
    return float(np.exp(slope))


def estimate_rate(trace: process.Trace) -> float:
    """Per-step coordinate-level contraction factor of a converged run.

    Convention: coordinate gaps contract at the square root of the variance
    gap factor.  That square law is exact for the minimum-variance dynamics
    (step differences are uncorrelated with the new estimator) and holds for
    averaging on reflection-symmetric graphs; the variance-level factor is
    available separately as variance_gap_factor.
    """
    return float(math.sqrt(variance_gap_factor(trace)))


def price_of_anarchy(
    g: Graph, model: SignalModel, stop: StopCriteria | None = None
) -> float:
    """Converged greedy limit variance over the global optimum's variance."""
    trace = process.run("ml", g, model, stop=stop)
    if not trace.converged:
        raise Undetermined(f"ml run hit the cap of {trace.stop.max_iters}")
    _, gvar = process.global_mle_weights(g, model)
    return float(trace.limit_variance / gvar)


@dataclass
class ProfileFit:
    """Least-squares bell-curve fit of a limit-weight profile.

    Model: weights[k] ~ amplitude * exp(-(k - n + 1/2)^2 / nu) over 2n
    vertices, center fixed midway; amplitude has a closed form per nu and
    nu is found by golden-section search.
    """

    weights: np.ndarray
    amplitude: float
    nu: float
    residual: float


def _profile_residual(A: np.ndarray, offsets2: np.ndarray, nu: float):
    phi = np.exp(-offsets2 / nu)
    denom = float(phi @ phi)
    c = float(A @ phi) / denom
    r = A - c * phi
    return float(r @ r), c


def gaussian_profile_fit(weights) -> ProfileFit:
    """Fit the fixed-center bell model to a weight profile on 2n vertices."""
    A = np.asarray(weights, dtype=np.float64)
    if A.ndim != 1 or len(A) < 4 or len(A) % 2 != 0:
        raise ValueError("need a flat, even-length profile of at least 4 weights")
    n = len(A) // 2
    ks = np.arange(len(A), dtype=np.float64)
    offsets2 = (ks - n + 0.5) ** 2

    lo, hi = 1e-3, 100.0 * n * n
    for _ in range(60):
        grid = np.geomspace(lo, hi, 121)
        vals = np.array([_profile_residual(A, offsets2, nu)[0] for nu in grid])
        i = int(np.argmin(vals))
        if 0 < i < len(grid) - 1 and vals[i] < vals[i - 1] and vals[i] < vals[i + 1]:
            a, b = grid[i - 1], grid[i + 1]
            break
        if i == 0:
            lo /= 10.0
        else:
            # flat or right-boundary minimum: widen the bracket
            hi *= 10.0
    else:
        raise FitFailed("no strict interior width minimum; bracket exhausted")

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc = _profile_residual(A, offsets2, c)[0]
    fd = _profile_residual(A, offsets2, d)[0]
    for _ in range(200):
        if b - a <= 1e-14 * max(1.0, b):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _profile_residual(A, offsets2, c)[0]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _profile_residual(A, offsets2, d)[0]
    nu = (a + b) / 2.0
    residual, amplitude = _profile_residual(A, offsets2, nu)
    return ProfileFit(weights=A, amplitude=amplitude, nu=float(nu), residual=residual)
