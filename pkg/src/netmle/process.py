"""The three estimation dynamics and the run driver.

State is the n x n coefficient matrix M(t): column v holds the coefficients
of agent v's current estimator over the initial signals, so M(0) = I and
every column always sums to one (unbiasedness).  All covariances follow as
M^T Sigma0 M, which makes the simulation exact and distribution-free; drawing
actual signal realizations is a separate output layer.

Updates are synchronous: every vertex fuses the time-t columns of its closed
neighborhood (plus, in the memory variant, its own past columns) and the new
columns jointly form the time-(t+1) state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DegenerateDenominator, NonMonotoneVariance
from .graphs import Graph, averaging_matrix

KINDS = ("ml", "ml_memory", "averaging")

#: Auto thresholds: per-iteration states/covariances are kept for small runs.
_RECORD_LIMIT = 64


@dataclass(frozen=True)
class SignalModel:
    """Signal mean and initial covariance; sigma0=None means the identity."""

    mu: float = 0.0
    sigma0: np.ndarray | None = None
    _shalf: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.sigma0 is not None:
            s = np.asarray(self.sigma0, dtype=np.float64)
            linalg.check_symmetric(s)
            if np.any(s.diagonal() <= 0.0):
                raise ValueError("sigma0 diagonal must be strictly positive")
            lam = np.linalg.eigvalsh(s)
            if float(lam[0]) < -1e-10 * max(float(lam[-1]), 1.0):
                raise ValueError("sigma0 must be positive semidefinite")
            object.__setattr__(self, "sigma0", s)

    def covariance(self, n: int, dtype=np.float64) -> np.ndarray:
        if self.sigma0 is None:
            return np.eye(n, dtype=dtype)
        if self.sigma0.shape[0] != n:
            raise ValueError(
                f"sigma0 order {self.sigma0.shape[0]} does not match n={n}"
            )
        return np.asarray(self.sigma0, dtype=dtype)

    def sqrt_factor(self, n: int, dtype=np.float64) -> np.ndarray | None:
        """Symmetric square root of sigma0 (cached), or None for the identity."""
        if self.sigma0 is None:
            return None
        if self.sigma0.shape[0] != n:
            raise ValueError(
                f"sigma0 order {self.sigma0.shape[0]} does not match n={n}"
            )
        if self._shalf is None:
            object.__setattr__(self, "_shalf", linalg.sym_sqrt_psd(self.sigma0))
        return np.asarray(self._shalf, dtype=dtype)


@dataclass(frozen=True)
class EstimatorState:
    """Iteration index and coefficient matrix; columns sum to one."""

    t: int
    M: np.ndarray

    def __post_init__(self):
        colsums = np.asarray(self.M, dtype=np.float64).sum(axis=0)
        if float(np.abs(colsums - 1.0).max()) > 1e-10:
            raise ValueError("estimator columns must sum to 1 within 1e-10")
        self.M.setflags(write=False)

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class MemoryState:
    """Estimator state plus each vertex's own past coefficient columns."""

    state: EstimatorState
    histories: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        t = self.state.t
        for v, h in enumerate(self.histories):
            if len(h) != t + 1:
                raise ValueError(f"history of vertex {v} has {len(h)} != t+1 entries")

    @property
    def t(self) -> int:
        return self.state.t

    @property
    def M(self) -> np.ndarray:
        return self.state.M


def init_state(g: Graph, dtype=np.float64) -> EstimatorState:
    return EstimatorState(t=0, M=np.eye(g.n, dtype=dtype))


def init_memory_state(g: Graph, dtype=np.float64) -> MemoryState:
    s = init_state(g, dtype=dtype)
    hist = tuple((s.M[:, v].copy(),) for v in range(g.n))
    return MemoryState(state=s, histories=hist)


def _weighted(M: np.ndarray, shalf: np.ndarray | None) -> np.ndarray:
    """Columns mapped into the signal inner-product space."""
    return M if shalf is None else shalf @ M


def _combine_unit_sum(cols: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted column combination with the unit sum restored exactly.

    Fusions of nearly dependent estimators can legitimately need weights of
    magnitude 1e3 or more; the raw combination then carries round-off of
    order eps * |weights| in its sum, which would accumulate across steps.
    The residual is removed along the mean column, an in-span direction, so
    the correction is a vanishing affine adjustment.
    """
    xbar = cols.mean(axis=1)
    col = xbar + (cols - xbar[:, None]) @ weights
    ref_sum = xbar.sum()
    col -= (col.sum() - 1.0) * (xbar / ref_sum)
    return col


def _fusion_reference(
    model: SignalModel, g: Graph, centered: bool, rtol: float, dtype
) -> np.ndarray | None:
    """Optional column subtracted from the fusion reference (centered mode).

    Subtracting the globally optimal column changes the objective by a
    constant (its covariance with any unbiased estimator is fixed), so the
    minimizer is unchanged; this mirrors the limit-subtracted analysis and
    is kept as an optional conditioning aid.
    """
    if not centered:
        return None
    w, _ = global_mle_weights(g, model, rtol)
    return np.asarray(w, dtype=dtype)


def _fuse_columns(
    cols_w: np.ndarray,
    center: np.ndarray | None,
    rtol: float,
    vertex: int,
):
    """Fusion weights for one vertex; tags degeneracies with the vertex."""
    try:
        if center is None:
            return linalg.fusion_weights(cols_w, rtol=rtol)
        shifted = cols_w - center[:, None]
        w, var = linalg.fusion_weights(shifted, rtol=rtol)
        return w, var
    except DegenerateDenominator as exc:
        raise DegenerateDenominator(str(exc), vertex=vertex) from exc


def ml_step(
    g: Graph,
    s: EstimatorState,
    model: SignalModel,
    rtol: float = linalg.DEFAULT_RTOL_FLOOR,
    centered: bool = False,
) -> EstimatorState:
    """One synchronous minimum-variance update of every vertex."""
    M = s.M
    dtype = M.dtype
    shalf = model.sqrt_factor(s.n, dtype=dtype)
    W = _weighted(M, shalf)
    center = _fusion_reference(model, g, centered, rtol, dtype)
    center_w = None if center is None else _weighted(center[:, None], shalf)[:, 0]
    out = np.zeros_like(M)
    for v, S in enumerate(g.neighbor_lists()):
        w, _ = _fuse_columns(W[:, S], center_w, rtol, v)
        out[:, v] = _combine_unit_sum(M[:, S], w)
    return EstimatorState(t=s.t + 1, M=out)


def ml_step_with_memory(
    g: Graph,
    s: MemoryState,
    model: SignalModel,
    rtol: float = linalg.DEFAULT_RTOL_FLOOR,
    centered: bool = False,
) -> MemoryState:
    """Minimum-variance update where each vertex also fuses its own past.

    The fusion set of vertex v is its neighbors' current estimators plus
    v's own estimators from strictly earlier iterations; redundant members
    are harmless because the solver treats vanished deviation directions
    as ties.
    """
    M = s.M
    t = s.t
    dtype = M.dtype
    shalf = model.sqrt_factor(s.state.n, dtype=dtype)
    W = _weighted(M, shalf)
    center = _fusion_reference(model, g, centered, rtol, dtype)
    center_w = None if center is None else _weighted(center[:, None], shalf)[:, 0]
    out = np.zeros_like(M)
    for v, S in enumerate(g.neighbor_lists()):
        past = list(s.histories[v][:t])
        cols = np.column_stack([M[:, S]] + past) if past else M[:, S].copy()
        cols_w = _weighted(cols, shalf) if past else W[:, S]
        w, _ = _fuse_columns(cols_w, center_w, rtol, v)
        out[:, v] = _combine_unit_sum(cols, w)
    new_state = EstimatorState(t=t + 1, M=out)
    hist = tuple(
        s.histories[v] + (out[:, v].copy(),) for v in range(s.state.n)
    )
    return MemoryState(state=new_state, histories=hist)


def averaging_step(g: Graph, s: EstimatorState) -> EstimatorState:
    """Plain neighborhood averaging: column v becomes the mean over N(v)."""
    P = averaging_matrix(g, dtype=s.M.dtype)
    return EstimatorState(t=s.t + 1, M=s.M @ P.T)


def global_mle_weights(
    g: Graph, model: SignalModel, rtol: float = linalg.DEFAULT_RTOL_FLOOR
) -> tuple[np.ndarray, float]:
    """Minimum-variance weights over all n initial signals (the global optimum)."""
    sigma = model.covariance(g.n)
    return linalg.min_variance_weights(sigma, rtol)


def sample_realization(
    s: EstimatorState, model: SignalModel, seed: int
) -> np.ndarray:
    """Draw X(0) ~ N(mu 1, sigma0) from the seed and return every agent's value."""
    n = s.n
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    shalf = model.sqrt_factor(n)
    x0 = model.mu + (z if shalf is None else shalf @ z)
    return np.asarray(s.M, dtype=np.float64).T @ x0


@dataclass
class DiagnosticsReport:
    """Per-vertex residuals of the exact step identities.

    orthogonality[v][i]: |Cov(X_v(t+1), X_v(t+1) - X_w(t))| for the i-th
    sorted neighbor w; identity[v][i]: |Var[X_v(t+1)] - Cov(X_v(t+1), X_w(t))|;
    telescoping[v]: |Var[X_v(t+1) - X_v(t)] - (V_v(t) - V_v(t+1))|.
    """

    orthogonality: list[np.ndarray]
    identity: list[np.ndarray]
    telescoping: np.ndarray

    @property
    def max_orthogonality(self) -> float:
        return max(float(r.max()) for r in self.orthogonality)

    @property
    def max_identity(self) -> float:
        return max(float(r.max()) for r in self.identity)

    @property
    def max_telescoping(self) -> float:
        return float(self.telescoping.max())


def diagnostics_check(
    s_t: EstimatorState,
    s_t1: EstimatorState,
    g: Graph,
    model: SignalModel,
) -> DiagnosticsReport:
    """Residuals of the optimality identities between consecutive states."""
    shalf = model.sqrt_factor(s_t.n, dtype=s_t.M.dtype)
    Wo = _weighted(np.asarray(s_t.M), shalf)
    Wn = _weighted(np.asarray(s_t1.M), shalf)
    ortho, ident = [], []
    tele = np.zeros(s_t.n)
    for v, S in enumerate(g.neighbor_lists()):
        a = Wn[:, v]
        va = float(a @ a)
        # two routes to the same identity: covariance with explicit difference
        # vectors, and the variance-minus-covariance form
        diffs = a[:, None] - Wo[:, S]
        ortho.append(np.abs(np.asarray(a @ diffs, dtype=np.float64)))
        cov = np.asarray(a @ Wo[:, S], dtype=np.float64)
        ident.append(np.abs(va - cov))
        d = Wn[:, v] - Wo[:, v]
        vo = float(Wo[:, v] @ Wo[:, v])
        tele[v] = abs(float(d @ d) - (vo - va))
    return DiagnosticsReport(orthogonality=ortho, identity=ident, telescoping=tele)


@dataclass(frozen=True)
class StopCriteria:
    eps_consensus: float = 1e-12
    eps_variance_drop: float = 1e-12
    max_iters: int = 10_000

    def __post_init__(self):
        if self.eps_consensus <= 0 or self.eps_variance_drop <= 0:
            raise ValueError("stop epsilons must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Trace:
    """Per-iteration diagnostics and the run verdict.

    Row t of the per-iteration arrays describes state t; the step residual
    columns describe the step that produced state t (zeros at t=0).  The
    converged flag is set only by the epsilon test, never by the cap.
    """

    kind: str
    n: int
    variances: np.ndarray
    consensus_gaps: np.ndarray
    spreads: np.ndarray
    step_variance_max: np.ndarray
    ortho_residual_max: np.ndarray
    telescoping_residual_max: np.ndarray
    converged: bool
    iterations: int
    limit_weights: np.ndarray
    limit_variance: float
    final_coefficients: np.ndarray
    final_covariance: np.ndarray
    stop: StopCriteria
    rate_estimate: float | None = None
    states: list[np.ndarray] | None = None
    covariances: list[np.ndarray] | None = None
    memory_histories: tuple | None = field(default=None, repr=False)

    def summary_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "limit_weights": [float(x) for x in self.limit_weights],
            "limit_variance": float(self.limit_variance),
            "final_consensus_gap": float(self.consensus_gaps[-1]),
            "final_variance_spread": float(self.spreads[-1]),
            "rate_estimate": self.rate_estimate,
            "stop": {
                "eps_consensus": self.stop.eps_consensus,
                "eps_variance_drop": self.stop.eps_variance_drop,
                "max_iters": self.stop.max_iters,
            },
        }

    def write_csv(self, path) -> None:
        cols = ["t"]
        cols += [f"var_{v}" for v in range(self.n)]
        cols += [
            "consensus_gap",
            "variance_spread",
            "step_variance_max",
            "ortho_residual_max",
            "telescoping_residual_max",
        ]
        lines = [",".join(cols)]
        for t in range(len(self.consensus_gaps)):
            row = [str(t)]
            row += [_dec(x) for x in self.variances[t]]
            row += [
                _dec(self.consensus_gaps[t]),
                _dec(self.spreads[t]),
                _dec(self.step_variance_max[t]),
                _dec(self.ortho_residual_max[t]),
                _dec(self.telescoping_residual_max[t]),
            ]
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _dec(x) -> str:
    return format(float(x), ".17g")


def _consensus_gap(W: np.ndarray) -> float:
    """max_v Var[X_v(t) - mean_w X_w(t)] from inner-product-space columns."""
    dev = W - W.mean(axis=1, keepdims=True)
    return float(np.einsum("ij,ij->j", dev, dev).max())


def _variances(W: np.ndarray) -> np.ndarray:
    return np.asarray(np.einsum("ij,ij->j", W, W), dtype=np.float64)


def _step_residuals(
    Wo: np.ndarray, Wn: np.ndarray, nbrs, V_old: np.ndarray, V_new: np.ndarray
) -> tuple[float, float, float]:
    """(max orthogonality, max telescoping, max step variance) for one step."""
    ortho = 0.0
    tele = 0.0
    stepvar = 0.0
    for v, S in enumerate(nbrs):
        a = Wn[:, v]
        va = float(a @ a)
        cov = np.asarray(a @ Wo[:, S], dtype=np.float64)
        ortho = max(ortho, float(np.abs(va - cov).max()))
        d = a - Wo[:, v]
        sv = float(d @ d)
        stepvar = max(stepvar, sv)
        tele = max(tele, abs(sv - (float(V_old[v]) - float(V_new[v]))))
    return ortho, tele, stepvar


def run(
    kind: str,
    g: Graph,
    model: SignalModel,
    stop: StopCriteria | None = None,
    rtol: float = linalg.DEFAULT_RTOL_FLOOR,
    centered: bool = False,
    dtype=np.float64,
    record_states: bool | None = None,
    record_covariances: bool | None = None,
) -> Trace:
    """Iterate one dynamics until the epsilon test fires or the cap is hit.

    Convergence is detected, never assumed: the run is converged at state t
    when the consensus gap of state t is below eps_consensus AND one further
    step changes no variance by more than eps_variance_drop (that lookahead
    step is then discarded, so a one-shot graph reports its true settling
    time).  A run that exhausts max_iters is reported unconverged.

    Raises NonMonotoneVariance if, under the minimum-variance dynamics, any
    variance increases by more than 1e-9 or goes below -1e-12 (both signal a
    numerical fault).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if stop is None:
        stop = StopCriteria()
    n = g.n
    if record_states is None:
        record_states = n <= _RECORD_LIMIT
    if record_covariances is None:
        record_covariances = n <= _RECORD_LIMIT
    nbrs = g.neighbor_lists()
    shalf = model.sqrt_factor(n, dtype=dtype)

    mem = init_memory_state(g, dtype=dtype) if kind == "ml_memory" else None
    state = mem.state if mem is not None else init_state(g, dtype=dtype)

    def advance(st, mem_st):
        if kind == "ml":
            return ml_step(g, st, model, rtol=rtol, centered=centered), None
        if kind == "ml_memory":
            nxt = ml_step_with_memory(g, mem_st, model, rtol=rtol, centered=centered)
            return nxt.state, nxt
        return averaging_step(g, st), None

    W = _weighted(np.asarray(state.M), shalf)
    V = _variances(W)
    variances = [V]
    gaps = [_consensus_gap(W)]
    spreads = [float(V.max() - V.min())]
    stepvars = [0.0]
    orthos = [0.0]
    teles = [0.0]
    states = [np.asarray(state.M, dtype=np.float64).copy()] if record_states else None
    covs = (
        [np.asarray(W.T @ W, dtype=np.float64)] if record_covariances else None
    )

    ml_like = kind in ("ml", "ml_memory")
    converged = False
    t = 0
    while t < stop.max_iters:
        nxt, mem_next = advance(state, mem)
        Wn = _weighted(np.asarray(nxt.M), shalf)
        Vn = _variances(Wn)
        if float(Vn.min()) < -1e-12:
            raise NonMonotoneVariance(f"negative variance {float(Vn.min()):.3e}")
        if ml_like and float((Vn - V).max()) > 1e-9:
            raise NonMonotoneVariance(
                f"variance increased by {float((Vn - V).max()):.3e} at step {t}"
            )
        drop = float(np.abs(V - Vn).max())
        if gaps[-1] < stop.eps_consensus and drop < stop.eps_variance_drop:
            converged = True
            break
        ortho, tele, stepvar = _step_residuals(W, Wn, nbrs, V, Vn)
        t += 1
        state, W, V = nxt, Wn, Vn
        if mem_next is not None:
            mem = mem_next
        variances.append(Vn)
        gaps.append(_consensus_gap(Wn))
        spreads.append(float(Vn.max() - Vn.min()))
        stepvars.append(stepvar)
        orthos.append(ortho)
        teles.append(tele)
        if record_states:
            states.append(np.asarray(state.M, dtype=np.float64).copy())
        if record_covariances:
            covs.append(np.asarray(Wn.T @ Wn, dtype=np.float64))

    Mfin = np.asarray(state.M, dtype=np.float64)
    limit_weights = Mfin.mean(axis=1)
    sigma = model.covariance(n)
    limit_variance = float(limit_weights @ sigma @ limit_weights)
    return Trace(
        kind=kind,
        n=n,
        variances=np.vstack(variances),
        consensus_gaps=np.asarray(gaps),
        spreads=np.asarray(spreads),
        step_variance_max=np.asarray(stepvars),
        ortho_residual_max=np.asarray(orthos),
        telescoping_residual_max=np.asarray(teles),
        converged=converged,
        iterations=t,
        limit_weights=limit_weights,
        limit_variance=limit_variance,
        final_coefficients=Mfin,
        final_covariance=np.asarray(W.T @ W, dtype=np.float64),
        stop=stop,
        states=states,
        covariances=covs,
        memory_histories=mem.histories if mem is not None else None,
    )
