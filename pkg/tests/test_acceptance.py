"""Acceptance suite: one test per criterion, at the stated tolerances.

The terminal summary (see conftest) prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from netmle.analysis import (
    XI,
    estimate_rate,
    gaussian_profile_fit,
    interval4_coordinates,
    interval4_recursion,
    price_of_anarchy,
    star_closed_forms,
)
from netmle.errors import InsufficientData
from netmle.graphs import (
    averaging_matrix,
    complete_graph,
    cycle_graph,
    path_graph,
    random_connected_graph,
    star_graph,
)
from netmle.linalg import (
    min_norm_affine_point,
    min_variance_weights,
    pinv_psd,
    second_eigenvalue_magnitude,
)
from netmle.process import (
    SignalModel,
    StopCriteria,
    global_mle_weights,
    init_state,
    ml_step,
    run,
)
from oracles import random_estimator_covariance, random_unit_sum_vectors

IDENT = SignalModel()

CRITERIA = {
    "test_criterion_01_interval4_ml_limit": "1. 4-path greedy limit: variance 2-sqrt(3) within 1e-9, weights within 1e-7, under 1s",
    "test_criterion_02_recursion_oracle_equivalence": "2. simulator projections match the coordinate recursion within 1e-10 (t<=30); z-ratio -> 2-sqrt(3) within 1e-6 by t=40",
    "test_criterion_03_interval4_baselines": "3. 4-path baselines: averaging weights/variance within 1e-12, second eigenvalue within 1e-10, global optimum variance exactly 0.25",
    "test_criterion_04_star_behavior": "4. stars n in {4,10,100}: center uniform at t=1, all variances 1/n from t=2 (1e-12), averaging variance matches formula (1e-12)",
    "test_criterion_05_transitive_families": "5. cycles 3..12 and complete 2..8: converged weights uniform within 1e-8, price of anarchy 1 within 1e-8",
    "test_criterion_06_lemma_suite_random_graphs": "6. 50 random graphs, 20 steps: monotonicity 1e-10, orthogonality/telescoping 1e-9, column sums 1e-10, equivariance 1e-10",
    "test_criterion_07_memory_variant": "7. memory dynamics converge to the global optimum weights within 1e-8; iterations vs |V| recorded",
    "test_criterion_08_high_degree_star": "8. star variances: greedy 1/n -> 0 over {10,100,1000}, averaging stays above 0.11 at n=1000; closed forms plus simulated instances",
    "test_criterion_09_conjecture_probes": "9. even paths 2n in {8,12,16,20}: runs converge; bell-fit residuals and price-of-anarchy trends reported",
    "test_criterion_10_linalg_properties": "10. pseudo-inverse axioms and optimality on 200 random covariances; affine route agrees within 1e-10",
}


def test_criterion_01_interval4_ml_limit():
    start = time.perf_counter()
    trace = run("ml", path_graph(4), IDENT, StopCriteria(1e-15, 1e-15, 500))
    elapsed = time.perf_counter() - start
    assert trace.converged
    assert abs(trace.limit_variance - (2 - math.sqrt(3))) < 1e-9
    expected = 0.25 * np.array([1 - XI, 1 + XI, 1 + XI, 1 - XI])
    assert np.abs(trace.limit_weights - expected).max() < 1e-7
    assert np.abs(trace.limit_weights - [0.1830127, 0.3169873, 0.3169873, 0.1830127]).max() < 1e-7
    assert elapsed < 1.0


def test_criterion_02_recursion_oracle_equivalence():
    rec = interval4_recursion(45)
    trace = run(
        "ml",
        path_graph(4),
        IDENT,
        StopCriteria(1e-300, 1e-300, 30),
        dtype=np.longdouble,
        record_states=True,
    )
    worst = 0.0
    for t in range(2, 31):
        x, y, w, z = interval4_coordinates(trace.states[t], t)
        rx, ry, rw, rz = rec.at(t)
        worst = max(worst, abs(x - rx), abs(y - ry), abs(w - rw), abs(z - rz))
    assert worst < 1e-10
    assert abs(rec.z_ratio(40) - (2 - math.sqrt(3))) < 1e-6


def test_criterion_03_interval4_baselines():
    trace = run("averaging", path_graph(4), IDENT, StopCriteria(1e-15, 1e-15, 10_000))
    assert trace.converged
    assert np.abs(trace.limit_weights - [0.2, 0.3, 0.3, 0.2]).max() < 1e-12
    assert abs(trace.limit_variance - 0.26) < 1e-12
    lam2 = second_eigenvalue_magnitude(averaging_matrix(path_graph(4)))
    assert abs(lam2 - (0.25 + math.sqrt(33) / 12)) < 1e-10
    _, gvar = global_mle_weights(path_graph(4), IDENT)
    assert gvar == 0.25


@pytest.mark.parametrize("n", [4, 10, 100])
def test_criterion_04_star_behavior(n):
    g = star_graph(n)
    s1 = ml_step(g, init_state(g), IDENT)
    assert np.abs(s1.M[:, 0] - 1.0 / n).max() < 1e-12
    trace = run("ml", g, IDENT, StopCriteria(1e-14, 1e-14, 100))
    assert trace.converged
    assert np.abs(trace.variances[2:] - 1.0 / n).max() < 1e-12
    avg = run("averaging", g, IDENT, StopCriteria(1e-15, 1e-15, 10_000))
    assert avg.converged
    formula = (n * n + 4 * n - 4) / (3 * n - 2) ** 2
    assert abs(avg.limit_variance - formula) < 1e-12


def test_criterion_05_transitive_families():
    for n in range(3, 13):
        g = cycle_graph(n)
        trace = run(
            "ml", g, IDENT, StopCriteria(1e-18, 1e-18, 10_000), dtype=np.longdouble
        )
        assert trace.converged, f"cycle {n} did not converge"
        assert np.abs(trace.limit_weights - 1.0 / n).max() < 1e-8, f"cycle {n}"
        assert abs(price_of_anarchy(g, IDENT) - 1.0) < 1e-8, f"cycle {n}"
    for n in range(2, 9):
        g = complete_graph(n)
        trace = run("ml", g, IDENT, StopCriteria())
        assert trace.converged
        assert np.abs(trace.limit_weights - 1.0 / n).max() < 1e-8, f"complete {n}"
        assert abs(price_of_anarchy(g, IDENT) - 1.0) < 1e-8, f"complete {n}"


def test_criterion_06_lemma_suite_random_graphs():
    rng = np.random.default_rng(20240817)
    checked = 0
    for trial in range(50):
        n = int(rng.integers(2, 13))
        p = float(rng.uniform(0.2, 0.95))
        g = random_connected_graph(n, p, seed=int(rng.integers(0, 10_000)))
        trace = run("ml", g, IDENT, StopCriteria(1e-300, 1e-300, 20))
        V = trace.variances
        assert (V[1:] - V[:-1]).max() <= 1e-10  # own variance never rises
        nbrs = g.neighbor_lists()
        for t in range(V.shape[0] - 1):
            for v, S in enumerate(nbrs):
                assert V[t + 1, v] <= V[t, np.asarray(S)].min() + 1e-10
        assert trace.ortho_residual_max.max() < 1e-9
        assert trace.telescoping_residual_max.max() < 1e-9
        for M in trace.states:
            assert np.abs(M.sum(axis=0) - 1.0).max() <= 1e-10
        checked += 1
    assert checked == 50
    for g in (path_graph(5), star_graph(6), cycle_graph(7), complete_graph(5)):
        trace = run("ml", g, IDENT, StopCriteria(1e-300, 1e-300, 8))
        for perm in g.automorphism_generators:
            f = list(perm)
            for M in trace.states:
                assert np.abs(M - M[np.ix_(f, f)]).max() <= 1e-10


def test_criterion_07_memory_variant():
    probes = []
    cases = [path_graph(4)]
    rng = np.random.default_rng(777)
    for _ in range(20):
        n = int(rng.integers(2, 11))
        cases.append(random_connected_graph(n, float(rng.uniform(0.25, 0.9)), seed=int(rng.integers(0, 10_000))))
    for g in cases:
        trace = run("ml_memory", g, IDENT, StopCriteria(1e-13, 1e-13, 500))
        assert trace.converged, f"memory run on n={g.n} did not converge"
        gw, _ = global_mle_weights(g, IDENT)
        assert np.abs(trace.limit_weights - gw).max() < 1e-8
        probes.append((g.n, trace.iterations))
    # conjecture probe, reported not asserted: settling time vs vertex count
    print("\nmemory iterations vs |V|:", sorted(probes))


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_criterion_08_high_degree_star(n):
    rep = star_closed_forms(n)
    assert rep.ml_limit_variance == 1.0 / n
    if n == 1000:
        assert rep.averaging_variance > 0.11
    # simulated instances: greedy hits 1/n from t=2 on; averaging stays high
    trace = run("ml", star_graph(n), IDENT, StopCriteria(1e-14, 1e-14, 50))
    assert trace.converged
    assert np.abs(trace.variances[2:] - 1.0 / n).max() < 1e-12
    if n == 1000:
        avg = run("averaging", star_graph(n), IDENT, StopCriteria(1e-8, 1e-8, 200))
        assert avg.converged
        assert avg.limit_variance > 0.11
        assert abs(avg.limit_variance - rep.averaging_variance) < 1e-6


def test_criterion_09_conjecture_probes():
    lines = []
    last_poa = 0.0
    for n2 in (8, 12, 16, 20):
        trace = run("ml", path_graph(n2), IDENT, StopCriteria(1e-13, 1e-13, 10_000))
        assert trace.converged, f"path {n2} did not converge"
        fit = gaussian_profile_fit(trace.limit_weights)
        _, gvar = global_mle_weights(path_graph(n2), IDENT)
        poa = trace.limit_variance / gvar
        try:
            rate = estimate_rate(trace)
        except InsufficientData:
            rate = float("nan")
        lines.append(
            f"2n={n2}: bell residual={fit.residual:.3e} nu={fit.nu:.3f} "
            f"poa={poa:.4f} rate={rate:.4f} iters={trace.iterations}"
        )
        assert poa >= last_poa - 1e-9  # trend is recorded, not pinned to a law
        last_poa = poa
    print("\nconjecture probes:\n  " + "\n  ".join(lines))


def test_criterion_10_linalg_properties():
    rng = np.random.default_rng(424242)
    for trial in range(200):
        k = int(rng.integers(1, 13))
        C, _, _ = random_estimator_covariance(k, rng, deficient=bool(trial % 2))
        P = pinv_psd(C)
        scale = max(np.linalg.norm(C), 1e-30)
        assert np.linalg.norm(C @ P @ C - C) <= 1e-9 * scale
        assert np.linalg.norm(P @ C @ P - P) <= 1e-9 * max(np.linalg.norm(P), 1e-30)
        CP = C @ P
        assert np.linalg.norm(CP.T - CP) <= 1e-9 * max(np.linalg.norm(CP), 1.0)
        w, var = min_variance_weights(C)
        alphas = random_unit_sum_vectors(1000, k, rng)
        assert np.einsum("ki,ij,kj->k", alphas, C, alphas).min() >= var - 1e-12
        c = min_norm_affine_point(None, C)
        assert np.abs(c - w).max() <= 1e-10
