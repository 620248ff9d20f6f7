"""Acceptance criteria, one test each.

Every test appends a ``criterion N: PASS|FAIL ...`` line that is printed in
the terminal summary, then asserts at the stated tolerance. Runtime budgets
are reported alongside but not asserted, since they depend on the machine.
"""

import time
from math import comb

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from instances import example_two_boxes, random_fmdp
from test_lp import random_small_lp, solve_random
from rfmdp import (
    L1Set,
    LearningConfig,
    ModelSampler,
    RfMdp,
    TransitionCounts,
    build_box_set,
    build_l1_set,
    build_learned_rfmdp,
    chain,
    clopper_pearson,
    enumerate_box_vertices,
    flat_structure,
    interval_arithmetic_product,
    learning_loop,
    mini_chain,
    mini_stock,
    mini_sysadmin,
    perturb_row,
    perturb_to_rfmdp,
    record_transitions,
    rfmdp_from_points,
    bundled_environments,
    solve_rfmdp,
    split_confidence,
    spurious_membership_check,
    sysadmin,
    trajectories_to_target,
    value_iteration_nominal,
    weissman_radius,
)

LEARNING_DOMAINS = {"sysadmin": mini_sysadmin, "stock": mini_stock}
LEARNING_METHODS = ("mccormick", "interval-arithmetic", "l1-radius-sum", "flat")
LEARNING_SEEDS = range(10)


def report(number, ok, detail, seconds, budget):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail} [{seconds:.1f}s, budget {budget}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# --- shared solves for criteria 1 and 2 -----------------------------------------------------


@pytest.fixture(scope="module")
def backend_suite():
    """Initial-state values per backend on random and benchmark rf-MDPs."""
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = []
    for k in range(200):
        m = random_fmdp(rng)
        cases.append((f"random{k}", m, float(rng.uniform(0, 0.1))))
    for name, make in (("sysadmin", mini_sysadmin), ("chain", mini_chain), ("stock", mini_stock)):
        for eps in (0.01, 0.025, 0.1):
            cases.append((f"{name}@{eps}", make(), eps))
    results = []
    for label, m, eps in cases:
        rf = perturb_to_rfmdp(m, eps)
        values = {b: solve_rfmdp(rf, b).initial_value for b in ("vertex", "mccormick", "interval-arithmetic")}
        results.append((label, m.objective.maximizing, values))
    return results, time.perf_counter() - start


def test_criterion_1_mccormick_exactness(backend_suite):
    results, seconds = backend_suite
    gaps = [abs(v["mccormick"] - v["vertex"]) for _, _, v in results]
    worst = max(gaps)
    ok = report(1, worst <= 1e-6, f"{len(results)} instances, max |V_mc - V_vertex| = {worst:.2e} (tol 1e-6)",
                seconds, 120)
    assert ok


def test_criterion_2_sandwich_and_epsilon_trend(backend_suite):
    start = time.perf_counter()
    results, _ = backend_suite
    broken = []
    for label, maximizing, v in results:
        s = 1 if maximizing else -1
        if not (s * v["interval-arithmetic"] <= s * v["mccormick"] + 1e-7 and s * v["mccormick"] <= s * v["vertex"] + 1e-7):
            broken.append(label)
    gap = {}
    for eps in (0.01, 0.1):
        rf = perturb_to_rfmdp(mini_sysadmin(), eps)
        ve = solve_rfmdp(rf, "vertex").initial_value
        ia = solve_rfmdp(rf, "interval-arithmetic").initial_value
        gap[eps] = abs(ve - ia) / abs(ia)
    ok = not broken and gap[0.1] > gap[0.01]
    detail = (f"sandwich broken on {len(broken)} of {len(results)} instances; "
              f"IA rel gap {gap[0.01]:.3e} at eps 0.01 vs {gap[0.1]:.3e} at eps 0.1")
    assert report(2, ok, detail, time.perf_counter() - start, 60)


def test_criterion_3_spurious_point():
    start = time.perf_counter()
    boxes = example_two_boxes()
    joint = interval_arithmetic_product(boxes)
    bounds_ok = np.allclose(joint.lower, [0.02, 0.14, 0.04, 0.28], atol=1e-9, rtol=0) and np.allclose(
        joint.upper, [0.18, 0.54, 0.24, 0.72], atol=1e-9, rtol=0
    )
    H = np.array([0.18, 0.14, 0.24, 0.44])
    in_joint_box = joint.contains(H, 1e-9)
    spurious = not spurious_membership_check(H, boxes, 1e-9)
    genuine = spurious_membership_check([0.18, 0.42, 0.12, 0.28], boxes, 1e-9)
    ok = bounds_ok and in_joint_box and spurious and genuine
    detail = f"bounds {bounds_ok}, H in IA box {in_joint_box}, H rejected {spurious}, product accepted {genuine}"
    assert report(3, ok, detail, time.perf_counter() - start, 1)


def _ball_point(rng, nominal, radius, boundary):
    """A point of the L1 ball around ``nominal`` intersected with the simplex."""
    d = rng.dirichlet(np.ones(nominal.size) * 0.5)
    dist = np.abs(d - nominal).sum()
    t = 1.0 if dist <= radius else radius / dist
    if not boundary:
        t *= rng.uniform()
    return nominal + t * (d - nominal)


def test_criterion_4_radius_sum_containment():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    violations, worst_slack = 0, -np.inf
    for k in range(10_000):
        p_hat = rng.dirichlet(np.ones(int(rng.integers(2, 5))))
        q_hat = rng.dirichlet(np.ones(int(rng.integers(2, 5))))
        e1, e2 = rng.uniform(0, 0.5, size=2)
        P = _ball_point(rng, p_hat, e1, boundary=k % 2 == 0)
        Q = _ball_point(rng, q_hat, e2, boundary=k % 2 == 0)
        assert np.abs(P - p_hat).sum() <= e1 + 1e-12 and np.abs(Q - q_hat).sum() <= e2 + 1e-12
        excess = np.abs(np.kron(P, Q) - np.kron(p_hat, q_hat)).sum() - (e1 + e2)
        worst_slack = max(worst_slack, excess)
        violations += excess > 1e-10
    detail = f"10000 samples, {violations} violations, max excess over e1+e2 = {worst_slack:.3e}"
    assert report(4, violations == 0, detail, time.perf_counter() - start, 10)


def test_criterion_5_vertex_cardinality():
    start = time.perf_counter()
    parts, ok = [], True
    for k in (4, 6):
        box = perturb_row_uniform(k)
        got = enumerate_box_vertices(box).vertices
        brute = oracles.box_simplex_vertices(box.lower, box.upper)
        ok &= len(got) == len(brute) >= comb(k, k // 2)
        parts.append(f"k={k}: {len(got)} vertices, brute force {len(brute)}, C(k,k/2)={comb(k, k // 2)}")
    assert report(5, ok, "; ".join(parts), time.perf_counter() - start, 5)


def perturb_row_uniform(k):
    return perturb_row(np.full(k, 1 / k), 1 / k)


def test_criterion_6_lp_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    worst, solved = 0.0, 0
    while solved < 50:
        p = random_small_lp(rng)
        ref = oracles.lp_by_vertex_enumeration(p["c"], p["A_eq"], p["b_eq"], p["A_ub"], p["b_ub"],
                                               p["lower"], p["upper"], p["maximize"])
        if ref is None:
            continue
        _, sol = solve_random(p)
        worst = max(worst, abs(sol.objective_value - ref) if sol.optimal else np.inf)
        solved += 1
    detail = f"50 feasible LPs, max |objective - enumeration| = {worst:.2e} (tol 1e-7)"
    assert report(6, worst <= 1e-7, detail, time.perf_counter() - start, 10)


# --- learning runs for criteria 7 and 8 ---------------------------------------------------------


@pytest.fixture(scope="module")
def learning_runs():
    """Ten seeds of every method on both domains at the stated scale."""
    traces, seconds = {}, {}
    for domain, make in LEARNING_DOMAINS.items():
        sampler = ModelSampler(make())
        for method in LEARNING_METHODS:
            start = time.perf_counter()
            traces[domain, method] = [
                learning_loop(sampler, LearningConfig(method=method, beta=1e-4, trajectory_length=5,
                                                      total_trajectories=10_000, checkpoint_interval=1000, seed=s))
                for s in LEARNING_SEEDS
            ]
            seconds[domain, method] = time.perf_counter() - start
    return traces, seconds


@pytest.mark.slow
def test_criterion_7_pac_soundness(learning_runs):
    traces, seconds = learning_runs
    checked = violations = 0
    for key, runs in traces.items():
        for t in runs:
            assert list(t.trajectories) == list(range(0, 10_001, 1000))
            checked += len(t.checkpoints)
            violations += t.violations()
    detail = f"{checked} checkpoints over {len(traces)} domain/method pairs x 10 seeds, {violations} violations"
    assert report(7, violations == 0, detail, sum(seconds.values()), 900)


@pytest.mark.slow
def test_criterion_8_sample_efficiency(learning_runs):
    traces, _ = learning_runs
    start = time.perf_counter()
    ok, parts = True, []
    for domain in LEARNING_DOMAINS:
        targets = [t.guarantees[-1] for t in traces[domain, "flat"]]
        medians = {}
        for method in LEARNING_METHODS:
            hits = [trajectories_to_target(t, g) for t, g in zip(traces[domain, method], targets)]
            medians[method] = float(np.median(hits))
        chain_ok = all(medians[a] <= medians[b] for a, b in zip(LEARNING_METHODS, LEARNING_METHODS[1:]))
        ok &= chain_ok
        finals = {m: float(np.median([t.guarantees[-1] for t in traces[domain, m]])) for m in LEARNING_METHODS}
        parts.append(
            f"{domain}: median trajectories to flat target "
            + ", ".join(f"{m}={medians[m]:g}" for m in LEARNING_METHODS)
            + " (final medians "
            + ", ".join(f"{m}={finals[m]:.4f}" for m in LEARNING_METHODS)
            + f") {'ordered' if chain_ok else 'NOT ordered'}"
        )
    assert report(8, ok, "; ".join(parts), time.perf_counter() - start, 1800)


# --- remaining criteria ----------------------------------------------------------------------------


def _degenerate_variants(m):
    """Every backend on radius-0 sets of ``m``."""
    boxes = perturb_to_rfmdp(m, 0.0)
    for backend in ("vertex", "mccormick", "interval-arithmetic"):
        yield backend, boxes, backend
    yield "l1-radius-sum", RfMdp(m.structure(), {k: L1Set(m.marginals[k], 0.0) for k in m.relevant_components}), \
        "l1-radius-sum"
    yield "flat", rfmdp_from_points(flat_structure(m)), "flat"


def test_criterion_9_degenerate_sets():
    start = time.perf_counter()
    worst, checked = 0.0, 0
    for name, m in bundled_environments().items():
        ref = value_iteration_nominal(m, tol=1e-12)[0]
        for _, rf, backend in _degenerate_variants(m):
            worst = max(worst, float(np.max(np.abs(solve_rfmdp(rf, backend, tol=1e-9).values - ref))))
            checked += 1
    # learned sets collapse to points when every known support is a single outcome
    for m in (sysadmin(3, 5, p_fail_base=0.0, p_fail_neighbor=0.0, p_repair=1.0), chain(n=2, m=3, p=1.0)):
        ref = value_iteration_nominal(m, tol=1e-12)[0]
        rng = np.random.default_rng(9)
        sampler = ModelSampler(m)
        batch = [(s, a, sampler.step(s, a, rng)) for s in range(m.n_states) for a in range(m.n_actions)]
        counts = record_transitions(TransitionCounts.empty(m), m, batch)
        learned = build_learned_rfmdp(counts, split_confidence(1e-4, m, "box"), m)
        assert all(np.array_equal(s.lower, s.upper) for s in learned.sets.values())
        for backend in ("vertex", "mccormick", "interval-arithmetic"):
            worst = max(worst, float(np.max(np.abs(solve_rfmdp(learned, backend, tol=1e-9).values - ref))))
            checked += 1
    detail = f"{checked} backend/model pairs, max |V - V_classical| = {worst:.2e} (tol 1e-6)"
    assert report(9, worst <= 1e-6, detail, time.perf_counter() - start, 60)


def test_criterion_10_coverage():
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    rows, delta = 10_000, 0.1
    floor = 1 - delta - 3 * np.sqrt(delta * (1 - delta) / rows)
    p, n = 0.3, 50
    hits = 0
    for x in rng.binomial(n, p, size=rows):
        lo, hi = clopper_pearson(int(x), n, delta)
        hits += lo <= p <= hi
    cp_cov = hits / rows
    truth = np.array([0.2, 0.3, 0.5])
    radius = weissman_radius(3, n, delta)
    draws = rng.multinomial(n, truth, size=rows)
    l1_cov = float(np.mean(np.abs(draws / n - truth).sum(axis=1) <= radius))
    # the set builders agree with the bare formulas
    assert build_box_set([15, 35], 50, delta).lower[0] == clopper_pearson(15, 50, delta)[0]
    assert build_l1_set([10, 15, 25], 50, delta).radius == radius
    ok = cp_cov >= floor and l1_cov >= floor
    detail = f"CP coverage {cp_cov:.4f}, Weissman coverage {l1_cov:.4f}, required >= {floor:.4f}"
    assert report(10, ok, detail, time.perf_counter() - start, 60)
