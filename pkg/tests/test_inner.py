import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from instances import example_two_boxes, random_boxes
from rfmdp import (
    BoxSet,
    CapExceededError,
    ConfigError,
    InnerProblem,
    L1Set,
    build_mccormick_lp,
    interval_arithmetic_product,
    mccormick_worst_case,
    perturb_row,
    solve_inner,
    spurious_membership_check,
    worst_case_box_greedy,
    worst_case_interval_arithmetic,
    worst_case_l1,
    worst_case_l1_radius_sum,
    worst_case_vertex_product,
)

DIAGONAL = np.array([1.0, 0.0, 0.0, 1.0])


# --- greedy box -----------------------------------------------------------------------


def test_greedy_example():
    box = BoxSet([0.1] * 3, [0.8] * 3)
    res = worst_case_box_greedy(box, [1.0, 0.0, 0.5])
    np.testing.assert_allclose(res.witness, [0.1, 0.8, 0.1])
    assert res.value == pytest.approx(0.15)
    ref = min(v @ [1.0, 0.0, 0.5] for v in oracles.box_simplex_vertices(box.lower, box.upper))
    assert res.value == pytest.approx(ref, abs=1e-12)


def test_greedy_degenerate_box_and_constant_values():
    p = np.array([0.2, 0.5, 0.3])
    for direction in ("worst", "best"):
        assert worst_case_box_greedy(BoxSet(p, p), [3, 1, 2], direction).value == pytest.approx(p @ [3, 1, 2])
        assert worst_case_box_greedy(BoxSet([0] * 3, [1] * 3), [4, 4, 4], direction).value == pytest.approx(4)


def test_greedy_ties_go_to_lowest_index():
    res = worst_case_box_greedy(BoxSet([0, 0, 0], [1, 1, 1]), [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(res.witness, [1, 0, 0])


@given(st.integers(0, 2**31 - 1), st.sampled_from(["worst", "best"]))
def test_greedy_matches_box_vertex_oracle(seed, direction):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    box = perturb_row(rng.dirichlet(np.ones(n)), float(rng.uniform(0, 0.4)))
    values = rng.normal(size=n)
    vals = [v @ values for v in oracles.box_simplex_vertices(box.lower, box.upper)]
    ref = min(vals) if direction == "worst" else max(vals)
    res = worst_case_box_greedy(box, values, direction)
    assert res.value == pytest.approx(ref, abs=1e-10)
    assert box.contains(res.witness, 1e-10)


# --- L1 ball ----------------------------------------------------------------------------


def test_l1_example_against_grid():
    ball = L1Set([0.5, 0.5], 0.4)
    res = worst_case_l1(ball, [1.0, 0.0])
    np.testing.assert_allclose(res.witness, [0.3, 0.7])
    assert res.value == pytest.approx(0.3)
    grid = np.linspace(0, 1, 10001)
    inside = grid[np.abs(grid - 0.5) * 2 <= 0.4 + 1e-12]
    assert res.value == pytest.approx(inside.min(), abs=1e-4)


def test_l1_radius_extremes():
    values = np.array([2.0, -1.0, 0.5])
    nominal = np.array([0.2, 0.3, 0.5])
    assert worst_case_l1(L1Set(nominal, 0.0), values).value == pytest.approx(nominal @ values)
    assert worst_case_l1(L1Set(nominal, 2.0), values).value == pytest.approx(-1.0)
    assert worst_case_l1(L1Set(nominal, 2.0), values, "best").value == pytest.approx(2.0)


@given(st.integers(0, 2**31 - 1))
def test_l1_optimum_beats_random_ball_members(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    ball = L1Set(rng.dirichlet(np.ones(n)), float(rng.uniform(0, 1)))
    values = rng.normal(size=n)
    low = worst_case_l1(ball, values)
    high = worst_case_l1(ball, values, "best")
    assert ball.contains(low.witness, 1e-10) and ball.contains(high.witness, 1e-10)
    for q in rng.dirichlet(np.ones(n), size=200):
        if np.abs(q - ball.nominal).sum() <= ball.radius:
            assert low.value - 1e-12 <= q @ values <= high.value + 1e-12


# --- products -----------------------------------------------------------------------------


def test_vertex_product_example():
    res = worst_case_vertex_product(InnerProblem(example_two_boxes(), DIAGONAL))
    assert res.value == pytest.approx(0.42, abs=1e-12)
    np.testing.assert_allclose(res.witness, np.kron([0.6, 0.4], [0.1, 0.9]))
    assert oracles.product_vertex_optimum(
        [oracles.box_simplex_vertices(b.lower, b.upper) for b in example_two_boxes()], DIAGONAL
    ) == pytest.approx(0.42)


def test_mccormick_matches_vertex_on_example():
    res = mccormick_worst_case(InnerProblem(example_two_boxes(), DIAGONAL))
    assert res.value == pytest.approx(0.42, abs=1e-9)


def test_interval_arithmetic_is_strictly_conservative_on_example():
    res = worst_case_interval_arithmetic(InnerProblem(example_two_boxes(), DIAGONAL))
    assert res.value == pytest.approx(0.30, abs=1e-12)


def test_interval_arithmetic_bounds():
    box = interval_arithmetic_product(example_two_boxes())
    np.testing.assert_allclose(box.lower, [0.02, 0.14, 0.04, 0.28], atol=1e-12)
    np.testing.assert_allclose(box.upper, [0.18, 0.54, 0.24, 0.72], atol=1e-12)


def test_interval_arithmetic_degenerate_cases():
    p, q = np.array([0.3, 0.7]), np.array([0.4, 0.6])
    box = interval_arithmetic_product([BoxSet(p, p), BoxSet(q, q)])
    np.testing.assert_allclose(box.lower, np.kron(p, q))
    np.testing.assert_allclose(box.upper, np.kron(p, q))
    full = interval_arithmetic_product([BoxSet([0, 0], [1, 1]), BoxSet([0, 0, 0], [1, 1, 1])])
    assert np.all(full.lower == 0) and np.all(full.upper == 1)


def test_point_mass_products():
    p, q = np.array([0.0, 1.0]), np.array([1.0, 0.0, 0.0])
    values = np.arange(6.0)
    for backend in ("vertex", "mccormick", "interval-arithmetic"):
        res = solve_inner(InnerProblem([BoxSet(p, p), BoxSet(q, q)], values), backend)
        assert res.value == pytest.approx(3.0)


def test_single_marginal_reduces_to_that_set():
    box = BoxSet([0.1, 0.2, 0.0], [0.6, 0.7, 0.5])
    values = np.array([0.3, -1.0, 2.0])
    greedy = worst_case_box_greedy(box, values).value
    for backend in ("vertex", "mccormick", "interval-arithmetic"):
        assert solve_inner(InnerProblem([box], values), backend).value == pytest.approx(greedy, abs=1e-10)


def test_degenerate_mccormick_is_exact_dot_product():
    p, q, r = np.array([0.3, 0.7]), np.array([0.5, 0.25, 0.25]), np.array([0.9, 0.1])
    values = np.random.default_rng(0).normal(size=12)
    res = mccormick_worst_case(InnerProblem([BoxSet(x, x) for x in (p, q, r)], values))
    assert res.value == pytest.approx(np.kron(np.kron(p, q), r) @ values, abs=1e-12)


def test_radius_sum_backend():
    sets = [L1Set([0.5, 0.5], 0.1), L1Set([0.2, 0.8], 0.1)]
    res = worst_case_l1_radius_sum(InnerProblem(sets, DIAGONAL))
    assert res.details["joint_ball"].radius == pytest.approx(0.2)
    assert res.value == pytest.approx(np.kron([0.5, 0.5], [0.2, 0.8]) @ DIAGONAL - 0.1)


def test_backend_set_mismatch():
    with pytest.raises(ConfigError):
        solve_inner(InnerProblem([L1Set([0.5, 0.5], 0.1)] * 2, DIAGONAL), "mccormick")
    with pytest.raises(ConfigError):
        solve_inner(InnerProblem(example_two_boxes(), DIAGONAL), "l1-radius-sum")
    with pytest.raises(ConfigError):
        solve_inner(InnerProblem(example_two_boxes(), DIAGONAL), "annealing")


def test_vertex_cap_names_mccormick():
    boxes = [BoxSet([0] * 6, [1 / 3] * 6)] * 3
    with pytest.raises(CapExceededError, match="mccormick"):
        worst_case_vertex_product(InnerProblem(boxes, np.zeros(216)), cap=1000)


# --- membership ---------------------------------------------------------------------------


def test_spurious_point_of_the_joint_box():
    boxes = example_two_boxes()
    H = np.array([0.18, 0.14, 0.24, 0.44])
    assert interval_arithmetic_product(boxes).contains(H, 1e-12)
    assert not spurious_membership_check(H, boxes)
    assert spurious_membership_check([0.18, 0.42, 0.12, 0.28], boxes)


def test_products_of_in_box_marginals_are_members():
    rng = np.random.default_rng(1)
    for _ in range(50):
        boxes = random_boxes(rng)
        point = np.array([1.0])
        for b in boxes:
            # a random box point: convex combination of two vertices
            verts = b.vertex_polytope().vertices
            i, k = rng.integers(len(verts), size=2)
            t = rng.uniform()
            point = np.kron(point, t * verts[i] + (1 - t) * verts[k])
        assert spurious_membership_check(point, boxes)


# --- random suite ------------------------------------------------------------------------------


def _suite(count=200, seed=2024):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        boxes = random_boxes(rng)
        dim = int(np.prod([b.dim for b in boxes]))
        yield boxes, rng.uniform(0, 10, size=dim)


@pytest.mark.parametrize("direction", ["worst", "best"])
def test_sandwich_and_mccormick_exactness(direction):
    for boxes, values in _suite():
        prob = InnerProblem(boxes, values, direction)
        ia = solve_inner(prob, "interval-arithmetic").value
        mc = solve_inner(prob, "mccormick").value
        ve = solve_inner(prob, "vertex").value
        if direction == "worst":
            assert ia <= mc + 1e-7 and mc <= ve + 1e-7
        else:
            assert ia >= mc - 1e-7 and mc >= ve - 1e-7
        assert abs(mc - ve) <= 1e-6


def test_vertex_backend_matches_loop_oracle():
    for boxes, values in _suite(60, seed=5):
        verts = [oracles.box_simplex_vertices(b.lower, b.upper) for b in boxes]
        for direction in ("worst", "best"):
            got = worst_case_vertex_product(InnerProblem(boxes, values, direction)).value
            ref = oracles.product_vertex_optimum(verts, values, worst=direction == "worst")
            assert got == pytest.approx(ref, abs=1e-10)


def test_literal_formulation_is_a_weaker_relaxation():
    for boxes, values in _suite(60, seed=9):
        prob = InnerProblem(boxes, values)
        tight = mccormick_worst_case(prob).value
        literal = mccormick_worst_case(prob, formulation="literal").value
        ia = worst_case_interval_arithmetic(prob).value
        exact = worst_case_vertex_product(prob).value
        assert literal <= tight + 1e-7 and literal <= exact + 1e-7
        assert literal >= ia - 1e-7


def test_literal_lp_constraint_count():
    # three factors of sizes 2,3,2: four envelope rows per partial product
    lowers = [np.zeros(2), np.zeros(3), np.zeros(2)]
    uppers = [np.ones(2), np.ones(3), np.ones(2)]
    lp, _ = build_mccormick_lp(lowers, uppers, np.zeros(12), "worst", "literal")
    assert lp.A_ineq.shape[0] == 4 * (6 + 12)
    assert lp.A_eq.shape[0] == 1 + 3


def test_witness_validity():
    for boxes, values in _suite(40, seed=3):
        prob = InnerProblem(boxes, values)
        exact = worst_case_vertex_product(prob)
        assert spurious_membership_check(exact.witness, boxes, 1e-9)
        assert exact.value == pytest.approx(exact.witness @ values, abs=1e-8)
        ia = worst_case_interval_arithmetic(prob)
        assert ia.details["joint_box"].contains(ia.witness, 1e-8)
        mc = mccormick_worst_case(prob)
        assert abs(mc.witness.sum() - 1) < 1e-8
        assert mc.details["lp"] is None or mc.details["lp"].violation(mc.details["solution"].values) <= 1e-8


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.floats(0, 0.1), st.floats(0, 0.1))
def test_monotone_in_radius(seed, eps_a, eps_b):
    rng = np.random.default_rng(seed)
    small, large = sorted((eps_a, eps_b))
    rows = [rng.dirichlet(np.ones(int(rng.integers(2, 4)))) for _ in range(2)]
    values = rng.uniform(size=int(np.prod([r.size for r in rows])))
    for backend in ("vertex", "mccormick", "interval-arithmetic"):
        v_small = solve_inner(InnerProblem([perturb_row(r, small) for r in rows], values), backend).value
        v_large = solve_inner(InnerProblem([perturb_row(r, large) for r in rows], values), backend).value
        assert v_small >= v_large - 1e-7
