import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from rfmdp import (
    CapExceededError,
    DependencyFunction,
    Factor,
    FactoredMdp,
    Objective,
    StateRangeError,
    ValidationError,
    bundled_environments,
    chain,
    decode_state,
    encode_state,
    flat_structure,
    flatten,
    transition_distribution,
    validate_fmdp,
    value_iteration_nominal,
)


def two_factor(m0=(0.2, 0.8), m1=(0.1, 0.9), shared=False):
    table = np.zeros((4, 1, 2), dtype=np.int64)
    if not shared:
        table[:, :, 1] = 1
    marg = {(0, 0): m0}
    if shared:
        marg[(1, 0)] = m0
    else:
        marg[(1, 1)] = m1
    return FactoredMdp(
        (Factor("a", 2), Factor("b", 2)),
        ("go",),
        DependencyFunction(table, 1 if shared else 2),
        marg,
        np.zeros((4, 1)),
        0,
        Objective("discounted-reward", discount=0.9),
    )


# --- codec -------------------------------------------------------------------------------


def test_encode_zero_state():
    assert encode_state((2, 2), (0, 0)) == 0


def test_encode_last_state():
    assert encode_state((2, 3), (1, 2)) == 5


def test_decode_matches_enumerated_table():
    table = oracles.assignment_table((2, 3))
    assert decode_state((2, 3), 4) == (1, 1) == table[4]
    for k, assignment in enumerate(table):
        assert decode_state((2, 3), k) == assignment


def test_codec_range_errors_name_the_factor():
    with pytest.raises(StateRangeError, match="factor 1"):
        encode_state((2, 3), (1, 3))
    with pytest.raises(StateRangeError):
        decode_state((2, 3), 6)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.data())
def test_codec_round_trip(domains, data):
    total = int(np.prod(domains))
    i = data.draw(st.integers(0, total - 1))
    assert encode_state(domains, decode_state(domains, i)) == i


# --- validation --------------------------------------------------------------------------


def test_well_formed_model_has_empty_report():
    assert validate_fmdp(two_factor()) == []


def test_bad_row_sum_is_reported_with_indices():
    report = validate_fmdp(two_factor(m1=(0.1, 0.8)))
    assert len(report) == 1
    assert report[0].where == (1, 1)


def test_missing_row_is_reported():
    m = two_factor()
    broken = FactoredMdp(m.factors, m.actions, m.dependency, {(0, 0): (0.2, 0.8)}, m.rewards, 0, m.objective)
    report = validate_fmdp(broken)
    assert len(report) == 1 and report[0].where == (1, 1)
    with pytest.raises(ValidationError):
        broken.check()


def test_shared_identifier_across_unequal_domains_is_invalid():
    table = np.zeros((6, 1, 2), dtype=np.int64)
    m = FactoredMdp(
        (Factor("a", 2), Factor("b", 3)), ("go",), DependencyFunction(table, 1),
        {(0, 0): (0.5, 0.5), (1, 0): (0.2, 0.3, 0.5)}, np.zeros((6, 1)), 0,
        Objective("discounted-reward", discount=0.9),
    )
    assert validate_fmdp(m)


def test_objective_field_rules():
    assert Objective("discounted-reward").problems()
    assert Objective("finite-horizon-reward", horizon=3, discount=0.9).problems()
    assert Objective("reachability").problems()
    assert not Objective("expected-steps", "minimize", target_states=(1,)).problems()


# --- transitions ----------------------------------------------------------------------------


def test_point_mass_second_factor():
    m = two_factor(m0=(0.5, 0.5), m1=(1.0, 0.0))
    np.testing.assert_allclose(transition_distribution(m, 0, 0), [0.5, 0, 0.5, 0])


def test_outer_product_matches_loop_oracle():
    m = two_factor()
    got = transition_distribution(m, 0, 0)
    np.testing.assert_allclose(got, oracles.joint_by_loops(m, 0, 0), atol=1e-15)
    np.testing.assert_allclose(got, [0.02, 0.18, 0.08, 0.72], atol=1e-15)


def test_single_factor_joint_is_the_marginal():
    m = chain(n=1, m=3, p=0.7)
    np.testing.assert_array_equal(transition_distribution(m, 0, 0), m.marginals[(0, 0)])


def test_shared_identifier_pools_one_distribution():
    m = two_factor(shared=True)
    np.testing.assert_allclose(transition_distribution(m, 0, 0), [0.04, 0.16, 0.16, 0.64])


@pytest.mark.parametrize("name", ["sysadmin", "chain", "stock", "frozenlake"])
def test_all_rows_normalised(name):
    m = bundled_environments()[name]
    P = flatten(m).transitions
    np.testing.assert_allclose(P.sum(axis=2), 1.0, atol=1e-9)


# --- flattening -------------------------------------------------------------------------------


def test_flat_rows_equal_transition_distribution():
    m = two_factor()
    P = flatten(m).transitions
    assert P.shape == (4, 1, 4)
    for s in range(4):
        np.testing.assert_array_equal(P[s, 0], transition_distribution(m, s, 0))


def test_chain_flattens_to_nine_states():
    assert flatten(chain(n=2, m=3)).n_states == 9


def test_flatten_cap():
    with pytest.raises(CapExceededError) as info:
        flatten(chain(n=2, m=4), cap=10)
    assert info.value.required == 16


@pytest.mark.parametrize("name", ["sysadmin", "chain", "stock", "frozenlake"])
def test_flat_value_iteration_matches_loop_oracle(name):
    m = bundled_environments()[name]
    values, _ = value_iteration_nominal(m, tol=1e-12)
    np.testing.assert_allclose(values, oracles.nominal_value_by_loops(m), atol=1e-8)


def test_flat_structure_keeps_dynamics():
    m = bundled_environments()["sysadmin"]
    flat = flat_structure(m)
    assert flat.n_factors == 1 and flat.n_states == m.n_states
    np.testing.assert_allclose(value_iteration_nominal(flat)[0], value_iteration_nominal(m)[0], atol=1e-12)
