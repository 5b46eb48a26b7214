import json

import numpy as np
import pytest

from lexrl import oracle
from lexrl.lexicographic import LexicographicAgent, select_from_values
from lexrl.oracle import Comparison, Feasibility, MdpFormatError, TabularMdp


def absorbing(costs, gamma=0.5, thresholds=(), initial=None):
    """Every state is absorbing under every action; ``costs[v][s][u]`` per step."""
    costs = np.asarray(costs, dtype=float)
    _, S, A = costs.shape
    T = np.repeat(np.eye(S)[None], A, axis=0)
    chi = np.full(S, 1.0 / S) if initial is None else np.asarray(initial, dtype=float)
    return TabularMdp(T, costs, gamma, np.asarray(thresholds, dtype=float), chi)


def test_zero_costs_give_zero_values():
    mdp = oracle.random_mdp(np.random.default_rng(0), 3, 2, 1)
    zero = TabularMdp(mdp.transitions, np.zeros_like(mdp.costs), mdp.gamma, mdp.thresholds, mdp.initial)
    assert np.all(oracle.policy_q_values(zero, [0, 1, 0], 1) == 0)
    assert oracle.expected_cost(zero, [0, 1, 0], 0) == 0
    assert oracle.feasibility_check(zero, [1, 1, 1]) is Feasibility.FEASIBLE_FOR_10


def test_geometric_series_on_a_single_state():
    mdp = absorbing([[[1.0, 1.0]]], gamma=0.5)
    np.testing.assert_allclose(oracle.policy_q_values(mdp, [0], 0), [[2.0, 2.0]])


def test_values_solve_the_bellman_fixed_point():
    mdp = oracle.random_mdp(np.random.default_rng(1), 4, 3, 2)
    pi = np.array([2, 0, 1, 1])
    for v in range(3):
        Q = oracle.policy_q_values(mdp, pi, v)
        V = Q[np.arange(4), pi]
        rhs = np.einsum("ust,sut->su", mdp.transitions, mdp.costs[v] + mdp.gamma * V[None, None, :])
        np.testing.assert_allclose(Q, rhs, atol=1e-12)


def test_expected_cost_examples():
    # two-state chain: state 0 -> state 1 (cost 1), state 1 absorbing (cost 0); gamma 0.5
    T = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    R = np.array([[[1.0], [0.0]]])
    uniform = TabularMdp(T, R, 0.5, [], [0.5, 0.5])
    assert oracle.expected_cost(uniform, [0, 0], 0) == pytest.approx(0.5 * 1.0 + 0.5 * 0.0)
    point = TabularMdp(T, R, 0.5, [], [1.0, 0.0])
    assert oracle.expected_cost(point, [0, 0], 0) == pytest.approx(oracle.all_policy_values(point, [0, 0])[0, 0])


def test_better_when_more_constraints_are_met():
    # action 0 meets both constraints, action 1 only the first
    mdp = absorbing([[[0.0, 0.0]], [[0.0, 0.0]], [[0.0, 1.0]]], thresholds=(1.0, 1.0))
    assert oracle.lex_compare(mdp, [0], [1], 0) is Comparison.BETTER
    assert oracle.lex_compare(mdp, [1], [0], 0) is Comparison.WORSE


def test_equal_when_all_met_with_equal_primary():
    mdp = absorbing([[[1.0, 1.0]], [[0.0, 0.0]]], thresholds=(1.0,))
    assert oracle.lex_compare(mdp, [0], [1], 0) is Comparison.EQUAL


def test_first_unmet_constraint_decides():
    # no policy meets K1 = 1 at state 0; values 3 and 4 decide
    mdp = absorbing([[[9.0, 0.0], [0.0, 0.0]], [[1.5, 2.0], [0.0, 0.0]]], thresholds=(1.0,))
    np.testing.assert_allclose(oracle.all_policy_values(mdp, [0, 0])[1, 0], 3.0)
    assert oracle.lex_compare(mdp, [0, 0], [1, 0], 0) is Comparison.BETTER


def test_unconstrained_search_matches_value_iteration():
    rng = np.random.default_rng(2)
    for _ in range(10):
        mdp = oracle.random_mdp(rng, int(rng.integers(2, 5)), int(rng.integers(2, 4)), 0)
        best, V = oracle.value_iteration(mdp, 0)
        np.testing.assert_array_equal(oracle.brute_force_lex_optimal(mdp), best)
        np.testing.assert_allclose(oracle.all_policy_values(mdp, best)[0], V, atol=1e-9)


def test_single_feasible_policy_is_found():
    # only (1, 0) keeps constraint 1 at zero; it is the expensive choice for the primary cost
    costs = [
        [[0.0, 1.0], [1.0, 0.0]],
        [[1.0, 0.0], [0.0, 1.0]],
    ]
    mdp = absorbing(costs, gamma=0.5, thresholds=(0.5,))
    np.testing.assert_array_equal(oracle.brute_force_lex_optimal(mdp), [1, 0])
    assert oracle.feasibility_check(mdp, [1, 0]) is Feasibility.FEASIBLE_FOR_10


def test_infeasible_constraint_falls_back_to_minimising_it():
    rng = np.random.default_rng(3)
    costs = np.concatenate([np.zeros((1, 3, 3)), 1.0 + rng.random((1, 3, 3))])
    mdp = absorbing(costs, gamma=0.5, thresholds=(0.1,))
    expected = np.argmin(costs[1], axis=1)
    np.testing.assert_array_equal(oracle.brute_force_lex_optimal(mdp), expected)
    assert oracle.feasibility_check(mdp, expected) is Feasibility.INFEASIBLE


def test_violation_off_the_initial_support_is_feasible_only_on_average():
    mdp = absorbing([[[0.0], [0.0]], [[0.0], [1.0]]], thresholds=(1.0,), initial=(1.0, 0.0))
    assert oracle.feasibility_check(mdp, [0, 0]) is Feasibility.FEASIBLE_FOR_6_ONLY


def test_zero_budget_with_positive_cost_is_infeasible():
    mdp = absorbing([[[0.0], [0.0]], [[1.0], [1.0]]], thresholds=(0.0,))
    assert oracle.feasibility_check(mdp, [0, 0]) is Feasibility.INFEASIBLE


def test_per_state_feasibility_implies_average_feasibility():
    rng = np.random.default_rng(4)
    for _ in range(30):
        mdp = oracle.random_mdp(rng, 3, 2, 2)
        for pi in oracle.enumerate_policies(mdp):
            if oracle.feasibility_check(mdp, pi) is Feasibility.FEASIBLE_FOR_10:
                for chi in rng.dirichlet(np.ones(3), size=5):
                    J = oracle.all_policy_values(mdp, pi)[1:] @ chi
                    assert np.all(J <= mdp.thresholds + 1e-9)


def test_returned_policy_is_in_the_undominated_set():
    rng = np.random.default_rng(5)
    mdp = oracle.random_mdp(rng, 4, 2, 2)
    front = oracle.brute_force_lex_optimal(mdp, return_all=True)
    best = oracle.brute_force_lex_optimal(mdp)
    assert any(np.array_equal(best, p) for p in front)


def test_identical_policies_are_mutually_undominated():
    mdp = absorbing([[[1.0, 1.0]]])
    assert len(oracle.brute_force_lex_optimal(mdp, return_all=True)) == 2


def test_enumeration_budget_guard():
    mdp = oracle.random_mdp(np.random.default_rng(6), 6, 3, 1)
    with pytest.raises(ValueError):
        oracle.brute_force_lex_optimal(mdp, budget=100)


def test_agent_on_exact_tables_follows_the_selection_rule(lex_oracle):
    rng = np.random.default_rng(7)
    for _ in range(20):
        mdp = oracle.random_mdp(rng, 4, 3, 2)
        pi = oracle.brute_force_lex_optimal(mdp)
        tables = [oracle.policy_q_values(mdp, pi, v) for v in range(3)]
        critics = [lambda s, t=t: t[int(s[0])] for t in tables]
        agent = LexicographicAgent(critics, thresholds=tuple(mdp.thresholds)).fit()
        for s in range(4):
            action, _ = agent.select_action(np.array([s]))
            expected, _ = lex_oracle(tables[0][s], [t[s] for t in tables[1:]], list(mdp.thresholds))
            assert action == expected


def test_one_step_selection_on_exact_values_can_break_per_state_feasibility():
    # greedy selection on the optimal policy's own values need not stay feasible when
    # followed forever, even though a per-state feasible policy exists
    rng = np.random.default_rng(0)
    for _ in range(200):
        mdp = oracle.random_mdp(rng, int(rng.integers(2, 6)), int(rng.integers(2, 4)), int(rng.integers(1, 3)))
        pi = oracle.brute_force_lex_optimal(mdp)
        if oracle.feasibility_check(mdp, pi) is not Feasibility.FEASIBLE_FOR_10:
            continue
        tables = [oracle.policy_q_values(mdp, pi, v) for v in range(mdp.num_constraints + 1)]
        induced = [select_from_values(tables[0][s], [t[s] for t in tables[1:]], mdp.thresholds)[0]
                   for s in range(mdp.num_states)]
        if oracle.feasibility_check(mdp, induced) is not Feasibility.FEASIBLE_FOR_10:
            return
    pytest.fail("expected a counterexample among 200 random instances")


def _valid_dict():
    return {
        "gamma": 0.9,
        "transitions": [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]]],
        "costs": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]],
        "thresholds": [5.0],
        "initial": [0.5, 0.5],
    }


def test_file_round_trip(tmp_path):
    mdp = oracle.mdp_from_dict(_valid_dict())
    path = tmp_path / "m.json"
    path.write_text(json.dumps(oracle.mdp_to_dict(mdp)))
    again = oracle.load_mdp(path)
    for name in ("transitions", "costs", "thresholds", "initial"):
        np.testing.assert_array_equal(getattr(again, name), getattr(mdp, name))


def test_raw_thresholds_are_converted():
    data = _valid_dict()
    del data["thresholds"]
    data["raw_thresholds"] = [0.2]
    assert oracle.mdp_from_dict(data).thresholds[0] == pytest.approx(2.0)


@pytest.mark.parametrize("mutate,fragment", [
    (lambda d: d["transitions"][1].__setitem__(0, [0.5, 0.6]), "transitions[1][0]"),
    (lambda d: d.__setitem__("gamma", 1.0), "gamma"),
    (lambda d: d.__setitem__("initial", [0.2, 0.2]), "initial"),
    (lambda d: d.__setitem__("thresholds", [1.0, 2.0]), "thresholds"),
    (lambda d: d["costs"][0][0].__setitem__(0, -1.0), "costs[0, 0, 0]"),
    (lambda d: d.__setitem__("colour", "red"), "colour"),
    (lambda d: d.pop("transitions"), "transitions"),
])
def test_malformed_files_name_the_field(mutate, fragment):
    data = _valid_dict()
    mutate(data)
    with pytest.raises(MdpFormatError) as info:
        oracle.mdp_from_dict(data)
    assert fragment in str(info.value)


def test_json_syntax_errors_report_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "gamma": 0.9,\n  "transitions": [1, 2\n}')
    with pytest.raises(MdpFormatError, match="line 4"):
        oracle.load_mdp(path)
