import numpy as np
import pytest

from RoutaPy import (ContractViolationError, IncompleteSolutionError, Solution, apply_action, feasible_actions,
                     initial_state, is_terminal, replay_solution, solution_cost, solution_from_state, verify_solution)


def test_initial_state(two_customer_tw, tsp8):
    state = initial_state(two_customer_tw)
    assert state.current_node == 0 and state.current_time == 0.0
    assert state.remaining_capacity == 5.0
    assert not state.visited.any()
    assert initial_state(tsp8).visited.tolist() == [True] + [False] * 8


def test_depot_is_masked_at_the_depot(two_customer_tw):
    mask = feasible_actions(initial_state(two_customer_tw))
    assert mask.feasible.tolist() == [False, True, True]
    assert mask.customers.tolist() == [1, 2]
    assert not mask.depot_feasible


def test_transition_timing(two_customer_tw):
    state = apply_action(initial_state(two_customer_tw), 1)
    assert state.current_time == pytest.approx(6.0)
    assert state.remaining_capacity == 3.0
    mask = feasible_actions(state)
    assert mask.feasible.tolist() == [True, False, True]
    state = apply_action(state, 2)
    record = state.trace[-1]
    assert record.arrival == pytest.approx(11.0)
    assert record.wait == pytest.approx(9.0)
    assert record.service_start == pytest.approx(20.0)
    assert record.departure == pytest.approx(21.0)
    assert record.load_after == 5.0
    assert not is_terminal(state)
    state = apply_action(state, 0)
    assert is_terminal(state)
    solution = solution_from_state(state)
    assert solution.nodes == [0, 1, 2, 0]
    assert solution.routes == [[1, 2]]
    assert solution.total_distance == pytest.approx(20.0)


def test_apply_action_leaves_input_untouched(two_customer_tw):
    state = initial_state(two_customer_tw)
    apply_action(state, 2)
    assert state.current_node == 0 and not state.visited.any() and state.route_log == []


def test_capacity_forces_depot(tight_cvrp):
    state = apply_action(initial_state(tight_cvrp), 1)
    mask = feasible_actions(state)
    assert mask.customers.size == 0
    assert mask.feasible.tolist() == [True, False, False]
    with pytest.raises(ContractViolationError):
        apply_action(state, 2)
    state = apply_action(apply_action(state, 0), 2)
    solution = solution_from_state(apply_action(state, 0))
    assert solution.routes == [[1], [2]]


def test_window_closes_customer(two_customer_tw):
    state = apply_action(initial_state(two_customer_tw), 2)
    # arriving at customer 1 at 26 misses its window [0, 10]
    mask = feasible_actions(state)
    assert mask.customers.size == 0
    assert mask.feasible.tolist() == [True, False, False]


def test_terminal_state_mask_query_raises(two_customer_tw):
    state = initial_state(two_customer_tw)
    for node in (1, 2, 0):
        state = apply_action(state, node)
    with pytest.raises(ContractViolationError, match='terminal'):
        feasible_actions(state)


def test_tsp_tour_closes(tsp8):
    solution = replay_solution(list(range(1, 9)), tsp8)
    assert solution.nodes == [0, 1, 2, 3, 4, 5, 6, 7, 8, 0]
    assert solution.total_distance == pytest.approx(solution_cost(solution, tsp8))
    assert len(solution.trace) == 8


def test_incomplete_solution_cost(two_customer_tw):
    with pytest.raises(IncompleteSolutionError):
        solution_cost([0, 1, 0], two_customer_tw)
    with pytest.raises(IncompleteSolutionError):
        solution_from_state(initial_state(two_customer_tw))


def test_verify_feasible_solution(two_customer_tw):
    report = verify_solution(Solution([0, 1, 2, 0], 20.0), two_customer_tw)
    assert report.ok
    assert report.distance == pytest.approx(20.0)
    assert [r.node for r in report.trace] == [1, 2, 0]


def test_verify_reports_window_and_capacity(two_customer_tw, tight_cvrp):
    report = verify_solution([0, 2, 1, 0], two_customer_tw)
    assert [v.kind for v in report.violations] == ['time_window']
    assert report.violations[0].node == 1
    report = verify_solution([0, 1, 2, 0], tight_cvrp)
    assert [v.kind for v in report.violations] == ['capacity']


def test_verify_reports_coverage(two_customer_tw):
    report = verify_solution([0, 1, 1, 0], two_customer_tw)
    kinds = [v.kind for v in report.violations]
    assert 'coverage' in kinds
    messages = ' '.join(v.message for v in report.violations)
    assert 'never visited' in messages and 'visited 2 times' in messages


def test_solution_dict_round_trip(two_customer_tw):
    solution = replay_solution([1, 2, 0], two_customer_tw)
    rebuilt = Solution.from_dict(solution.to_dict())
    assert rebuilt.nodes == solution.nodes
    assert rebuilt.total_distance == solution.total_distance


def test_random_feasible_walk_verifies(cvrptw8, cvrp8):
    rng = np.random.default_rng(0)
    for inst in (cvrptw8, cvrp8):
        state = initial_state(inst)
        while not is_terminal(state):
            state = apply_action(state, int(rng.choice(feasible_actions(state).actions)))
        solution = solution_from_state(state)
        report = verify_solution(solution, inst)
        assert report.ok, repr(report)
        assert report.distance == pytest.approx(solution.total_distance)
