import numpy as np
import pytest

from RoutaPy import (ConfigError, Constants, CustomerRecord, RoutingInstance, TaskKind, apply_action, build_table,
                     candidate_features, center, consequence_frame, feasible_actions, initial_state, phi_dim,
                     step_summary, summary_dim)


def _state_after_first(inst):
    state = apply_action(initial_state(inst), 1)
    return state, feasible_actions(state)


def test_cvrptw_relative_features(two_customer_tw):
    state, mask = _state_after_first(two_customer_tw)
    table = candidate_features(state, mask)
    assert table.candidate_ids.tolist() == [2]
    # travel, wait, slack, arrival, departure over T_max = 100
    assert table.x_rel[0] == pytest.approx([0.05, 0.09, 0.19, 0.11, 0.21])
    assert table.include_depot and not table.centered
    assert np.array_equal(table.depot_row, np.zeros(5))


def test_slack_is_clipped_to_unit_range():
    customers = (CustomerRecord((50.0, 0.0), demand=1.0, window_close_l=60.0),
                 CustomerRecord((0.0, 1.0), demand=1.0))
    inst = RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers, capacity=5.0, horizon_Tmax=150.0)
    state = initial_state(inst)
    table = candidate_features(state, feasible_actions(state))
    assert table.x_rel[0, 2] == pytest.approx(10.0 / 150.0)
    assert table.x_rel[1, 2] == 1.0


def test_slack_bounds_follow_constants():
    # windows closing far beyond T_max saturate at the ceiling instead of growing with the close time
    customers = (CustomerRecord((1.0, 0.0), demand=1.0, window_close_l=900.0),
                 CustomerRecord((0.0, 50.0), demand=1.0, window_close_l=400.0))
    inst = RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers, capacity=5.0, horizon_Tmax=100.0)
    state = initial_state(inst)
    slack = candidate_features(state, feasible_actions(state)).x_rel[:, 2]
    assert np.all(slack == Constants.SLACK_CEILING)
    assert np.all(slack >= Constants.SLACK_FLOOR)
    assert np.all(np.isfinite(slack))


def test_centering_zeroes_the_mean(cvrptw8):
    state = initial_state(cvrptw8)
    mask = feasible_actions(state)
    table = build_table(state, mask, centered=True)
    assert table.centered
    assert np.allclose(table.x_rel_centered.mean(axis=0), 0.0, atol=1e-12)
    assert np.array_equal(table.depot_row, -table.mu)
    assert table.phi.shape == (mask.customers.size, phi_dim('CVRPTW'))
    assert np.array_equal(table.x_abs, candidate_features(state, mask).x_abs)


def test_shared_offset_is_forgotten(cvrp8):
    state = initial_state(cvrp8)
    table = center(candidate_features(state, feasible_actions(state)))
    shifted = table.with_offset(np.array([3.0, -2.0, 7.5]))
    assert np.allclose(shifted.x_rel_centered, table.x_rel_centered, atol=1e-12)
    assert np.allclose(shifted.mu, table.mu + np.array([3.0, -2.0, 7.5]))


def test_uncentered_offset_moves_rows(tsp8):
    state = initial_state(tsp8)
    table = candidate_features(state, feasible_actions(state))
    shifted = table.with_offset(0.5)
    assert not shifted.centered
    assert np.allclose(shifted.x_rel_centered, table.x_rel + 0.5)


def test_feature_widths():
    assert [phi_dim(task) for task in ('TSP', 'CVRP', 'CVRPTW')] == [2, 4, 6]
    assert summary_dim('CVRPTW') == 4
    assert summary_dim('CVRPTW', 'full_mean') == 7
    assert summary_dim('TSP', 'full_mean') == 3


def test_step_summary_standard(two_customer_tw):
    state, mask = _state_after_first(two_customer_tw)
    summary = step_summary(candidate_features(state, mask), state)
    assert summary.rho == pytest.approx(0.5)
    assert summary.mean_travel == pytest.approx(0.05)
    assert summary.mean_wait == pytest.approx(0.09)
    assert summary.min_slack == pytest.approx(0.19)


def test_step_summary_off_and_empty(two_customer_tw):
    state = apply_action(initial_state(two_customer_tw), 2)
    mask = feasible_actions(state)
    table = candidate_features(state, mask)
    assert table.size == 0
    assert np.array_equal(step_summary(table, state).values, np.zeros(4))
    state, mask = _state_after_first(two_customer_tw)
    assert np.array_equal(step_summary(candidate_features(state, mask), state, 'off').values, np.zeros(4))
    with pytest.raises(ConfigError):
        step_summary(table, state, 'median')


def test_full_mean_summary(cvrptw8):
    state = initial_state(cvrptw8)
    table = candidate_features(state, feasible_actions(state))
    summary = step_summary(table, state, 'full_mean')
    assert summary.values.size == 7
    assert np.allclose(summary.values[1:-1], table.x_rel.mean(axis=0))
    assert summary.values[-1] == pytest.approx(table.x_rel[:, 2].min())


def test_cvrp_summary_reads_load_ratios(cvrp8):
    state = initial_state(cvrp8)
    mask = feasible_actions(state)
    summary = step_summary(candidate_features(state, mask), state)
    after = (cvrp8.capacity - cvrp8.demands[mask.customers]) / cvrp8.capacity
    assert summary.values[2] == pytest.approx(after.mean())
    assert summary.values[3] == pytest.approx(after.min())


def test_angle_feature_in_unit_range(cvrptw8):
    state = apply_action(initial_state(cvrptw8), int(feasible_actions(initial_state(cvrptw8)).customers[0]))
    table = candidate_features(state, feasible_actions(state))
    assert np.all(np.abs(table.x_abs) <= 1.0)


def test_consequence_frame_lists_depot_last(two_customer_tw):
    state, mask = _state_after_first(two_customer_tw)
    df = consequence_frame(build_table(state, mask), 'CVRPTW', step=1)
    assert df['candidate'].tolist() == [2, 0]
    assert df['step'].tolist() == [1, 1]
    assert df['x_bar_travel'].iloc[1] == pytest.approx(-0.05)
    assert 'x_abs_angle' in df.columns and 'mu_slack' in df.columns
