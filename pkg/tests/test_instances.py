import math

import numpy as np
import pytest

from RoutaPy import (CustomerRecord, DistanceRule, RoutingInstance, TaskKind, euc2d_distance, pairwise_distances,
                     validate_instance)


def test_euc2d_distance_rules():
    assert euc2d_distance((0, 0), (3, 4)) == 5.0
    assert euc2d_distance((0, 0), (0, 2.5)) == 2.5
    # nint rounds ties half-up
    assert euc2d_distance((0, 0), (0, 2.5), DistanceRule.EUC2D_ROUNDED) == 3.0
    assert euc2d_distance((0, 0), (0, 2.4), 'Euc2dRounded') == 2.0


def test_pairwise_distances_matches_scalar():
    points = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.5]])
    matrix = pairwise_distances(points, rule=DistanceRule.EUC2D_ROUNDED)
    assert matrix.shape == (3, 3)
    assert np.array_equal(matrix, matrix.T)
    for i in range(3):
        for j in range(3):
            assert matrix[i, j] == euc2d_distance(points[i], points[j], DistanceRule.EUC2D_ROUNDED)


def test_instance_arrays(two_customer_tw):
    inst = two_customer_tw
    assert inst.n_customers == 2 and inst.n_nodes == 3
    assert inst.has_capacity and inst.has_time_windows
    assert inst.demands.tolist() == [0.0, 2.0, 3.0]
    assert inst.window_close.tolist() == [100.0, 10.0, 30.0]
    assert inst.distances[0, 2] == pytest.approx(10.0)
    assert inst.diameter == pytest.approx(10.0)
    assert inst.time_scale == 100.0
    assert 'CVRPTW' in repr(inst)


def test_valid_instance_reports_ok(two_customer_tw, cvrp8, tsp8):
    for inst in (two_customer_tw, cvrp8, tsp8):
        report = validate_instance(inst)
        assert report.ok, repr(report)


def test_validate_reports_every_violation():
    customers = (
        CustomerRecord((1.0, 0.0), demand=-1.0),
        CustomerRecord((0.0, 1.0), demand=9.0, window_open_e=5.0, window_close_l=4.0),
        CustomerRecord((50.0, 0.0), demand=1.0, window_open_e=0.0, window_close_l=10.0),
    )
    inst = RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers, capacity=5.0, horizon_Tmax=40.0)
    report = validate_instance(inst)
    assert not report.ok
    text = ' | '.join(report.violations)
    assert 'negative demand' in text
    assert 'exceeds capacity' in text
    assert 'after close' in text
    assert 'unreachable' in text


def test_validate_missing_capacity_and_horizon():
    customers = (CustomerRecord((1.0, 0.0), demand=1.0),)
    report = validate_instance(RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers))
    assert any('capacity' in v for v in report.violations)
    assert any('horizon' in v for v in report.violations)


def test_horizon_return_violation():
    customers = (CustomerRecord((10.0, 0.0), demand=1.0, window_open_e=0.0, window_close_l=15.0, service_time_s=5.0),)
    inst = RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers, capacity=5.0, horizon_Tmax=20.0)
    report = validate_instance(inst)
    assert any('exceeds horizon' in v for v in report.violations)


def test_unbounded_window_defaults():
    record = CustomerRecord((1, 2))
    assert record.position == (1.0, 2.0)
    assert math.isinf(record.window_close_l)
    inst = RoutingInstance('TSP', (0, 0), (record,))
    assert inst.task is TaskKind.TSP
    assert inst.distance_rule is DistanceRule.EXACT
