"""Routing Instance Module
Contains:
    * Distance helpers (`euc2d_distance`, `pairwise_distances`)
    * Immutable problem data `CustomerRecord` and `RoutingInstance`
    * `validate_instance` and its `ValidationReport`

"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from ._constants import Constants as const


class TaskKind(str, Enum):
    """Routing problem family."""
    TSP = const.TSP
    CVRP = const.CVRP
    CVRPTW = const.CVRPTW


class DistanceRule(str, Enum):
    """How coordinates become travel distances."""
    EXACT = const.EXACT
    EUC2D_ROUNDED = const.EUC2D_ROUNDED
    TRUNCATED_1DP = const.TRUNCATED_1DP


def _round_half_up(value):
    return np.floor(value + 0.5)


def _apply_rule(value, rule:DistanceRule|str):
    rule = DistanceRule(rule)
    if rule is DistanceRule.EUC2D_ROUNDED:
        return _round_half_up(value)
    if rule is DistanceRule.TRUNCATED_1DP:
        return np.floor(value * 10.0) / 10.0
    return value


def euc2d_distance(a:tuple[float, float], b:tuple[float, float], rule:DistanceRule|str=DistanceRule.EXACT) -> float:
    """Euclidean distance between two points under a distance rule.

    Args:
        a (tuple[float, float]): First coordinate `(x, y)`
        b (tuple[float, float]): Second coordinate `(x, y)`
        rule (DistanceRule | str, optional): `Exact`, `Euc2dRounded` (TSPLIB nint, ties round
            half-up) or `Truncated1dp` (truncated to one decimal, the Solomon literature convention). Defaults to `Exact`.

    Returns:
        float: Distance between `a` and `b`
    """
    value = math.sqrt((a[0] - b[0])**2 + (a[1] - b[1])**2)
    return float(_apply_rule(value, rule))


def pairwise_distances(points:np.ndarray, others:np.ndarray|None=None, rule:DistanceRule|str=DistanceRule.EXACT) -> np.ndarray:
    """Vectorised `euc2d_distance` over all point pairs.

    Args:
        points (np.ndarray): `(m, 2)` coordinates
        others (np.ndarray | None, optional): `(k, 2)` coordinates. Defaults to None, meaning `points`.
        rule (DistanceRule | str, optional): Distance rule. Defaults to `Exact`.

    Returns:
        np.ndarray: `(m, k)` distance matrix
    """
    points = np.asarray(points, dtype=np.float64)
    others = points if others is None else np.asarray(others, dtype=np.float64)
    dx = points[:, None, 0] - others[None, :, 0]
    dy = points[:, None, 1] - others[None, :, 1]
    return _apply_rule(np.sqrt(dx**2 + dy**2), rule)


@dataclass(frozen=True)
class CustomerRecord:
    """One customer: position, demand, time window and service time."""
    position: tuple[float, float]
    demand: float = 0.0
    window_open_e: float = 0.0
    window_close_l: float = math.inf
    service_time_s: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'position', (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class RoutingInstance:
    """Immutable problem data shared by every rollout on the instance.

    Node ids: `0` is the depot (the start node for TSP), customers are `1..n` in list order.
    Travel time between two nodes is `time_coef * distance`.
    """
    task: TaskKind
    depot: tuple[float, float]
    customers: tuple[CustomerRecord, ...]
    capacity: float|None = None
    horizon_Tmax: float|None = None
    spatial_scale_S: float|None = None
    name: str = 'instance'
    distance_rule: DistanceRule = DistanceRule.EXACT
    time_coef: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'task', TaskKind(self.task))
        object.__setattr__(self, 'distance_rule', DistanceRule(self.distance_rule))
        object.__setattr__(self, 'depot', (float(self.depot[0]), float(self.depot[1])))
        object.__setattr__(self, 'customers', tuple(self.customers))

    # Getters
    @property
    def n_customers(self) -> int:
        """Number of customers `n` (nodes excluding the depot)"""
        return len(self.customers)

    @property
    def n_nodes(self) -> int:
        """Number of nodes including the depot"""
        return len(self.customers) + 1

    @property
    def has_capacity(self) -> bool:
        return self.task in (TaskKind.CVRP, TaskKind.CVRPTW)

    @property
    def has_time_windows(self) -> bool:
        return self.task is TaskKind.CVRPTW

    @cached_property
    def coordinates(self) -> np.ndarray:
        """`(n+1, 2)` coordinates, depot first"""
        return np.array([self.depot] + [c.position for c in self.customers], dtype=np.float64)

    @cached_property
    def demands(self) -> np.ndarray:
        """`(n+1,)` demands, depot entry 0"""
        return np.array([0.0] + [c.demand for c in self.customers], dtype=np.float64)

    @cached_property
    def window_open(self) -> np.ndarray:
        """`(n+1,)` window opening times, depot entry 0"""
        return np.array([0.0] + [c.window_open_e for c in self.customers], dtype=np.float64)

    @cached_property
    def window_close(self) -> np.ndarray:
        """`(n+1,)` window closing times, depot entry `T_max` (or inf)"""
        horizon = self.horizon_Tmax if self.horizon_Tmax is not None else math.inf
        return np.array([horizon] + [c.window_close_l for c in self.customers], dtype=np.float64)

    @cached_property
    def service_times(self) -> np.ndarray:
        """`(n+1,)` service times, depot entry 0"""
        return np.array([0.0] + [c.service_time_s for c in self.customers], dtype=np.float64)

    @cached_property
    def distances(self) -> np.ndarray:
        """`(n+1, n+1)` distance matrix under the instance distance rule"""
        return pairwise_distances(self.coordinates, rule=self.distance_rule)

    @cached_property
    def travel_times(self) -> np.ndarray:
        """`(n+1, n+1)` travel time matrix, `time_coef * distances`"""
        return self.time_coef * self.distances

    @cached_property
    def diameter(self) -> float:
        """Largest pairwise distance, 1.0 for degenerate single-point instances"""
        value = float(self.distances.max()) if self.n_nodes > 1 else 0.0
        return value if value > 0 else 1.0

    @property
    def time_scale(self) -> float:
        """Normaliser for temporal features: `T_max` when defined"""
        if self.horizon_Tmax is not None and self.horizon_Tmax > 0:
            return float(self.horizon_Tmax)
        return 1.0

    @property
    def feasibility_tol(self) -> float:
        return const.FEASIBILITY_TOL * max(1.0, self.horizon_Tmax or 1.0)

    @property
    def load_tol(self) -> float:
        return const.FEASIBILITY_TOL * max(1.0, self.capacity or 1.0)

    def __repr__(self) -> str:
        extras = []
        if self.capacity is not None:
            extras.append(f"capacity={self.capacity:g}")
        if self.horizon_Tmax is not None:
            extras.append(f"T_max={self.horizon_Tmax:g}")
        extra = (', ' + ', '.join(extras)) if extras else ''
        return f"RoutingInstance({self.task.value} '{self.name}', n={self.n_customers}{extra}, {self.distance_rule.value})"


@dataclass
class ValidationReport:
    """Outcome of `validate_instance`. Empty `violations` means the instance is valid."""
    instance_name: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __repr__(self) -> str:
        if self.ok:
            return f"ValidationReport('{self.instance_name}': OK)"
        lines = '\n'.join(f"  - {v}" for v in self.violations)
        return f"ValidationReport('{self.instance_name}': {len(self.violations)} violation(s))\n{lines}"


def validate_instance(inst:RoutingInstance) -> ValidationReport:
    """Check every `RoutingInstance` invariant plus single-customer reachability for CVRPTW.

    Args:
        inst (RoutingInstance): Instance to check

    Returns:
        ValidationReport: Violations found, never raises
    """
    report = ValidationReport(inst.name)
    violations = report.violations
    if inst.n_customers < 1:
        violations.append('instance has no customers')
    if inst.has_capacity:
        if inst.capacity is None or not inst.capacity > 0:
            violations.append(f'{inst.task.value} instance needs a positive capacity')
    if inst.has_time_windows and (inst.horizon_Tmax is None or not inst.horizon_Tmax > 0):
        violations.append('CVRPTW instance needs horizon_Tmax > 0')
    if not np.all(np.isfinite(inst.coordinates)):
        violations.append('non-finite coordinates')

    tol = inst.feasibility_tol
    for j, customer in enumerate(inst.customers, start=1):
        if customer.demand < 0:
            violations.append(f'customer {j}: negative demand {customer.demand:g}')
        if inst.has_capacity and inst.capacity is not None and customer.demand > inst.capacity + inst.load_tol:
            violations.append(f'customer {j}: demand {customer.demand:g} exceeds capacity {inst.capacity:g}')
        if customer.window_open_e < 0:
            violations.append(f'customer {j}: window opens before 0 ({customer.window_open_e:g})')
        if customer.window_open_e > customer.window_close_l:
            violations.append(f'customer {j}: window open {customer.window_open_e:g} after close {customer.window_close_l:g}')
        if customer.service_time_s < 0:
            violations.append(f'customer {j}: negative service time')

    if inst.has_time_windows and inst.horizon_Tmax is not None and inst.horizon_Tmax > 0:
        times = inst.travel_times
        for j in range(1, inst.n_nodes):
            arrival = 0.0 + times[0, j]
            if arrival > inst.window_close[j] + tol:
                violations.append(f'customer {j}: unreachable, earliest arrival {arrival:g} after window close {inst.window_close[j]:g}')
                continue
            completion = max(arrival, inst.window_open[j]) + inst.service_times[j] + times[j, 0]
            if completion > inst.horizon_Tmax + tol:
                violations.append(f'customer {j}: return to depot at {completion:g} exceeds horizon {inst.horizon_Tmax:g}')
    return report
