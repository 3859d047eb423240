"""Construction MDP Module
Contains:
    * `ConstructionState` with `initial_state`, `feasible_actions`, `apply_action`
    * `Solution` and `solution_cost`
    * `verify_solution`, an independent replay reporting every violation

Node ids: `0` is the depot (TSP start node), customers are `1..n`.
"""
from __future__ import annotations
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._constants import Constants as const
from ._exceptions import ContractViolationError, IncompleteSolutionError
from ._instances import RoutingInstance, TaskKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepRecord:
    """Timing and load record of one transition."""
    node: int
    arrival: float
    wait: float
    service_start: float
    departure: float
    load_after: float
    distance_added: float


@dataclass
class ConstructionState:
    """Partial solution of one rollout.

    `visited` is indexed by node id; entry 0 is `True` for TSP (the start node) and always `False`
    for vehicle routing, where the depot may be visited repeatedly.
    """
    instance: RoutingInstance
    visited: np.ndarray
    current_node: int = const.DEPOT
    current_time: float = 0.0
    remaining_capacity: float = 0.0
    route_log: list[int] = field(default_factory=list)
    trace: list[StepRecord] = field(default_factory=list)
    step_index: int = 0
    served_since_depot: int = 0
    total_distance: float = 0.0

    @property
    def n_visited(self) -> int:
        """Number of customers served so far"""
        return int(self.visited[1:].sum())

    @property
    def capacity_ratio(self) -> float:
        """Remaining capacity over vehicle capacity, 0 without capacity"""
        if not self.instance.has_capacity:
            return 0.0
        return self.remaining_capacity / self.instance.capacity

    @property
    def time_ratio(self) -> float:
        """Current time over `T_max`, 0 without time windows"""
        if not self.instance.has_time_windows:
            return 0.0
        return self.current_time / self.instance.time_scale

    def copy(self) -> ConstructionState:
        return ConstructionState(
            self.instance, self.visited.copy(), self.current_node, self.current_time, self.remaining_capacity,
            list(self.route_log), list(self.trace), self.step_index, self.served_since_depot, self.total_distance,
        )

    def __repr__(self) -> str:
        return (f"ConstructionState(t={self.step_index}, node={self.current_node}, "
                f"served={self.n_visited}/{self.instance.n_customers}, time={self.current_time:g}, "
                f"capacity_left={self.remaining_capacity:g}, distance={self.total_distance:g})")


@dataclass
class ActionMask:
    """Feasibility over node ids plus the feasible customer set `F_t` (depot excluded)."""
    feasible: np.ndarray
    customers: np.ndarray

    @property
    def depot_feasible(self) -> bool:
        return bool(self.feasible[const.DEPOT])

    @property
    def actions(self) -> np.ndarray:
        """Feasible node ids in ascending order"""
        return np.flatnonzero(self.feasible)


def initial_state(inst:RoutingInstance) -> ConstructionState:
    """Empty construction at the depot, time 0, full capacity.

    Args:
        inst (RoutingInstance): Problem data

    Returns:
        ConstructionState: Start state; for TSP the start node 0 is already visited
    """
    visited = np.zeros(inst.n_nodes, dtype=bool)
    if inst.task is TaskKind.TSP:
        visited[const.DEPOT] = True
    capacity = float(inst.capacity) if inst.has_capacity else 0.0
    return ConstructionState(inst, visited, remaining_capacity=capacity)


def is_terminal(state:ConstructionState) -> bool:
    """All customers served and, for vehicle routing, back at the depot."""
    if state.n_visited < state.instance.n_customers:
        return False
    return state.instance.task is TaskKind.TSP or state.current_node == const.DEPOT


def feasible_actions(state:ConstructionState) -> ActionMask:
    """Feasibility mask of a non-terminal state.

    Customers need to be unvisited, fit the remaining load and, with time windows, be reachable
    before `l_j` with a depot return by `T_max` afterwards. The depot is selectable away from the
    depot once a customer was served on the current route, and forced when no customer fits.

    Args:
        state (ConstructionState): Current state

    Raises:
        ContractViolationError: Terminal state, or no action at all (unreachable customer)

    Returns:
        ActionMask: Feasible actions
    """
    if is_terminal(state):
        raise ContractViolationError('feasible_actions queried on a terminal state')
    inst = state.instance
    feasible = ~state.visited
    feasible[const.DEPOT] = False
    if inst.has_capacity:
        feasible &= inst.demands <= state.remaining_capacity + inst.load_tol
    if inst.has_time_windows:
        tol = inst.feasibility_tol
        arrival = state.current_time + inst.travel_times[state.current_node]
        completion = np.maximum(arrival, inst.window_open) + inst.service_times + inst.travel_times[:, const.DEPOT]
        feasible &= (arrival <= inst.window_close + tol) & (completion <= inst.horizon_Tmax + tol)
        feasible[const.DEPOT] = False
    customers = np.flatnonzero(feasible)
    if inst.task is not TaskKind.TSP and state.current_node != const.DEPOT:
        if state.served_since_depot >= 1 or customers.size == 0:
            feasible[const.DEPOT] = True
    if not feasible.any():
        raise ContractViolationError(
            f"no feasible action at node {state.current_node} with {inst.n_customers - state.n_visited} customer(s) left; "
            f"instance '{inst.name}' has an unreachable customer")
    return ActionMask(feasible, customers)


def apply_action(state:ConstructionState, action:int) -> ConstructionState:
    """Deterministic transition; the input state is left untouched.

    Args:
        state (ConstructionState): Current state
        action (int): Node id, feasible under `feasible_actions(state)`

    Raises:
        ContractViolationError: Infeasible action

    Returns:
        ConstructionState: Successor state
    """
    action = int(action)
    mask = feasible_actions(state)
    if not 0 <= action < mask.feasible.size or not mask.feasible[action]:
        raise ContractViolationError(f'action {action} is infeasible at node {state.current_node} (step {state.step_index})')
    inst = state.instance
    new = state.copy()
    distance = inst.distances[state.current_node, action]
    arrival = state.current_time + inst.travel_times[state.current_node, action] if inst.has_time_windows else 0.0
    if action == const.DEPOT:
        record = StepRecord(action, arrival, 0.0, arrival, arrival, 0.0, distance)
        new.current_time = 0.0
        new.remaining_capacity = float(inst.capacity)
        new.served_since_depot = 0
    else:
        if inst.has_time_windows:
            wait = max(0.0, inst.window_open[action] - arrival)
            service_start = arrival + wait
            departure = service_start + inst.service_times[action]
            new.current_time = departure
        else:
            wait = service_start = departure = 0.0
        load_after = 0.0
        if inst.has_capacity:
            new.remaining_capacity = state.remaining_capacity - inst.demands[action]
            route_load = state.trace[-1].load_after if state.trace and state.current_node != const.DEPOT else 0.0
            load_after = route_load + inst.demands[action]
        new.visited[action] = True
        new.served_since_depot = state.served_since_depot + 1
        record = StepRecord(action, arrival, wait, service_start, departure, load_after, distance)
    new.current_node = action
    new.total_distance = state.total_distance + distance
    new.route_log.append(action)
    new.trace.append(record)
    new.step_index = state.step_index + 1
    return new


@dataclass
class Solution:
    """Complete solution: node sequence starting and ending at the depot."""
    nodes: list[int]
    total_distance: float
    trace: list[StepRecord] = field(default_factory=list)

    @property
    def routes(self) -> list[list[int]]:
        """Customer sequences between depot visits"""
        routes, current = [], []
        for node in self.nodes:
            if node == const.DEPOT:
                if current:
                    routes.append(current)
                current = []
            else:
                current.append(int(node))
        if current:
            routes.append(current)
        return routes

    def to_dict(self) -> dict:
        return {'routes': self.routes, 'distance': self.total_distance, 'trace': [asdict(r) for r in self.trace]}

    @classmethod
    def from_dict(cls, data:dict) -> Solution:
        """Rebuild from `{routes, distance}`; the trace is not restored."""
        nodes = [const.DEPOT]
        for route in data['routes']:
            nodes.extend(int(node) for node in route)
            nodes.append(const.DEPOT)
        return cls(nodes, float(data.get('distance', float('nan'))))

    def __repr__(self) -> str:
        return f"Solution(routes={len(self.routes)}, distance={self.total_distance:g})"


def solution_from_state(state:ConstructionState) -> Solution:
    """Close a terminal state into a `Solution`; TSP gets its implicit return to the start node.

    Raises:
        IncompleteSolutionError: State is not terminal
    """
    if not is_terminal(state):
        raise IncompleteSolutionError(f'{state.instance.n_customers - state.n_visited} customer(s) not yet served')
    nodes = [const.DEPOT] + list(state.route_log)
    distance = state.total_distance
    if state.instance.task is TaskKind.TSP:
        distance = distance + state.instance.distances[state.current_node, const.DEPOT]
        nodes.append(const.DEPOT)
    return Solution(nodes, float(distance), list(state.trace))


def replay_solution(nodes:list[int], inst:RoutingInstance) -> Solution:
    """Drive the MDP through a node sequence.

    Args:
        nodes (list[int]): Node ids; a leading and (TSP) trailing depot are optional
        inst (RoutingInstance): Problem data

    Raises:
        ContractViolationError: A node is infeasible when it is reached

    Returns:
        Solution: Solution with the MDP trace
    """
    nodes = [int(node) for node in nodes]
    if nodes and nodes[0] == const.DEPOT:
        nodes = nodes[1:]
    if inst.task is TaskKind.TSP and nodes and nodes[-1] == const.DEPOT:
        nodes = nodes[:-1]
    state = initial_state(inst)
    for node in nodes:
        state = apply_action(state, node)
    return solution_from_state(state)


def _coverage_problems(nodes:list[int], inst:RoutingInstance) -> list[tuple[str, int|None, str]]:
    problems = []
    if not nodes or nodes[0] != const.DEPOT or nodes[-1] != const.DEPOT:
        problems.append(('coverage', None, 'sequence must start and end at the depot'))
    counts = np.zeros(inst.n_nodes, dtype=int)
    for node in nodes:
        if not 0 <= node < inst.n_nodes:
            problems.append(('coverage', node, f'unknown node id {node}'))
        else:
            counts[node] += 1
    for j in range(1, inst.n_nodes):
        if counts[j] == 0:
            problems.append(('coverage', j, f'customer {j} is never visited'))
        elif counts[j] > 1:
            problems.append(('coverage', j, f'customer {j} is visited {counts[j]} times'))
    return problems


def solution_cost(sol:Solution|list[int], inst:RoutingInstance) -> float:
    """Total travel distance under the instance distance rule.

    Args:
        sol (Solution | list[int]): Solution or node sequence starting and ending at the depot
        inst (RoutingInstance): Problem data

    Raises:
        IncompleteSolutionError: A customer is missing or repeated, or the depot does not bracket the sequence

    Returns:
        float: Sum of consecutive distances
    """
    nodes = [int(node) for node in (sol.nodes if isinstance(sol, Solution) else sol)]
    problems = _coverage_problems(nodes, inst)
    if problems:
        raise IncompleteSolutionError('; '.join(message for _, _, message in problems))
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        total += inst.distances[a, b]
    return float(total)


@dataclass(frozen=True)
class Violation:
    """One constraint violation found by `verify_solution`."""
    kind: str
    node: int|None
    message: str


@dataclass
class VerificationReport:
    """Outcome of `verify_solution`. Empty `violations` means the solution is feasible."""
    instance_name: str
    violations: list[Violation] = field(default_factory=list)
    trace: list[StepRecord] = field(default_factory=list)
    distance: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __repr__(self) -> str:
        if self.ok:
            return f"VerificationReport('{self.instance_name}': OK, distance={self.distance:g})"
        lines = '\n'.join(f"  - [{v.kind}] {v.message}" for v in self.violations)
        return f"VerificationReport('{self.instance_name}': {len(self.violations)} violation(s))\n{lines}"


def verify_solution(sol:Solution|list[int], inst:RoutingInstance) -> VerificationReport:
    """Replay a solution from scratch and report every coverage, capacity, window and horizon violation.

    The replay does not use the solution trace or the MDP transition.

    Args:
        sol (Solution | list[int]): Solution or node sequence
        inst (RoutingInstance): Problem data

    Returns:
        VerificationReport: Violations and the replayed trace, never raises
    """
    nodes = [int(node) for node in (sol.nodes if isinstance(sol, Solution) else sol)]
    report = VerificationReport(inst.name)
    violations = report.violations
    violations.extend(Violation(*problem) for problem in _coverage_problems(nodes, inst))

    time_tol, load_tol = inst.feasibility_tol, inst.load_tol
    clock, load, distance, current = 0.0, 0.0, 0.0, const.DEPOT
    for position, node in enumerate(nodes[1:], start=1):
        if not 0 <= node < inst.n_nodes:
            continue
        leg = inst.distances[current, node]
        distance += leg
        arrival = clock + inst.travel_times[current, node] if inst.has_time_windows else 0.0
        if node == const.DEPOT:
            if inst.task is TaskKind.TSP and position != len(nodes) - 1:
                violations.append(Violation('coverage', node, f'TSP tour revisits the start node at position {position}'))
            if current == const.DEPOT:
                violations.append(Violation('coverage', node, f'empty route at position {position}'))
            if inst.has_time_windows and arrival > inst.horizon_Tmax + time_tol:
                violations.append(Violation('horizon', current,
                                            f'route ending after customer {current} returns at {arrival:g} > T_max {inst.horizon_Tmax:g}'))
            report.trace.append(StepRecord(node, arrival, 0.0, arrival, arrival, 0.0, leg))
            clock, load = 0.0, 0.0
        else:
            wait = start = departure = 0.0
            if inst.has_time_windows:
                if arrival > inst.window_close[node] + time_tol:
                    violations.append(Violation('time_window', node,
                                                f'customer {node}: arrival {arrival:g} after window close {inst.window_close[node]:g}'))
                wait = max(0.0, inst.window_open[node] - arrival)
                start = arrival + wait
                departure = start + inst.service_times[node]
                clock = departure
            if inst.has_capacity:
                load = load + inst.demands[node]
                if load > inst.capacity + load_tol:
                    violations.append(Violation('capacity', node,
                                                f'customer {node}: route load {load:g} exceeds capacity {inst.capacity:g}'))
            report.trace.append(StepRecord(node, arrival, wait, start, departure, load if inst.has_capacity else 0.0, leg))
        current = node
    report.distance = float(distance)
    return report
