"""Oracle Module
Contains:
    * Exact solvers for small instances: `exact_tsp` (Held-Karp), `brute_force_tsp`, `exact_vrp`
    * Numeric checks returning an `OracleReport`: `canonical_scorer_check`, `centering_check`,
      `soft_top1_limit_check`, `exact_gap_check`
    * `finite_diff_grad`, central differences against the analytic policy gradient

"""
from __future__ import annotations
import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ._constants import Constants as const
from ._consequences import ConsequenceTable, center
from ._diagnostics import customer_distribution
from ._exceptions import ConfigError, ContractViolationError, OracleSizeError
from ._generator import generate_dataset
from ._inference import Sampler, gap_percent, greedy_decode, rollout
from ._instances import RoutingInstance, TaskKind
from ._mdp import Solution, replay_solution, verify_solution
from ._policy import LincPolicy, PolicyConfig, Trajectory, VariantFlags, logprob_and_grad, trajectory_log_prob
from ._training import group_mean_advantage, soft_top1_advantage

logger = logging.getLogger(__name__)


@dataclass
class OracleReport:
    """Outcome of a numeric check. `passed` is False as soon as one trial exceeds the tolerance."""
    name: str
    trials: int = 0
    max_error: float = 0.0
    tolerance: float = 0.0
    failures: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, error:float, message:str) -> None:
        """Count one trial; a failure is kept when `error` exceeds the tolerance"""
        self.trials += 1
        self.max_error = max(self.max_error, float(error))
        if not error <= self.tolerance:
            self.failures.append(message)

    def to_dict(self) -> dict:
        return {'name': self.name, 'passed': self.passed, 'trials': self.trials, 'max_error': self.max_error,
                'tolerance': self.tolerance, 'failures': self.failures[:20], 'details': self.details}

    def __repr__(self) -> str:
        status = 'PASS' if self.passed else f'FAIL ({len(self.failures)} failing trial(s))'
        first = f"\n        First Failure:                          {self.failures[0]}" if self.failures else ''
        report = f"""
        --------------------------------------------------------------------
        Oracle Check: {self.name}
        --------------------------------------------------------------------
        Status:                                 {status}
        Trials:                                 {self.trials}
        Max Error:                              {self.max_error :0.3e}
        Tolerance:                              {self.tolerance :0.1e}{first}
        --------------------------------------------------------------------
        """
        return report


# Exact solvers
def exact_tsp(inst:RoutingInstance) -> Solution:
    """Optimal tour by the Held-Karp dynamic program over customer subsets.

    Args:
        inst (RoutingInstance): TSP instance with at most `EXACT_TSP_MAX` customers

    Raises:
        ConfigError: Not a TSP instance
        OracleSizeError: Too many customers

    Returns:
        Solution: An optimal tour from and back to node 0
    """
    if inst.task is not TaskKind.TSP:
        raise ConfigError(f'exact_tsp needs a TSP instance, got {inst.task.value}')
    n = inst.n_customers
    if n > const.EXACT_TSP_MAX:
        raise OracleSizeError(f'exact_tsp handles at most {const.EXACT_TSP_MAX} customers, got {n}')
    dist = inst.distances
    inner = dist[1:, 1:]
    full = (1 << n) - 1
    cost = np.full((1 << n, n), np.inf)
    parent = np.full((1 << n, n), -1, dtype=int)
    for j in range(n):
        cost[1 << j, j] = dist[0, j + 1]
    bits = 1 << np.arange(n)
    for subset in range(1, full):
        row = cost[subset]
        if not np.isfinite(row).any():
            continue
        # best predecessor for every extension target
        extended = row[:, None] + inner
        best = extended.argmin(axis=0)
        value = extended[best, np.arange(n)]
        targets = np.flatnonzero((subset & bits) == 0)
        nxt = subset | bits[targets]
        better = value[targets] < cost[nxt, targets]
        cost[nxt[better], targets[better]] = value[targets][better]
        parent[nxt[better], targets[better]] = best[targets][better]
    closing = cost[full] + dist[1:, 0]
    last = int(np.argmin(closing))
    order, subset = [], full
    while last >= 0:
        order.append(last + 1)
        previous = int(parent[subset, last])
        subset ^= 1 << last
        last = previous
    nodes = [const.DEPOT] + order[::-1] + [const.DEPOT]
    return replay_solution(nodes, inst)


def brute_force_tsp(inst:RoutingInstance) -> Solution:
    """Minimum over every customer permutation (cross-check for `exact_tsp`).

    Raises:
        OracleSizeError: More than `BRUTE_FORCE_MAX` customers
    """
    n = inst.n_customers
    if n > const.BRUTE_FORCE_MAX:
        raise OracleSizeError(f'brute_force_tsp handles at most {const.BRUTE_FORCE_MAX} customers, got {n}')
    dist = inst.distances
    best, best_order = math.inf, None
    for order in itertools.permutations(range(1, n + 1)):
        nodes = (const.DEPOT,) + order + (const.DEPOT,)
        value = float(dist[nodes[:-1], nodes[1:]].sum())
        if value < best:
            best, best_order = value, nodes
    return replay_solution(list(best_order), inst)


def exact_vrp(inst:RoutingInstance, prune:bool=True) -> Solution:
    """Minimum-distance CVRP/CVRPTW solution by depth-first enumeration.

    Customers are tried in order of window opening; routes are generated in increasing order of
    their first customer, so every solution is enumerated once. With `prune`, a branch stops when
    its distance plus the return leg reaches the best complete cost found so far.

    Args:
        inst (RoutingInstance): CVRP or CVRPTW instance with at most `EXACT_VRP_MAX` customers
        prune (bool, optional): Use the distance bound. Defaults to True.

    Raises:
        ConfigError: TSP instance
        OracleSizeError: Too many customers
        ContractViolationError: No feasible solution exists

    Returns:
        Solution: An optimal solution
    """
    if not inst.has_capacity:
        raise ConfigError(f'exact_vrp needs a CVRP or CVRPTW instance, got {inst.task.value}')
    n = inst.n_customers
    if n > const.EXACT_VRP_MAX:
        raise OracleSizeError(f'exact_vrp handles at most {const.EXACT_VRP_MAX} customers, got {n}')
    dist, times = inst.distances, inst.travel_times
    demands, capacity, load_tol = inst.demands, float(inst.capacity), inst.load_tol
    windows = inst.has_time_windows
    time_tol = inst.feasibility_tol
    horizon = inst.horizon_Tmax if windows else math.inf
    order = sorted(range(1, n + 1), key=lambda j: (inst.window_open[j], j))
    best = {'cost': math.inf, 'nodes': None}
    path = [const.DEPOT]
    visited = [False] * (n + 1)

    def feasible(current:int, clock:float, load:float, j:int) -> float|None:
        if load + demands[j] > capacity + load_tol:
            return None
        if not windows:
            return 0.0
        arrival = clock + times[current, j]
        if arrival > inst.window_close[j] + time_tol:
            return None
        departure = max(arrival, inst.window_open[j]) + inst.service_times[j]
        if departure + times[j, const.DEPOT] > horizon + time_tol:
            return None
        return departure

    def search(current:int, clock:float, load:float, distance:float, served:int, route_first:int, last_first:int) -> None:
        if prune and distance + dist[current, const.DEPOT] >= best['cost']:
            return
        if served == n:
            total = distance + dist[current, const.DEPOT]
            if total < best['cost']:
                best['cost'] = total
                best['nodes'] = path + [const.DEPOT]
            return
        for j in order:
            if visited[j]:
                continue
            if current == const.DEPOT and j <= last_first:
                continue
            departure = feasible(current, clock, load, j)
            if departure is None:
                continue
            visited[j] = True
            path.append(j)
            first = j if current == const.DEPOT else route_first
            search(j, departure, load + demands[j], distance + dist[current, j], served + 1, first, last_first)
            path.pop()
            visited[j] = False
        if current != const.DEPOT:
            path.append(const.DEPOT)
            search(const.DEPOT, 0.0, 0.0, distance + dist[current, const.DEPOT], served, -1, route_first)
            path.pop()

    search(const.DEPOT, 0.0, 0.0, 0.0, 0, -1, 0)
    if best['nodes'] is None:
        raise ContractViolationError(f"instance '{inst.name}' has no feasible solution")
    logger.debug('exact_vrp %s: cost %.6f', inst.name, best['cost'])
    return replay_solution(best['nodes'], inst)


def exact_solve(inst:RoutingInstance) -> Solution:
    """`exact_tsp` for TSP instances, `exact_vrp` otherwise"""
    return exact_tsp(inst) if inst.task is TaskKind.TSP else exact_vrp(inst)


# Numeric checks
def _linear_scorer(x:np.ndarray, a:np.ndarray, b:np.ndarray) -> np.ndarray:
    return x @ a + (x.sum(axis=0) - x) @ b


def canonical_scorer_check(m:int|None=None, p:int|None=None, trials:int=const.ORACLE_TRIALS, seed:int=0,
                           tolerance:float=const.CANONICAL_TOL) -> OracleReport:
    """Verify the canonical permutation-equivariant linear scorer identity.

    With `b = -a / (m-1)`, the scorer `l_j(X) = a.x_j + b.sum_{u != j} x_u` must equal
    `m/(m-1) * a.(x_j - mean(X))`, sum to zero over `j` and permute with the rows of `X`.

    Args:
        m (int | None, optional): Set size (>= 2). Defaults to None (drawn from 2..8 per trial).
        p (int | None, optional): Feature width. Defaults to None (drawn from 1..6 per trial).
        trials (int, optional): Random trials. Defaults to `ORACLE_TRIALS`.
        seed (int, optional): Random seed. Defaults to 0.
        tolerance (float, optional): Absolute tolerance. Defaults to 1e-10.

    Raises:
        ConfigError: `m < 2`

    Returns:
        OracleReport: Largest deviation over all identities
    """
    if m is not None and m < 2:
        raise ConfigError(f'canonical scorer check needs m >= 2, got {m}')
    rng = np.random.default_rng(seed)
    report = OracleReport('canonical_scorer', tolerance=tolerance)
    for trial in range(trials):
        size = m if m is not None else int(rng.integers(2, 9))
        width = p if p is not None else int(rng.integers(1, 7))
        a = rng.normal(size=width)
        b = -a / (size - 1)
        x = rng.normal(size=(size, width))
        scores = _linear_scorer(x, a, b)
        canonical = size / (size - 1) * ((x - x.mean(axis=0)) @ a)
        perm = rng.permutation(size)
        error = max(float(np.abs(scores - canonical).max()), abs(float(scores.sum())),
                    float(np.abs(_linear_scorer(x[perm], a, b) - scores[perm]).max()))
        report.record(error, f'trial {trial} (m={size}, p={width}): deviation {error:.3e}')
    return report


def _random_table(rng:np.random.Generator, size:int, width:int) -> ConsequenceTable:
    x_rel = rng.normal(size=(size, width))
    x_abs = rng.uniform(-1.0, 1.0, size=(size, 1))
    return ConsequenceTable(np.arange(1, size + 1), x_rel, x_abs, x_rel.mean(axis=0), x_rel.copy(), False, False)


def centering_check(trials:int=const.ORACLE_TRIALS, seed:int=0, policy:LincPolicy|None=None, instances:int=3,
                    tolerance:float=const.CENTERING_TOL) -> OracleReport:
    """Verify that centering forgets shared offsets and commutes with candidate permutations.

    Random tables (m in 2..32, p in 1..6) are shifted by random shared offsets and permuted. The
    policy part replays greedy trajectories on small generated CVRPTW instances and compares the
    customer distributions of the original and shifted tables with the step summary held fixed.

    Args:
        trials (int, optional): Random table trials. Defaults to `ORACLE_TRIALS`.
        seed (int, optional): Random seed. Defaults to 0.
        policy (LincPolicy | None, optional): Centered policy for the downstream part. Defaults to a small random CVRPTW policy.
        instances (int, optional): Generated instances for the downstream part. Defaults to 3.
        tolerance (float, optional): Absolute tolerance. Defaults to 1e-12.

    Returns:
        OracleReport: Largest deviation; `details` splits table and policy deviations
    """
    rng = np.random.default_rng(seed)
    report = OracleReport('centering', tolerance=tolerance)
    table_error = 0.0
    for trial in range(trials):
        size, width = int(rng.integers(2, 33)), int(rng.integers(1, 7))
        table = center(_random_table(rng, size, width))
        delta = rng.normal(scale=10.0, size=width)
        shifted = table.with_offset(delta)
        perm = rng.permutation(size)
        permuted = center(replace(table, x_rel=table.x_rel[perm], x_abs=table.x_abs[perm]))
        error = max(float(np.abs(shifted.x_rel_centered - table.x_rel_centered).max()),
                    float(np.abs(permuted.x_rel_centered - table.x_rel_centered[perm]).max()))
        table_error = max(table_error, error)
        report.record(error, f'table trial {trial} (m={size}, p={width}): deviation {error:.3e}')

    if policy is None:
        policy = LincPolicy(PolicyConfig(task=const.CVRPTW, embedding_dim=16, attention_heads=4, feed_forward_hidden=32,
                                         modulation_hidden=16, comparator_hidden=16, rollout_code_dim=4, seed=seed))
    flags = replace(policy.flags, centering=True)
    policy_error = 0.0
    for inst in generate_dataset(instances, 8, seed, policy.task):
        _, trajectory = rollout(policy, inst, flags=flags)
        with torch.no_grad():
            encoding = policy.encode(inst, None, flags)
            for index, step in enumerate(trajectory.steps):
                if step.mask.customers.size == 0:
                    continue
                delta = rng.normal(scale=10.0, size=step.table.x_rel.shape[1])
                base = policy.decode_step(encoding, step.state, step.mask, step.table, step.summary, flags=flags)
                moved = policy.decode_step(encoding, step.state, step.mask, step.table.with_offset(delta), step.summary, flags=flags)
                error = float(np.abs(customer_distribution(base.log_probs.numpy(), step.mask)
                                     - customer_distribution(moved.log_probs.numpy(), step.mask)).max())
                policy_error = max(policy_error, error)
                report.record(error, f"{inst.name} step {index}: probability deviation {error:.3e}")
    report.details = {'table_max_error': table_error, 'policy_max_error': policy_error}
    return report


def soft_top1_limit_check(trials:int=const.ORACLE_TRIALS, seed:int=0, k_values=(2, 4, 8, 128),
                          tau:float=const.SOFT_TOP1_LIMIT_TAU, tolerance:float=const.SOFT_TOP1_TOL) -> OracleReport:
    """Verify that soft top-1 advantages reduce to group-mean advantages at large temperature.

    Costs are uniform on `[1, 100]` scaled by their median; every trial also checks that equal
    costs give zero advantage at `tau` in `{0.25, 1, 4, tau}`.

    Returns:
        OracleReport: Largest absolute deviation
    """
    rng = np.random.default_rng(seed)
    report = OracleReport('soft_top1_limit', tolerance=tolerance)
    k_values = list(k_values)
    for trial in range(trials):
        k = k_values[trial % len(k_values)]
        costs = rng.uniform(1.0, 100.0, size=k)
        s_scale = float(np.median(costs))
        error = float(np.abs(soft_top1_advantage(costs, tau, s_scale) - group_mean_advantage(costs, s_scale)).max())
        equal = np.full(k, float(costs[0]))
        for t in (0.25, 1.0, 4.0, tau):
            error = max(error, float(np.abs(soft_top1_advantage(equal, t, s_scale)).max()))
        report.record(error, f'trial {trial} (K={k}): deviation {error:.3e}')
    return report


def exact_gap_check(policy:LincPolicy|None=None, instances:int=5, customers:int=6, seed:int=0) -> OracleReport:
    """Compare greedy decoding against the exact optimum on small generated instances.

    The check fails when a greedy solution is infeasible or cheaper than the optimum; the gaps
    themselves are measurements in `details`.

    Returns:
        OracleReport: Error is the amount by which greedy beats the optimum (0 when sound)
    """
    if policy is None:
        policy = LincPolicy(PolicyConfig(task=const.CVRPTW, embedding_dim=16, attention_heads=4, feed_forward_hidden=32,
                                         modulation_hidden=16, comparator_hidden=16, rollout_code_dim=4, seed=seed))
    report = OracleReport('exact_gap', tolerance=1e-9)
    gaps = []
    for inst in generate_dataset(instances, customers, seed, policy.task):
        optimum = exact_solve(inst)
        greedy = greedy_decode(inst, policy)
        verdict = verify_solution(greedy, inst)
        if not verdict.ok:
            report.failures.append(f'{inst.name}: greedy solution infeasible: {verdict.violations[0].message}')
        gap = gap_percent(greedy.total_distance, optimum.total_distance)
        gaps.append(gap)
        report.record(max(0.0, optimum.total_distance - greedy.total_distance),
                      f'{inst.name}: greedy {greedy.total_distance:.6f} below optimum {optimum.total_distance:.6f}')
    report.details = {'gaps_percent': gaps, 'mean_gap_percent': float(np.mean(gaps)) if gaps else float('nan')}
    return report


# Gradient oracle
@dataclass
class GradientCheck:
    """Worst central-difference disagreement of one gradient check."""
    max_relative_error: float
    parameter: str
    index: int
    analytic: float
    numeric: float
    checked: int

    def __repr__(self) -> str:
        return (f"GradientCheck(max_relative_error={self.max_relative_error:.3e} at {self.parameter}[{self.index}], "
                f"analytic={self.analytic:.6g}, numeric={self.numeric:.6g}, checked={self.checked})")


def finite_diff_grad(policy:LincPolicy, trajectory:Trajectory, h:float=const.FINITE_DIFF_STEP,
                     flags:VariantFlags|None=None, parameters:list[str]|None=None,
                     entries_per_parameter:int|None=None, seed:int=0) -> GradientCheck:
    """Compare the analytic log-probability gradient with central differences.

    The relative error of an entry is `|a - n| / max(|a|, |n|, FINITE_DIFF_FLOOR)`. The policy is
    perturbed on a private copy and never modified.

    Args:
        policy (LincPolicy): Policy to check
        trajectory (Trajectory): Recorded trajectory (actions and features held fixed)
        h (float, optional): Step, within `[1e-6, 1e-4]`. Defaults to 1e-5.
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.
        parameters (list[str] | None, optional): Name prefixes to check. Defaults to None (all).
        entries_per_parameter (int | None, optional): Random subset size per parameter tensor. Defaults to None (every entry).
        seed (int, optional): Seed of the subset draw. Defaults to 0.

    Raises:
        ConfigError: Step outside `[1e-6, 1e-4]`

    Returns:
        GradientCheck: Worst entry
    """
    if not 1e-6 <= h <= 1e-4:
        raise ConfigError(f'finite difference step must lie in [1e-6, 1e-4], got {h}')
    _, analytic = logprob_and_grad(trajectory, policy, flags)
    analytic_vector = analytic.vector.numpy()
    probe = policy.copy()
    base = probe.flat_parameters()
    rng = np.random.default_rng(seed)
    worst = GradientCheck(0.0, '', -1, 0.0, 0.0, 0)
    checked = 0

    def evaluate(vector:torch.Tensor) -> float:
        probe.load_flat_parameters(vector)
        with torch.no_grad():
            return float(trajectory_log_prob(probe, trajectory, flags))

    for name, start, stop in probe.parameter_slices():
        if parameters is not None and not any(name.startswith(prefix) for prefix in parameters):
            continue
        indices = np.arange(start, stop)
        if entries_per_parameter is not None and indices.size > entries_per_parameter:
            indices = np.sort(rng.choice(indices, size=entries_per_parameter, replace=False))
        for flat_index in indices:
            plus, minus = base.clone(), base.clone()
            plus[flat_index] += h
            minus[flat_index] -= h
            numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * h)
            a = float(analytic_vector[flat_index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), const.FINITE_DIFF_FLOOR)
            checked += 1
            if error > worst.max_relative_error or worst.index < 0:
                worst = GradientCheck(error, name, int(flat_index - start), a, numeric, 0)
    worst.checked = checked
    return worst


def gradient_check(trials:int=5, seed:int=0, customers:int=5, tolerance:float=const.GRADIENT_TOL,
                   entries_per_parameter:int|None=4) -> OracleReport:
    """`finite_diff_grad` on random small CVRPTW networks (`d=8`) and sampled trajectories."""
    report = OracleReport('gradient', tolerance=tolerance)
    for trial in range(trials):
        config = PolicyConfig(task=const.CVRPTW, embedding_dim=8, attention_heads=2, feed_forward_hidden=16,
                              modulation_hidden=8, comparator_hidden=8, rollout_code_dim=4, seed=seed + trial)
        policy = LincPolicy(config, VariantFlags(clip_logits=True))
        inst = generate_dataset(1, customers, seed + trial, TaskKind.CVRPTW)[0]
        rng = np.random.default_rng([seed, trial])
        code = rng.integers(0, 2, size=config.rollout_code_dim).astype(np.float64)
        _, trajectory = rollout(policy, inst, Sampler(rng), code)
        check = finite_diff_grad(policy, trajectory, entries_per_parameter=entries_per_parameter, seed=seed + trial)
        report.record(check.max_relative_error, f'trial {trial}: {check!r}')
    return report
