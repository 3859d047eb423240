"""Local consequence features.

For every feasible customer the one-step effect of choosing it (travel, wait, slack, arrival,
departure, load) is computed from the transition equations, normalized, and centered on the
feasible-set mean. The feasible-set aggregate `StepSummary` feeds the context modulation.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from ._constants import Constants as const
from ._exceptions import ConfigError
from ._instances import TaskKind
from ._mdp import ActionMask, ConstructionState

logger = logging.getLogger(__name__)

RELATIVE_FEATURES = {
    TaskKind.TSP: ('travel',),
    TaskKind.CVRP: ('travel', 'demand_ratio', 'depot_distance'),
    TaskKind.CVRPTW: ('travel', 'wait', 'slack', 'arrival', 'departure'),
}
ABSOLUTE_FEATURES = ('angle',)
SUMMARY_SIZE = 4


def relative_dim(task:TaskKind|str) -> int:
    """Width `p` of the relative block for a task"""
    return len(RELATIVE_FEATURES[TaskKind(task)])


def phi_dim(task:TaskKind|str) -> int:
    """Width of the candidate vector `[x_abs; x_rel]`"""
    return len(ABSOLUTE_FEATURES) + relative_dim(task)


def summary_dim(task:TaskKind|str, mode:str=const.SUMMARY_STANDARD) -> int:
    """Width of the step summary `r_t` under a summary mode"""
    if mode == const.SUMMARY_FULL_MEAN:
        return relative_dim(task) + 2
    return SUMMARY_SIZE


@dataclass(frozen=True)
class ConsequenceTable:
    """Per-candidate consequence features of one decoding step.

    Rows follow `candidate_ids` (the feasible customers `F_t` in ascending id order). The depot is
    not a row; when `include_depot` is set its candidate vector is `depot_phi`.
    """
    candidate_ids: np.ndarray
    x_rel: np.ndarray
    x_abs: np.ndarray
    mu: np.ndarray
    x_rel_centered: np.ndarray
    include_depot: bool = False
    centered: bool = False

    @property
    def size(self) -> int:
        """Number of customer rows `|F_t|`"""
        return int(self.candidate_ids.size)

    @property
    def depot_row(self) -> np.ndarray:
        """Relative block of the depot: `-mu` when centered, zeros otherwise"""
        return -self.mu if self.centered else np.zeros_like(self.mu)

    @property
    def phi(self) -> np.ndarray:
        """`(|F_t|, q+p)` customer vectors `[x_abs; x_rel]` (centered block when centered)"""
        return np.hstack([self.x_abs, self.x_rel_centered])

    @property
    def depot_phi(self) -> np.ndarray:
        """Depot vector `[0; depot_row]`"""
        return np.concatenate([np.zeros(self.x_abs.shape[1]), self.depot_row])

    def with_offset(self, delta:np.ndarray|float) -> ConsequenceTable:
        """Add a shared offset to every relative row, keeping the centering state.

        Args:
            delta (np.ndarray | float): Per-column offset

        Returns:
            ConsequenceTable: Shifted table
        """
        x_rel = self.x_rel + np.asarray(delta, dtype=np.float64)
        shifted = replace(self, x_rel=x_rel, mu=_column_mean(x_rel), x_rel_centered=x_rel.copy(), centered=False)
        return center(shifted) if self.centered else shifted


def _column_mean(x_rel:np.ndarray) -> np.ndarray:
    if x_rel.shape[0] == 0:
        return np.zeros(x_rel.shape[1])
    return x_rel.mean(axis=0)


def _signed_angle(reference:np.ndarray, vectors:np.ndarray) -> np.ndarray:
    cross = reference[0] * vectors[:, 1] - reference[1] * vectors[:, 0]
    dot = reference[0] * vectors[:, 0] + reference[1] * vectors[:, 1]
    return np.arctan2(cross, dot)


def candidate_features(state:ConstructionState, mask:ActionMask, coords:np.ndarray|None=None) -> ConsequenceTable:
    """Uncentered consequence table over the feasible customers.

    CVRPTW relative block: travel, wait, slack (clipped to [-1, 1]), arrival and departure, all over
    `T_max`. CVRP: travel and depot distance over the instance diameter, and demand over remaining
    capacity (clamped at 1.5). TSP: travel over the diameter. The absolute block is one angle in
    `[-1, 1]`: for CVRPTW the signed depot angle between the current node and the candidate
    (the polar depot angle while at the depot), for CVRP the polar depot angle, for TSP the polar
    angle around the node centroid.

    Args:
        state (ConstructionState): Current state
        mask (ActionMask): Its feasibility mask
        coords (np.ndarray | None, optional): Coordinates for the angle feature (augmented decoding). Defaults to None (instance coordinates).

    Returns:
        ConsequenceTable: Uncentered table; `mu` is the feasible-row mean (0 when `F_t` is empty)
    """
    inst = state.instance
    ids = np.asarray(mask.customers, dtype=int)
    coords = inst.coordinates if coords is None else np.asarray(coords, dtype=np.float64)
    current = state.current_node
    travel = inst.distances[current, ids]

    if inst.task is TaskKind.CVRPTW:
        scale = inst.time_scale
        arrival = state.current_time + inst.travel_times[current, ids]
        wait = np.maximum(0.0, inst.window_open[ids] - arrival)
        slack = np.clip((inst.window_close[ids] - arrival) / scale, const.SLACK_FLOOR, const.SLACK_CEILING)
        departure = arrival + wait + inst.service_times[ids]
        x_rel = np.column_stack([inst.travel_times[current, ids] / scale, wait / scale, slack, arrival / scale, departure / scale])
        heading = coords[current] - coords[const.DEPOT]
        offsets = coords[ids] - coords[const.DEPOT]
        if np.hypot(*heading) > 0:
            angle = _signed_angle(heading, offsets)
        else:
            angle = np.arctan2(offsets[:, 1], offsets[:, 0])
    elif inst.task is TaskKind.CVRP:
        diameter = inst.diameter
        remaining = state.remaining_capacity
        if remaining > 0:
            ratio = np.minimum(inst.demands[ids] / remaining, const.DEMAND_RATIO_CLAMP)
        else:
            ratio = np.full(ids.size, const.DEMAND_RATIO_CLAMP)
        x_rel = np.column_stack([travel / diameter, ratio, inst.distances[const.DEPOT, ids] / diameter])
        offsets = coords[ids] - coords[const.DEPOT]
        angle = np.arctan2(offsets[:, 1], offsets[:, 0])
    else:
        x_rel = (travel / inst.diameter)[:, None]
        offsets = coords[ids] - coords.mean(axis=0)
        angle = np.arctan2(offsets[:, 1], offsets[:, 0])

    x_rel = np.asarray(x_rel, dtype=np.float64).reshape(ids.size, relative_dim(inst.task))
    x_abs = (angle / math.pi).reshape(ids.size, 1)
    return ConsequenceTable(ids, x_rel, x_abs, _column_mean(x_rel), x_rel.copy(), mask.depot_feasible, False)


def center(table:ConsequenceTable) -> ConsequenceTable:
    """Subtract the feasible-set mean from the relative block; the depot row becomes `-mu`.

    Args:
        table (ConsequenceTable): Uncentered table

    Returns:
        ConsequenceTable: Centered table, absolute block untouched
    """
    mu = _column_mean(table.x_rel)
    return replace(table, mu=mu, x_rel_centered=table.x_rel - mu, centered=True)


def build_table(state:ConstructionState, mask:ActionMask, centered:bool=True, coords:np.ndarray|None=None) -> ConsequenceTable:
    """`candidate_features` followed by `center` when requested"""
    table = candidate_features(state, mask, coords)
    return center(table) if centered else table


@dataclass(frozen=True)
class StepSummary:
    """Feasible-set aggregate `r_t`.

    Standard layout `[rho, mean travel, mean wait, min slack]`; CVRP reads the last two entries as
    mean and minimum load-after ratio, TSP pads with zeros. The full-mean layout is
    `[rho, mean of every relative feature, min of the key feature]`.
    """
    values: np.ndarray
    mode: str = const.SUMMARY_STANDARD

    @property
    def rho(self) -> float:
        return float(self.values[0])

    @property
    def mean_travel(self) -> float:
        return float(self.values[1])

    @property
    def mean_wait(self) -> float:
        return float(self.values[2])

    @property
    def min_slack(self) -> float:
        return float(self.values[-1])


def step_summary(table:ConsequenceTable, state:ConstructionState, mode:str=const.SUMMARY_STANDARD) -> StepSummary:
    """Summarize the feasible set of one step.

    Args:
        table (ConsequenceTable): Table of the step (its uncentered block is summarized)
        state (ConstructionState): Current state
        mode (str, optional): `standard`, `full_mean` or `off`. Defaults to `standard`.

    Raises:
        ConfigError: Unknown mode

    Returns:
        StepSummary: Zero vector when `F_t` is empty or the mode is `off`
    """
    if mode not in const.VALID_SUMMARY_MODES:
        raise ConfigError(f"summary mode must be one of {const.VALID_SUMMARY_MODES}, got '{mode}'")
    inst = state.instance
    values = np.zeros(summary_dim(inst.task, mode))
    if mode == const.SUMMARY_OFF or table.size == 0:
        return StepSummary(values, mode)
    rho = table.size / max(inst.n_customers, 1)
    x_rel = table.x_rel
    if inst.task is TaskKind.CVRPTW:
        key = x_rel[:, 2]
    elif inst.task is TaskKind.CVRP:
        key = (state.remaining_capacity - inst.demands[table.candidate_ids]) / inst.capacity
    else:
        key = None
    if mode == const.SUMMARY_FULL_MEAN:
        values[0] = rho
        values[1:-1] = x_rel.mean(axis=0)
        values[-1] = key.min() if key is not None else x_rel[:, 0].min()
    elif inst.task is TaskKind.CVRPTW:
        values[:] = (rho, x_rel[:, 0].mean(), x_rel[:, 1].mean(), key.min())
    elif inst.task is TaskKind.CVRP:
        values[:] = (rho, x_rel[:, 0].mean(), key.mean(), key.min())
    else:
        values[:2] = (rho, x_rel[:, 0].mean())
    return StepSummary(values, mode)


def consequence_frame(table:ConsequenceTable, task:TaskKind|str, step:int|None=None) -> pd.DataFrame:
    """One row per candidate (depot last when included) with raw, centered, absolute features and `mu`.

    Args:
        table (ConsequenceTable): Table to dump
        task (TaskKind | str): Task, for the feature names
        step (int | None, optional): Step index column. Defaults to None (omitted).

    Returns:
        pd.DataFrame: Diagnostic table
    """
    names = RELATIVE_FEATURES[TaskKind(task)]
    ids = list(table.candidate_ids)
    x_rel = table.x_rel
    x_bar = table.x_rel_centered
    x_abs = table.x_abs
    if table.include_depot:
        ids.append(const.DEPOT)
        x_rel = np.vstack([x_rel, np.zeros(len(names))])
        x_bar = np.vstack([x_bar, table.depot_row])
        x_abs = np.vstack([x_abs, np.zeros((1, x_abs.shape[1]))])
    df = pd.DataFrame({'candidate': ids})
    for k, name in enumerate(names):
        df[f'x_rel_{name}'] = x_rel[:, k]
    for k, name in enumerate(names):
        df[f'x_bar_{name}'] = x_bar[:, k]
    for k, name in enumerate(ABSOLUTE_FEATURES):
        df[f'x_abs_{name}'] = x_abs[:, k]
    for k, name in enumerate(names):
        df[f'mu_{name}'] = table.mu[k]
    if step is not None:
        df.insert(0, 'step', step)
    return df
