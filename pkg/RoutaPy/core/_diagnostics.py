"""Mechanism Diagnostics Module
Contains:
    * `translation_probe`: probability drift under shared offsets on the relative features
    * `modulation_curves`: gate value and local-score share along construction progress
    * `feature_weight_groups`: comparator weights grouped by feasible-set size

Every probe replays greedy trajectories read-only and returns a `pandas.DataFrame`.
"""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable

import numpy as np
import pandas as pd
import torch

from ._constants import Constants as const
from ._consequences import ABSOLUTE_FEATURES, RELATIVE_FEATURES
from ._exceptions import ConfigError
from ._inference import rollout
from ._instances import RoutingInstance
from ._mdp import ActionMask
from ._policy import LincPolicy, VariantFlags

logger = logging.getLogger(__name__)

PROBE_VARIANTS = ('centered', 'uncentered')


def customer_distribution(log_probs, mask:ActionMask) -> np.ndarray:
    """Policy probabilities renormalized over the feasible customers (the exchangeable rows)."""
    values = np.asarray(log_probs, dtype=np.float64)[mask.customers]
    if values.size == 0:
        return values
    probs = np.exp(values - values.max())
    return probs / probs.sum()


def total_variation(p:np.ndarray, q:np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def _map_instances(fn:Callable, instances:list, jobs:int) -> list:
    if jobs > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, instances))
    return [fn(inst) for inst in instances]


def _frame(chunks:list[list[dict]], columns:list[str]) -> pd.DataFrame:
    rows = [row for chunk in chunks for row in chunk]
    return pd.DataFrame(rows, columns=columns)


PROBE_COLUMNS = ['instance', 'variant', 'offset', 'step', 'n_candidates', 'drift', 'flip']


def translation_probe(policy:LincPolicy, instances:Iterable[RoutingInstance], offsets=const.PROBE_OFFSETS,
                      variants=PROBE_VARIANTS, clip_logits:bool=True, jobs:int=1) -> pd.DataFrame:
    """Add a shared offset to every relative feature of every candidate and measure the policy drift.

    For each variant the greedy trajectory of the instance is replayed; at every step with at least
    one feasible customer the step summary is held at its unshifted value, the table is shifted by
    each offset and the customer distribution is compared with the unshifted one.

    Args:
        policy (LincPolicy): Policy to probe, left unchanged
        instances (Iterable[RoutingInstance]): Instances of the policy task
        offsets (iterable, optional): Offset magnitudes. Defaults to `PROBE_OFFSETS`.
        variants (iterable, optional): `centered` and/or `uncentered`. Defaults to both.
        clip_logits (bool, optional): Apply the tanh logit clip. Defaults to True.
        jobs (int, optional): Worker threads across instances. Defaults to 1.

    Raises:
        ConfigError: Unknown variant

    Returns:
        pd.DataFrame: `PROBE_COLUMNS`, one row per (instance, variant, offset, step)
    """
    variants = list(variants)
    for variant in variants:
        if variant not in PROBE_VARIANTS:
            raise ConfigError(f"probe variant must be one of {PROBE_VARIANTS}, got '{variant}'")
    offsets = [float(delta) for delta in offsets]

    def probe(inst:RoutingInstance) -> list[dict]:
        rows = []
        for variant in variants:
            flags = replace(policy.flags, centering=variant == 'centered', clip_logits=clip_logits)
            _, trajectory = rollout(policy, inst, flags=flags)
            with torch.no_grad():
                encoding = policy.encode(inst, None, flags)
                for index, step in enumerate(trajectory.steps):
                    if step.mask.customers.size == 0:
                        continue
                    base = policy.decode_step(encoding, step.state, step.mask, step.table, step.summary, flags=flags)
                    p = customer_distribution(base.log_probs.numpy(), step.mask)
                    for delta in offsets:
                        shifted = step.table.with_offset(delta)
                        moved = policy.decode_step(encoding, step.state, step.mask, shifted, step.summary, flags=flags)
                        q = customer_distribution(moved.log_probs.numpy(), step.mask)
                        rows.append({'instance': inst.name, 'variant': variant, 'offset': delta, 'step': index,
                                     'n_candidates': int(step.mask.customers.size), 'drift': total_variation(p, q),
                                     'flip': bool(np.argmax(p) != np.argmax(q))})
        logger.debug('translation probe on %s: %d rows', inst.name, len(rows))
        return rows

    return _frame(_map_instances(probe, list(instances), jobs), PROBE_COLUMNS)


def probe_summary(probe:pd.DataFrame) -> pd.DataFrame:
    """Mean and max drift plus flip counts per variant and offset"""
    grouped = probe.groupby(['variant', 'offset'], sort=True)
    return grouped.agg(mean_drift=('drift', 'mean'), max_drift=('drift', 'max'),
                       flips=('flip', 'sum'), steps=('step', 'count')).reset_index()


MODULATION_COLUMNS = ['instance', 'step', 'progress', 'n_candidates', 'alpha', 'base_term', 'local_term', 'local_share']


def modulation_curves(policy:LincPolicy, instances:Iterable[RoutingInstance], jobs:int=1) -> pd.DataFrame:
    """Gate `alpha_t` and local-score share along greedy trajectories.

    The base term is the mean of `|alpha_t <h_t, k_j>|` and the local term the mean of `|local_j|`
    over feasible actions; the share is `local / (base + local)` (0 when both vanish).

    Args:
        policy (LincPolicy): Policy to inspect, left unchanged
        instances (Iterable[RoutingInstance]): Instances of the policy task
        jobs (int, optional): Worker threads across instances. Defaults to 1.

    Returns:
        pd.DataFrame: `MODULATION_COLUMNS`, one row per step; `progress` is the served fraction before the step
    """
    def curve(inst:RoutingInstance) -> list[dict]:
        rows = []
        _, trajectory = rollout(policy, inst)
        with torch.no_grad():
            encoding = policy.encode(inst)
            for index, step in enumerate(trajectory.steps):
                scores = policy.raw_scores(encoding, step.state, step.mask, step.table, step.summary)
                feasible = torch.as_tensor(step.mask.feasible)
                base_term = float((scores.alpha * scores.base)[feasible].abs().mean())
                local_term = float(scores.local[feasible].abs().mean())
                total = base_term + local_term
                rows.append({'instance': inst.name, 'step': index,
                             'progress': step.state.n_visited / max(inst.n_customers, 1),
                             'n_candidates': int(step.mask.customers.size), 'alpha': float(scores.alpha),
                             'base_term': base_term, 'local_term': local_term,
                             'local_share': local_term / total if total > 0 else 0.0})
        return rows

    return _frame(_map_instances(curve, list(instances), jobs), MODULATION_COLUMNS)


def progress_profile(curves:pd.DataFrame, bins:int=const.PROGRESS_BINS) -> pd.DataFrame:
    """Mean `alpha` and `local_share` per progress bin of `modulation_curves` output"""
    edges = np.linspace(0.0, 1.0, bins + 1)
    binned = curves.assign(progress_bin=pd.cut(curves['progress'], edges, include_lowest=True, right=False).astype(str))
    profile = binned.groupby('progress_bin', sort=False).agg(
        progress=('progress', 'mean'), alpha=('alpha', 'mean'), local_share=('local_share', 'mean'), steps=('step', 'count'))
    return profile.reset_index().sort_values('progress').reset_index(drop=True)


def bucket_labels(buckets=const.FEASIBLE_SET_BUCKETS) -> list[str]:
    """Labels of feasible-set-size buckets, e.g. `1-2`, `3-5`, `11+`"""
    labels = []
    for low, high in zip(buckets, list(buckets[1:]) + [None]):
        if high is None:
            labels.append(f'{low}+')
        elif high - low == 1:
            labels.append(f'{low}')
        else:
            labels.append(f'{low}-{high - 1}')
    return labels


def _bucket(size:int, buckets) -> int|None:
    position = None
    for index, low in enumerate(buckets):
        if size >= low:
            position = index
    return position


def feature_weight_groups(policy:LincPolicy, instances:Iterable[RoutingInstance],
                          buckets=const.FEASIBLE_SET_BUCKETS, jobs:int=1) -> pd.DataFrame:
    """Mean absolute comparator weight `|v_t|` per feature, grouped by feasible-set size.

    Args:
        policy (LincPolicy): Policy to inspect, left unchanged
        instances (Iterable[RoutingInstance]): Instances of the policy task
        buckets (tuple, optional): Lower edges of the size buckets. Defaults to `FEASIBLE_SET_BUCKETS`.
        jobs (int, optional): Worker threads across instances. Defaults to 1.

    Returns:
        pd.DataFrame: One row per bucket with `bucket`, `steps` and one `|v|` column per feature
    """
    buckets = tuple(int(b) for b in buckets)
    names = list(ABSOLUTE_FEATURES) + list(RELATIVE_FEATURES[policy.task])
    labels = bucket_labels(buckets)

    def weights(inst:RoutingInstance) -> list[tuple[int, np.ndarray]]:
        found = []
        _, trajectory = rollout(policy, inst)
        with torch.no_grad():
            encoding = policy.encode(inst)
            for step in trajectory.steps:
                position = _bucket(int(step.mask.customers.size), buckets)
                if position is None:
                    continue
                scores = policy.raw_scores(encoding, step.state, step.mask, step.table, step.summary)
                found.append((position, policy.comparator_weights(scores.modulated).abs().numpy()))
        return found

    sums = np.zeros((len(buckets), len(names)))
    counts = np.zeros(len(buckets), dtype=int)
    for found in _map_instances(weights, list(instances), jobs):
        for position, v in found:
            sums[position] += v
            counts[position] += 1
    means = sums / np.maximum(counts, 1)[:, None]
    df = pd.DataFrame(means, columns=names)
    df.insert(0, 'steps', counts)
    df.insert(0, 'bucket', labels)
    return df
