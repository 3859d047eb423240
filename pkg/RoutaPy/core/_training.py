"""Training Module
Contains:
    * Group advantages (`soft_top1_advantage`, `hard_top1_advantage`, `group_mean_advantage`)
    * `tau_schedule` and `lambda_morph_schedule`
    * `TrainConfig` and `RolloutGroup`
    * Class `Trainer`, the REINFORCE loop over K-rollout groups

"""
from __future__ import annotations
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
import torch
from typing_extensions import Self

from ._constants import Constants as const
from ._exceptions import CheckpointError, ConfigError, ContractViolationError, TrainingError
from ._generator import generate_dataset
from ._inference import Sampler, rollout
from ._instances import RoutingInstance, TaskKind
from ._policy import (GradientAccumulator, LincPolicy, Trajectory, logprob_and_grad, policy_from_checkpoint,
                      read_checkpoint, save_checkpoint)
from .._utils import build_inline_css_style_sheet

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ['epoch', 'mean_cost', 'mean_abs_advantage', 'grad_norm', 'tau', 'lambda_morph']


def _scaled_costs(costs, s_scale:float) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 1 or costs.size < 2:
        raise ContractViolationError(f'advantages need at least 2 costs, got {costs.size}')
    if not s_scale > 0:
        raise ContractViolationError(f'cost scale must be positive, got {s_scale}')
    if not np.all(np.isfinite(costs)):
        raise ContractViolationError('advantages need finite costs')
    return costs / s_scale


def soft_top1_advantage(costs, tau:float, s_scale:float=1.0) -> np.ndarray:
    """Leave-one-out soft-minimum advantage.

    With `s_i = -c_i / (s_scale * tau)` and `m(S) = -tau * log(mean_{j in S} exp(s_j))`, the
    advantage is `A_i = (K-1) * (m(all but i) - m(all))`. Large `tau` recovers the group-mean
    baseline on scaled costs; small `tau` approaches a hard top-1 signal. Every log-sum-exp is
    shifted by its set maximum.

    Args:
        costs (array-like): K rollout costs
        tau (float): Temperature, positive
        s_scale (float, optional): Cost scale. Defaults to 1.0.

    Raises:
        ContractViolationError: `K < 2`, non-positive `tau` or `s_scale`, non-finite costs

    Returns:
        np.ndarray: K advantages
    """
    c_hat = _scaled_costs(costs, s_scale)
    if not tau > 0:
        raise ContractViolationError(f'tau must be positive, got {tau}')
    k = c_hat.size
    s = -c_hat / tau
    top = int(np.argmax(s))
    s_max = s[top]
    shifted = np.expm1(s - s_max)
    m_all = -tau * (s_max + math.log1p(shifted.sum() / k))

    # every leave-one-out set but the top one keeps s_max as its maximum
    loo_sum = shifted.sum() - shifted
    m_loo = -tau * (s_max + np.log1p(loo_sum / (k - 1)))
    rest = np.delete(s, top)
    rest_max = rest.max()
    m_loo[top] = -tau * (rest_max + math.log1p(np.expm1(rest - rest_max).sum() / (k - 1)))
    return (k - 1) * (m_loo - m_all)


def hard_top1_advantage(costs) -> np.ndarray:
    """Centered one-hot on the cheapest rollout (lowest index on ties)."""
    costs = _scaled_costs(costs, 1.0)
    advantage = np.zeros_like(costs)
    advantage[int(np.argmin(costs))] = 1.0
    return advantage - advantage.mean()


def group_mean_advantage(costs, s_scale:float=1.0) -> np.ndarray:
    """`mean(c) - c_i` on scaled costs; sums to zero."""
    c_hat = _scaled_costs(costs, s_scale)
    return c_hat.mean() - c_hat


def compute_advantages(costs, mode:str=const.ADVANTAGE_SOFT_TOP1, tau:float=const.TAU_START, s_scale:float=1.0) -> np.ndarray:
    """Dispatch to the advantage named by `mode`.

    Raises:
        ConfigError: Unknown mode
    """
    if mode == const.ADVANTAGE_SOFT_TOP1:
        return soft_top1_advantage(costs, tau, s_scale)
    if mode == const.ADVANTAGE_HARD_TOP1:
        return hard_top1_advantage(costs)
    if mode == const.ADVANTAGE_GROUP_MEAN:
        return group_mean_advantage(costs, s_scale)
    raise ConfigError(f"advantage mode must be one of {const.VALID_ADVANTAGE_MODES}, got '{mode}'")


def tau_schedule(step:int, total_steps:int, start:float=const.TAU_START, end:float=const.TAU_END,
                 fraction:float=const.TAU_DECAY_FRACTION) -> float:
    """Exponential decay from `start` to `end`, completed after `ceil(total_steps * fraction)` steps.

    Args:
        step (int): Update index, from 0
        total_steps (int): Updates in the whole run
        start (float, optional): Initial temperature. Defaults to 4.0.
        end (float, optional): Final temperature. Defaults to 0.25.
        fraction (float, optional): Share of the run spent decaying. Defaults to 1/300.

    Returns:
        float: Temperature at `step`, non-increasing in `step`
    """
    decay_steps = max(1, math.ceil(total_steps * fraction))
    progress = min(1.0, max(step, 0) / decay_steps)
    return float(start * (end / start) ** progress)


def lambda_morph_schedule(epoch:int, morph_epochs:int) -> float:
    """Linear ramp of the morphing weight, reaching 1 after `morph_epochs` epochs (1 throughout when 0)."""
    if morph_epochs <= 0:
        return 1.0
    return float(min(1.0, (epoch + 1) / morph_epochs))


@dataclass
class TrainConfig:
    """Training hyperparameters. `fixed_dataset` reuses one generated set every epoch."""
    task: str = const.CVRPTW
    advantage_mode: str = const.ADVANTAGE_SOFT_TOP1
    tau_start: float = const.TAU_START
    tau_end: float = const.TAU_END
    tau_decay_fraction: float = const.TAU_DECAY_FRACTION
    lambda_morph_epochs: int = 0
    learning_rate: float = const.LEARNING_RATE
    optimizer: str = const.OPTIMIZER_SGD
    batch_size: int = const.BATCH_SIZE
    rollouts: int = const.ROLLOUTS
    epochs: int = const.EPOCHS
    customers: int = const.TRAIN_CUSTOMERS
    instances_per_epoch: int = const.INSTANCES_PER_EPOCH
    fixed_dataset: bool = False
    seed: int = 0
    jobs: int = 1

    def validate(self) -> TrainConfig:
        """Check ranges.

        Raises:
            ConfigError: Any field out of range
        """
        if self.task not in const.VALID_TASKS:
            raise ConfigError(f"task must be one of {const.VALID_TASKS}, got '{self.task}'")
        if self.advantage_mode not in const.VALID_ADVANTAGE_MODES:
            raise ConfigError(f"advantage_mode must be one of {const.VALID_ADVANTAGE_MODES}, got '{self.advantage_mode}'")
        if not self.tau_start >= self.tau_end > 0:
            raise ConfigError(f'need tau_start >= tau_end > 0, got {self.tau_start} and {self.tau_end}')
        if not 0 < self.tau_decay_fraction <= 1:
            raise ConfigError(f'tau_decay_fraction must be in (0, 1], got {self.tau_decay_fraction}')
        if self.lambda_morph_epochs < 0:
            raise ConfigError('lambda_morph_epochs must be nonnegative')
        if not self.learning_rate > 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        if self.optimizer not in const.VALID_OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {const.VALID_OPTIMIZERS}, got '{self.optimizer}'")
        if self.rollouts < 2:
            raise ConfigError(f'rollouts must be at least 2, got {self.rollouts}')
        if self.batch_size < 1 or self.customers < 1 or self.instances_per_epoch < 1 or self.jobs < 1:
            raise ConfigError('batch_size, customers, instances_per_epoch and jobs must be at least 1')
        if self.epochs < 0:
            raise ConfigError('epochs must be nonnegative')
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data:dict) -> TrainConfig:
        """Build a config from field names.

        Raises:
            ConfigError: Unknown field name
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f'unknown TrainConfig field(s): {sorted(unknown)}')
        return cls(**data)

    @classmethod
    def from_json(cls, text:str) -> TrainConfig:
        return cls.from_dict(json.loads(text))


@dataclass
class RolloutGroup:
    """K sampled rollouts of one instance with their costs and advantages."""
    instance_name: str
    trajectories: list[Trajectory]
    costs: np.ndarray
    s_scale: float = 1.0
    advantages: np.ndarray|None = None
    log_probs: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.trajectories)

    @property
    def scaled_costs(self) -> np.ndarray:
        return self.costs / self.s_scale


class Trainer:
    """REINFORCE trainer for a `LincPolicy`.

    Each update rolls out `rollouts` sampled trajectories per batch instance (every rollout with its
    own random binary rollout code), scales costs by the batch median, turns them into group
    advantages and descends `-(1/(K*B)) * sum_i A_i * log pi(trajectory_i)`. Rollouts and per-trajectory
    gradients run on `config.jobs` threads; gradients are summed in trajectory order.

    Args:
        policy (LincPolicy): Policy to train, updated in place
        config (TrainConfig | None, optional): Hyperparameters. Defaults to None (defaults).
        dataset (list[RoutingInstance] | None, optional): Fixed training set used every epoch. Defaults to None (generated).
        reference (LincPolicy | None, optional): Frozen policy for score morphing. Defaults to a snapshot of `policy` when `lambda_morph_epochs > 0`.
    """
    _policy: LincPolicy
    _config: TrainConfig
    _dataset: list[RoutingInstance]|None
    _reference: LincPolicy|None
    _optimizer: torch.optim.Optimizer
    _metrics: pd.DataFrame
    _epoch: int = 0
    _step: int = 0
    _total_steps: int = 1

    def __init__(self, policy:LincPolicy, config:TrainConfig|None=None, dataset:list[RoutingInstance]|None=None,
                 reference:LincPolicy|None=None) -> None:
        self._config = (config or TrainConfig()).validate()
        if policy.task is not TaskKind(self._config.task):
            raise ConfigError(f"policy task '{policy.task.value}' does not match training task '{self._config.task}'")
        self._policy = policy
        self._dataset = list(dataset) if dataset is not None else None
        if self._dataset is None and self._config.fixed_dataset:
            self._dataset = generate_dataset(self._config.instances_per_epoch, self._config.customers,
                                             self._config.seed, self._config.task)
        if reference is None and self._config.lambda_morph_epochs > 0:
            reference = policy.copy()
        self._reference = reference
        epoch_size = len(self._dataset) if self._dataset is not None else self._config.instances_per_epoch
        self._total_steps = max(1, self._config.epochs * math.ceil(epoch_size / self._config.batch_size))
        self._metrics = pd.DataFrame(columns=METRIC_COLUMNS)
        self._build_optimizer()

    def _build_optimizer(self) -> None:
        if self._config.optimizer == const.OPTIMIZER_ADAM:
            self._optimizer = torch.optim.Adam(self._policy.parameters(), lr=self._config.learning_rate)
        else:
            self._optimizer = torch.optim.SGD(self._policy.parameters(), lr=self._config.learning_rate)

    # Getters
    @property
    def policy(self) -> LincPolicy:
        return self._policy

    @property
    def config(self) -> TrainConfig:
        return self._config

    @property
    def epoch(self) -> int:
        """Completed epochs"""
        return self._epoch

    @property
    def step(self) -> int:
        """Completed parameter updates"""
        return self._step

    @property
    def total_steps(self) -> int:
        """Planned parameter updates of the whole run"""
        return self._total_steps

    @property
    def metrics(self) -> pd.DataFrame:
        """One row per completed epoch with `METRIC_COLUMNS`"""
        return self._metrics.copy()

    @property
    def tau(self) -> float:
        """Temperature of the next update"""
        cfg = self._config
        return tau_schedule(self._step, self.total_steps, cfg.tau_start, cfg.tau_end, cfg.tau_decay_fraction)

    @property
    def lambda_morph(self) -> float:
        """Morphing weight of the current epoch (1 without a reference policy)"""
        if self._reference is None:
            return 1.0
        return lambda_morph_schedule(self._epoch, self._config.lambda_morph_epochs)

    # Setters
    def set_learning_rate(self, learning_rate:float) -> Self:
        """Change the learning rate of later updates.

        Raises:
            ConfigError: Non-positive learning rate
        """
        if not learning_rate > 0:
            raise ConfigError(f'learning_rate must be positive, got {learning_rate}')
        self._config.learning_rate = learning_rate
        for group in self._optimizer.param_groups:
            group['lr'] = learning_rate
        return self

    def epoch_instances(self, epoch:int|None=None) -> list[RoutingInstance]:
        """Training instances of an epoch: the fixed set, or a set generated from `(seed, epoch)`"""
        if self._dataset is not None:
            return self._dataset
        epoch = self._epoch if epoch is None else epoch
        cfg = self._config
        seed = int(np.random.default_rng([cfg.seed, epoch]).integers(0, 2**31 - 1))
        return generate_dataset(cfg.instances_per_epoch, cfg.customers, seed, cfg.task)

    def _map(self, fn, items:list) -> list:
        if self._config.jobs > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self._config.jobs) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def _rollout_groups(self, batch:list[RoutingInstance], batch_index:int, lambda_morph:float) -> list[RolloutGroup]:
        cfg = self._config
        code_dim = self._policy.config.rollout_code_dim
        reference = self._reference if lambda_morph < 1.0 else None

        def sample(task:tuple[int, int]) -> tuple[float, Trajectory]:
            b, k = task
            rng = np.random.default_rng([cfg.seed, self._epoch, batch_index, b * cfg.rollouts + k])
            code = rng.integers(0, 2, size=code_dim).astype(np.float64)
            solution, trajectory = rollout(self._policy, batch[b], Sampler(rng), code,
                                           reference=reference, lambda_morph=lambda_morph)
            return solution.total_distance, trajectory

        tasks = [(b, k) for b in range(len(batch)) for k in range(cfg.rollouts)]
        results = self._map(sample, tasks)
        groups = []
        for b, inst in enumerate(batch):
            chunk = results[b * cfg.rollouts:(b + 1) * cfg.rollouts]
            groups.append(RolloutGroup(inst.name, [t for _, t in chunk], np.array([c for c, _ in chunk])))
        return groups

    def train_batch(self, batch:list[RoutingInstance], batch_index:int=0) -> dict:
        """One parameter update on a batch of instances.

        Args:
            batch (list[RoutingInstance]): Batch instances
            batch_index (int, optional): Position in the epoch, part of the rollout seeds. Defaults to 0.

        Raises:
            TrainingError: Non-finite cost, log-probability or gradient

        Returns:
            dict: `mean_cost`, `mean_abs_advantage`, `grad_norm`, `tau`, `lambda_morph`
        """
        cfg = self._config
        tau = self.tau
        lambda_morph = self.lambda_morph
        groups = self._rollout_groups(batch, batch_index, lambda_morph)
        costs = np.concatenate([g.costs for g in groups])
        if not np.all(np.isfinite(costs)):
            raise TrainingError(f'non-finite rollout cost at epoch {self._epoch}, batch {batch_index}')
        s_scale = float(np.median(costs))
        if not s_scale > 0:
            s_scale = 1.0
        for group in groups:
            group.s_scale = s_scale
            group.advantages = compute_advantages(group.costs, cfg.advantage_mode, tau, s_scale)

        weights = -1.0 / (cfg.rollouts * len(batch))
        work = [(g.trajectories[i], weights * float(g.advantages[i]))
                for g in groups for i in range(g.k) if g.advantages[i] != 0.0]

        def gradient(item:tuple[Trajectory, float]) -> tuple[float, GradientAccumulator]:
            trajectory, weight = item
            log_prob, grad = logprob_and_grad(trajectory, self._policy)
            return log_prob, grad.scaled(weight)

        total = GradientAccumulator.zeros_like(self._policy)
        for log_prob, grad in self._map(gradient, work):
            total = total + grad
        self._apply(total)
        self._step += 1

        abs_adv = float(np.mean(np.abs(np.concatenate([g.advantages for g in groups]))))
        row = {'mean_cost': float(costs.mean()), 'mean_abs_advantage': abs_adv, 'grad_norm': total.norm(),
               'tau': tau, 'lambda_morph': lambda_morph}
        logger.debug('epoch %d batch %d: %s', self._epoch, batch_index, row)
        return row

    def _apply(self, total:GradientAccumulator) -> None:
        named = total.named()
        for name, parameter in self._policy.named_parameters():
            parameter.grad = named[name].view_as(parameter).clone()
        self._optimizer.step()

    def train_epoch(self, instances:list[RoutingInstance]|None=None) -> dict:
        """Train over one epoch of instances and record its metrics row.

        Args:
            instances (list[RoutingInstance] | None, optional): Epoch instances. Defaults to `epoch_instances()`.

        Raises:
            TrainingError: Non-finite loss or gradient; the epoch is aborted

        Returns:
            dict: The epoch metrics row
        """
        instances = self.epoch_instances() if instances is None else list(instances)
        if not instances:
            raise ConfigError('training epoch has no instances')
        start = time.perf_counter()
        rows = []
        size = self._config.batch_size
        for batch_index, offset in enumerate(range(0, len(instances), size)):
            try:
                rows.append(self.train_batch(instances[offset:offset + size], batch_index))
            except TrainingError as err:
                logger.error('aborting epoch %d at batch %d: %s', self._epoch, batch_index, err)
                raise
        row = {'epoch': self._epoch,
               'mean_cost': float(np.mean([r['mean_cost'] for r in rows])),
               'mean_abs_advantage': float(np.mean([r['mean_abs_advantage'] for r in rows])),
               'grad_norm': float(np.mean([r['grad_norm'] for r in rows])),
               'tau': rows[-1]['tau'],
               'lambda_morph': rows[-1]['lambda_morph']}
        frame = pd.DataFrame([row], columns=METRIC_COLUMNS)
        self._metrics = frame if self._metrics.empty else pd.concat([self._metrics, frame], ignore_index=True)
        logger.info('epoch %d: mean cost %.4f, |A| %.4f, grad norm %.4g, tau %.3f, lambda %.2f (%.1fs)',
                    self._epoch, row['mean_cost'], row['mean_abs_advantage'], row['grad_norm'], row['tau'],
                    row['lambda_morph'], time.perf_counter() - start)
        self._epoch += 1
        return row

    def fit(self, epochs:int|None=None, checkpoint_path:str|os.PathLike|None=None) -> Self:
        """Train until `epochs` (default `config.epochs`) epochs are complete.

        Args:
            epochs (int | None, optional): Target number of completed epochs. Defaults to None.
            checkpoint_path (str | os.PathLike | None, optional): Checkpoint written after every epoch. Defaults to None.

        Returns:
            Self
        """
        target = self._config.epochs if epochs is None else epochs
        while self._epoch < target:
            self.train_epoch()
            if checkpoint_path is not None:
                self.save_checkpoint(checkpoint_path)
        return self

    def save_checkpoint(self, path:str|os.PathLike) -> None:
        """Write the policy plus the training position (`epoch`, `step`, `train_config`)."""
        extra = {'epoch': self._epoch, 'step': self._step, 'train_config': self._config.to_dict(),
                 'metrics': {column: self._metrics[column].tolist() for column in METRIC_COLUMNS}}
        save_checkpoint(self._policy, path, extra)

    @classmethod
    def resume(cls, path:str|os.PathLike, config:TrainConfig|None=None, dataset:list[RoutingInstance]|None=None) -> Trainer:
        """Continue a run from a trainer checkpoint.

        Args:
            path (str | os.PathLike): Checkpoint written by `save_checkpoint`
            config (TrainConfig | None, optional): Overrides the stored config. Defaults to None.
            dataset (list[RoutingInstance] | None, optional): Fixed training set. Defaults to None.

        Raises:
            CheckpointError: The checkpoint carries no training position

        Returns:
            Trainer: Trainer positioned after the stored epoch
        """
        data = read_checkpoint(path)
        extra = data.get('extra') or {}
        if 'epoch' not in extra or 'train_config' not in extra:
            raise CheckpointError(f'checkpoint {path} has no training state to resume')
        policy = policy_from_checkpoint(data)
        trainer = cls(policy, config or TrainConfig.from_dict(extra['train_config']), dataset)
        trainer._epoch = int(extra['epoch'])
        trainer._step = int(extra.get('step', 0))
        metrics = extra.get('metrics')
        if metrics:
            trainer._metrics = pd.DataFrame(metrics, columns=METRIC_COLUMNS)
        logger.info('resuming training at epoch %d from %s', trainer._epoch, path)
        return trainer

    def export_metrics_to_csv(self, export_path:str|os.PathLike=const.METRICS_EXPORT_PATH) -> None:
        self._metrics.to_csv(export_path, index=False)

    def __repr__(self) -> str:
        last = self._metrics.iloc[-1] if not self._metrics.empty else None
        last_cost = f"{last['mean_cost'] :0,.4f}" if last is not None else '-'
        report = f"""
        --------------------------------------------------------------------
        Training Run
        --------------------------------------------------------------------
        Policy:                                 {self._policy.task.value}, {self._policy.n_parameters} parameters
        Advantage:                              {self._config.advantage_mode}
        Epochs Completed:                       {self._epoch} / {self._config.epochs}
        Updates:                                {self._step}
        Batch x Rollouts:                       {self._config.batch_size} x {self._config.rollouts}
        Next Tau:                               {self.tau :0.4f}
        Lambda Morph:                           {self.lambda_morph :0.2f}
        Last Mean Cost:                         {last_cost}
        --------------------------------------------------------------------
        """
        return report

    def _repr_html_(self):
        style_sheet = build_inline_css_style_sheet(f"{const.TEMPLATES_FOLDER}/styles.css")
        report = f"""
        {style_sheet if style_sheet else ''}
        <h1>Training Run</h1>
        <table class='routa-summary'>
            <tr>
                <th>Task</th>
                <th>Advantage</th>
                <th>Epochs</th>
                <th>Updates</th>
                <th>Next Tau</th>
                <th>Lambda Morph</th>
            </tr>
            <tr>
                <td>{self._policy.task.value}</td>
                <td>{self._config.advantage_mode}</td>
                <td>{self._epoch} / {self._config.epochs}</td>
                <td>{self._step}</td>
                <td>{self.tau :0.4f}</td>
                <td>{self.lambda_morph :0.2f}</td>
            </tr>
        </table>
        {self._metrics.to_html(index=False, classes='routa-results')}
        """
        return report
