"""API Functions
"""
from __future__ import annotations
import os

from .core._constants import Constants as const
from .core._exceptions import ConfigError
from .core._inference import DecodeSettings, EvalReport, decode, evaluate_benchmark
from .core._instances import RoutingInstance
from .core._mdp import Solution
from .core._parsers import load_instance
from .core._policy import LincPolicy, PolicyConfig, VariantFlags, load_checkpoint
from .core._training import TrainConfig, Trainer

__all__ = ['build_policy', 'solve_instance', 'train_policy', 'evaluate_directory']


def _as_instance(instance:RoutingInstance|str|os.PathLike) -> RoutingInstance:
    return instance if isinstance(instance, RoutingInstance) else load_instance(instance)


def _as_policy(policy:LincPolicy|str|os.PathLike) -> LincPolicy:
    return policy if isinstance(policy, LincPolicy) else load_checkpoint(policy)


def build_policy(task:str=const.CVRPTW, variant:str='linc', seed:int=0, **dims) -> LincPolicy:
    """Create an untrained policy for a task and named ablation variant.

    Args:
        task (str, optional): `TSP`, `CVRP` or `CVRPTW`. Defaults to `CVRPTW`.
        variant (str, optional): Key of `ABLATION_PRESETS`. Defaults to 'linc'.
        seed (int, optional): Initialization seed. Defaults to 0.
        **dims: `PolicyConfig` field overrides, e.g. `embedding_dim=32`

    Returns:
        LincPolicy: Freshly initialized policy
    """
    return LincPolicy(PolicyConfig(task=task, seed=seed, **dims), VariantFlags.preset(variant))


def solve_instance(instance:RoutingInstance|str|os.PathLike, policy:LincPolicy|str|os.PathLike,
                   mode:str=const.MODE_GREEDY, **settings) -> Solution:
    """Decode one instance.

    Args:
        instance (RoutingInstance | str | os.PathLike): Instance or instance file
        policy (LincPolicy | str | os.PathLike): Policy or checkpoint file
        mode (str, optional): `greedy`, `sample`, `beam` or `aug8`. Defaults to 'greedy'.
        **settings: Further `DecodeSettings` fields (`samples`, `beam_width`, `seed`, ...)

    Returns:
        Solution: Decoded solution
    """
    return decode(_as_instance(instance), _as_policy(policy), DecodeSettings(mode=mode, **settings))


def train_policy(config:TrainConfig|dict|None=None, policy:LincPolicy|None=None, variant:str='linc',
                 dataset:list[RoutingInstance]|None=None, checkpoint_path:str|os.PathLike|None=None) -> Trainer:
    """Train a policy with REINFORCE and return the finished `Trainer`.

    Args:
        config (TrainConfig | dict | None, optional): Training config. Defaults to None (defaults).
        policy (LincPolicy | None, optional): Policy to train. Defaults to a fresh `variant` policy for `config.task`.
        variant (str, optional): Ablation preset of the fresh policy. Defaults to 'linc'.
        dataset (list[RoutingInstance] | None, optional): Fixed training instances. Defaults to None (generated).
        checkpoint_path (str | os.PathLike | None, optional): Checkpoint rewritten after every epoch. Defaults to None.

    Raises:
        ConfigError: Policy task differs from the config task

    Returns:
        Trainer: Trainer after `config.epochs` epochs
    """
    if isinstance(config, dict):
        config = TrainConfig.from_dict(config)
    config = (config or TrainConfig()).validate()
    policy = policy or build_policy(config.task, variant, config.seed)
    if policy.task.value != config.task:
        raise ConfigError(f"policy task '{policy.task.value}' does not match config task '{config.task}'")
    return Trainer(policy, config, dataset).fit(checkpoint_path=checkpoint_path)


def evaluate_directory(folder:str|os.PathLike, policy:LincPolicy|str|os.PathLike, references=None,
                       mode:str=const.MODE_GREEDY, jobs:int=1, **settings) -> EvalReport:
    """`evaluate_benchmark` over every instance file of a folder.

    Args:
        folder (str | os.PathLike): Instance folder
        policy (LincPolicy | str | os.PathLike): Policy or checkpoint file
        references (optional): `solomon56`, `tsplib29`, a CSV path or a mapping. Defaults to None.
        mode (str, optional): Decoding mode. Defaults to 'greedy'.
        jobs (int, optional): Worker threads. Defaults to 1.
        **settings: Further `DecodeSettings` fields

    Returns:
        EvalReport: Per-instance report
    """
    return evaluate_benchmark(folder, _as_policy(policy), references, DecodeSettings(mode=mode, **settings), jobs)
