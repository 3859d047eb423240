"""Decoding and Benchmark Evaluation Module
Contains:
    * `rollout`, the single construction loop shared by training and decoding
    * `greedy_decode`, `sample_decode`, `augmented_multistart`, `beam_decode`
    * `DecodeSettings` and the `decode` dispatcher
    * `EvalReport`, `evaluate_benchmark`, `load_reference_table`, `paired_bootstrap`

"""
from __future__ import annotations
import logging
import os
import pathlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Mapping

import numpy as np
import pandas as pd
import torch
from typing_extensions import Self

from ._constants import Constants as const
from ._consequences import build_table, step_summary
from ._exceptions import ConfigError, ContractViolationError, InstanceParseError
from ._instances import RoutingInstance
from ._mdp import (ConstructionState, Solution, apply_action, feasible_actions, initial_state, is_terminal,
                   solution_from_state, verify_solution)
from ._parsers import load_instance
from ._policy import LincPolicy, Trajectory, TrajectoryStep, VariantFlags, unit_square
from .._utils import build_inline_css_style_sheet

logger = logging.getLogger(__name__)

Selector = Callable[[np.ndarray, np.ndarray], int]


def greedy_select(log_probs:np.ndarray, feasible:np.ndarray) -> int:
    """Most probable action, lowest node id on ties"""
    return int(np.argmax(log_probs))


class Sampler:
    """Multinomial action selection with temperature from one random stream.

    Args:
        rng (np.random.Generator): Random stream
        temperature (float, optional): Softmax temperature, 0 means greedy. Defaults to 1.0.
    """
    def __init__(self, rng:np.random.Generator, temperature:float=1.0) -> None:
        self.rng = rng
        self.temperature = temperature

    def __call__(self, log_probs:np.ndarray, feasible:np.ndarray) -> int:
        if self.temperature == 0:
            return greedy_select(log_probs, feasible)
        actions = np.flatnonzero(feasible)
        scaled = log_probs[actions] / self.temperature
        probs = np.exp(scaled - scaled.max())
        probs /= probs.sum()
        return int(actions[self.rng.choice(actions.size, p=probs)])


def rollout(policy:LincPolicy, inst:RoutingInstance, select:Selector=greedy_select, rollout_code=None,
            unit_coords:np.ndarray|None=None, reference:LincPolicy|None=None, lambda_morph:float=1.0,
            flags:VariantFlags|None=None) -> tuple[Solution, Trajectory]:
    """Construct one complete solution without gradient tracking.

    Args:
        policy (LincPolicy): Scoring policy
        inst (RoutingInstance): Problem data
        select (Selector, optional): Action rule on `(log_probs, feasible)`. Defaults to greedy.
        rollout_code (array-like | None, optional): Binary rollout code. Defaults to None (zeros).
        unit_coords (np.ndarray | None, optional): Encoder coordinate override for augmentation. Defaults to None.
        reference (LincPolicy | None, optional): Frozen reference for score morphing. Defaults to None.
        lambda_morph (float, optional): Morphing weight toward the policy. Defaults to 1.0.
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

    Returns:
        tuple[Solution, Trajectory]: The solution and the recorded decoding inputs
    """
    flags = flags or policy.flags
    morphing = reference is not None and lambda_morph < 1.0
    trajectory = Trajectory(inst, [], None if rollout_code is None else np.asarray(rollout_code, dtype=np.float64),
                            unit_coords, lambda_morph if morphing else 1.0)
    with torch.no_grad():
        encoding = policy.encode(inst, unit_coords, flags)
        reference_encoding = reference.encode(inst, unit_coords) if morphing else None
        state = initial_state(inst)
        while not is_terminal(state):
            mask = feasible_actions(state)
            table = build_table(state, mask, flags.centering, unit_coords)
            summary = step_summary(table, state, flags.summary_mode)
            reference_scores = None
            if morphing:
                ref_flags = reference.flags
                ref_table = table if ref_flags.centering == flags.centering else build_table(state, mask, ref_flags.centering, unit_coords)
                ref_summary = step_summary(ref_table, state, ref_flags.summary_mode)
                reference_scores = reference.raw_scores(reference_encoding, state, mask, ref_table, ref_summary,
                                                        trajectory.rollout_code).scores.numpy().copy()
            step = policy.decode_step(encoding, state, mask, table, summary, trajectory.rollout_code,
                                      reference_scores, trajectory.lambda_morph, flags)
            action = select(step.log_probs.numpy(), mask.feasible)
            trajectory.steps.append(TrajectoryStep(state, mask, table, summary, action, reference_scores))
            state = apply_action(state, action)
    return solution_from_state(state), trajectory


def greedy_decode(inst:RoutingInstance, policy:LincPolicy, flags:VariantFlags|None=None) -> Solution:
    """Argmax decoding with a zero rollout code; ties go to the lowest node id."""
    return rollout(policy, inst, greedy_select, flags=flags)[0]


@dataclass
class SampleResult:
    """Best-of-N sampling outcome and the cost of every sample in draw order."""
    best: Solution
    costs: np.ndarray

    @property
    def summary(self) -> dict:
        return {'count': int(self.costs.size), 'best': float(self.costs.min()), 'mean': float(self.costs.mean()),
                'std': float(self.costs.std()), 'worst': float(self.costs.max())}


def sample_decode(inst:RoutingInstance, policy:LincPolicy, count:int=const.SAMPLES, seed:int=0,
                  temperature:float=1.0, flags:VariantFlags|None=None) -> SampleResult:
    """Best of `count` sampled rollouts, each with a random binary rollout code.

    One random stream is consumed sample after sample, so the first `k` samples of a larger run
    equal a run with `count=k`. Temperature 0 reduces to greedy decoding.

    Args:
        inst (RoutingInstance): Problem data
        policy (LincPolicy): Scoring policy
        count (int, optional): Number of samples. Defaults to `SAMPLES`.
        seed (int, optional): Random seed. Defaults to 0.
        temperature (float, optional): Softmax temperature. Defaults to 1.0.
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

    Raises:
        ConfigError: `count < 1` or negative temperature

    Returns:
        SampleResult: Best solution (first on ties) and all costs
    """
    if count < 1:
        raise ConfigError(f'sample count must be at least 1, got {count}')
    if temperature < 0:
        raise ConfigError(f'temperature must be nonnegative, got {temperature}')
    if temperature == 0:
        solution = greedy_decode(inst, policy, flags)
        return SampleResult(solution, np.full(count, solution.total_distance))
    rng = np.random.default_rng(seed)
    sampler = Sampler(rng, temperature)
    best, costs = None, []
    for _ in range(count):
        code = rng.integers(0, 2, size=policy.config.rollout_code_dim).astype(np.float64)
        solution, _ = rollout(policy, inst, sampler, code, flags=flags)
        costs.append(solution.total_distance)
        if best is None or solution.total_distance < best.total_distance:
            best = solution
    return SampleResult(best, np.asarray(costs))


def dihedral_transforms(unit:np.ndarray) -> list[np.ndarray]:
    """The 8 symmetries of the unit square applied to `(m, 2)` coordinates, identity first."""
    x, y = unit[:, 0], unit[:, 1]
    pairs = [(x, y), (1 - y, x), (1 - x, 1 - y), (y, 1 - x), (1 - x, y), (x, 1 - y), (y, x), (1 - y, 1 - x)]
    return [np.column_stack(pair) for pair in pairs]


def augmented_multistart(inst:RoutingInstance, policy:LincPolicy, folds:int=8, flags:VariantFlags|None=None,
                         return_costs:bool=False) -> Solution|tuple[Solution, list[float]]:
    """Greedy decoding under the dihedral symmetries of the normalized coordinates.

    Only the encoder inputs and angle features see the transformed coordinates; the MDP runs on
    the instance itself, so every route is already in original node ids.

    Args:
        inst (RoutingInstance): Problem data
        policy (LincPolicy): Scoring policy
        folds (int, optional): 1 or 8. Defaults to 8.
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.
        return_costs (bool, optional): Also return per-fold costs. Defaults to False.

    Raises:
        ConfigError: `folds` not in {1, 8}

    Returns:
        Solution | tuple[Solution, list[float]]: Cheapest fold (first on ties)
    """
    if folds not in (1, 8):
        raise ConfigError(f'folds must be 1 or 8, got {folds}')
    transforms = dihedral_transforms(unit_square(inst.coordinates))[:folds]
    best, costs = None, []
    for index, unit in enumerate(transforms):
        solution = rollout(policy, inst, greedy_select, unit_coords=None if index == 0 else unit, flags=flags)[0]
        costs.append(solution.total_distance)
        if best is None or solution.total_distance < best.total_distance:
            best = solution
    logger.debug('augmentation fold costs %s', costs)
    return (best, costs) if return_costs else best


@dataclass
class _Beam:
    state: ConstructionState
    log_prob: float
    protected: bool


def beam_decode(inst:RoutingInstance, policy:LincPolicy, beam_width:int=const.BEAM_WIDTH,
                flags:VariantFlags|None=None) -> Solution:
    """Beam search on cumulative log-probability with feasibility masking.

    The greedy continuation of the greedy prefix always keeps a slot, so width 1 reproduces
    `greedy_decode` and every width contains the greedy path.

    Args:
        inst (RoutingInstance): Problem data
        policy (LincPolicy): Scoring policy
        beam_width (int, optional): Beam width. Defaults to `BEAM_WIDTH`.
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

    Raises:
        ConfigError: `beam_width < 1`

    Returns:
        Solution: Cheapest completed beam (first on ties)
    """
    if beam_width < 1:
        raise ConfigError(f'beam width must be at least 1, got {beam_width}')
    flags = flags or policy.flags
    beams = [_Beam(initial_state(inst), 0.0, True)]
    completed: list[_Beam] = []
    with torch.no_grad():
        encoding = policy.encode(inst, None, flags)
        while beams:
            candidates = []
            for beam in beams:
                mask = feasible_actions(beam.state)
                table = build_table(beam.state, mask, flags.centering)
                summary = step_summary(table, beam.state, flags.summary_mode)
                log_probs = policy.decode_step(encoding, beam.state, mask, table, summary, flags=flags).log_probs.numpy()
                greedy = greedy_select(log_probs, mask.feasible)
                for action in mask.actions:
                    candidates.append((beam.log_prob + float(log_probs[action]), beam, int(action),
                                       beam.protected and action == greedy))
            protected = [c for c in candidates if c[3]]
            others = sorted((c for c in candidates if not c[3]), key=lambda c: -c[0])
            kept = (protected + others)[:beam_width]
            beams = []
            for log_prob, beam, action, is_protected in kept:
                new = _Beam(apply_action(beam.state, action), log_prob, is_protected)
                (completed if is_terminal(new.state) else beams).append(new)
            logger.debug('beam step: %d open, %d completed', len(beams), len(completed))
    solutions = [solution_from_state(beam.state) for beam in completed]
    return min(solutions, key=lambda s: s.total_distance)


@dataclass
class DecodeSettings:
    """Decoding strategy and its budget."""
    mode: str = const.MODE_GREEDY
    samples: int = const.SAMPLES
    beam_width: int = const.BEAM_WIDTH
    folds: int = 8
    temperature: float = 1.0
    seed: int = 0

    def validate(self) -> DecodeSettings:
        if self.mode not in const.VALID_DECODE_MODES:
            raise ConfigError(f"mode must be one of {const.VALID_DECODE_MODES}, got '{self.mode}'")
        if self.samples < 1 or self.beam_width < 1:
            raise ConfigError('samples and beam_width must be at least 1')
        if self.folds not in (1, 8):
            raise ConfigError(f'folds must be 1 or 8, got {self.folds}')
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data:dict) -> DecodeSettings:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f'unknown DecodeSettings field(s): {sorted(unknown)}')
        return cls(**data)

    def __str__(self) -> str:
        if self.mode == const.MODE_SAMPLE:
            return f'sample x{self.samples} (T={self.temperature:g}, seed={self.seed})'
        if self.mode == const.MODE_BEAM:
            return f'beam width {self.beam_width}'
        if self.mode == const.MODE_AUG8:
            return f'augmentation x{self.folds}'
        return 'greedy'


def decode(inst:RoutingInstance, policy:LincPolicy, settings:DecodeSettings|None=None) -> Solution:
    """Decode with the strategy named in `settings`."""
    settings = (settings or DecodeSettings()).validate()
    if settings.mode == const.MODE_SAMPLE:
        return sample_decode(inst, policy, settings.samples, settings.seed, settings.temperature).best
    if settings.mode == const.MODE_BEAM:
        return beam_decode(inst, policy, settings.beam_width)
    if settings.mode == const.MODE_AUG8:
        return augmented_multistart(inst, policy, settings.folds)
    return greedy_decode(inst, policy)


def gap_percent(cost:float, reference:float) -> float:
    """`(cost - reference) / reference * 100`"""
    return (cost - reference) / reference * 100.0


BUNDLED_REFERENCES = {
    'solomon56': 'solomon56_hgs.csv',
    'tsplib29': 'tsplib29_concorde.csv',
}


def load_reference_table(source:str|os.PathLike) -> pd.Series:
    """Reference costs keyed by instance name.

    Args:
        source (str | os.PathLike): Bundled table name (`solomon56`, `tsplib29`) or a CSV path with `name,ref_cost`

    Raises:
        ConfigError: Missing `name`/`ref_cost` columns

    Returns:
        pd.Series: `ref_cost` indexed by `name`
    """
    path = os.path.join(const.DATA_FOLDER, BUNDLED_REFERENCES[source]) if source in BUNDLED_REFERENCES else source
    df = pd.read_csv(path)
    missing = {'name', 'ref_cost'} - set(df.columns)
    if missing:
        raise ConfigError(f'reference table {path} lacks column(s) {sorted(missing)}')
    return df.set_index('name')['ref_cost'].astype(float)


def _reference_lookup(references) -> dict[str, float]:
    if references is None:
        return {}
    if isinstance(references, (str, os.PathLike)):
        references = load_reference_table(references)
    if isinstance(references, pd.DataFrame):
        references = references.set_index('name')['ref_cost']
    if isinstance(references, (pd.Series, Mapping)):
        return {str(name).lower(): float(value) for name, value in dict(references).items()}
    raise ConfigError(f'unsupported reference source {type(references).__name__}')


REPORT_COLUMNS = ['instance', 'n_customers', 'cost', 'ref_cost', 'gap_percent', 'time_s', 'routes', 'note']


class EvalReport:
    """Per-instance costs, reference gaps and timings of one decoding run.

    Args:
        results (pd.DataFrame | None, optional): Rows with `REPORT_COLUMNS`. Defaults to None (empty).
        settings (DecodeSettings | None, optional): Decode settings used. Defaults to None.
        notes (list[str] | None, optional): Run-level notes (skipped files, missing references). Defaults to None.
    """
    _results: pd.DataFrame
    _settings: DecodeSettings
    _notes: list[str]

    def __init__(self, results:pd.DataFrame|None=None, settings:DecodeSettings|None=None, notes:list[str]|None=None) -> None:
        self._results = pd.DataFrame(columns=REPORT_COLUMNS) if results is None else results.reset_index(drop=True)
        self._settings = settings or DecodeSettings()
        self._notes = list(notes or [])

    # Getters
    @property
    def results(self) -> pd.DataFrame:
        return self._results.copy()

    @property
    def settings(self) -> DecodeSettings:
        return self._settings

    @property
    def notes(self) -> list[str]:
        return list(self._notes)

    @property
    def n_instances(self) -> int:
        return len(self._results)

    @property
    def mean_cost(self) -> float:
        return float(self._results['cost'].mean()) if self.n_instances else float('nan')

    @property
    def mean_reference(self) -> float:
        """Mean reference cost over instances that have one"""
        refs = self._results['ref_cost'].dropna()
        return float(refs.mean()) if len(refs) else float('nan')

    @property
    def mean_gap(self) -> float:
        """Mean gap (%) over instances with a reference"""
        gaps = self._results['gap_percent'].dropna()
        return float(gaps.mean()) if len(gaps) else float('nan')

    @property
    def total_time(self) -> float:
        return float(self._results['time_s'].sum()) if self.n_instances else 0.0

    # Setters
    def set_references(self, references, inplace:bool=const.INPLACE) -> EvalReport|Self:
        """Attach (or replace) reference costs and recompute gaps.

        Args:
            references: Bundled table name, CSV path, mapping or Series of `name -> ref_cost`
            inplace (bool, optional): Update this report or return a new one. Defaults to True.

        Returns:
            EvalReport | Self
        """
        if not inplace:
            return self.copy().set_references(references, inplace=True)
        lookup = _reference_lookup(references)
        df = self._results
        notes = [n for n in self._notes if not n.startswith('no reference')]
        refs, gaps, row_notes = [], [], []
        for name, cost in zip(df['instance'], df['cost']):
            ref = lookup.get(str(name).lower())
            if ref is None:
                logger.warning("no reference cost for '%s'; gap omitted", name)
                notes.append(f"no reference for '{name}'")
                refs.append(np.nan)
                gaps.append(np.nan)
                row_notes.append('no reference')
            else:
                refs.append(ref)
                gaps.append(gap_percent(cost, ref))
                row_notes.append('')
        df['ref_cost'] = np.asarray(refs, dtype=np.float64)
        df['gap_percent'] = np.asarray(gaps, dtype=np.float64)
        df['note'] = row_notes
        self._notes = notes
        return self

    def export_to_csv(self, export_path:str|os.PathLike=const.CSV_EXPORT_PATH) -> None:
        self._results.to_csv(export_path, index=False)

    def export_to_excel(self, export_path:str|os.PathLike=const.EXCEL_EXPORT_PATH, engine:str='openpyxl') -> None:
        """Export the results to excel.

        Args:
            export_path (str | os.PathLike, optional): Excel file export path. Defaults to const.EXCEL_EXPORT_PATH.
            engine (str, optional): Write engine, `openpyxl` or `xlsxwriter`. Defaults to 'openpyxl'.
        """
        self._results.to_excel(export_path, index=False, engine=engine)

    def copy(self) -> EvalReport:
        return EvalReport(self._results.copy(), DecodeSettings.from_dict(self._settings.to_dict()), list(self._notes))

    def __copy__(self) -> EvalReport:
        return self.copy()

    def __deepcopy__(self, memo=None) -> EvalReport:
        return self.copy()

    def __repr__(self) -> str:
        notes = '\n        '.join(self._notes[:5])
        report = f"""
        --------------------------------------------------------------------
        Evaluation Report
        --------------------------------------------------------------------
        Decoding:                               {self._settings}
        Instances:                              {self.n_instances}
        Mean Cost:                              {self.mean_cost :0,.3f}
        Mean Reference:                         {self.mean_reference :0,.3f}
        Mean Gap:                               {self.mean_gap :0.2f}%
        Total Time:                             {self.total_time :0.2f}s
        {notes}
        --------------------------------------------------------------------
        """
        return report

    def _repr_html_(self):
        style_sheet = build_inline_css_style_sheet(f"{const.TEMPLATES_FOLDER}/styles.css")
        report = f"""
        {style_sheet if style_sheet else ''}
        <h1>Evaluation Report</h1>
        <table class='routa-summary'>
            <tr>
                <th>Decoding</th>
                <th>Instances</th>
                <th>Mean Cost</th>
                <th>Mean Reference</th>
                <th>Mean Gap</th>
                <th>Total Time</th>
            </tr>
            <tr>
                <td>{self._settings}</td>
                <td>{self.n_instances}</td>
                <td>{self.mean_cost :0,.3f}</td>
                <td>{self.mean_reference :0,.3f}</td>
                <td>{self.mean_gap :0.2f}%</td>
                <td>{self.total_time :0.2f}s</td>
            </tr>
        </table>
        {self._results.to_html(index=False, classes='routa-results', na_rep='')}
        """
        return report


def _collect_instances(source) -> tuple[list[RoutingInstance], list[str]]:
    notes = []
    if isinstance(source, (str, os.PathLike)):
        folder = pathlib.Path(source)
        if not folder.is_dir():
            raise FileNotFoundError(f'instance directory not found: {folder}')
        items = sorted(p for p in folder.iterdir() if p.is_file() and not p.name.startswith('.'))
    else:
        items = list(source)
    instances = []
    for item in items:
        if isinstance(item, RoutingInstance):
            instances.append(item)
            continue
        try:
            instances.append(load_instance(item))
        except (InstanceParseError, UnicodeDecodeError) as err:
            logger.warning('skipping %s: %s', item, err)
            notes.append(f'skipped {pathlib.Path(item).name}: {err}')
    return instances, notes


def evaluate_benchmark(source:str|os.PathLike|Iterable, policy:LincPolicy, references=None,
                       settings:DecodeSettings|None=None, jobs:int=1) -> EvalReport:
    """Decode every instance, re-verify every solution and report costs and gaps.

    Args:
        source (str | os.PathLike | Iterable): Directory of instance files, or instances/paths
        policy (LincPolicy): Scoring policy
        references (optional): Bundled table name, CSV path, mapping or Series. Defaults to None.
        settings (DecodeSettings | None, optional): Decoding strategy. Defaults to greedy.
        jobs (int, optional): Worker threads. Defaults to 1.

    Raises:
        ContractViolationError: A decoded solution fails verification

    Returns:
        EvalReport: Report in source order (directory entries sorted by file name)
    """
    settings = (settings or DecodeSettings()).validate()
    instances, notes = _collect_instances(source)

    def solve(inst:RoutingInstance) -> dict:
        start = time.perf_counter()
        solution = decode(inst, policy, settings)
        elapsed = time.perf_counter() - start
        report = verify_solution(solution, inst)
        if not report.ok:
            raise ContractViolationError(f"decoded solution for '{inst.name}' failed verification: {report.violations[0].message}")
        logger.info("%s: cost %.3f in %.2fs", inst.name, solution.total_distance, elapsed)
        return {'instance': inst.name, 'n_customers': inst.n_customers, 'cost': solution.total_distance,
                'ref_cost': np.nan, 'gap_percent': np.nan, 'time_s': elapsed, 'routes': len(solution.routes), 'note': ''}

    if jobs > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(solve, instances))
    else:
        rows = [solve(inst) for inst in instances]
    report = EvalReport(pd.DataFrame(rows, columns=REPORT_COLUMNS), settings, notes)
    if references is not None:
        report.set_references(references)
    return report


@dataclass
class BootstrapResult:
    """Mean paired difference `a - b` with a percentile confidence interval."""
    mean_difference: float
    low: float
    high: float
    confidence: float
    resamples: int


def paired_bootstrap(costs_a, costs_b, resamples:int=const.BOOTSTRAP_RESAMPLES, seed:int=0,
                     confidence:float=0.95) -> BootstrapResult:
    """Paired bootstrap of the mean cost difference between two decoders on the same instances.

    Args:
        costs_a (array-like): Costs of decoder A
        costs_b (array-like): Costs of decoder B, same instance order
        resamples (int, optional): Bootstrap resamples. Defaults to `BOOTSTRAP_RESAMPLES`.
        seed (int, optional): Random seed. Defaults to 0.
        confidence (float, optional): Interval mass. Defaults to 0.95.

    Raises:
        ContractViolationError: Length mismatch or empty input

    Returns:
        BootstrapResult: Mean difference and interval
    """
    a = np.asarray(costs_a, dtype=np.float64)
    b = np.asarray(costs_b, dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ContractViolationError(f'paired costs need equal nonempty shapes, got {a.shape} and {b.shape}')
    diff = a - b
    rng = np.random.default_rng(seed)
    means = diff[rng.integers(0, diff.size, size=(resamples, diff.size))].mean(axis=1)
    tail = (1.0 - confidence) / 2.0 * 100.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return BootstrapResult(float(diff.mean()), float(low), float(high), confidence, resamples)
