import numpy as np
import pandas as pd
import pytest

from RoutaPy import (ConfigError, ContractViolationError, DecodeSettings, EvalReport, augmented_multistart,
                     beam_decode, decode, dihedral_transforms, evaluate_benchmark, gap_percent, generate_dataset,
                     greedy_decode, load_reference_table, paired_bootstrap, sample_decode, save_instance,
                     verify_solution)


@pytest.mark.parametrize('task', ['TSP', 'CVRP', 'CVRPTW'])
def test_every_mode_is_feasible(policy_factory, task):
    policy = policy_factory(task)
    for inst in generate_dataset(3, 8, seed=2, task=task):
        for settings in (DecodeSettings(), DecodeSettings('sample', samples=4), DecodeSettings('beam', beam_width=3),
                         DecodeSettings('aug8')):
            solution = decode(inst, policy, settings)
            report = verify_solution(solution, inst)
            assert report.ok, (task, settings.mode, repr(report))
            assert report.distance == pytest.approx(solution.total_distance)


def test_greedy_is_deterministic(policy_factory, cvrptw8):
    policy = policy_factory()
    assert greedy_decode(cvrptw8, policy).nodes == greedy_decode(cvrptw8, policy).nodes


def test_sampling_prefix_property(policy_factory, cvrp8):
    policy = policy_factory('CVRP')
    long = sample_decode(cvrp8, policy, count=6, seed=3)
    short = sample_decode(cvrp8, policy, count=3, seed=3)
    assert np.array_equal(long.costs[:3], short.costs)
    assert long.best.total_distance == long.costs.min()
    assert long.summary['count'] == 6


def test_zero_temperature_sampling_is_greedy(policy_factory, cvrp8):
    policy = policy_factory('CVRP')
    result = sample_decode(cvrp8, policy, count=4, temperature=0.0)
    assert result.best.nodes == greedy_decode(cvrp8, policy).nodes


def test_beam_contains_greedy(policy_factory, cvrptw8):
    policy = policy_factory()
    greedy = greedy_decode(cvrptw8, policy)
    assert beam_decode(cvrptw8, policy, beam_width=1).nodes == greedy.nodes
    assert beam_decode(cvrptw8, policy, beam_width=4).total_distance <= greedy.total_distance + 1e-9


def test_augmentation_never_loses_to_identity(policy_factory, tsp8):
    policy = policy_factory('TSP')
    greedy = greedy_decode(tsp8, policy)
    assert augmented_multistart(tsp8, policy, folds=1).nodes == greedy.nodes
    best, costs = augmented_multistart(tsp8, policy, return_costs=True)
    assert len(costs) == 8
    assert costs[0] == pytest.approx(greedy.total_distance)
    assert best.total_distance == min(costs)


def test_dihedral_transforms_stay_in_unit_square():
    unit = np.array([[0.0, 0.0], [1.0, 0.5], [0.25, 1.0]])
    transforms = dihedral_transforms(unit)
    assert len(transforms) == 8
    assert np.array_equal(transforms[0], unit)
    assert len({t.tobytes() for t in transforms}) == 8
    for t in transforms:
        assert t.min() >= 0.0 and t.max() <= 1.0


def test_invalid_settings(policy_factory, cvrp8):
    with pytest.raises(ConfigError):
        DecodeSettings(mode='sgbs').validate()
    with pytest.raises(ConfigError):
        DecodeSettings.from_dict({'width': 3})
    with pytest.raises(ConfigError):
        sample_decode(cvrp8, policy_factory('CVRP'), count=0)
    with pytest.raises(ConfigError):
        beam_decode(cvrp8, policy_factory('CVRP'), beam_width=0)
    with pytest.raises(ConfigError):
        augmented_multistart(cvrp8, policy_factory('CVRP'), folds=4)


def test_reference_tables():
    assert load_reference_table('tsplib29')['berlin52'] == 7542.0
    assert load_reference_table('solomon56')['C101'] == pytest.approx(827.3)
    assert gap_percent(110.0, 100.0) == pytest.approx(10.0)


def test_evaluate_benchmark_directory(policy_factory, tmp_path):
    instances = generate_dataset(3, 6, seed=5, task='CVRP')
    for inst in instances:
        save_instance(inst, tmp_path / f'{inst.name}.json')
    (tmp_path / 'notes.txt').write_text('not an instance\n')
    references = {instances[0].name: 10.0, instances[1].name.upper(): 20.0}
    report = evaluate_benchmark(tmp_path, policy_factory('CVRP'), references, jobs=2)
    df = report.results
    assert report.n_instances == 3
    assert df['instance'].tolist() == sorted(inst.name for inst in instances)
    assert df['gap_percent'].notna().sum() == 2
    assert df.loc[df['ref_cost'].isna(), 'note'].tolist() == ['no reference']
    assert any(note.startswith('skipped notes.txt') for note in report.notes)
    assert any(note.startswith('no reference') for note in report.notes)
    assert 'Evaluation Report' in repr(report)
    assert 'routa-results' in report._repr_html_()


def test_eval_report_exports(policy_factory, tmp_path):
    report = evaluate_benchmark(generate_dataset(2, 5, seed=1, task='TSP'), policy_factory('TSP'))
    report.export_to_csv(tmp_path / 'report.csv')
    report.export_to_excel(tmp_path / 'report.xlsx')
    assert pd.read_csv(tmp_path / 'report.csv').shape[0] == 2
    assert pd.read_excel(tmp_path / 'report.xlsx', engine='openpyxl').shape[0] == 2


def test_set_references_copy(policy_factory):
    report = evaluate_benchmark(generate_dataset(2, 5, seed=1, task='TSP'), policy_factory('TSP'))
    names = report.results['instance'].tolist()
    updated = report.set_references({names[0]: 1.0, names[1]: 2.0}, inplace=False)
    assert updated is not report
    assert report.results['ref_cost'].isna().all()
    assert updated.results['ref_cost'].tolist() == [1.0, 2.0]
    assert np.isfinite(updated.mean_gap)


def test_empty_report():
    report = EvalReport()
    assert report.n_instances == 0
    assert np.isnan(report.mean_gap)


def test_paired_bootstrap():
    a = np.array([10.0, 12.0, 11.0, 13.0])
    result = paired_bootstrap(a, a - 1.0, resamples=500, seed=1)
    assert result.mean_difference == pytest.approx(1.0)
    assert result.low == pytest.approx(1.0) and result.high == pytest.approx(1.0)
    with pytest.raises(ContractViolationError):
        paired_bootstrap([1.0, 2.0], [1.0])


@pytest.mark.slow
def test_feasibility_gate_at_scale(policy_factory):
    policy = policy_factory('CVRPTW')
    violations = 0
    for inst in generate_dataset(1000, 10, seed=77):
        for settings in (DecodeSettings(), DecodeSettings('sample', samples=16), DecodeSettings('beam', beam_width=16)):
            violations += len(verify_solution(decode(inst, policy, settings), inst).violations)
    assert violations == 0
