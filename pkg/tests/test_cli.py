import json

import pandas as pd
import pytest

from RoutaPy._cli import dispatch


TINY_TRAINING = {'task': 'CVRP', 'epochs': 1, 'customers': 4, 'instances_per_epoch': 2, 'batch_size': 2, 'rollouts': 2}


@pytest.fixture
def cvrp_folder(tmp_path):
    folder = tmp_path / 'instances'
    assert dispatch(['generate', '--task', 'CVRP', '--n', '5', '--count', '2', '--seed', '4', '--out', str(folder)]) == 0
    return folder


@pytest.fixture
def checkpoint(tmp_path):
    config = tmp_path / 'train.json'
    config.write_text(json.dumps(TINY_TRAINING))
    path = tmp_path / 'policy.json'
    metrics = tmp_path / 'metrics.csv'
    assert dispatch(['train', '--config', str(config), '--out-checkpoint', str(path), '--metrics', str(metrics)]) == 0
    assert len(pd.read_csv(metrics)) == 1
    return path


def test_usage_errors(capsys):
    assert dispatch([]) == 2
    assert dispatch(['route-everything']) == 2
    assert dispatch(['oracle']) == 2


def test_version(capsys):
    assert dispatch(['--version']) == 0
    assert 'RoutaPy' in capsys.readouterr().out


def test_generate_is_reproducible(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    for folder in (first, second):
        assert dispatch(['generate', '--n', '6', '--count', '2', '--seed', '8', '--out', str(folder)]) == 0
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert len(names) == 2
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_validate(cvrp_folder, data_folder):
    assert dispatch(['validate', *map(str, sorted(cvrp_folder.iterdir()))]) == 0
    assert dispatch(['validate', '--in', str(data_folder / 'mini_solomon.txt')]) == 0
    assert dispatch(['validate', str(data_folder / 'bad_weight.tsp')]) == 1
    assert dispatch(['validate']) == 1


def test_oracle_check(tmp_path):
    out = tmp_path / 'a2.json'
    assert dispatch(['oracle', '--check', 'a2', '--trials', '50', '--out', str(out)]) == 0
    report = json.loads(out.read_text())
    assert report['passed'] and report['trials'] == 50


def test_missing_checkpoint(tmp_path, cvrp_folder, capsys):
    missing = tmp_path / 'nowhere.json'
    instance = next(cvrp_folder.iterdir())
    assert dispatch(['solve', '--checkpoint', str(missing), '--instance', str(instance)]) == 1
    assert 'nowhere.json' in capsys.readouterr().err


def test_train_solve_verify_eval(tmp_path, cvrp_folder, checkpoint):
    instance = sorted(cvrp_folder.iterdir())[0]
    solution = tmp_path / 'solution.json'
    assert dispatch(['solve', '--checkpoint', str(checkpoint), '--instance', str(instance),
                     '--mode', 'beam', '--beam-width', '2', '--out', str(solution)]) == 0
    assert json.loads(solution.read_text())['feasible'] is True
    assert dispatch(['verify', '--instance', str(instance), '--solution', str(solution)]) == 0

    report = tmp_path / 'report.csv'
    assert dispatch(['eval', '--checkpoint', str(checkpoint), '--instances', str(cvrp_folder),
                     '--jobs', '1', '--out', str(report)]) == 0
    assert len(pd.read_csv(report)) == 2


def test_verify_rejects_a_bad_solution(tmp_path, cvrp_folder):
    instance = sorted(cvrp_folder.iterdir())[0]
    solution = tmp_path / 'partial.json'
    solution.write_text(json.dumps({'routes': [[1, 2]]}))
    assert dispatch(['verify', '--instance', str(instance), '--solution', str(solution)]) == 1


def test_diagnose_translation(tmp_path):
    out = tmp_path / 'probe.csv'
    assert dispatch(['diagnose', '--probe', 'translation', '--task', 'CVRP', '--n', '5', '--count', '2',
                     '--jobs', '1', '--out', str(out)]) == 0
    probe = pd.read_csv(out)
    assert set(probe['variant']) == {'centered', 'uncentered'}
    assert probe.loc[probe['variant'] == 'centered', 'drift'].max() <= 1e-12
