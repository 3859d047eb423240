import pytest

from RoutaPy import (ConfigError, EvalReport, Trainer, build_policy, evaluate_directory, generate_dataset,
                     save_checkpoint, save_instance, solve_instance, train_policy, verify_solution)


SMALL = {'embedding_dim': 8, 'encoder_layers': 1, 'attention_heads': 2, 'modulation_hidden': 8,
         'feed_forward_hidden': 16, 'comparator_hidden': 8, 'rollout_code_dim': 4}


def test_build_policy_variants():
    policy = build_policy('TSP', 'naive_mlp', seed=1, **SMALL)
    assert policy.task.value == 'TSP'
    assert not policy.flags.centering
    assert build_policy('CVRP', **SMALL).flags.centering


def test_solve_instance_from_files(tmp_path, cvrp8):
    policy = build_policy('CVRP', **SMALL)
    instance_path = tmp_path / 'cvrp8.json'
    checkpoint_path = tmp_path / 'policy.json'
    save_instance(cvrp8, instance_path)
    save_checkpoint(policy, checkpoint_path)
    from_files = solve_instance(instance_path, checkpoint_path, mode='sample', samples=3, seed=2)
    in_memory = solve_instance(cvrp8, policy, mode='sample', samples=3, seed=2)
    assert from_files.nodes == in_memory.nodes
    assert verify_solution(from_files, cvrp8).ok


def test_train_policy_with_fixed_dataset():
    dataset = generate_dataset(2, 4, seed=1, task='CVRP')
    trainer = train_policy({'task': 'CVRP', 'epochs': 1, 'customers': 4, 'instances_per_epoch': 2,
                            'batch_size': 2, 'rollouts': 2}, build_policy('CVRP', **SMALL), dataset=dataset)
    assert isinstance(trainer, Trainer)
    assert len(trainer.metrics) == 1


def test_train_policy_task_mismatch():
    with pytest.raises(ConfigError):
        train_policy({'task': 'TSP', 'epochs': 0}, build_policy('CVRP', **SMALL))


def test_evaluate_directory(tmp_path):
    for inst in generate_dataset(2, 5, seed=3, task='TSP'):
        save_instance(inst, tmp_path / f'{inst.name}.json')
    report = evaluate_directory(tmp_path, build_policy('TSP', **SMALL), mode='aug8')
    assert isinstance(report, EvalReport)
    assert report.n_instances == 2
    assert report.settings.mode == 'aug8'
