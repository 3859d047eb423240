import numpy as np
import pytest
import torch

from RoutaPy import (CheckpointError, ConfigError, Constants, ContractViolationError, TrainConfig, Trainer,
                     compute_advantages, exact_vrp, gap_percent, generate_dataset, greedy_decode,
                     group_mean_advantage, hard_top1_advantage, lambda_morph_schedule, save_checkpoint,
                     soft_top1_advantage, tau_schedule)


def _tiny_config(**changes) -> TrainConfig:
    values = dict(task='TSP', batch_size=2, rollouts=4, epochs=2, customers=5, instances_per_epoch=4,
                  learning_rate=1e-2, seed=7, jobs=1)
    values.update(changes)
    return TrainConfig(**values)


def test_soft_top1_equal_costs_give_zero():
    for tau in (0.01, 0.25, 1.0, 4.0, 1e8):
        assert np.allclose(soft_top1_advantage([3.0, 3.0, 3.0, 3.0], tau), 0.0, atol=1e-12)


def test_soft_top1_large_tau_is_group_mean():
    costs = np.array([10.0, 12.0, 9.0, 15.0, 11.0])
    assert np.allclose(soft_top1_advantage(costs, 1e8, 10.0), group_mean_advantage(costs, 10.0), atol=1e-6)


def test_soft_top1_ranks_cheaper_rollouts_higher():
    advantages = soft_top1_advantage([1.0, 2.0, 3.0], 0.25)
    assert advantages[0] > 0.0
    assert advantages[0] > advantages[1] > advantages[2]


def test_soft_top1_is_stable_at_small_tau():
    advantages = soft_top1_advantage([1.0, 1000.0, 2000.0], 0.001)
    assert np.all(np.isfinite(advantages))
    assert advantages[0] > 0.0


def test_small_tau_credits_only_the_best():
    costs = np.array([1.0, 1.5, 2.0, 3.0])
    soft = soft_top1_advantage(costs, 1e-3)
    assert soft[0] == pytest.approx((len(costs) - 1) * 0.5, rel=1e-3)
    assert np.allclose(soft[1:], 0.0, atol=1e-2)


def test_hard_top1_and_group_mean():
    assert hard_top1_advantage([4.0, 2.0, 2.0, 5.0]).tolist() == [-0.25, 0.75, -0.25, -0.25]
    advantages = group_mean_advantage([1.0, 2.0, 6.0], s_scale=2.0)
    assert advantages.tolist() == pytest.approx([1.0, 0.5, -1.5])
    assert advantages.sum() == pytest.approx(0.0)


def test_advantage_contracts():
    with pytest.raises(ContractViolationError):
        soft_top1_advantage([1.0], 1.0)
    with pytest.raises(ContractViolationError):
        soft_top1_advantage([1.0, 2.0], 0.0)
    with pytest.raises(ContractViolationError):
        group_mean_advantage([1.0, np.nan])
    with pytest.raises(ConfigError):
        compute_advantages([1.0, 2.0], 'ppo')


def test_tau_schedule():
    assert tau_schedule(0, 3000) == pytest.approx(4.0)
    assert tau_schedule(10, 3000) == pytest.approx(0.25)
    assert tau_schedule(5000, 3000) == pytest.approx(0.25)
    values = [tau_schedule(step, 600) for step in range(5)]
    assert values == sorted(values, reverse=True)
    assert values[1] == pytest.approx(1.0)


def test_lambda_morph_schedule():
    assert lambda_morph_schedule(0, 0) == 1.0
    assert [lambda_morph_schedule(e, 4) for e in range(5)] == [0.25, 0.5, 0.75, 1.0, 1.0]


def test_train_config_io():
    config = TrainConfig.from_json('{"epochs": 3, "advantage_mode": "group_mean"}').validate()
    assert config.epochs == 3 and config.advantage_mode == 'group_mean'
    assert TrainConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigError, match='lr'):
        TrainConfig.from_dict({'lr': 1.0})
    with pytest.raises(ConfigError, match='rollouts'):
        TrainConfig(rollouts=1).validate()
    with pytest.raises(ConfigError):
        TrainConfig(tau_start=0.1, tau_end=0.25).validate()


def test_trainer_rejects_task_mismatch(policy_factory):
    with pytest.raises(ConfigError, match='does not match'):
        Trainer(policy_factory('CVRP'), _tiny_config())


def test_fit_updates_parameters_and_records_metrics(policy_factory):
    policy = policy_factory('TSP')
    before = policy.flat_parameters()
    trainer = Trainer(policy, _tiny_config()).fit()
    assert trainer.epoch == 2
    assert trainer.step == 4 == trainer.total_steps
    assert not torch.equal(before, policy.flat_parameters())
    metrics = trainer.metrics
    assert metrics['epoch'].tolist() == [0, 1]
    assert np.all(np.isfinite(metrics[['mean_cost', 'mean_abs_advantage', 'grad_norm', 'tau']].to_numpy(dtype=float)))
    assert 'Training Run' in repr(trainer)
    assert 'routa-summary' in trainer._repr_html_()


def test_training_is_deterministic_across_worker_counts(policy_factory):
    a = Trainer(policy_factory('TSP'), _tiny_config(jobs=1)).fit()
    b = Trainer(policy_factory('TSP'), _tiny_config(jobs=3)).fit()
    assert torch.allclose(a.policy.flat_parameters(), b.policy.flat_parameters(), rtol=0.0, atol=1e-12)
    assert np.allclose(a.metrics['mean_cost'], b.metrics['mean_cost'])


def test_fixed_dataset_is_reused(policy_factory):
    dataset = generate_dataset(3, 5, seed=1, task='TSP')
    trainer = Trainer(policy_factory('TSP'), _tiny_config(), dataset=dataset)
    assert trainer.epoch_instances(0) == dataset == trainer.epoch_instances(1)
    assert trainer.total_steps == 2 * 2
    generated = Trainer(policy_factory('TSP'), _tiny_config())
    assert generated.epoch_instances(0) == generated.epoch_instances(0)
    assert generated.epoch_instances(0) != generated.epoch_instances(1)


def test_morphing_starts_from_reference(policy_factory):
    trainer = Trainer(policy_factory('TSP'), _tiny_config(lambda_morph_epochs=4, epochs=1))
    assert trainer.lambda_morph == 0.25
    row = trainer.train_epoch()
    assert row['lambda_morph'] == 0.25
    assert trainer.lambda_morph == 0.5


def test_group_mean_and_hard_modes_train(policy_factory):
    for mode in ('group_mean', 'hard_top1'):
        trainer = Trainer(policy_factory('TSP'), _tiny_config(advantage_mode=mode, epochs=1)).fit()
        assert trainer.epoch == 1


def test_set_learning_rate(policy_factory):
    trainer = Trainer(policy_factory('TSP'), _tiny_config(optimizer='adam'))
    assert trainer.set_learning_rate(5e-4) is trainer
    assert trainer.config.learning_rate == 5e-4
    with pytest.raises(ConfigError):
        trainer.set_learning_rate(0.0)


def test_checkpoint_and_resume(policy_factory, tmp_path):
    path = tmp_path / 'run.json'
    trainer = Trainer(policy_factory('TSP'), _tiny_config(epochs=1)).fit(checkpoint_path=path)
    resumed = Trainer.resume(path, _tiny_config(epochs=2))
    assert resumed.epoch == 1 and resumed.step == trainer.step
    assert torch.equal(resumed.policy.flat_parameters(), trainer.policy.flat_parameters())
    assert len(resumed.metrics) == 1
    resumed.fit()
    assert resumed.epoch == 2 and len(resumed.metrics) == 2
    csv = tmp_path / 'metrics.csv'
    resumed.export_metrics_to_csv(csv)
    assert csv.read_text().splitlines()[0] == 'epoch,mean_cost,mean_abs_advantage,grad_norm,tau,lambda_morph'


def test_resume_needs_training_state(policy_factory, tmp_path):
    path = tmp_path / 'plain.json'
    save_checkpoint(policy_factory('TSP'), path)
    with pytest.raises(CheckpointError, match='resume'):
        Trainer.resume(path)


def _mean_cost_and_gap(policy, evaluation, optima) -> tuple[float, float]:
    costs = [greedy_decode(inst, policy).total_distance for inst in evaluation]
    gaps = [gap_percent(cost, optimum) for cost, optimum in zip(costs, optima)]
    return float(np.mean(costs)), float(np.mean(gaps))


@pytest.mark.slow
def test_training_reduces_greedy_cost(policy_factory):
    config = TrainConfig(task='CVRPTW', customers=10, epochs=30, instances_per_epoch=64, batch_size=16, rollouts=8,
                         optimizer='adam', learning_rate=1e-3, seed=0, jobs=4)
    evaluation = generate_dataset(16, 10, seed=12345, task='CVRPTW')
    optima = [exact_vrp(inst).total_distance for inst in evaluation]

    policy = policy_factory('CVRPTW')
    untrained, gap_before = _mean_cost_and_gap(policy, evaluation, optima)
    Trainer(policy, config).fit()
    trained, gap_after = _mean_cost_and_gap(policy, evaluation, optima)
    assert trained <= 0.9 * untrained
    assert gap_after < gap_before

    # same seeds, step summary switched off
    no_summary = policy_factory('CVRPTW', summary_mode=Constants.SUMMARY_OFF)
    Trainer(no_summary, config).fit()
    _, gap_no_summary = _mean_cost_and_gap(no_summary, evaluation, optima)
    assert gap_after <= gap_no_summary
