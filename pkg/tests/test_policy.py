import json

import numpy as np
import pytest
import torch

from RoutaPy import (ABLATION_PRESETS, CheckpointError, ConfigError, ContractViolationError, GradientAccumulator,
                     PolicyConfig, VariantFlags, build_table, feasible_actions, greedy_decode, initial_state,
                     load_checkpoint, logprob_and_grad, morph, policy_distribution, rollout, save_checkpoint,
                     step_summary, trajectory_log_prob, verify_solution)
from RoutaPy.core._inference import Sampler


def _first_step(policy, inst, flags=None):
    flags = flags or policy.flags
    state = initial_state(inst)
    mask = feasible_actions(state)
    table = build_table(state, mask, flags.centering)
    summary = step_summary(table, state, flags.summary_mode)
    with torch.no_grad():
        encoding = policy.encode(inst, None, flags)
        return mask, policy.decode_step(encoding, state, mask, table, summary, flags=flags)


def test_policy_distribution_masks_exactly():
    probs = policy_distribution([1.0, 2.0, 3.0, 50.0], [True, False, True, False])
    assert probs[1] == 0.0 and probs[3] == 0.0
    assert probs.sum() == pytest.approx(1.0)
    assert probs[2] == pytest.approx(np.exp(3) / (np.exp(1) + np.exp(3)))


def test_policy_distribution_errors():
    with pytest.raises(ContractViolationError):
        policy_distribution([1.0, 2.0], [False, False])
    with pytest.raises(ContractViolationError, match='shape'):
        policy_distribution([1.0, 2.0, 3.0], [True, False])


def test_morph_endpoints():
    u = torch.tensor([1.0, 2.0], dtype=torch.float64)
    u_ref = torch.tensor([5.0, -1.0], dtype=torch.float64)
    assert morph(u, u_ref, 1.0) is u
    assert morph(u, u_ref, 0.0) is u_ref
    assert torch.allclose(morph(u, u_ref, 0.25), torch.tensor([4.0, -0.25], dtype=torch.float64))


def test_zero_parameters_give_uniform_policy(policy_factory, cvrptw8):
    policy = policy_factory().zero_parameters()
    mask, step = _first_step(policy, cvrptw8)
    probs = step.probs.numpy()
    feasible = mask.feasible
    assert np.allclose(probs[feasible], 1.0 / feasible.sum())
    assert np.all(probs[~feasible] == 0.0)
    assert float(step.alpha) == pytest.approx(0.5)


def test_masked_actions_have_zero_probability(policy_factory, cvrp8):
    policy = policy_factory('CVRP')
    mask, step = _first_step(policy, cvrp8)
    assert step.log_probs.dtype == torch.float64
    assert torch.isinf(step.log_probs[~torch.as_tensor(mask.feasible)]).all()
    assert float(step.probs.sum()) == pytest.approx(1.0)


def test_task_mismatch_is_rejected(policy_factory, tsp8):
    with pytest.raises(ContractViolationError):
        policy_factory('CVRPTW').encode(tsp8)


def test_local_interface_off_has_no_local_term(policy_factory, cvrptw8):
    policy = policy_factory(variant='baseline')
    _, step = _first_step(policy, cvrptw8)
    assert torch.count_nonzero(step.local) == 0


def test_clipped_logits_stay_bounded(policy_factory, cvrptw8):
    policy = policy_factory(clip_logits=True)
    _, step = _first_step(policy, cvrptw8)
    assert float(step.logits.abs().max()) <= policy.config.logit_clip


@pytest.mark.parametrize('variant', sorted(ABLATION_PRESETS))
def test_every_ablation_decodes_feasibly(policy_factory, cvrptw8, variant):
    policy = policy_factory(variant=variant)
    solution = greedy_decode(cvrptw8, policy)
    assert verify_solution(solution, cvrptw8).ok


def test_config_validation():
    with pytest.raises(ConfigError, match='divisible'):
        PolicyConfig(embedding_dim=10, attention_heads=4).validate()
    with pytest.raises(ConfigError):
        PolicyConfig(task='VRPPD').validate()
    with pytest.raises(ConfigError, match='width'):
        PolicyConfig.from_dict({'width': 3})
    with pytest.raises(ConfigError):
        VariantFlags(comparator='transformer').validate()
    with pytest.raises(ConfigError, match='unknown variant'):
        VariantFlags.preset('polynet')


def test_copy_is_independent(policy_factory):
    policy = policy_factory()
    clone = policy.copy()
    assert torch.equal(clone.flat_parameters(), policy.flat_parameters())
    with torch.no_grad():
        next(clone.parameters()).add_(1.0)
    assert not torch.equal(clone.flat_parameters(), policy.flat_parameters())


def test_checkpoint_round_trip(policy_factory, cvrptw8, tmp_path):
    policy = policy_factory(variant='full_mean_summary', seed=4)
    path = tmp_path / 'policy.json'
    save_checkpoint(policy, path, extra={'note': 'unit'})
    loaded = load_checkpoint(path)
    assert torch.equal(loaded.flat_parameters(), policy.flat_parameters())
    assert loaded.flags == policy.flags
    assert loaded.config == policy.config
    assert greedy_decode(cvrptw8, loaded).nodes == greedy_decode(cvrptw8, policy).nodes
    assert json.loads(path.read_text())['extra'] == {'note': 'unit'}


@pytest.mark.parametrize('tamper', [
    lambda data: data.update(version=99),
    lambda data: data['dims'].update(n_parameters=1),
    lambda data: data.update(task='TSP'),
    lambda data: data.pop('parameters'),
])
def test_checkpoint_mismatch(policy_factory, tmp_path, tamper):
    path = tmp_path / 'policy.json'
    save_checkpoint(policy_factory(), path)
    data = json.loads(path.read_text())
    tamper(data)
    path.write_text(json.dumps(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_read_errors(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json')
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / 'missing.json')


def test_logprob_and_grad(policy_factory, cvrptw8):
    policy = policy_factory()
    rng = np.random.default_rng(0)
    _, trajectory = rollout(policy, cvrptw8, Sampler(rng), rng.integers(0, 2, size=4))
    value, grad = logprob_and_grad(trajectory, policy)
    assert value < 0.0
    assert value == pytest.approx(float(trajectory_log_prob(policy, trajectory)))
    assert len(grad) == policy.n_parameters
    assert grad.norm() > 0.0
    assert torch.isfinite(grad.vector).all()
    names = grad.named()
    assert set(names) == {name for name, _ in policy.named_parameters()}


def test_gradient_accumulator_arithmetic(policy_factory):
    policy = policy_factory()
    slices = policy.parameter_slices()
    a = GradientAccumulator(slices, torch.ones(policy.n_parameters, dtype=torch.float64))
    total = a + a.scaled(2.0)
    assert torch.all(total.vector == 3.0)
    assert total.norm() == pytest.approx(3.0 * policy.n_parameters ** 0.5)
    assert len(GradientAccumulator.zeros_like(policy)) == policy.n_parameters


def test_gradient_accumulator_keeps_plain_private_fields(policy_factory):
    policy = policy_factory()
    acc = GradientAccumulator.zeros_like(policy)
    assert acc._vector is acc.vector
    assert acc._slices == policy.parameter_slices()
    assert not any(name.startswith('_GradientAccumulator__') for name in vars(acc))
    first, start, stop = acc.slices[0]
    assert acc.named()[first].shape == (stop - start,)
