import numpy as np
import pytest

from RoutaPy import (ConfigError, GenerationError, GeneratorLatents, TaskKind, cvrp_capacity, generate_cvrp,
                     generate_cvrptw, generate_dataset, generate_tsp, sample_latents, time_window_bounds,
                     validate_instance, window_from_phase)


def test_same_latents_give_identical_instances():
    latents = GeneratorLatents(rng_seed=11, K_clusters=4)
    a = generate_cvrptw(latents, 30)
    b = generate_cvrptw(GeneratorLatents.from_dict(latents.to_dict()), 30)
    assert a == b
    assert np.array_equal(a.coordinates, b.coordinates)
    assert np.array_equal(a.window_open, b.window_open)


def test_different_seed_changes_instance():
    a = generate_cvrptw(GeneratorLatents(rng_seed=1), 20)
    b = generate_cvrptw(GeneratorLatents(rng_seed=2), 20)
    assert not np.array_equal(a.coordinates, b.coordinates)


def test_generated_windows_are_sound():
    latents = GeneratorLatents(rng_seed=5, r_con=1.0, pi_width=(1.0, 0.0, 0.0))
    inst = generate_cvrptw(latents, 50)
    delta = latents.alpha_timecoef * inst.distances[0, 1:]
    lower, upper = time_window_bounds(delta, latents.T_max, latents.service_time)
    e, l = inst.window_open[1:], inst.window_close[1:]
    assert np.all(lower - 1e-9 <= e) and np.all(e <= l) and np.all(l <= upper + 1e-9)
    assert np.allclose(inst.service_times[1:], latents.service_time)
    assert np.all((1 <= inst.demands[1:]) & (inst.demands[1:] <= 9))
    assert inst.horizon_Tmax == latents.T_max
    assert inst.time_coef == latents.alpha_timecoef


def test_generated_datasets_validate():
    for inst in generate_dataset(40, 20, seed=9):
        report = validate_instance(inst)
        assert report.ok, repr(report)


@pytest.mark.slow
def test_generator_soundness_at_scale():
    rng = np.random.default_rng(0)
    for index in range(10_000):
        inst = generate_cvrptw(sample_latents(rng), 100)
        assert validate_instance(inst).ok, inst.name
    first = generate_dataset(3, 100, seed=42)
    second = generate_dataset(3, 100, seed=42)
    assert first == second


def test_window_from_phase_width_and_clamp():
    e, l, width = window_from_phase(10.0, 110.0, 0.5, 0.2, 5.0)
    assert (e, l, width) == (50.0, 70.0, 20.0)
    e, l, width = window_from_phase(10.0, 110.0, 1.0, 0.01, 5.0)
    assert width == 5.0
    assert l == 110.0 and e == pytest.approx(107.5)


def test_tight_horizon_raises_generation_error():
    latents = GeneratorLatents(S=100.0, H=0.05, nu=0.1, rng_seed=0)
    with pytest.raises(GenerationError, match='too tight'):
        generate_cvrptw(latents, 3)


@pytest.mark.parametrize('changes', [
    {'pi_space': (0.5, 0.5, 0.5, 0.5)},
    {'pi_width': (1.0, 0.0)},
    {'r_con': 1.5},
    {'S': 0.0},
    {'K_clusters': 0},
])
def test_invalid_latents(changes):
    with pytest.raises(ConfigError):
        GeneratorLatents(**changes).validate()


def test_unknown_latent_key():
    with pytest.raises(ConfigError, match='horizon'):
        GeneratorLatents.from_dict({'horizon': 3})


def test_sampled_latents_are_valid():
    rng = np.random.default_rng(3)
    for _ in range(20):
        latents = sample_latents(rng).validate()
        assert 1 <= latents.K_clusters <= 6
        assert abs(sum(latents.pi_space) - 1.0) < 1e-12


def test_uniform_generators():
    tsp = generate_tsp(20, seed=1)
    assert tsp.task is TaskKind.TSP and tsp.n_customers == 20
    assert tsp.coordinates.min() >= 0.0 and tsp.coordinates.max() <= 1.0
    cvrp = generate_cvrp(20, seed=1)
    assert cvrp.capacity == 30.0 == cvrp_capacity(20)
    assert cvrp_capacity(7) == 50.0
    assert generate_tsp(20, seed=1) == tsp


def test_dataset_per_task():
    for task in ('TSP', 'CVRP', 'CVRPTW'):
        instances = generate_dataset(3, 6, seed=4, task=task)
        assert [inst.task.value for inst in instances] == [task] * 3
        assert len({inst.name for inst in instances}) == 3


def test_fixed_latents_dataset_shifts_seed():
    latents = GeneratorLatents(rng_seed=100)
    instances = generate_dataset(2, 10, latents=latents)
    assert instances[0].coordinates.tolist() == generate_cvrptw(GeneratorLatents(rng_seed=100), 10).coordinates.tolist()
    assert instances[1].coordinates.tolist() == generate_cvrptw(GeneratorLatents(rng_seed=101), 10).coordinates.tolist()
