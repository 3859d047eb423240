import pathlib

import pytest

from RoutaPy import (CustomerRecord, LincPolicy, PolicyConfig, RoutingInstance, TaskKind, VariantFlags,
                     generate_cvrp, generate_cvrptw, generate_tsp, GeneratorLatents)

DATA_FOLDER = pathlib.Path(__file__).parent / 'data'


def make_policy(task:str='CVRPTW', variant:str='linc', seed:int=0, **flags) -> LincPolicy:
    """Small float64 policy (d=8, two heads) for fast tests."""
    config = PolicyConfig(task=task, embedding_dim=8, encoder_layers=2, attention_heads=2, modulation_hidden=8,
                          feed_forward_hidden=16, comparator_hidden=8, rollout_code_dim=4, seed=seed)
    base = VariantFlags.preset(variant).to_dict()
    base.update(flags)
    return LincPolicy(config, VariantFlags(**base))


@pytest.fixture
def data_folder() -> pathlib.Path:
    return DATA_FOLDER


@pytest.fixture
def policy_factory():
    return make_policy


@pytest.fixture
def two_customer_tw() -> RoutingInstance:
    """Depot at the origin, customer 1 at distance 5 with window [0, 10], customer 2 at distance 10 with window [20, 30]."""
    customers = (
        CustomerRecord((3.0, 4.0), demand=2.0, window_open_e=0.0, window_close_l=10.0, service_time_s=1.0),
        CustomerRecord((6.0, 8.0), demand=3.0, window_open_e=20.0, window_close_l=30.0, service_time_s=1.0),
    )
    return RoutingInstance(TaskKind.CVRPTW, (0.0, 0.0), customers, capacity=5.0, horizon_Tmax=100.0, name='two_tw')


@pytest.fixture
def tight_cvrp() -> RoutingInstance:
    """Two customers whose demands do not fit one vehicle."""
    customers = (CustomerRecord((1.0, 0.0), demand=3.0), CustomerRecord((0.0, 1.0), demand=3.0))
    return RoutingInstance(TaskKind.CVRP, (0.0, 0.0), customers, capacity=5.0, name='tight_cvrp')


@pytest.fixture
def tsp8() -> RoutingInstance:
    return generate_tsp(8, seed=3)


@pytest.fixture
def cvrp8() -> RoutingInstance:
    return generate_cvrp(8, seed=3)


@pytest.fixture
def cvrptw8() -> RoutingInstance:
    return generate_cvrptw(GeneratorLatents(rng_seed=3), 8)
