"""Procedural instance generators.

`generate_cvrptw` mixes four spatial components (clustered Gaussian, uniform, banded corridor,
outlier), couples time windows to depot travel time and controls constraint intensity through
`GeneratorLatents`. `generate_tsp` and `generate_cvrp` are the usual uniform unit-square sets.
"""
from __future__ import annotations
import json
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._constants import Constants as const
from ._exceptions import ConfigError, GenerationError
from ._instances import CustomerRecord, DistanceRule, RoutingInstance, TaskKind, pairwise_distances

logger = logging.getLogger(__name__)

SPACE_CLUSTER, SPACE_UNIFORM, SPACE_CORRIDOR, SPACE_OUTLIER = range(4)


@dataclass
class GeneratorLatents:
    """Latent variables of one generated CVRPTW instance.

    `w_min=None` resolves to `MIN_WIDTH_RATIO * T_max`. `capacity` is not part of the
    window pipeline; demands are Uniform{1..9} against this capacity.
    """
    S: float = const.SPATIAL_SCALE
    H: float = const.HORIZON_RATIO
    nu: float = const.SERVICE_RATIO
    alpha_timecoef: float = const.TIME_COEF
    K_clusters: int = const.N_CLUSTERS
    pi_space: tuple = const.SPACE_WEIGHTS
    pi_width: tuple = const.WIDTH_WEIGHTS
    pi_phase: tuple = const.PHASE_WEIGHTS
    r_con: float = const.CONSTRAINED_RATIO
    sigma_p: float = const.PHASE_NOISE
    w_min: float|None = None
    rng_seed: int = 0
    capacity: float = const.CVRPTW_CAPACITY

    def __post_init__(self) -> None:
        self.pi_space = tuple(float(v) for v in self.pi_space)
        self.pi_width = tuple(float(v) for v in self.pi_width)
        self.pi_phase = tuple(float(v) for v in self.pi_phase)
        self.K_clusters = int(self.K_clusters)
        self.rng_seed = int(self.rng_seed)

    @property
    def T_max(self) -> float:
        """Horizon endpoint `H * S`"""
        return self.H * self.S

    @property
    def service_time(self) -> float:
        """Service time `nu * S`"""
        return self.nu * self.S

    @property
    def min_width(self) -> float:
        """Resolved minimum window width"""
        return self.w_min if self.w_min is not None else const.MIN_WIDTH_RATIO * self.T_max

    def validate(self) -> GeneratorLatents:
        """Check latent invariants.

        Raises:
            ConfigError: Mixture weights not a distribution, ratios out of range, non-positive scales

        Returns:
            GeneratorLatents: self, for chaining
        """
        for label, weights, size in (('pi_space', self.pi_space, 4), ('pi_width', self.pi_width, 3), ('pi_phase', self.pi_phase, 4)):
            if len(weights) != size:
                raise ConfigError(f'{label} needs {size} weights, got {len(weights)}')
            if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigError(f'{label} must be nonnegative and sum to 1, got {weights}')
        if not 0.0 <= self.r_con <= 1.0:
            raise ConfigError(f'r_con must lie in [0, 1], got {self.r_con}')
        for label in ('S', 'H', 'nu', 'alpha_timecoef', 'capacity'):
            if not getattr(self, label) > 0:
                raise ConfigError(f'{label} must be positive, got {getattr(self, label)}')
        if not self.min_width > 0:
            raise ConfigError(f'w_min must be positive, got {self.min_width}')
        if self.K_clusters < 1:
            raise ConfigError(f'K_clusters must be at least 1, got {self.K_clusters}')
        if self.sigma_p < 0:
            raise ConfigError(f'sigma_p must be nonnegative, got {self.sigma_p}')
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ('pi_space', 'pi_width', 'pi_phase'):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data:dict) -> GeneratorLatents:
        """Build latents from a dict of field names.

        Raises:
            ConfigError: Unknown field name
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f'unknown GeneratorLatents field(s): {sorted(unknown)}')
        return cls(**data)

    @classmethod
    def from_json(cls, text:str) -> GeneratorLatents:
        return cls.from_dict(json.loads(text))


def sample_latents(rng:np.random.Generator) -> GeneratorLatents:
    """Draw latents from the artifact envelope (uniform ranges, flat Dirichlet mixture weights).

    Args:
        rng (np.random.Generator): Source of randomness

    Returns:
        GeneratorLatents: Valid latents with a fresh `rng_seed`
    """
    return GeneratorLatents(
        S=float(rng.uniform(*const.LATENT_S_RANGE)),
        H=float(rng.uniform(*const.LATENT_H_RANGE)),
        nu=float(rng.uniform(*const.LATENT_NU_RANGE)),
        alpha_timecoef=float(rng.uniform(*const.LATENT_ALPHA_RANGE)),
        K_clusters=int(rng.integers(const.LATENT_K_RANGE[0], const.LATENT_K_RANGE[1] + 1)),
        pi_space=tuple(_normalised(rng.dirichlet(np.ones(4)))),
        pi_width=tuple(_normalised(rng.dirichlet(np.ones(3)))),
        pi_phase=tuple(_normalised(rng.dirichlet(np.ones(4)))),
        r_con=float(rng.uniform(*const.LATENT_RCON_RANGE)),
        rng_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _normalised(weights:np.ndarray) -> list[float]:
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    out = [float(w) for w in weights[:-1]]
    out.append(max(0.0, 1.0 - sum(out)))
    return out


def time_window_bounds(delta:np.ndarray|float, T_max:float, service_time:float) -> tuple:
    """Feasible window bounds from depot travel time: `L = delta`, `U = T_max - delta - s`."""
    return delta, T_max - delta - service_time


def window_from_phase(L, U, phase, omega, w_min) -> tuple:
    """Constrained window: centre `L + p (U - L)`, width `max(w_min, omega (U - L))`, clamped to `[L, U]`.

    Works elementwise on floats or numpy arrays.

    Returns:
        tuple: `(e, l, W)`
    """
    span = U - L
    centre = L + phase * span
    width = np.maximum(w_min, omega * span)
    early = np.maximum(L, centre - 0.5 * width)
    late = np.minimum(U, centre + 0.5 * width)
    return early, late, width


def _corridor_point(rng, corridor):
    start, end = corridor
    direction = end - start
    length = float(np.hypot(*direction)) or 1.0
    normal = np.array([-direction[1], direction[0]]) / length
    t = rng.uniform()
    offset = rng.normal(0.0, const.CORRIDOR_HALF_WIDTH)
    return start + t * direction + offset * normal


def _outlier_point(rng, anchors):
    point = rng.uniform(0.0, 1.0, size=2)
    for _ in range(const.OUTLIER_MAX_RESAMPLES):
        if np.min(np.hypot(*(anchors - point).T)) > const.OUTLIER_MIN_DISTANCE:
            break
        point = rng.uniform(0.0, 1.0, size=2)
    return point


def _sample_position(rng, component, cluster, centers, stds, corridor, anchors) -> np.ndarray:
    if component == SPACE_CLUSTER:
        point = centers[cluster] + rng.normal(0.0, stds[cluster], size=2)
    elif component == SPACE_UNIFORM:
        point = rng.uniform(0.0, 1.0, size=2)
    elif component == SPACE_CORRIDOR:
        point = _corridor_point(rng, corridor)
    else:
        point = _outlier_point(rng, anchors)
    return np.clip(point, 0.0, 1.0)


def generate_cvrptw(latents:GeneratorLatents, n:int, name:str|None=None) -> RoutingInstance:
    """Generate one CVRPTW instance from latent variables.

    Args:
        latents (GeneratorLatents): Latents, including `rng_seed`
        n (int): Number of customers
        name (str | None, optional): Instance name. Defaults to `cvrptw{n}_s{seed}`.

    Raises:
        ConfigError: Invalid latents or `n < 1`
        GenerationError: A node still has `U < L` after `NODE_MAX_RETRIES` resamples

    Returns:
        RoutingInstance: CVRPTW instance, bit-identical for identical latents
    """
    latents.validate()
    if n < 1:
        raise ConfigError(f'customer count must be at least 1, got {n}')
    rng = np.random.default_rng(latents.rng_seed)
    S, K = latents.S, latents.K_clusters
    T_max, service = latents.T_max, latents.service_time

    depot_unit = rng.uniform(0.0, 1.0, size=2)
    centers = rng.uniform(0.1, 0.9, size=(K, 2))
    stds = rng.uniform(*const.CLUSTER_STD_RANGE, size=K)
    corridor = rng.uniform(0.0, 1.0, size=(2, 2))
    anchors = np.vstack([depot_unit[None, :], centers])
    components = rng.choice(4, size=n, p=latents.pi_space)
    cluster_of = rng.integers(0, K, size=n)
    unit = np.array([_sample_position(rng, components[j], cluster_of[j], centers, stds, corridor, anchors) for j in range(n)])

    depot = S * depot_unit
    for j in range(n):
        for attempt in range(const.NODE_MAX_RETRIES + 1):
            delta = latents.alpha_timecoef * pairwise_distances(S * unit[j:j + 1], depot[None, :])[0, 0]
            lower, upper = time_window_bounds(delta, T_max, service)
            if upper >= lower:
                if attempt:
                    logger.info('node %d placed after %d resample(s)', j + 1, attempt)
                break
            if attempt == const.NODE_MAX_RETRIES:
                raise GenerationError(
                    f'node {j + 1}: horizon T_max={T_max:g} too tight for depot travel time {delta:g} '
                    f'and service {service:g} after {const.NODE_MAX_RETRIES} resamples')
            unit[j] = _sample_position(rng, components[j], cluster_of[j], centers, stds, corridor, anchors)

    positions = S * unit
    delta = latents.alpha_timecoef * pairwise_distances(positions, depot[None, :])[:, 0]
    lower, upper = time_window_bounds(delta, T_max, service)

    nearest_center = np.argmin(pairwise_distances(unit, centers), axis=1)
    cluster_index = np.where(components == SPACE_CLUSTER, cluster_of, nearest_center)
    psi_cluster = cluster_index / (K - 1) if K > 1 else np.zeros(n)
    radius = pairwise_distances(unit, depot_unit[None, :])[:, 0]
    psi_radial = radius / radius.max() if radius.max() > 0 else np.zeros(n)
    offset = unit - depot_unit
    psi_angular = (np.arctan2(offset[:, 1], offset[:, 0]) + math.pi) / (2 * math.pi)
    psi_random = rng.uniform(0.0, 1.0, size=n)
    psi = np.vstack([psi_cluster, psi_radial, psi_angular, psi_random])
    noise = rng.normal(0.0, latents.sigma_p, size=n)
    phase = np.clip(np.asarray(latents.pi_phase) @ psi + noise, 0.0, 1.0)

    constrained = rng.random(n) < latents.r_con
    width_component = rng.choice(3, size=n, p=latents.pi_width)
    beta = np.asarray(const.BETA_WIDTHS)
    omega = rng.beta(beta[width_component, 0], beta[width_component, 1])
    early, late, _ = window_from_phase(lower, upper, phase, omega, latents.min_width)
    # unconstrained nodes keep the wide window [0, T_max - s - delta] clamped to [L, U]
    early = np.where(constrained, early, lower)
    late = np.where(constrained, late, upper)

    low, high = const.DEMAND_RANGE
    demands = rng.integers(low, high + 1, size=n).astype(np.float64)
    customers = tuple(
        CustomerRecord((positions[j, 0], positions[j, 1]), float(demands[j]), float(early[j]), float(late[j]), float(service))
        for j in range(n)
    )
    return RoutingInstance(TaskKind.CVRPTW, (depot[0], depot[1]), customers, capacity=float(latents.capacity),
                           horizon_Tmax=float(T_max), spatial_scale_S=float(S),
                           name=name or f'cvrptw{n}_s{latents.rng_seed}', distance_rule=DistanceRule.EXACT,
                           time_coef=float(latents.alpha_timecoef))


def generate_tsp(n:int, seed:int=0, name:str|None=None) -> RoutingInstance:
    """Uniform unit-square TSP with `n` customers plus the start node."""
    if n < 1:
        raise ConfigError(f'customer count must be at least 1, got {n}')
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, 1.0, size=(n + 1, 2))
    customers = tuple(CustomerRecord((x, y)) for x, y in points[1:])
    return RoutingInstance(TaskKind.TSP, (points[0, 0], points[0, 1]), customers, name=name or f'tsp{n}_s{seed}')


def cvrp_capacity(n:int) -> float:
    """Conventional vehicle capacity for a uniform CVRP of size `n`."""
    return const.CVRP_CAPACITIES.get(n, const.CVRP_DEFAULT_CAPACITY)


def generate_cvrp(n:int, seed:int=0, capacity:float|None=None, name:str|None=None) -> RoutingInstance:
    """Uniform unit-square CVRP with Uniform{1..9} demands."""
    if n < 1:
        raise ConfigError(f'customer count must be at least 1, got {n}')
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.0, 1.0, size=(n + 1, 2))
    low, high = const.DEMAND_RANGE
    demands = rng.integers(low, high + 1, size=n)
    customers = tuple(CustomerRecord((points[j + 1, 0], points[j + 1, 1]), float(demands[j])) for j in range(n))
    return RoutingInstance(TaskKind.CVRP, (points[0, 0], points[0, 1]), customers,
                           capacity=capacity if capacity is not None else cvrp_capacity(n), name=name or f'cvrp{n}_s{seed}')


def generate_dataset(count:int, n:int, seed:int=0, task:TaskKind|str=TaskKind.CVRPTW,
                     latents:GeneratorLatents|None=None) -> list[RoutingInstance]:
    """Generate `count` instances deterministically from one seed.

    For CVRPTW, fixed `latents` are reused with seeds `latents.rng_seed + i`; without latents each
    instance draws its own from `sample_latents`.

    Args:
        count (int): Number of instances
        n (int): Customers per instance
        seed (int, optional): Dataset seed. Defaults to 0.
        task (TaskKind | str, optional): Task family. Defaults to CVRPTW.
        latents (GeneratorLatents | None, optional): Fixed latents. Defaults to None.

    Returns:
        list[RoutingInstance]: Generated instances
    """
    task = TaskKind(task)
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(count):
        if task is TaskKind.TSP:
            instances.append(generate_tsp(n, int(rng.integers(0, 2**31 - 1)), name=f'tsp{n}_{seed}_{i}'))
        elif task is TaskKind.CVRP:
            instances.append(generate_cvrp(n, int(rng.integers(0, 2**31 - 1)), name=f'cvrp{n}_{seed}_{i}'))
        else:
            if latents is None:
                drawn = sample_latents(rng)
            else:
                drawn = GeneratorLatents.from_dict({**latents.to_dict(), 'rng_seed': latents.rng_seed + i})
            instances.append(generate_cvrptw(drawn, n, name=f'cvrptw{n}_{seed}_{i}'))
    return instances
