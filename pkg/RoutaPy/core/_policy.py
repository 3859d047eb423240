"""Policy Module
Contains:
    * `PolicyConfig` and `VariantFlags` (plus the named `ABLATION_PRESETS`)
    * `LincPolicy`, the attention encoder / modulated decoder with its consequence comparator
    * `policy_distribution`, `morph`, `linear_score`
    * `Trajectory`, `trajectory_log_prob`, `logprob_and_grad`, `GradientAccumulator`
    * JSON checkpoints

Everything runs in float64.
"""
from __future__ import annotations
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from ._constants import Constants as const
from ._consequences import ConsequenceTable, StepSummary, phi_dim, summary_dim
from ._exceptions import CheckpointError, ConfigError, ContractViolationError, TrainingError
from ._instances import RoutingInstance, TaskKind
from ._mdp import ActionMask, ConstructionState

logger = logging.getLogger(__name__)

DTYPE = torch.float64

NODE_FEATURES = {
    TaskKind.TSP: ('x', 'y', 'knn'),
    TaskKind.CVRP: ('x', 'y', 'demand', 'knn', 'is_depot'),
    TaskKind.CVRPTW: ('x', 'y', 'demand', 'open', 'close', 'service', 'knn', 'is_depot'),
}


def _from_dict(cls, data:dict, label:str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f'unknown {label} field(s): {sorted(unknown)}')
    return cls(**data)


@dataclass
class PolicyConfig:
    """Network dimensions and initialization seed."""
    task: str = const.CVRPTW
    embedding_dim: int = const.EMBEDDING_DIM
    encoder_layers: int = const.ENCODER_LAYERS
    attention_heads: int = const.ATTENTION_HEADS
    modulation_hidden: int = const.MODULATION_HIDDEN
    feed_forward_hidden: int = const.FEED_FORWARD_HIDDEN
    comparator_hidden: int = const.COMPARATOR_MLP_HIDDEN
    rollout_code_dim: int = const.ROLLOUT_CODE_DIM
    knn_neighbours: int = const.KNN_NEIGHBOURS
    gate_blend: float = const.GATE_BLEND
    logit_clip: float = const.LOGIT_CLIP
    seed: int = 0

    def validate(self) -> PolicyConfig:
        """Raises `ConfigError` on inconsistent dimensions."""
        if self.task not in const.VALID_TASKS:
            raise ConfigError(f"task must be one of {const.VALID_TASKS}, got '{self.task}'")
        for name in ('embedding_dim', 'encoder_layers', 'attention_heads', 'modulation_hidden',
                     'feed_forward_hidden', 'comparator_hidden', 'knn_neighbours'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.rollout_code_dim < 0:
            raise ConfigError(f'rollout_code_dim must be nonnegative, got {self.rollout_code_dim}')
        if self.embedding_dim % self.attention_heads:
            raise ConfigError(f'embedding_dim {self.embedding_dim} is not divisible by {self.attention_heads} heads')
        if not 0.0 <= self.gate_blend <= 1.0:
            raise ConfigError(f'gate_blend must lie in [0, 1], got {self.gate_blend}')
        if not self.logit_clip > 0:
            raise ConfigError(f'logit_clip must be positive, got {self.logit_clip}')
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data:dict) -> PolicyConfig:
        return _from_dict(cls, data, 'PolicyConfig')


@dataclass
class VariantFlags:
    """Scorer and encoder switches.

    `local_interface=False` drops the consequence term; `centering=False` feeds raw relative
    features; `comparator='mlp'` replaces the shared linear comparator with a candidate-wise MLP;
    `summary_mode='off'` forces `r_t = 0`.
    """
    local_interface: bool = True
    centering: bool = True
    comparator: str = const.COMPARATOR_LINEAR
    summary_mode: str = const.SUMMARY_STANDARD
    projection_bias: bool = True
    gate_attn: bool = True
    depth_mixer: bool = True
    clip_logits: bool = False

    def validate(self) -> VariantFlags:
        if self.comparator not in const.VALID_COMPARATORS:
            raise ConfigError(f"comparator must be one of {const.VALID_COMPARATORS}, got '{self.comparator}'")
        if self.summary_mode not in const.VALID_SUMMARY_MODES:
            raise ConfigError(f"summary_mode must be one of {const.VALID_SUMMARY_MODES}, got '{self.summary_mode}'")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data:dict) -> VariantFlags:
        return _from_dict(cls, data, 'VariantFlags')

    @classmethod
    def preset(cls, name:str) -> VariantFlags:
        """Flags of a named ablation in `ABLATION_PRESETS`.

        Raises:
            ConfigError: Unknown preset
        """
        if name not in ABLATION_PRESETS:
            raise ConfigError(f"unknown variant '{name}', expected one of {sorted(ABLATION_PRESETS)}")
        return cls(**ABLATION_PRESETS[name])


ABLATION_PRESETS = {
    'linc': {},
    'raw_linear': {'centering': False},
    'centered_mlp': {'comparator': const.COMPARATOR_MLP},
    'naive_mlp': {'comparator': const.COMPARATOR_MLP, 'centering': False},
    'summary_off': {'summary_mode': const.SUMMARY_OFF},
    'full_mean_summary': {'summary_mode': const.SUMMARY_FULL_MEAN},
    'no_projection_bias': {'projection_bias': False},
    'no_gate_attn': {'gate_attn': False},
    'no_depth_mixer': {'depth_mixer': False},
    'baseline': {'local_interface': False, 'summary_mode': const.SUMMARY_OFF, 'gate_attn': False, 'depth_mixer': False},
}


def node_features(inst:RoutingInstance, unit_coords:np.ndarray|None=None, knn:int=const.KNN_NEIGHBOURS) -> np.ndarray:
    """Static per-node encoder inputs.

    Coordinates are mapped into the unit square by the bounding box (aspect kept) unless
    `unit_coords` overrides them. The KNN feature is the mean distance to the `knn` nearest other
    nodes over the instance diameter.

    Args:
        inst (RoutingInstance): Problem data
        unit_coords (np.ndarray | None, optional): `(n+1, 2)` replacement coordinates in `[0, 1]^2`. Defaults to None.
        knn (int, optional): Neighbour count. Defaults to `KNN_NEIGHBOURS`.

    Returns:
        np.ndarray: `(n+1, node_dim)` features, columns as `NODE_FEATURES[task]`
    """
    coords = unit_square(inst.coordinates) if unit_coords is None else np.asarray(unit_coords, dtype=np.float64)
    distances = inst.distances / inst.diameter
    k = min(knn, inst.n_nodes - 1)
    if k > 0:
        nearest = np.sort(distances + np.diag(np.full(inst.n_nodes, np.inf)), axis=1)[:, :k]
        knn_mean = nearest.mean(axis=1)
    else:
        knn_mean = np.zeros(inst.n_nodes)
    is_depot = np.zeros(inst.n_nodes)
    is_depot[const.DEPOT] = 1.0
    if inst.task is TaskKind.TSP:
        columns = [coords[:, 0], coords[:, 1], knn_mean]
    elif inst.task is TaskKind.CVRP:
        columns = [coords[:, 0], coords[:, 1], inst.demands / inst.capacity, knn_mean, is_depot]
    else:
        scale = inst.time_scale
        columns = [coords[:, 0], coords[:, 1], inst.demands / inst.capacity, inst.window_open / scale,
                   np.minimum(inst.window_close / scale, 1.0), inst.service_times / scale, knn_mean, is_depot]
    return np.column_stack(columns)


def unit_square(coords:np.ndarray) -> np.ndarray:
    """Map coordinates into `[0, 1]^2` with one shared scale."""
    coords = np.asarray(coords, dtype=np.float64)
    low = coords.min(axis=0)
    span = float((coords.max(axis=0) - low).max())
    return (coords - low) / (span if span > 0 else 1.0)


def reshape_by_heads(qkv:torch.Tensor, head_num:int) -> torch.Tensor:
    # qkv shape: (n, head_num*key_dim) -> (head_num, n, key_dim)
    return qkv.reshape(qkv.size(0), head_num, -1).transpose(0, 1)


def multi_head_attention(q:torch.Tensor, k:torch.Tensor, v:torch.Tensor) -> torch.Tensor:
    # q, k, v shape: (head_num, n, key_dim)
    score = torch.matmul(q, k.transpose(1, 2)) / math.sqrt(q.size(2))
    weights = torch.softmax(score, dim=2)
    return torch.matmul(weights, v)
    # shape: (head_num, n, key_dim)


class MLP(nn.Module):
    """`in -> hidden -> out` with GELU."""
    def __init__(self, in_dim:int, hidden_dim:int, out_dim:int) -> None:
        super().__init__()
        self.W1 = nn.Linear(in_dim, hidden_dim)
        self.W2 = nn.Linear(hidden_dim, out_dim)

    def forward(self, x:torch.Tensor) -> torch.Tensor:
        return self.W2(F.gelu(self.W1(x)))


class EncoderLayer(nn.Module):
    """Self-attention layer with optional head-level output gates."""
    def __init__(self, embedding_dim:int, head_num:int, ff_hidden_dim:int) -> None:
        super().__init__()
        self.head_num = head_num
        self.Wq = nn.Linear(embedding_dim, embedding_dim, bias=False)
        self.Wk = nn.Linear(embedding_dim, embedding_dim, bias=False)
        self.Wv = nn.Linear(embedding_dim, embedding_dim, bias=False)
        self.multi_head_combine = nn.Linear(embedding_dim, embedding_dim)
        self.gate = nn.Linear(embedding_dim, head_num)
        self.norm1 = nn.LayerNorm(embedding_dim)
        self.feed_forward = MLP(embedding_dim, ff_hidden_dim, embedding_dim)
        self.norm2 = nn.LayerNorm(embedding_dim)

    def forward(self, z:torch.Tensor, gate_attn:bool=True, gate_blend:float=const.GATE_BLEND) -> torch.Tensor:
        # z shape: (n, embedding_dim)
        q = reshape_by_heads(self.Wq(z), self.head_num)
        k = reshape_by_heads(self.Wk(z), self.head_num)
        v = reshape_by_heads(self.Wv(z), self.head_num)
        out = multi_head_attention(q, k, v)
        if gate_attn and gate_blend > 0:
            gates = 2.0 * torch.sigmoid(self.gate(z)).transpose(0, 1).unsqueeze(2)
            # gates shape: (head_num, n, 1)
            out = (1.0 - gate_blend) * out + gate_blend * gates * out
        out_concat = out.transpose(0, 1).reshape(z.size(0), -1)
        h = self.norm1(z + self.multi_head_combine(out_concat))
        return self.norm2(h + self.feed_forward(h))


@dataclass
class Encoding:
    """Per-instance encoder output shared by every step of a rollout."""
    embeddings: torch.Tensor
    graph: torch.Tensor
    keys: torch.Tensor


@dataclass
class DecoderStep:
    """Intermediate quantities of one decoding step, all indexed by node id."""
    context: torch.Tensor
    keys: torch.Tensor
    gamma: torch.Tensor
    beta: torch.Tensor
    alpha: torch.Tensor
    modulated: torch.Tensor
    base: torch.Tensor
    local: torch.Tensor
    scores: torch.Tensor
    logits: torch.Tensor
    log_probs: torch.Tensor
    feasible: np.ndarray

    @property
    def probs(self) -> torch.Tensor:
        return self.log_probs.exp()


def morph(u, u_ref, lambda_morph:float):
    """Blend `u_ref + lambda (u - u_ref)`; `lambda=0` returns `u_ref` and `lambda=1` returns `u` unchanged."""
    if lambda_morph == 1.0:
        return u
    if lambda_morph == 0.0:
        return u_ref
    return u_ref + lambda_morph * (u - u_ref)


def linear_score(h:torch.Tensor, h_tilde:torch.Tensor, keys:torch.Tensor, projected_phi:torch.Tensor, alpha) -> torch.Tensor:
    """`alpha <h, k_j> + <h_tilde, W_phi phi_j>` for rows `keys` and `projected_phi`."""
    return alpha * (keys @ h) + projected_phi @ h_tilde


def masked_log_softmax(logits:torch.Tensor, feasible:np.ndarray) -> torch.Tensor:
    """Log-probabilities with exact zeros (`-inf`) on masked entries.

    Raises:
        ContractViolationError: Every action masked
    """
    feasible = np.asarray(feasible, dtype=bool)
    if not feasible.any():
        raise ContractViolationError('policy distribution over an all-masked action set')
    allowed = torch.as_tensor(feasible)
    masked = torch.where(allowed, logits, torch.full_like(logits, -math.inf))
    return torch.log_softmax(masked, dim=0)


def policy_distribution(logits, mask) -> np.ndarray:
    """Softmax over feasible logits, exactly 0 on masked actions.

    Args:
        logits (array-like): Scores per action
        mask (array-like | ActionMask): Feasible actions

    Raises:
        ContractViolationError: Every action masked or shape mismatch

    Returns:
        np.ndarray: Probabilities
    """
    feasible = mask.feasible if isinstance(mask, ActionMask) else np.asarray(mask, dtype=bool)
    logits = torch.as_tensor(np.asarray(logits, dtype=np.float64))
    if logits.shape != feasible.shape:
        raise ContractViolationError(f'logits shape {tuple(logits.shape)} does not match mask shape {feasible.shape}')
    return masked_log_softmax(logits, feasible).exp().numpy()


class LincPolicy(nn.Module):
    """Attention encoder with a consequence-aware, modulated decoder.

    Args:
        config (PolicyConfig, optional): Dimensions and seed. Defaults to `PolicyConfig()`.
        flags (VariantFlags, optional): Variant switches. Defaults to `VariantFlags()`.
    """
    def __init__(self, config:PolicyConfig|None=None, flags:VariantFlags|None=None) -> None:
        super().__init__()
        self.config = (config or PolicyConfig()).validate()
        self.flags = (flags or VariantFlags()).validate()
        task = TaskKind(self.config.task)
        d = self.config.embedding_dim
        self.task = task
        self.node_dim = len(NODE_FEATURES[task])
        self.phi_dim = phi_dim(task)
        self.summary_dim = summary_dim(task, self.flags.summary_mode)
        modulation_in = d + self.summary_dim

        self.embedding = nn.Linear(self.node_dim, d)
        self.layers = nn.ModuleList([
            EncoderLayer(d, self.config.attention_heads, self.config.feed_forward_hidden)
            for _ in range(self.config.encoder_layers)
        ])
        self.depth_queries = nn.Parameter(torch.empty(self.config.encoder_layers, d))
        self.context = nn.Linear(2 * d + 2 + self.config.rollout_code_dim, d)
        self.key_projection = nn.Linear(d, d)
        self.mlp_gamma = MLP(modulation_in, self.config.modulation_hidden, d)
        self.mlp_beta = MLP(modulation_in, self.config.modulation_hidden, d)
        self.mlp_alpha = MLP(modulation_in, self.config.modulation_hidden, 1)
        self.w_phi = nn.Linear(self.phi_dim, d)
        self.comparator = MLP(d + self.phi_dim, self.config.comparator_hidden, 1)
        self.to(DTYPE)
        self.reset_parameters(self.config.seed)

    def reset_parameters(self, seed:int=0) -> None:
        """Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization from a seeded generator."""
        generator = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    bound = 1.0 / math.sqrt(module.in_features)
                    module.weight.uniform_(-bound, bound, generator=generator)
                    if module.bias is not None:
                        module.bias.uniform_(-bound, bound, generator=generator)
                elif isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.fill_(0.0)
            bound = 1.0 / math.sqrt(self.config.embedding_dim)
            self.depth_queries.uniform_(-bound, bound, generator=generator)

    def zero_parameters(self) -> LincPolicy:
        """Set every parameter to 0 (uniform policy); returns self."""
        with torch.no_grad():
            for parameter in self.parameters():
                parameter.zero_()
        return self

    # Flat view
    def flat_parameters(self) -> torch.Tensor:
        """Detached copy of all parameters as one vector"""
        return parameters_to_vector(self.parameters()).detach().clone()

    def load_flat_parameters(self, vector) -> None:
        """Write a flat vector back into the parameters.

        Raises:
            CheckpointError: Wrong length
        """
        if not isinstance(vector, torch.Tensor):
            vector = torch.as_tensor(np.asarray(vector, dtype=np.float64))
        vector = vector.to(DTYPE)
        if vector.numel() != self.n_parameters:
            raise CheckpointError(f'flat vector has {vector.numel()} entries, policy has {self.n_parameters}')
        with torch.no_grad():
            vector_to_parameters(vector.clone(), self.parameters())

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def parameter_slices(self) -> list[tuple[str, int, int]]:
        """`(name, start, stop)` of every named parameter inside the flat view"""
        slices, start = [], 0
        for name, parameter in self.named_parameters():
            slices.append((name, start, start + parameter.numel()))
            start += parameter.numel()
        return slices

    def copy(self) -> LincPolicy:
        """Independent policy with the same config, flags and parameters"""
        clone = LincPolicy(self.config, replace(self.flags))
        clone.load_flat_parameters(self.flat_parameters())
        return clone

    # Encoder
    def encode(self, inst:RoutingInstance, unit_coords:np.ndarray|None=None, flags:VariantFlags|None=None) -> Encoding:
        """Embed nodes, run the attention layers and project keys.

        Args:
            inst (RoutingInstance): Problem data, of the policy's task
            unit_coords (np.ndarray | None, optional): Replacement unit-square coordinates. Defaults to None.
            flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

        Raises:
            ContractViolationError: Instance task differs from the policy task

        Returns:
            Encoding: Node embeddings, graph mean and keys
        """
        if inst.task is not self.task:
            raise ContractViolationError(f'{self.task.value} policy cannot encode a {inst.task.value} instance')
        flags = flags or self.flags
        features = torch.as_tensor(node_features(inst, unit_coords, self.config.knn_neighbours), dtype=DTYPE)
        outputs = [self.embedding(features)]
        for index, layer in enumerate(self.layers):
            if flags.depth_mixer:
                stacked = torch.stack(outputs)
                # stacked shape: (index+1, n, embedding_dim)
                normed = F.layer_norm(stacked, stacked.shape[-1:])
                weights = torch.softmax(normed @ self.depth_queries[index] / math.sqrt(stacked.size(2)), dim=0)
                layer_input = (weights.unsqueeze(2) * stacked).sum(dim=0)
            else:
                layer_input = outputs[-1]
            outputs.append(layer(layer_input, flags.gate_attn, self.config.gate_blend))
        embeddings = outputs[-1]
        keys = self.key_projection(embeddings)
        if not flags.projection_bias:
            keys = keys - self.key_projection.bias
        return Encoding(embeddings, embeddings.mean(dim=0), keys)

    # Decoder
    def decoder_context(self, encoding:Encoding, state:ConstructionState, rollout_code=None) -> torch.Tensor:
        """Context `h_t` from graph mean, current-node embedding, load/time ratios and rollout code."""
        code = torch.zeros(self.config.rollout_code_dim, dtype=DTYPE)
        if rollout_code is not None and self.config.rollout_code_dim:
            code = torch.as_tensor(np.asarray(rollout_code, dtype=np.float64), dtype=DTYPE)
        scalars = torch.tensor([state.capacity_ratio, state.time_ratio], dtype=DTYPE)
        return self.context(torch.cat([encoding.graph, encoding.embeddings[state.current_node], scalars, code]))

    def modulate(self, h:torch.Tensor, summary:StepSummary|np.ndarray|None) -> tuple:
        """`(gamma, beta, alpha, h_tilde)` with `h_tilde = h (1 + gamma) + beta`."""
        if summary is None:
            r = torch.zeros(self.summary_dim, dtype=DTYPE)
        else:
            values = summary.values if isinstance(summary, StepSummary) else summary
            r = torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=DTYPE)
        if r.numel() != self.summary_dim:
            raise ContractViolationError(f'summary has {r.numel()} entries, policy expects {self.summary_dim}')
        hr = torch.cat([h, r])
        gamma = torch.tanh(self.mlp_gamma(hr))
        beta = self.mlp_beta(hr)
        alpha = torch.sigmoid(self.mlp_alpha(hr)).squeeze(0)
        return gamma, beta, alpha, h * (1.0 + gamma) + beta

    def comparator_weights(self, h_tilde:torch.Tensor) -> torch.Tensor:
        """Candidate-shared weight `v_t = W_phi^T h_tilde`"""
        return self.w_phi.weight.transpose(0, 1) @ h_tilde

    def phi_matrix(self, table:ConsequenceTable, mask:ActionMask) -> np.ndarray:
        """Candidate vectors aligned with node ids (zeros on rows that are not candidates).

        Raises:
            ContractViolationError: Table rows do not match the feasible customers
        """
        customers = np.asarray(mask.customers, dtype=int)
        if table.phi.shape != (customers.size, self.phi_dim) or not np.array_equal(table.candidate_ids, customers):
            raise ContractViolationError(
                f'consequence table {table.phi.shape} does not match {customers.size} feasible customers x {self.phi_dim} features')
        phi = np.zeros((mask.feasible.size, self.phi_dim))
        phi[customers] = table.phi
        if mask.depot_feasible:
            phi[const.DEPOT] = table.depot_phi
        return phi

    def raw_scores(self, encoding:Encoding, state:ConstructionState, mask:ActionMask, table:ConsequenceTable,
                   summary:StepSummary|None, rollout_code=None, flags:VariantFlags|None=None) -> DecoderStep:
        """Unclipped scores `u` over node ids (before morphing and masking)."""
        flags = flags or self.flags
        h = self.decoder_context(encoding, state, rollout_code)
        if flags.summary_mode == const.SUMMARY_OFF:
            summary = None
        gamma, beta, alpha, h_tilde = self.modulate(h, summary)
        base = encoding.keys @ h
        local = torch.zeros_like(base)
        if flags.local_interface:
            phi = torch.as_tensor(self.phi_matrix(table, mask), dtype=DTYPE)
            if flags.comparator == const.COMPARATOR_MLP:
                joined = torch.cat([h_tilde.expand(phi.size(0), -1), phi], dim=1)
                local = self.comparator(joined).squeeze(1)
            else:
                projected = phi @ self.w_phi.weight.transpose(0, 1)
                if flags.projection_bias:
                    projected = projected + self.w_phi.bias
                local = projected @ h_tilde
        scores = alpha * base + local
        return DecoderStep(h, encoding.keys, gamma, beta, alpha, h_tilde, base, local, scores, scores, scores, mask.feasible)

    def decode_step(self, encoding:Encoding, state:ConstructionState, mask:ActionMask, table:ConsequenceTable,
                    summary:StepSummary|None, rollout_code=None, reference_scores=None, lambda_morph:float=1.0,
                    flags:VariantFlags|None=None) -> DecoderStep:
        """Full step: scores, optional morphing toward `reference_scores`, clipping, masking, log-softmax.

        Args:
            encoding (Encoding): Output of `encode`
            state (ConstructionState): Current state
            mask (ActionMask): Feasibility of the state
            table (ConsequenceTable): Consequence table of the feasible customers
            summary (StepSummary | None): Step summary, None for zeros
            rollout_code (array-like | None, optional): Binary rollout code. Defaults to None (zeros).
            reference_scores (array-like | None, optional): Frozen reference scores `u_ref`. Defaults to None.
            lambda_morph (float, optional): Morphing weight. Defaults to 1.0.
            flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

        Returns:
            DecoderStep: All intermediate quantities
        """
        flags = flags or self.flags
        step = self.raw_scores(encoding, state, mask, table, summary, rollout_code, flags)
        logits = step.scores
        if reference_scores is not None:
            logits = morph(logits, torch.as_tensor(np.asarray(reference_scores, dtype=np.float64), dtype=DTYPE), lambda_morph)
        if flags.clip_logits:
            clip = self.config.logit_clip
            logits = clip * torch.tanh(logits / clip)
        step.logits = logits
        step.log_probs = masked_log_softmax(logits, mask.feasible)
        return step

    def __repr__(self) -> str:
        enabled = [name for name, value in self.flags.to_dict().items() if value is True]
        return (f"LincPolicy({self.task.value}, d={self.config.embedding_dim}, layers={self.config.encoder_layers}, "
                f"heads={self.config.attention_heads}, parameters={self.n_parameters}, comparator={self.flags.comparator}, "
                f"summary={self.flags.summary_mode}, on={enabled})")


@dataclass
class TrajectoryStep:
    """Frozen decoding inputs of one step; features are constants for differentiation."""
    state: ConstructionState
    mask: ActionMask
    table: ConsequenceTable
    summary: StepSummary
    action: int
    reference_scores: np.ndarray|None = None


@dataclass
class Trajectory:
    """One rollout: instance, steps, rollout code and encoder coordinate override."""
    instance: RoutingInstance
    steps: list[TrajectoryStep] = field(default_factory=list)
    rollout_code: np.ndarray|None = None
    unit_coords: np.ndarray|None = None
    lambda_morph: float = 1.0

    @property
    def actions(self) -> list[int]:
        return [step.action for step in self.steps]


def trajectory_log_prob(policy:LincPolicy, trajectory:Trajectory, flags:VariantFlags|None=None) -> torch.Tensor:
    """Differentiable `sum_t log pi(a_t | s_t)` of a recorded trajectory"""
    encoding = policy.encode(trajectory.instance, trajectory.unit_coords, flags)
    total = torch.zeros((), dtype=DTYPE)
    for step in trajectory.steps:
        decoded = policy.decode_step(encoding, step.state, step.mask, step.table, step.summary, trajectory.rollout_code,
                                     step.reference_scores, trajectory.lambda_morph, flags)
        total = total + decoded.log_probs[step.action]
    return total


class GradientAccumulator:
    """Gradient buffer aligned with the policy flat view; merged by summation.

    Args:
        slices (list[tuple[str, int, int]]): Parameter names and flat ranges
        vector (torch.Tensor | None, optional): Initial buffer. Defaults to None (zeros).
    """
    def __init__(self, slices:list[tuple[str, int, int]], vector:torch.Tensor|None=None) -> None:
        self._slices = list(slices)
        size = self._slices[-1][2] if self._slices else 0
        self._vector = torch.zeros(size, dtype=DTYPE) if vector is None else vector.detach().clone().to(DTYPE)

    @classmethod
    def zeros_like(cls, policy:LincPolicy) -> GradientAccumulator:
        return cls(policy.parameter_slices())

    @classmethod
    def from_grads(cls, policy:LincPolicy, grads) -> GradientAccumulator:
        """Collect per-parameter gradients in `named_parameters` order (None counts as 0).

        Raises:
            TrainingError: A gradient entry is not finite; the message names the parameter
        """
        pieces = []
        for (name, parameter), grad in zip(policy.named_parameters(), grads):
            if grad is None:
                grad = torch.zeros_like(parameter)
            if not torch.isfinite(grad).all():
                raise TrainingError(f"non-finite gradient in parameter '{name}'")
            pieces.append(grad.detach().reshape(-1))
        return cls(policy.parameter_slices(), torch.cat(pieces) if pieces else None)

    @property
    def vector(self) -> torch.Tensor:
        return self._vector

    @property
    def slices(self) -> list[tuple[str, int, int]]:
        return list(self._slices)

    def named(self) -> dict[str, torch.Tensor]:
        """Gradient per parameter name (flat slices)"""
        return {name: self._vector[start:stop] for name, start, stop in self._slices}

    def norm(self) -> float:
        return float(torch.linalg.vector_norm(self._vector))

    def scaled(self, factor:float) -> GradientAccumulator:
        return GradientAccumulator(self._slices, self._vector * factor)

    def __add__(self, other:GradientAccumulator) -> GradientAccumulator:
        if other.vector.shape != self._vector.shape:
            raise ContractViolationError('gradient accumulators of different sizes')
        return GradientAccumulator(self._slices, self._vector + other.vector)

    def __len__(self) -> int:
        return int(self._vector.numel())

    def __repr__(self) -> str:
        return f"GradientAccumulator(size={len(self)}, norm={self.norm():.6g})"


def logprob_and_grad(trajectory:Trajectory, policy:LincPolicy, flags:VariantFlags|None=None) -> tuple[float, GradientAccumulator]:
    """Log-probability of a trajectory and its reverse-mode gradient.

    Args:
        trajectory (Trajectory): Recorded steps; features are held constant
        policy (LincPolicy): Parameters to differentiate
        flags (VariantFlags | None, optional): Override of the policy flags. Defaults to None.

    Raises:
        TrainingError: Non-finite log-probability or gradient

    Returns:
        tuple[float, GradientAccumulator]: `sum_t log pi` and its gradient
    """
    log_prob = trajectory_log_prob(policy, trajectory, flags)
    if not torch.isfinite(log_prob):
        raise TrainingError(f'non-finite trajectory log-probability {float(log_prob)}')
    grads = torch.autograd.grad(log_prob, list(policy.parameters()), allow_unused=True)
    return float(log_prob), GradientAccumulator.from_grads(policy, grads)


# Checkpoints
NORMALIZATION = {
    'coordinates': 'bounding box to unit square',
    'time': 'T_max',
    'distance': 'instance diameter',
    'demand': 'capacity',
}


def checkpoint_dict(policy:LincPolicy, extra:dict|None=None) -> dict:
    return {
        'version': const.CHECKPOINT_VERSION,
        'task': policy.task.value,
        'config': policy.config.to_dict(),
        'flags': policy.flags.to_dict(),
        'dims': {'n_parameters': policy.n_parameters, 'node_dim': policy.node_dim,
                 'phi_dim': policy.phi_dim, 'summary_dim': policy.summary_dim},
        'normalization': NORMALIZATION,
        'parameters': policy.flat_parameters().tolist(),
        'extra': extra or {},
    }


def policy_from_checkpoint(data:dict) -> LincPolicy:
    """Rebuild a policy from a checkpoint document.

    Raises:
        CheckpointError: Version, task or dimension mismatch, or malformed content
    """
    try:
        if data['version'] != const.CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {data['version']} is not {const.CHECKPOINT_VERSION}")
        policy = LincPolicy(PolicyConfig.from_dict(data['config']), VariantFlags.from_dict(data['flags']))
        if data['task'] != policy.task.value:
            raise CheckpointError(f"checkpoint task '{data['task']}' does not match config task '{policy.task.value}'")
        dims = data['dims']
        expected = {'n_parameters': policy.n_parameters, 'node_dim': policy.node_dim,
                    'phi_dim': policy.phi_dim, 'summary_dim': policy.summary_dim}
        for key, value in expected.items():
            if dims.get(key) != value:
                raise CheckpointError(f'checkpoint dimension {key}={dims.get(key)} does not match {value}')
        policy.load_flat_parameters(data['parameters'])
    except (KeyError, TypeError, ConfigError) as err:
        raise CheckpointError(f'malformed checkpoint: {err}') from err
    return policy


def save_checkpoint(policy:LincPolicy, path:str|os.PathLike, extra:dict|None=None) -> None:
    """Write the policy as one JSON document."""
    with open(path, encoding='utf-8', mode='w') as file:
        json.dump(checkpoint_dict(policy, extra), file)
    logger.info('saved checkpoint (%d parameters) to %s', policy.n_parameters, path)


def read_checkpoint(path:str|os.PathLike) -> dict:
    """Raw checkpoint document, including its `extra` block.

    Raises:
        FileNotFoundError: Missing file
        CheckpointError: Not valid JSON
    """
    with open(path, encoding='utf-8', mode='r') as file:
        try:
            return json.load(file)
        except json.JSONDecodeError as err:
            raise CheckpointError(f'checkpoint {path} is not valid JSON: {err.msg}') from err


def load_checkpoint(path:str|os.PathLike) -> LincPolicy:
    """Read a JSON checkpoint.

    Raises:
        FileNotFoundError: Missing file
        CheckpointError: Invalid or mismatched content
    """
    policy = policy_from_checkpoint(read_checkpoint(path))
    logger.info('loaded checkpoint %r from %s', policy, path)
    return policy
