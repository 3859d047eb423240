import logging

from .core._constants import Constants
from .core._exceptions import *
from .core._instances import (TaskKind, DistanceRule, CustomerRecord, RoutingInstance, ValidationReport,
                              euc2d_distance, pairwise_distances, validate_instance)
from .core._parsers import (parse_solomon, parse_tsplib, parse_tsplib_tour, parse_native, parse_instance,
                            dump_native, instance_to_dict, instance_from_dict, load_instance, save_instance)
from .core._generator import (GeneratorLatents, sample_latents, time_window_bounds, window_from_phase,
                              generate_cvrptw, generate_tsp, generate_cvrp, cvrp_capacity, generate_dataset)
from .core._mdp import (StepRecord, ConstructionState, ActionMask, Solution, Violation, VerificationReport,
                        initial_state, is_terminal, feasible_actions, apply_action, solution_from_state,
                        replay_solution, solution_cost, verify_solution)
from .core._consequences import (ConsequenceTable, StepSummary, candidate_features, center, build_table,
                                 step_summary, consequence_frame, phi_dim, summary_dim)
from .core._policy import (PolicyConfig, VariantFlags, ABLATION_PRESETS, LincPolicy, DecoderStep, Trajectory,
                           GradientAccumulator, morph, linear_score, policy_distribution, trajectory_log_prob,
                           logprob_and_grad, save_checkpoint, load_checkpoint, read_checkpoint)
from .core._training import (TrainConfig, RolloutGroup, Trainer, soft_top1_advantage, hard_top1_advantage,
                             group_mean_advantage, compute_advantages, tau_schedule, lambda_morph_schedule)
from .core._inference import (DecodeSettings, SampleResult, EvalReport, BootstrapResult, rollout, greedy_decode,
                              sample_decode, augmented_multistart, beam_decode, decode, dihedral_transforms,
                              evaluate_benchmark, load_reference_table, gap_percent, paired_bootstrap)
from .core._oracle import (OracleReport, GradientCheck, exact_tsp, brute_force_tsp, exact_vrp, exact_solve,
                           canonical_scorer_check, centering_check, soft_top1_limit_check, exact_gap_check,
                           finite_diff_grad, gradient_check)
from .core._diagnostics import (translation_probe, probe_summary, modulation_curves, progress_profile,
                                feature_weight_groups, customer_distribution, total_variation)
from .core._plots import plot_routes, plot_line_chart, plot_grouped_bar_chart, export_figure
from ._api import *

__version__ = Constants.VERSION

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    # instances
    'TaskKind', 'DistanceRule', 'CustomerRecord', 'RoutingInstance', 'ValidationReport',
    'euc2d_distance', 'pairwise_distances', 'validate_instance',
    'parse_solomon', 'parse_tsplib', 'parse_tsplib_tour', 'parse_native', 'parse_instance',
    'dump_native', 'instance_to_dict', 'instance_from_dict', 'load_instance', 'save_instance',
    'GeneratorLatents', 'sample_latents', 'time_window_bounds', 'window_from_phase',
    'generate_cvrptw', 'generate_tsp', 'generate_cvrp', 'cvrp_capacity', 'generate_dataset',
    # mdp
    'StepRecord', 'ConstructionState', 'ActionMask', 'Solution', 'Violation', 'VerificationReport',
    'initial_state', 'is_terminal', 'feasible_actions', 'apply_action', 'solution_from_state',
    'replay_solution', 'solution_cost', 'verify_solution',
    # consequences and policy
    'ConsequenceTable', 'StepSummary', 'candidate_features', 'center', 'build_table', 'step_summary',
    'consequence_frame', 'phi_dim', 'summary_dim',
    'PolicyConfig', 'VariantFlags', 'ABLATION_PRESETS', 'LincPolicy', 'DecoderStep', 'Trajectory',
    'GradientAccumulator', 'morph', 'linear_score', 'policy_distribution', 'trajectory_log_prob',
    'logprob_and_grad', 'save_checkpoint', 'load_checkpoint', 'read_checkpoint',
    # training and inference
    'TrainConfig', 'RolloutGroup', 'Trainer', 'soft_top1_advantage', 'hard_top1_advantage',
    'group_mean_advantage', 'compute_advantages', 'tau_schedule', 'lambda_morph_schedule',
    'DecodeSettings', 'SampleResult', 'EvalReport', 'BootstrapResult', 'rollout', 'greedy_decode',
    'sample_decode', 'augmented_multistart', 'beam_decode', 'decode', 'dihedral_transforms',
    'evaluate_benchmark', 'load_reference_table', 'gap_percent', 'paired_bootstrap',
    # oracles and diagnostics
    'OracleReport', 'GradientCheck', 'exact_tsp', 'brute_force_tsp', 'exact_vrp', 'exact_solve',
    'canonical_scorer_check', 'centering_check', 'soft_top1_limit_check', 'exact_gap_check',
    'finite_diff_grad', 'gradient_check',
    'translation_probe', 'probe_summary', 'modulation_curves', 'progress_profile',
    'feature_weight_groups', 'customer_distribution', 'total_variation',
    'plot_routes', 'plot_line_chart', 'plot_grouped_bar_chart', 'export_figure',
    # api
    'build_policy', 'solve_instance', 'train_policy', 'evaluate_directory',
    # errors
    'RoutaPyError', 'ConfigError', 'InstanceError', 'InstanceParseError', 'UnsupportedFormatError',
    'GenerationError', 'ContractViolationError', 'IncompleteSolutionError', 'TrainingError',
    'CheckpointError', 'OracleSizeError',
    'Constants',
]
