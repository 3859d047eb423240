"""Constant variable module used through package.
"""
import os, pathlib
class Constants:
    """Constant Variables to be used through package.
    """
    __slots__ = ()
    # Task names
    TSP = 'TSP'
    CVRP = 'CVRP'
    CVRPTW = 'CVRPTW'
    VALID_TASKS = [TSP, CVRP, CVRPTW]

    # Distance rules
    EXACT = 'Exact'
    EUC2D_ROUNDED = 'Euc2dRounded'
    # Solomon literature convention: each leg truncated to one decimal
    TRUNCATED_1DP = 'Truncated1dp'
    VALID_DISTANCE_RULES = [EXACT, EUC2D_ROUNDED, TRUNCATED_1DP]

    DEPOT = 0
    # Absolute slack on every feasibility comparison, scaled by max(1, T_max)
    FEASIBILITY_TOL = 1e-9

    # Generator defaults
    SPATIAL_SCALE = 100.0
    HORIZON_RATIO = 10.0
    SERVICE_RATIO = 0.1
    TIME_COEF = 1.0
    N_CLUSTERS = 3
    SPACE_WEIGHTS = (0.4, 0.3, 0.2, 0.1)  # cluster, uniform, corridor, outlier
    WIDTH_WEIGHTS = (0.3, 0.4, 0.3)  # narrow, medium, loose
    PHASE_WEIGHTS = (0.25, 0.25, 0.25, 0.25)  # cluster, radial, angular, random
    CONSTRAINED_RATIO = 0.5
    PHASE_NOISE = 0.05
    MIN_WIDTH_RATIO = 0.02
    BETA_WIDTHS = ((2.0, 18.0), (4.0, 8.0), (6.0, 2.0))
    OUTLIER_MIN_DISTANCE = 0.35
    OUTLIER_MAX_RESAMPLES = 100
    NODE_MAX_RETRIES = 100
    CLUSTER_STD_RANGE = (0.03, 0.1)
    CORRIDOR_HALF_WIDTH = 0.03
    DEMAND_RANGE = (1, 9)
    CVRPTW_CAPACITY = 50.0
    CVRP_CAPACITIES = {10: 20.0, 20: 30.0, 50: 40.0, 100: 50.0}
    CVRP_DEFAULT_CAPACITY = 50.0

    # Latent sampling envelope
    LATENT_S_RANGE = (50.0, 200.0)
    LATENT_H_RANGE = (4.0, 12.0)
    LATENT_NU_RANGE = (0.02, 0.15)
    LATENT_ALPHA_RANGE = (0.5, 1.2)
    LATENT_K_RANGE = (1, 6)
    LATENT_RCON_RANGE = (0.1, 0.9)

    # Consequence features
    SLACK_FLOOR = -1.0
    # open-ended windows (close = inf) would otherwise give infinite slack
    SLACK_CEILING = 1.0
    DEMAND_RATIO_CLAMP = 1.5
    SUMMARY_STANDARD = 'standard'
    SUMMARY_FULL_MEAN = 'full_mean'
    SUMMARY_OFF = 'off'
    VALID_SUMMARY_MODES = [SUMMARY_STANDARD, SUMMARY_FULL_MEAN, SUMMARY_OFF]

    # Policy dims
    EMBEDDING_DIM = 64
    ENCODER_LAYERS = 2
    ATTENTION_HEADS = 4
    MODULATION_HIDDEN = 64
    FEED_FORWARD_HIDDEN = 128
    COMPARATOR_MLP_HIDDEN = 64
    ROLLOUT_CODE_DIM = 16
    KNN_NEIGHBOURS = 5
    GATE_BLEND = 0.5
    LOGIT_CLIP = 10.0
    COMPARATOR_LINEAR = 'linear'
    COMPARATOR_MLP = 'mlp'
    VALID_COMPARATORS = [COMPARATOR_LINEAR, COMPARATOR_MLP]
    CHECKPOINT_VERSION = 1

    # Training
    ADVANTAGE_SOFT_TOP1 = 'soft_top1'
    ADVANTAGE_HARD_TOP1 = 'hard_top1'
    ADVANTAGE_GROUP_MEAN = 'group_mean'
    VALID_ADVANTAGE_MODES = [ADVANTAGE_SOFT_TOP1, ADVANTAGE_HARD_TOP1, ADVANTAGE_GROUP_MEAN]
    TAU_START = 4.0
    TAU_END = 0.25
    TAU_DECAY_FRACTION = 1 / 300
    LEARNING_RATE = 1e-3
    OPTIMIZER_SGD = 'sgd'
    OPTIMIZER_ADAM = 'adam'
    VALID_OPTIMIZERS = [OPTIMIZER_SGD, OPTIMIZER_ADAM]
    BATCH_SIZE = 16
    ROLLOUTS = 8
    EPOCHS = 30
    TRAIN_CUSTOMERS = 10
    INSTANCES_PER_EPOCH = 64

    # Inference
    MODE_GREEDY = 'greedy'
    MODE_SAMPLE = 'sample'
    MODE_BEAM = 'beam'
    MODE_AUG8 = 'aug8'
    VALID_DECODE_MODES = [MODE_GREEDY, MODE_SAMPLE, MODE_BEAM, MODE_AUG8]
    SAMPLES = 16
    BEAM_WIDTH = 16
    # Recorded for a guided-search extension; plain beam search ignores them
    SGBS_BEAM_WIDTH = 4
    SGBS_EXPANSION = 4
    BOOTSTRAP_RESAMPLES = 10000

    # Oracles
    EXACT_TSP_MAX = 15
    EXACT_VRP_MAX = 10
    BRUTE_FORCE_MAX = 9
    ORACLE_TRIALS = 1000
    CANONICAL_TOL = 1e-10
    CENTERING_TOL = 1e-12
    SOFT_TOP1_LIMIT_TAU = 1e8
    SOFT_TOP1_TOL = 1e-6
    GRADIENT_TOL = 1e-4
    FINITE_DIFF_STEP = 1e-5
    FINITE_DIFF_FLOOR = 1e-3

    # Diagnostics
    PROBE_OFFSETS = (0.0, 0.1, 0.5, 1.0, 2.0)
    PROGRESS_BINS = 10
    FEASIBLE_SET_BUCKETS = (1, 3, 6, 11)

    VERSION = '0.1.0'

    INPLACE = True

    # Default Export Paths
    EXCEL_EXPORT_PATH = './Eval_Report.xlsx'
    CSV_EXPORT_PATH = './Eval_Report.csv'
    METRICS_EXPORT_PATH = './Training_Metrics.csv'

    TEMPLATES_FOLDER = os.path.join(pathlib.Path(__file__).parent.parent, 'templates')
    DATA_FOLDER = os.path.join(pathlib.Path(__file__).parent.parent, 'data')
