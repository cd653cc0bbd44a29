"""Constants for sparseggm."""

# Cholesky pivots below this fraction of the largest diagonal entry fail the PD test.
PD_PIVOT_RTOL = 1e-12

# Ridge added to an empirical covariance that fails to factorize, relative to mean(diag).
COVARIANCE_JITTER = 1e-10

LAPLACE_MAX_ITER = 10_000
LAPLACE_GRAD_TOL = 1e-8
LINE_SEARCH_MIN_STEP = 1e-16

DEFAULT_BURN_IN = 100
DEFAULT_SAMPLES = 10_000
DEFAULT_RUNS = 3
DEFAULT_N_PRELIM = 20_000

# Step-size scale and trajectory length used before any tuning. Under a good mass
# matrix beta is measured in standard deviations of the target.
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 3.0
TARGET_ACCEPTANCE = 0.65
DEFAULT_TUNE_STEPS = 200
TUNE_ROUNDS = 8

# Tuning stops once preliminary acceptance is this close to the target.
TUNE_BAND = 0.15

# Candidate trajectory lengths as multiples of the starting beta. A candidate replaces
# the starting beta only if its preliminary ESS is higher by this fraction.
TUNE_BETA_FACTORS = (0.5, 1.0, 1.5)
TUNE_ESS_MARGIN = 0.1

DUAL_AVERAGING_GAMMA = 0.05
DUAL_AVERAGING_T0 = 10.0
DUAL_AVERAGING_KAPPA = 0.75
LOG_ALPHA_LIMIT = 50.0

# Cap on leapfrog steps per trajectory, whatever the step size draw.
MAX_TRAJECTORY_STEPS = 1000

# Synthetic test cases take the 1000th block Gibbs sample from W_G(1, p I).
CASE_PRIOR_B = 1.0
CASE_GIBBS_STEPS = 1000

DEFAULT_N0 = 10
DEFAULT_SIGMA_E = 0.1
DEFAULT_AUX_SWEEPS = 1
DEFAULT_REFRESH_STEPS = 1
DEFAULT_S = 0.5

GLASSO_TOL = 1e-5
GLASSO_MAX_SWEEPS = 500
GLASSO_INNER_TOL = 1e-12
GLASSO_INNER_MAX_ITER = 1000
DEFAULT_FOLDS = 5
DEFAULT_GRID_SIZE = 100

MIN_CHAIN_LENGTH = 10

# BG-MC cells with more maximal cliques than this are skipped.
DEFAULT_MAX_CLIQUES = 2000

COVER_STRATEGIES = ["heuristic", "maximal", "edgewise"]

MASS_METHODS = ["identity", "gwishart", "laplace", "wishart"]

SAMPLERS = ["bg-mc", "bg-hcc", "hmc"]

INNER_SAMPLERS = ["hmc", "block-gibbs"]

CONFIG_KEYS = [
    "alpha",
    "aux_sweeps",
    "beta",
    "budget_seconds",
    "burn_in",
    "cover",
    "folds",
    "grid_size",
    "iterations",
    "mass_method",
    "max_cliques",
    "n0",
    "n_over_q",
    "n_prelim",
    "p",
    "refresh_steps",
    "runs",
    "s",
    "samplers",
    "samples",
    "seed",
    "sigma_e",
    "train_fraction",
    "tune_steps",
    "workers",
]

CSV_FLOAT_FORMAT = "%.12g"
SVG_HASH_SALT = "sparseggm"
