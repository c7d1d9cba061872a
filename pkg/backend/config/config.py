"""Numeric tolerances shared across the services."""

VERSION = "1.0.0"

# Operator validation
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
PROJECTOR_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-9
TEST_OPERATOR_TOL = 1e-10

# Probabilities
PROB_CLIP = 1e-12
PROB_SUM_TOL = 1e-9
ZERO_MASS = 1e-300
SUPPORT_TOL = 1e-10

# PVM relations
REFINEMENT_TOL = 1e-8
COMMUTATOR_TOL = 1e-9
SIGMA_COMMUTE_TOL = 1e-8

# Schur-Weyl decomposition
CLUSTER_REL_GAP = 1e-6
CLUSTER_NOISE_REL = 1e-10
CONTENT_TOL = 1e-8
MAX_DECOMPOSITION_RETRIES = 5
INVARIANCE_TOL = 1e-7
BLOCK_COMMUTATOR_TOL = 1e-8

# Scalar optimization
GOLDEN_TOL = 1e-10
BRENT_XTOL = 1e-13
PLOG2_XTOL = 1e-12

# Exponent estimation
EXPONENT_FIT_FRACTION = 0.6

# Gaussian states
TAIL_DEFICIT_TOL = 1e-8
QUADRATURE_NODES = 64
MIN_CUTOFF = 40

# Information spectrum
TIE_TOL = 1e-12
THRESHOLD_BOUND_SLACK = 1e-11
LAMBDA_GRID_POINTS = 201
LAMBDA_GRID_MARGIN = 0.1
QUANTILE_LEVELS = (0.01, 0.05, 0.95, 0.99)

# Operator inequalities
PINCHING_LOG_TOL = 1e-9
DOMINANCE_TOL = 1e-10
NEG_POWER_TOL = 1e-8
NEG_POWER_MIX = 0.1
PLOG2_ORACLE_TOL = 1e-8
CUTOFF_SAFETY = 8
DISPLACEMENT_PADDING = 64
GAUSSIAN_EPS_REGION = 0.3
