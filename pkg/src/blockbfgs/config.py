# ── Linear algebra ────────────────────────────────────────────────────────────
# A Cholesky pivot counts as non-positive when it is <= this fraction of the
# largest diagonal entry. Relative, so PD detection does not depend on scale.
PIVOT_TOLERANCE = 1e-12

# Absolute per-entry tolerance when checking a matrix for symmetry.
SYMMETRY_TOLERANCE = 1e-10

# Test oracles (dense reconstruction, explicit Hessians, eigenvalues) refuse
# inputs larger than this dimension.
ORACLE_MAX_DIM = 1000

# ── Optimizer defaults ──────────────────────────────────────────────────────────
# Number of stored block triples.
DEFAULT_MEMORY = 5

# Dense metric mode keeps a d×d matrix; refuse it above this dimension.
DENSE_MAX_DIM = 2000

# Gaussian / self-conditioning sketch width: ceil(sqrt(d)) capped here.
SKETCH_Q_CAP = 32

# Gaussian sketches are redrawn this many times after a failed factorization
# before the metric update is skipped for the step.
GAUSSIAN_REDRAWS = 3

# Self-conditioning sketches resample C this many times before skipping.
SELF_CONDITIONING_RESAMPLES = 1

# ── Experiment protocol ─────────────────────────────────────────────────────────
# Budget in passes over the data, both for each run and for the f* estimate.
DEFAULT_PASSES = 30

# Rounding slack when comparing accumulated pass counts against the budget.
BUDGET_SLACK = 1e-9

# Stepsizes tried for every method: 1, 5e-1, 1e-1, ..., 5e-8, 1e-8.
STEPSIZE_GRID_DECADES = 8

# Method labels accepted by --method.
METHODS = ("svrg", "gauss", "prev", "fact")

# ── Output ────────────────────────────────────────────────────────────────────
# Per-method CSV header. Floats are written with 17 significant digits so every
# row parses back to the exact double.
CSV_HEADER = ("method", "eta", "seed", "datapasses", "seconds", "fvalue", "error")
CSV_FLOAT_FORMAT = "{:.17g}"

# Default results directory when neither --out nor BLOCKBFGS_OUT_DIR is given.
DEFAULT_OUT_DIR = "results"
