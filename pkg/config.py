"""
ISALT – Central Configuration & Constants
Defaults for solvers, data generation, inference, statistics and the CLI.
"""

import os

# ── Project ─────────────────────────────────────────────
PROG_NAME = "isalt"
VERSION = "0.3.0"

# ── Benchmarks ──────────────────────────────────────────
BENCHMARK_DOUBLE_WELL = "double-well-1d"
BENCHMARK_GRADIENT_2D = "gradient-2d"
BENCHMARK_LORENZ = "lorenz-3d"

DOUBLE_WELL_MU = 2.0
DOUBLE_WELL_BETA = 1.0
DOUBLE_WELL_DT = 1e-3

GRADIENT_MU1 = 0.1
GRADIENT_MU2 = 1.0
GRADIENT_BETA = 2.0
GRADIENT_DT = 2e-3

LORENZ_SIGMA = 10.0
LORENZ_GAMMA = 28.0
LORENZ_B = 8.0 / 3.0
LORENZ_BETA = 1.0
LORENZ_DT = 5e-4

# ── Gap menus ───────────────────────────────────────────
GAP_MENU = (1, 2, 4, 10, 20, 40, 80, 120, 160, 200)
LORENZ_GAP_MENU = (20, 40, 80, 160, 240, 320, 400)

# ── Newton solver (SSBE) ────────────────────────────────
NEWTON_TOLERANCE = 1e-10              # absolute, on the step max-norm
NEWTON_MAX_ITERATIONS = 100
CONDITION_LIMIT = 1e14                # (I - δ∇f) treated as singular above this

# ── Blow-up policing ────────────────────────────────────
BLOWUP_THRESHOLD = 1e10               # max-norm
BLOWUP_SEEDS = 10                     # ensemble size per scan cell
BLOWUP_STEPS = 100_000

# ── Data generation ─────────────────────────────────────
BURN_IN_FRACTION = 0.1
NOISE_CHUNK = 4096                    # fine increments drawn per stream call

# ── Finite differences ──────────────────────────────────
FD_STEP = 1e-6
FD_REL_TOLERANCE = 1e-6
FD_SAMPLE_POINTS = 100

# ── Inference ───────────────────────────────────────────
SVD_CUTOFF = 1e-12                    # relative to the largest singular value
CONVERGENCE_MAX_BLOCKS = 20
MIN_STUDY_POINTS = 3

# ── Statistics ──────────────────────────────────────────
HIST_BINS = 100
HIST_RANGE_PAD = 0.05                 # reference min/max widened by 5%
ACF_MAX_LAG = 200
TVD_BLOWUP_SENTINEL = 1.0
ANALYTIC_GRID_POINTS = 1_000_000

# ── Dataset file format ─────────────────────────────────
DATASET_MAGIC = b"ISALT1\0"
DATASET_VERSION = 1
DATASET_SUFFIX = ".isalt"
SIDECAR_SUFFIX = ".json"

# ── Experiment layout ───────────────────────────────────
DATA_DIR = "data"
SCHEMES_DIR = "schemes"
EVAL_DIR = "eval"
STUDY_DIR = "study"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.txt"
LONG_TRAJECTORY_FILE = "long" + DATASET_SUFFIX

PRESET_FULL = "full"
PRESET_DESK = "desk"
DESK_SCALE = 10                       # desk shrinks T, M and horizon by this

# ── Exit codes ──────────────────────────────────────────
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING_ARTIFACT = 4

# ── Workers ─────────────────────────────────────────────
THREADS_ENV = "ISALT_THREADS"


def worker_count() -> int:
    """Worker threads to use, capped by ISALT_THREADS when set."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return cpus
    try:
        return max(1, int(raw))
    except ValueError:
        return cpus
