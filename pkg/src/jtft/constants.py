from pathlib import Path

APP_NAME = "jtft"
APP_DIR = Path.home() / ".jtft"
LOG_DIR = APP_DIR / "logs"
LOG_FILE = LOG_DIR / "jtft.log"
SEED_ENV_VAR = "JTFT_SEED"

# Numerics
NORM_EPS = 1e-5  # instance-norm stddev floor
LAYER_NORM_EPS = 1e-5
FREQ_MIN = 1e-3
FREQ_MAX = 1.0 - 1e-3
FREQ_DUPLICATE_TOL = 1e-9
FREQ_NUDGE = 1e-6

# Optimizer defaults
ADAM_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Model defaults
DEFAULT_PATCH_LEN = 16
DEFAULT_STRIDE = 8
DEFAULT_N_T = 32
DEFAULT_N_F = 16
DEFAULT_D_MODEL = 128
DEFAULT_HEADS = 8
DEFAULT_ENCODER_LAYERS = 3
DEFAULT_LRA_LAYERS = 1
DEFAULT_ROUTER_LEN = 4
DEFAULT_DROPOUT = 0.2

# (patch_len, stride) presets; ILI look-backs use the short patches
ILI_PATCH = (4, 2)
ILI_LOOKBACKS = (84, 128)
STANDARD_PATCH = (16, 8)

# Training defaults
DEFAULT_EPOCHS = 20
DEFAULT_BATCH_SIZE = 32
DEFAULT_PATIENCE = 3
DEFAULT_SEED = 2021
EVAL_BATCH_SIZE = 256
DEFAULT_SPLIT = (0.7, 0.1, 0.2)
ETTM2_SPLIT = (0.6, 0.2, 0.2)
FREQ_INIT_MAX_WINDOWS = 256

# Reconstruction benchmark defaults
SUBSEQUENCE_LEN = 128
RNDF_SEEDS = 5
LRNF_STEPS = 2000
LRNF_LR = 1e-3

# Gradient check
GRADCHECK_H = 1e-5
GRADCHECK_TOL = 1e-4
GRADCHECK_MAX_COORDS = 500
GRADCHECK_FLOOR = 1e-5

# Checkpoints
CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.npz"
METRICS_NAME = "metrics.jsonl"

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3
EXIT_GRADCHECK = 4

# Logging
MAX_LOG_SIZE = 5 * 1024 * 1024  # 5 MB per file
LOG_BACKUP_COUNT = 3
