"""Centralized runtime configuration.

Reads from environment variables (and a local ``.env``) with defaults that
let every subcommand run out of the box while remaining fully customizable.
Run-specific settings (profile, hyper-parameters) are resolved later by the
CLI with the precedence: built-in profile < config file < flags.
"""

import os

from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes")


# ── Parallelism ───────────────────────────────────────────────────────────────
THREADS: int = max(1, int(os.getenv("DDN_THREADS", "1")))

# ── Reproducibility ───────────────────────────────────────────────────────────
DEFAULT_SEED: int = int(os.getenv("DDN_SEED", "7"))

# ── Logging ───────────────────────────────────────────────────────────────────
LOG_LEVEL: str = os.getenv("DDN_LOG_LEVEL", "INFO").upper()
# Wall-clock seconds are the only non-deterministic field of a training log;
# off by default so every run artifact is byte-reproducible.
LOG_WALLTIME: bool = _env_bool("DDN_LOG_WALLTIME", "false")

# ── Paths ─────────────────────────────────────────────────────────────────────
WORKSPACE_ROOT: str = os.path.abspath(os.getenv("DDN_WORKSPACE", "./workspace"))
DATA_DIR: str = os.getenv("DDN_DATA_DIR", os.path.join(WORKSPACE_ROOT, "data"))
OUT_DIR: str = os.getenv("DDN_OUT_DIR", os.path.join(WORKSPACE_ROOT, "runs"))

# ── File names ────────────────────────────────────────────────────────────────
CHECKPOINT_FILE: str = "checkpoint.json"
TRAINING_LOG_FILE: str = "training_log.jsonl"
MANIFEST_FILE: str = "manifest.json"
METRICS_FILE: str = "metrics.txt"
PREDICTIONS_FILE: str = "predictions.csv"
PER_BATTERY_FILE: str = "per_battery.csv"
PER_CYCLE_FILE: str = "per_cycle.csv"
ATTENTION_FILE: str = "attention.csv"
ATTENTION_SUMMARY_FILE: str = "attention_summary.txt"
ATTENTION_STUDY_FILE: str = "attention_study.csv"
SIZE_STUDY_FILE: str = "size_study.csv"

# ── Training defaults ─────────────────────────────────────────────────────────
LEARNING_RATE: float = 0.001
BETA1: float = 0.9
BETA2: float = 0.999
EPSILON: float = 1e-8
MAX_EPOCHS: int = 300
BATCH_SIZE: int = 32
PATIENCE: int = 10
MIN_DELTA: float = 1e-6

# ── Split ratios (train / validation / test) ──────────────────────────────────
SPLIT_RATIOS: tuple[float, float, float] = (0.75, 0.10, 0.15)
