import os
from dotenv import load_dotenv
from pathlib import Path

# environment variables from .env file
env_path = Path('.') / '.env'
load_dotenv(dotenv_path=env_path)

# Reproducibility
SEED = int(os.getenv("PBNC_SEED", "0"))
THREADS = int(os.getenv("PBNC_THREADS", "1"))

# Rank-distribution family grid (erasure step, capacity bucket width = factor * M)
DELTA1 = float(os.getenv("PBNC_DELTA1", "0.01"))
DELTA2_FACTOR = float(os.getenv("PBNC_DELTA2_FACTOR", "0.01"))
EPS_RESOLUTION = float(os.getenv("PBNC_EPS_RESOLUTION", "1e-4"))
FAMILY_GRID_LIMIT = int(os.getenv("PBNC_FAMILY_GRID_LIMIT", "10000000"))

# Density evolution
L_MAX = int(os.getenv("PBNC_LMAX", "1000"))
Z_TARGET = float(os.getenv("PBNC_ZTARGET", "1e-6"))
STALL_EPS = float(os.getenv("PBNC_STALL_EPS", "1e-10"))
OMEGA_MODE = os.getenv("PBNC_OMEGA_MODE", "binomial")
BCN_FORM = os.getenv("PBNC_BCN_FORM", "beta")

# Lifting and encoding
LIFT_RETRY_CAP = int(os.getenv("PBNC_LIFT_RETRY_CAP", "100"))
PRECODE_RELABEL_ATTEMPTS = int(os.getenv("PBNC_PRECODE_RELABEL_ATTEMPTS", "10"))

# Simulation
EARLY_STOP_FAILURES = int(os.getenv("PBNC_EARLY_STOP_FAILURES", "100"))

PRESET_DIR = Path(os.getenv("PBNC_PRESET_DIR", str(Path(__file__).parent / "presets")))
LOG_LEVEL = os.getenv("PBNC_LOG_LEVEL", "INFO").upper()
DEBUG = os.getenv("DEBUG", "False").lower() in ("true", "1", "t")
