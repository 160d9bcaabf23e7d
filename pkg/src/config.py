import os
from pathlib import Path

from dotenv import load_dotenv

# Optional overrides from a local .env (paths and pool size only)
load_dotenv()

# Data directories, created on first write
BASE_DIR = Path.cwd()
DATA_DIR = Path(os.getenv("BELLMAN_DATA_DIR", BASE_DIR / "data"))
FAILURES_DIR = DATA_DIR / "failures"
DUMPS_DIR = DATA_DIR / "dumps"
TABLES_DIR = DATA_DIR / "tables"

# Worker pool for suites and sweeps (joblib n_jobs)
N_JOBS = int(os.getenv("BELLMAN_N_JOBS", "1"))

# Largest tree the simulator will allocate
MAX_LEAVES = int(os.getenv("BELLMAN_MAX_LEAVES", str(2 ** 24)))

# Numerical tolerances
ROOT_TOL = 1e-13
IDENTITY_RTOL = 1e-12
INEQUALITY_RTOL = 1e-9
SURFACE_RTOL = 1e-9

# z**p overflows double precision beyond this
MAX_EXPONENT = 64.0
