import os
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parents[2]

load_dotenv(PROJECT_ROOT / ".env")

# --- Inputs ---
CONFIGS_DIR = PROJECT_ROOT / "configs"

# --- Generated outputs ---
DERIVED_DIR = Path(os.environ.get("RELQ_DERIVED_DIR") or PROJECT_ROOT / "derived")
RESULTS_DIR = DERIVED_DIR / "results"
PMF_DIR = DERIVED_DIR / "pmf"
TRACES_DIR = DERIVED_DIR / "traces"


def default_jobs() -> int:
    """Worker count from RELQ_JOBS, 1 when unset or invalid."""
    raw = os.environ.get("RELQ_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
