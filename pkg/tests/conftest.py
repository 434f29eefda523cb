import sys
from pathlib import Path

TESTS_DIR = Path(__file__).parent
REPO_ROOT = TESTS_DIR.parent

# Test-only helper modules (asp_oracle, instances) live next to the tests.
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

CONFIGS_DIR = REPO_ROOT / "src" / "jerasp" / "configs"
FIXTURES_DIR = TESTS_DIR / "fixtures"
