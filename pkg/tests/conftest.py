import sys
from pathlib import Path

import pytest

from sdpc.config import SimConfig, load

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
VECTORS = ROOT / "vectors"

sys.path.insert(0, str(ROOT / "scripts"))

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def load_records(path: Path) -> list[dict]:
    """Blocks of ``key = value`` lines separated by blank lines."""
    records, cur = [], {}
    for line in path.read_text().splitlines():
        if not line.strip():
            if cur:
                records.append(cur)
            cur = {}
            continue
        k, _, v = line.partition(" = ")
        cur[k.strip()] = v.strip()
    if cur:
        records.append(cur)
    return records


def small_config(**over) -> SimConfig:
    """A few-second run on a 20-router world; cheap enough for unit tests."""
    cfg = load(CONFIGS / "attack.yaml")
    base = {"workload.duration": 2.0, "workload.lambda_per_gateway": 10.0}
    base.update(over)
    return cfg.replace(**base)


@pytest.fixture
def small_cfg() -> SimConfig:
    return small_config()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
