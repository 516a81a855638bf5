from pathlib import Path

import pytest

from busy_period import SwarmParams

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture
def table1_path() -> Path:
    return DATA_DIR / "table1.csv"


@pytest.fixture
def table2_path() -> Path:
    return DATA_DIR / "table2.csv"


@pytest.fixture
def reference_params() -> SwarmParams:
    # x = 1.2
    return SwarmParams(s=1.0, mu=1.0, r=0.2, lam=1.0)
