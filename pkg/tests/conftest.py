# tests/conftest.py
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]  # project_root/tests -> project_root
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from envguard.connectors.model_dsl import parse_model  # noqa: E402
from envguard.connectors.nnet_format import load_network  # noqa: E402
from envguard.deps import DATA_DIR, build_toolchain  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


@pytest.fixture(scope="session")
def robot():
    return parse_model(DATA_DIR / "robot.gdm")


@pytest.fixture(scope="session")
def regression_net():
    return load_network(DATA_DIR / "networks" / "regression_2881.nnet")


@pytest.fixture(scope="session")
def classifier_net():
    return load_network(DATA_DIR / "networks" / "classifier_2883.nnet")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toolchain(tmp_path):
    tc = build_toolchain({"report_dir": str(tmp_path / "reports"), "samples": 300, "monitor_samples": 200, "cross_check_samples": 300, "log_level": "WARNING"})
    yield tc
    tc.close()
