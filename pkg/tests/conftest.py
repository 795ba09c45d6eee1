"""
Shared pytest fixtures for the wassfs test suite
"""

import os
import sys
import tempfile

# Logs go to a scratch directory; must be set before logging_config is imported
os.environ.setdefault('WASSFS_LOG_DIR', tempfile.mkdtemp(prefix='wassfs-logs-'))

# Add repository root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from core.data.dataset import Dataset  # noqa: E402
from core.transport.ot import GroundMetric  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (deselect with -m 'not slow')")


@pytest.fixture
def zero_one_metric():
    """Two classes at distance 1"""
    return GroundMetric.from_matrix(["a", "b"], [[0, 1], [1, 0]])


@pytest.fixture
def husky_metric():
    return GroundMetric.from_matrix(
        ["cat", "husky", "alaska"],
        [[0.0, 1.0, 1.0], [1.0, 0.0, 0.2], [1.0, 0.2, 0.0]],
    )


def _enumerated(features, labels, weights, classes=("a", "b")) -> Dataset:
    features = np.asarray(features, dtype=np.int64)
    return Dataset(features, np.asarray(labels), np.maximum(features.max(axis=0) + 1, 2), classes,
                   provenance="enumerated", weights=np.asarray(weights, dtype=float))


@pytest.fixture
def make_joint():
    """Factory for weighted datasets whose rows enumerate a joint distribution exactly"""
    return _enumerated


@pytest.fixture
def copy_label_joint():
    """Y = X0 with X0, X1 independent fair bits, every (x0, x1) equally likely"""
    return _enumerated(
        features=[[0, 0], [0, 1], [1, 0], [1, 1]],
        labels=[0, 0, 1, 1],
        weights=[0.25, 0.25, 0.25, 0.25],
    )
