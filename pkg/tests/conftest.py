import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracbackward import build_domain, build_operator  # noqa: E402


@pytest.fixture(scope="session")
def domain():
    """Desk-scale domain: (0, pi), 256 modes, lambda_n = n^2."""
    return build_domain(1, math.pi, 256)


@pytest.fixture(scope="session")
def small_domain():
    return build_domain(1, math.pi, 32)


@pytest.fixture(scope="session")
def op(domain):
    return build_operator(domain, 0.5, 1.0)
