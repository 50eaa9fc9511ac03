"""Shared fixtures."""

import numpy as np
import pytest

from sjed.models import SystemConfig


TOY_ALIST = """6 3
2 3
2 2 2 1 1 1
3 3 3
1 3
1 2
2 3
1 0
2 0
3 0
1 2 4
2 3 5
1 3 6
"""


@pytest.fixture
def rng():
    """Seeded generator fixture."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_system():
    """Small system that keeps unfolded runs fast."""
    return SystemConfig(
        num_antennas=4, num_users=2, num_pilots=2, num_data=8, num_layers=3
    )


@pytest.fixture
def desk_system():
    """Desk-scale system used for training checks."""
    return SystemConfig(
        num_antennas=8, num_users=4, num_pilots=4, num_data=16, num_layers=10
    )


@pytest.fixture
def toy_alist():
    """3x6 rate-1/2 parity-check matrix in alist form."""
    return TOY_ALIST
