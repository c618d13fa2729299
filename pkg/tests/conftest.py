import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jadce import build_pilot_bank, build_scenario


@pytest.fixture(scope="session")
def small_bank():
    # 4 clusters of 8 devices on a length-32 basis.
    return build_pilot_bank(32, (8, 8, 8, 8), seed=3)


@pytest.fixture(scope="session")
def small_scenario():
    return build_scenario(
        num_devices=32,
        num_clusters=4,
        antennas=4,
        activity_prob=0.1,
        noise_power=2e-13,
        snr_db=10.0,
        seed=5,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
