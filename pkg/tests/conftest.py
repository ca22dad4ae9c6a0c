import numpy as np
import pytest

from qkd_mismatch.detector import matched_pair, severe_mismatch_pair
from qkd_mismatch.protocol import DEFAULT_DROOP, ReceiverConfig


@pytest.fixture(scope="session")
def severe():
    return severe_mismatch_pair()


@pytest.fixture(scope="session")
def matched():
    return matched_pair()


@pytest.fixture(scope="session")
def two_state():
    return ReceiverConfig(mode="two-state", waveform=DEFAULT_DROOP)


@pytest.fixture(scope="session")
def four_state():
    return ReceiverConfig(mode="four-state", waveform=DEFAULT_DROOP)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
