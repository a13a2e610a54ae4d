import numpy as np
import pytest

from dwpe.dsp import WindowSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_window():
    """16-sample frames with 75% overlap: fast and COLA-valid."""
    return WindowSpec(frame_len=16, hop=4)


@pytest.fixture
def default_window():
    return WindowSpec()
