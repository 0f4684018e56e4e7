import numpy as np
import pytest

from mfcforge.lateralplant import REFERENCE_VEHICLE, augment_with_filter_poles, lateral_design_plant
from mfcforge.tchebset import Kind, stabilizing_set

import refdata


@pytest.fixture(scope="session")
def lateral():
    """(discrete state space, G) for the reference vehicle at Ts = 0.05."""
    return lateral_design_plant(REFERENCE_VEHICLE, refdata.TS)


@pytest.fixture(scope="session")
def lateral_aug(lateral):
    return augment_with_filter_poles(lateral[1], refdata.FILTER.C, 2)


@pytest.fixture(scope="session")
def lateral_set(lateral_aug):
    lo, hi = refdata.GATE_RANGE
    return stabilizing_set(lateral_aug, Kind.PID, lo, hi, refdata.GATE_STEPS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
