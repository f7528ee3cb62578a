import warnings

import numpy as np
import pytest

from choiceforest.baselines import BoundaryUtilityWarning


@pytest.fixture(autouse=True)
def _quiet_boundary_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryUtilityWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)
