import numpy as np
import pytest

from bicnet.numerics import ScalarKind, using_kind


@pytest.fixture
def f64():
    with using_kind(ScalarKind.Verification64):
        yield


@pytest.fixture
def f32():
    with using_kind(ScalarKind.Training32):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
