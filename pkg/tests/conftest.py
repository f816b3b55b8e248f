"""Shared fixtures: backend parametrization and small dataset builders."""

import numpy as np
import pytest

from pppl.nn import available_backends


@pytest.fixture(params=available_backends())
def backend(request):
    """Runs the test once per built backend ('python' always, 'ext' when
    the compiled kernels are present)."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
