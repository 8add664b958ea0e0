import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
