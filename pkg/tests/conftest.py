import warnings

import pytest

from subdetect.errors import ReductionWarning
from subdetect.reduction import choose_params
from subdetect.utils import make_rng

SEED = 20240611


@pytest.fixture
def rng():
    return make_rng(SEED, 1)


@pytest.fixture
def small_params():
    """p=8, k=1, λ=0.1 with t=8, w=10: ℓ=1, N=16, T=25; the relaxed preconditions only warn."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReductionWarning)
        return choose_params(8, 1, 0.1, t=8, w=10, strict=False)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path
