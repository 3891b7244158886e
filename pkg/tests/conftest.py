import sys
import warnings

import numpy as np
import pytest
from hypothesis import settings

from deci.model import ModelConfig, init_params

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_degenerate_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*AUROC is set to 0.5")
        yield


@pytest.fixture
def tiny_cfg():
    return ModelConfig(series_len=8, n_channels=3, n_classes=2, n_blocks=2, model_dim=4, kernel_size=4)


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, 0)


def randomize(params, seed, scale=0.3):
    """Jitter every tensor so biases and LayerNorm affines are not at their init."""
    rng = np.random.default_rng(seed)
    p = params.copy()
    for t in p.tensors.values():
        t += scale * rng.standard_normal(t.shape)
    return p


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance.RESULTS, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
