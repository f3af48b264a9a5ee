import numpy as np
import pytest
from click.testing import CliRunner

from multical.calib.dataset import CalibrationDataset
from multical.calib.model import GroupBiasSpec, XorSpec
from multical.calib.synthetic import gen_group_bias, gen_xor


def random_instance(seed: int, n: int = 60, k: int = 3, levels: int = 3) -> CalibrationDataset:
    """Small dataset whose base scores take `levels` distinct values."""
    rng = np.random.default_rng(seed)
    values = np.sort(rng.choice(np.arange(1, 20) / 20, size=levels, replace=False))
    f0 = values[rng.integers(0, levels, size=n)]
    groups = (rng.random((n, k)) < 0.5).astype(float)
    labels = rng.random(n)
    return CalibrationDataset.from_arrays(f0, groups, labels)


@pytest.fixture
def running_example():
    # pred 0.5 everywhere, group 1 holds the two positive rows
    return CalibrationDataset.from_arrays([0.5, 0.5, 0.5, 0.5], [[1], [1], [0], [0]], [1, 1, 0, 0])


@pytest.fixture
def toy_instance():
    return random_instance(3)


@pytest.fixture
def cli_runner():
    return CliRunner()


@pytest.fixture(scope='session')
def bias_data():
    cal = gen_group_bias(GroupBiasSpec(k=8, n=20000, biases=[0.2], seed=1))
    test = gen_group_bias(GroupBiasSpec(k=8, n=10000, biases=[0.2], seed=2))
    return cal, test


@pytest.fixture(scope='session')
def xor_data():
    cal, sidecar = gen_xor(XorSpec(gamma=0.2, n=40000, seed=1))
    test, _ = gen_xor(XorSpec(gamma=0.2, n=20000, seed=2))
    return cal, test, sidecar
