from typing import Tuple

import numpy as np

from multical.calib.dataset import CalibrationDataset
from multical.calib.model import GroupBiasSpec, XorSidecar, XorSpec

XOR_GROUPS = 3

# stream ids for the group-bias generator; groups use GROUP_STREAM + i
F0_STREAM = 0
NOISE_STREAM = 1
LABEL_STREAM = 2
GROUP_STREAM = 10


def column_stream(seed: int, column: int) -> np.random.Generator:
    """Counter-based generator per (seed, column): the first n draws never depend on how many rows follow."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, column])))


def _xor_groups(spec: XorSpec) -> np.ndarray:
    if spec.stratified:
        cells = np.arange(spec.n) % 8
        return np.column_stack([(cells >> (XOR_GROUPS - 1 - i)) & 1 for i in range(XOR_GROUPS)]).astype(float)
    return np.column_stack([column_stream(spec.seed, GROUP_STREAM + i).random(spec.n) < 0.5
                            for i in range(XOR_GROUPS)]).astype(float)


def xor_labels(groups: np.ndarray, gamma: float) -> np.ndarray:
    g = np.asarray(groups, dtype=float)
    parity = (g[:, 0].astype(int) ^ g[:, 1].astype(int) ^ g[:, 2].astype(int)).astype(float)
    return (1 - gamma) * (g[:, 0] / 2 + g[:, 1] / 4 + g[:, 2] / 8) + gamma * parity


def xor_optimum(groups: np.ndarray, gamma: float) -> np.ndarray:
    """Best predictor built from depth-two trees: the parity term is orthogonal to them and averages to 1/2."""
    g = np.asarray(groups, dtype=float)
    return (1 - gamma) * (g[:, 0] / 2 + g[:, 1] / 4 + g[:, 2] / 8) + gamma / 2


def gen_xor(spec: XorSpec) -> Tuple[CalibrationDataset, XorSidecar]:
    groups = _xor_groups(spec)
    labels = xor_labels(groups, spec.gamma)
    ds = CalibrationDataset.from_arrays(np.full(spec.n, spec.base_constant), groups, labels,
                                        [str(i + 1) for i in range(XOR_GROUPS)])
    gap = spec.gamma ** 2 / 4
    sidecar = XorSidecar(gamma=spec.gamma, n=spec.n, seed=spec.seed, base_constant=spec.base_constant,
                         optimum_loss=gap, optimum_mc_error=spec.gamma / 4, epsilon_loss=gap)
    return ds, sidecar


def gen_group_bias(spec: GroupBiasSpec) -> CalibrationDataset:
    """y = clamp(f0 + sum_i bias_i g_i + noise, 0, 1); f0 alone is off by about bias_i on group i."""
    biases = np.asarray(spec.resolved_biases(), dtype=float)
    f0 = spec.f0_low + (spec.f0_high - spec.f0_low) * column_stream(spec.seed, F0_STREAM).random(spec.n)
    groups = np.column_stack([column_stream(spec.seed, GROUP_STREAM + i).random(spec.n) < spec.group_rate
                              for i in range(spec.k)]).astype(float)
    noise = spec.noise_sd * column_stream(spec.seed, NOISE_STREAM).standard_normal(spec.n)
    mean = np.clip(f0 + groups @ biases + noise, 0.0, 1.0)
    if spec.binary_labels:
        labels = (column_stream(spec.seed, LABEL_STREAM).random(spec.n) < mean).astype(float)
    else:
        labels = mean
    return CalibrationDataset.from_arrays(f0, groups, labels, [str(i + 1) for i in range(spec.k)])
