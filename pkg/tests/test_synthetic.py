import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from multical.calib.model import GroupBiasSpec, XorSpec
from multical.calib.synthetic import column_stream, gen_group_bias, gen_xor, xor_labels, xor_optimum


def test_xor_labels_formula():
    groups = np.array([[1, 0, 1], [1, 1, 1], [0, 0, 0], [0, 1, 0]], dtype=float)
    assert xor_labels(groups, 0.2) == pytest.approx([0.5, 0.8 * 0.875 + 0.2, 0.0, 0.8 * 0.25 + 0.2])
    assert xor_optimum(groups, 0.2) == pytest.approx([0.6, 0.8, 0.1, 0.3])


def test_xor_dataset(xor_data):
    cal, _, sidecar = xor_data
    assert cal.n == 40000
    assert cal.group_names == ['1', '2', '3']
    assert set(cal.base_scores.tolist()) == {0.5}
    np.testing.assert_array_equal(cal.labels, xor_labels(cal.groups, 0.2))
    assert sidecar.optimum_loss == pytest.approx(0.01)
    assert sidecar.epsilon_loss == pytest.approx(0.01)
    assert sidecar.optimum_mc_error == pytest.approx(0.05)


def test_xor_optimum_loss_matches_sidecar():
    ds, sidecar = gen_xor(XorSpec(gamma=0.3, n=8, stratified=True))
    loss = float(np.mean((xor_optimum(ds.groups, 0.3) - ds.labels) ** 2))
    assert loss == pytest.approx(sidecar.optimum_loss)


@pytest.mark.parametrize('n', [8, 16, 80])
def test_xor_stratified_cells(n):
    ds, _ = gen_xor(XorSpec(gamma=0.2, n=n, stratified=True))
    cells = [tuple(row) for row in ds.groups.astype(int).tolist()]
    for cell in itertools.product([0, 1], repeat=3):
        assert cells.count(cell) == n // 8


def test_xor_prefix_stable():
    short, _ = gen_xor(XorSpec(gamma=0.2, n=50, seed=9))
    long, _ = gen_xor(XorSpec(gamma=0.2, n=500, seed=9))
    np.testing.assert_array_equal(long.groups[:50], short.groups)
    np.testing.assert_array_equal(long.labels[:50], short.labels)


def test_xor_spec_validation():
    with pytest.raises(ValidationError):
        XorSpec(gamma=1.5, n=10)
    with pytest.raises(ValidationError):
        XorSpec(gamma=0.2, n=0)
    with pytest.raises(ValidationError):
        XorSpec(gamma=0.2, n=10, colour='red')


def test_column_streams_are_independent():
    a = column_stream(1, 0).random(5)
    assert a.tolist() == column_stream(1, 0).random(5).tolist()
    assert a.tolist() != column_stream(1, 1).random(5).tolist()
    assert a.tolist() != column_stream(2, 0).random(5).tolist()


def test_resolved_biases():
    assert GroupBiasSpec(k=3, n=1).resolved_biases() == [0.2, 0.2, 0.2]
    assert GroupBiasSpec(k=2, n=1, biases=[0.1, 0.3]).resolved_biases() == [0.1, 0.3]
    with pytest.raises(ValueError):
        GroupBiasSpec(k=3, n=1, biases=[0.1, 0.3]).resolved_biases()


def test_group_bias_spec_validation():
    with pytest.raises(ValidationError):
        GroupBiasSpec(k=2, n=10, f0_low=0.8, f0_high=0.2)
    with pytest.raises(ValidationError):
        GroupBiasSpec(k=0, n=10)


def test_group_bias_is_deterministic():
    spec = GroupBiasSpec(k=4, n=300, seed=5)
    first, second = gen_group_bias(spec), gen_group_bias(spec)
    np.testing.assert_array_equal(first.labels, second.labels)
    np.testing.assert_array_equal(first.groups, second.groups)
    other = gen_group_bias(GroupBiasSpec(k=4, n=300, seed=6))
    assert not np.array_equal(first.labels, other.labels)


def test_group_bias_prefix_stable():
    short = gen_group_bias(GroupBiasSpec(k=3, n=40, seed=2, binary_labels=True))
    long = gen_group_bias(GroupBiasSpec(k=3, n=400, seed=2, binary_labels=True))
    np.testing.assert_array_equal(long.labels[:40], short.labels)
    np.testing.assert_array_equal(long.base_scores[:40], short.base_scores)


def test_group_bias_ranges():
    ds = gen_group_bias(GroupBiasSpec(k=3, n=2000, f0_low=0.3, f0_high=0.6, group_rate=0.25, binary_labels=True))
    assert ds.base_scores.min() >= 0.3
    assert ds.base_scores.max() <= 0.6
    assert set(np.unique(ds.labels).tolist()) <= {0.0, 1.0}
    assert ds.groups.mean(axis=0) == pytest.approx([0.25] * 3, abs=0.05)


def test_group_bias_shifts_members(bias_data):
    cal, _ = bias_data
    gap = cal.labels - cal.base_scores
    # every group is pushed up by the shared bias
    for j in range(cal.k):
        members = cal.groups[:, j] == 1
        assert gap[members].mean() - gap[~members].mean() > 0.1
