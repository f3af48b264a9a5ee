import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multical.calib.dataset import CalibrationDataset
from multical.calib.discretize import make_grid
from multical.calib.errors import DataError
from multical.calib.metrics import (evaluate_predictor, group_summary, multiaccuracy_error, multicalibration_error,
                                    squared_loss, worst_group_binned_ece)
from multical.calib.synthetic import xor_labels, xor_optimum


def test_squared_loss():
    assert squared_loss([0.1, 0.7], [0.1, 0.7]) == 0.0
    assert squared_loss([0.5, 0.5], [0, 1]) == 0.25
    assert squared_loss([0.2, 0.8, 0.4], [0, 1, 1]) == pytest.approx(0.44 / 3, abs=1e-15)


def test_squared_loss_length_mismatch():
    with pytest.raises(DataError):
        squared_loss([0.5], [0, 1])


def test_multicalibration_error_running_example(running_example):
    ds = running_example
    mc, per_group = multicalibration_error(np.full(4, 0.5), ds.groups, ds.labels)
    assert mc == 0.25
    assert per_group.tolist() == [0.25]


def test_multicalibration_error_calibrated_cells():
    groups = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [1, 1]], dtype=float)
    labels = np.array([0.0, 1.0, 0.2, 0.4, 0.3])
    pred = np.array([0.5, 0.5, 0.3, 0.3, 0.3])
    mc, _ = multicalibration_error(pred, groups, labels)
    assert mc == pytest.approx(0.0, abs=1e-15)


def test_multicalibration_error_xor_population():
    groups = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
    mc, per_group = multicalibration_error(xor_optimum(groups, 0.2), groups, xor_labels(groups, 0.2))
    assert mc == pytest.approx(0.05, abs=1e-12)
    assert per_group == pytest.approx([0.05, 0.05, 0.05], abs=1e-12)


def test_multicalibration_error_needs_finite_range():
    n = 10001
    with pytest.raises(DataError, match='discretize'):
        multicalibration_error(np.linspace(0, 1, n), np.ones((n, 1)), np.zeros(n))


def test_multicalibration_error_empty_group():
    mc, per_group = multicalibration_error([0.5, 0.5], np.array([[1, 0], [1, 0]]), [1.0, 1.0])
    assert per_group.tolist() == [0.5, 0.0]
    assert mc == 0.5


def test_multicalibration_error_shape_mismatch():
    with pytest.raises(DataError):
        multicalibration_error([0.5, 0.5], np.ones((3, 1)), [1.0, 0.0])


def test_multiaccuracy_error(running_example):
    ds = running_example
    assert multiaccuracy_error(np.full(4, 0.5), ds.groups, ds.labels) == 0.25
    assert multiaccuracy_error(ds.labels, ds.groups, ds.labels) == 0.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10 ** 6), c=st.floats(min_value=0.0, max_value=1.0))
def test_multiaccuracy_equals_mc_for_constant_predictor(seed, c):
    rng = np.random.default_rng(seed)
    groups = (rng.random((30, 3)) < 0.5).astype(float)
    labels = rng.random(30)
    pred = np.full(30, c)
    assert multiaccuracy_error(pred, groups, labels) == pytest.approx(multicalibration_error(pred, groups, labels)[0],
                                                                      abs=1e-12)


def test_binned_ece():
    labels = np.array([0.0, 1.0, 1.0, 0.0])
    groups = np.array([[1], [1], [0], [0]], dtype=float)
    assert worst_group_binned_ece(labels, groups, labels) == 0.0
    pred = np.array([0.2, 0.6, 0.9, 0.1])
    assert worst_group_binned_ece(pred, groups, labels, bins=1) == pytest.approx(abs(0.4 - 0.5))


def test_binned_ece_running_example(running_example):
    ds = running_example
    assert worst_group_binned_ece(np.full(4, 0.5), ds.groups, ds.labels, bins=10) == 0.5


def test_binned_ece_rejects_zero_bins(running_example):
    with pytest.raises(DataError):
        worst_group_binned_ece(np.full(4, 0.5), running_example.groups, running_example.labels, bins=0)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10 ** 6))
def test_mc_error_at_most_one(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    pred = rng.integers(0, 5, size=n) / 4
    mc, per_group = multicalibration_error(pred, (rng.random((n, 2)) < 0.5).astype(float), rng.random(n))
    assert 0.0 <= mc <= 1.0
    assert mc == per_group.max()


def test_evaluate_predictor(running_example):
    report = evaluate_predictor('uncalibrated', running_example, np.full(4, 0.52), make_grid(10))
    assert report.m == 10
    assert report.nonempty_range == 1
    assert report.mc_error == pytest.approx(0.5 * abs(0.55 - 1.0))
    assert report.mc_error == max(report.per_group_mc)
    assert report.squared_loss == pytest.approx(squared_loss(np.full(4, 0.55), running_example.labels))
    assert report.epsilon_round == pytest.approx(squared_loss(np.full(4, 0.55), running_example.labels)
                                                 - squared_loss(np.full(4, 0.52), running_example.labels))
    assert list(report.csv_row()) == ['method', 'm', 'nonempty_range', 'mc_error', 'squared_loss', 'epsilon_round',
                                      'worst_group_binned_ece', 'multiaccuracy_error']


def test_group_summary(running_example):
    assert group_summary(running_example) == [{'group': '1', 'members': 2, 'rate': 0.5}]


def test_report_for_empty_group_dataset():
    ds = CalibrationDataset.from_arrays([0.5, 0.5], [[1, 0], [1, 0]], [1.0, 0.0])
    report = evaluate_predictor('uncalibrated', ds, ds.base_scores)
    assert report.empty_groups == [1]
    assert report.epsilon_round == 0.0
