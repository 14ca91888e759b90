import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forge.combiners import (
    MetricValue,
    average_combine,
    cross_entropy,
    error_rate,
    error_value,
    macro_f1,
    majority_vote_combine,
    weighted_average_combine,
)
from forge.errors import BadWeights, EmptyList, ShapeMismatch


def rand_matrix(rng, n, c):
    rows = rng.random((n, c))
    return rows / rows.sum(axis=1, keepdims=True)


@st.composite
def matrix_lists(draw):
    n = draw(st.integers(1, 6))
    c = draw(st.integers(2, 5))
    k = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**16))
    rng = np.random.default_rng(seed)
    return [rand_matrix(rng, n, c) for _ in range(k)]


# ---------------------------------------------------------------- averaging


def test_average_single_identity():
    rng = np.random.default_rng(0)
    p = rand_matrix(rng, 4, 3)
    assert np.array_equal(average_combine([p]), p)


def test_average_symmetry():
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    assert np.array_equal(average_combine([a, b]), [[0.5, 0.5]])


def test_average_matches_per_cell_brute_force():
    rng = np.random.default_rng(42)
    mats = [rand_matrix(rng, 5, 4) for _ in range(3)]
    got = average_combine(mats)
    for i in range(5):
        for j in range(4):
            cell = sum(m[i, j] for m in mats) / 3.0  # independent summation
            assert abs(got[i, j] - cell) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(matrix_lists())
def test_average_permutation_invariant_and_stochastic(mats):
    base = average_combine(mats)
    assert np.all(np.abs(base.sum(axis=1) - 1.0) <= 1e-6)
    shuffled = list(reversed(mats))
    assert np.allclose(average_combine(shuffled), base, rtol=0.0, atol=1e-12)


def test_average_errors():
    with pytest.raises(EmptyList):
        average_combine([])
    with pytest.raises(ShapeMismatch):
        average_combine([np.full((1, 2), 0.5), np.full((2, 2), 0.5)])


# ---------------------------------------------------------------- weighted


def test_weighted_uniform_equals_average():
    rng = np.random.default_rng(1)
    mats = [rand_matrix(rng, 6, 3) for _ in range(4)]
    w = [0.25] * 4
    diff = np.abs(weighted_average_combine(mats, w) - average_combine(mats))
    assert diff.max() <= 1e-12


def test_weighted_degenerate_weight():
    rng = np.random.default_rng(2)
    a, b = rand_matrix(rng, 3, 2), rand_matrix(rng, 3, 2)
    assert np.allclose(weighted_average_combine([a, b], [1.0, 0.0]), a, rtol=0, atol=0)


def test_weighted_hand_computed_cells():
    a = np.array([[0.6, 0.4], [0.1, 0.9]])
    b = np.array([[0.2, 0.8], [0.5, 0.5]])
    got = weighted_average_combine([a, b], [0.25, 0.75])
    expected = [
        [0.25 * 0.6 + 0.75 * 0.2, 0.25 * 0.4 + 0.75 * 0.8],
        [0.25 * 0.1 + 0.75 * 0.5, 0.25 * 0.9 + 0.75 * 0.5],
    ]
    assert np.allclose(got, expected, rtol=0.0, atol=1e-12)
    assert np.all(np.abs(got.sum(axis=1) - 1.0) <= 1e-6)


def test_weighted_bad_weights():
    mats = [np.full((1, 2), 0.5)] * 2
    with pytest.raises(BadWeights):
        weighted_average_combine(mats, [-0.1, 1.1])
    with pytest.raises(BadWeights):
        weighted_average_combine(mats, [0.5, 0.3])
    with pytest.raises(ShapeMismatch):
        weighted_average_combine(mats, [1.0])


# ---------------------------------------------------------------- voting


def test_vote_single_model():
    got = majority_vote_combine([np.array([[0.2, 0.8]])])
    assert np.array_equal(got, [[0.0, 1.0]])


def test_vote_plurality():
    m1 = np.array([[0.1, 0.9]])  # votes 1
    m2 = np.array([[0.4, 0.6]])  # votes 1
    m3 = np.array([[0.8, 0.2]])  # votes 0
    assert np.array_equal(majority_vote_combine([m1, m2, m3]), [[0.0, 1.0]])


def test_vote_tie_breaks_low():
    m1 = np.array([[0.9, 0.1]])  # votes 0
    m2 = np.array([[0.2, 0.8]])  # votes 1
    assert np.array_equal(majority_vote_combine([m1, m2]), [[1.0, 0.0]])


def test_vote_copies_equal_onehot_argmax():
    rng = np.random.default_rng(5)
    p = rand_matrix(rng, 7, 4)
    got = majority_vote_combine([p, p, p])
    onehot = np.zeros_like(p)
    onehot[np.arange(7), p.argmax(axis=1)] = 1.0
    assert np.array_equal(got, onehot)
    assert np.all(np.abs(got.sum(axis=1) - 1.0) <= 1e-6)


# ---------------------------------------------------------------- metrics


def test_cross_entropy_one_hot_correct_is_zero():
    preds = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert cross_entropy(preds, [0, 1]) == 0.0


def test_cross_entropy_uniform_four_classes():
    preds = np.full((3, 4), 0.25)
    assert abs(cross_entropy(preds, [0, 1, 3]) - math.log(4)) <= 1e-9


def test_cross_entropy_hand_built():
    preds = np.array([[0.7, 0.3], [0.2, 0.8]])
    expected = (-math.log(0.7) - math.log(0.8)) / 2.0
    assert abs(cross_entropy(preds, [0, 1]) - expected) <= 1e-12


def test_cross_entropy_clamped_nonnegative():
    preds = np.array([[0.0, 1.0]])
    value = cross_entropy(preds, [0])
    assert value == pytest.approx(-math.log(1e-12))
    rng = np.random.default_rng(6)
    p = rand_matrix(rng, 20, 5)
    assert cross_entropy(p, rng.integers(0, 5, 20)) >= 0.0


def test_metric_shape_mismatch():
    preds = np.full((2, 2), 0.5)
    with pytest.raises(ShapeMismatch):
        cross_entropy(preds, [0])
    with pytest.raises(ShapeMismatch):
        error_rate(preds, [0, 2])
    with pytest.raises(ShapeMismatch):
        macro_f1(preds, [[0, 1]])


def test_error_rate_extremes():
    correct = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert error_rate(correct, [0, 1]) == 0.0
    assert error_rate(correct, [1, 0]) == 1.0


def test_error_rate_argmax_tie_low():
    preds = np.array([[0.5, 0.5]])
    assert error_rate(preds, [0]) == 0.0
    assert error_rate(preds, [1]) == 1.0


def test_macro_f1_all_correct():
    preds = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert macro_f1(preds, [0, 1]) == 1.0


def test_macro_f1_symmetric_confusion():
    # class 0: TP=1 FP=1 FN=1; class 1: TP=1 FP=1 FN=1 -> both F1 = 0.5
    preds = np.array([[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]])
    labels = [0, 0, 1, 1]
    assert macro_f1(np.asarray(preds), labels) == pytest.approx(0.5)


def test_macro_f1_absent_class_rules():
    # class 2 absent from labels and predictions: excluded from the mean
    preds = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])
    assert macro_f1(preds, [0, 1]) == 1.0
    # class 1 predicted but never labeled: contributes F1 = 0
    preds = np.array([[0.9, 0.1], [0.2, 0.8]])
    labels = [0, 0]
    # class 0: TP=1, FN=1 -> F1 = 2/3; class 1: FP=1 -> F1 = 0
    expected = ((2.0 / 3.0) + 0.0) / 2.0
    assert macro_f1(preds, labels) == pytest.approx(expected)


def test_error_value_orientation():
    preds = np.array([[1.0, 0.0], [0.0, 1.0]])
    labels = [0, 1]
    assert error_value("cross_entropy", preds, labels) == 0.0
    assert error_value("error_rate", preds, labels) == 0.0
    assert error_value("macro_f1", preds, labels) == 0.0  # 1 - F1


def test_metric_value_names():
    MetricValue("cross_entropy", 0.1)
    with pytest.raises(ValueError):
        MetricValue("accuracy", 0.1)
