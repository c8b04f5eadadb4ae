import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqmatch import autodiff as ad
from freqmatch.errors import DomainError
from freqmatch.objectives import EPS, LossReport, bce_loss, coarse_bce, dice


def test_near_perfect_prediction():
    gt = np.array([[1, 0], [0, 1]])
    fg = np.where(gt, 1 - EPS, EPS)
    loss = bce_loss(gt, fg, 1 - fg).data
    assert loss == pytest.approx(-math.log(1 - EPS), rel=1e-6)
    assert loss == pytest.approx(1e-7, rel=1e-3)


def test_constant_half_is_log_two():
    gt = np.random.default_rng(0).integers(0, 2, (5, 5))
    half = np.full((5, 5), 0.5)
    assert bce_loss(gt, half, half).data == pytest.approx(math.log(2))
    assert coarse_bce(gt, half).data == pytest.approx(0.6931, abs=1e-4)


def test_single_pixel_quarter():
    assert bce_loss(np.ones((1, 1)), np.array([[0.25]]), np.array([[0.75]])).data == pytest.approx(1.3863, abs=1e-4)
    assert coarse_bce(np.ones((1, 1)), np.array([[0.25]])).data == pytest.approx(-math.log(0.25))


def test_clamp_keeps_loss_finite():
    loss = bce_loss(np.ones((1, 2)), np.zeros((1, 2)), np.ones((1, 2))).data
    assert loss == pytest.approx(-math.log(EPS))


def test_shape_mismatch():
    with pytest.raises(DomainError):
        bce_loss(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bce_positive_unless_saturated(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 2, (4, 4))
    p = rng.uniform(0.01, 0.99, (4, 4))
    assert bce_loss(gt, p, 1 - p).data > 0


def test_bce_gradient():
    rng = np.random.default_rng(1)
    gt = rng.integers(0, 2, (4, 5))
    z = ad.parameter(rng.normal(size=(4, 5)), "logits")
    report = ad.finite_diff_check(lambda z: coarse_bce(gt, ad.sigmoid(z)), [z])
    assert report["max_rel_err"] <= 1e-3
    z2 = ad.parameter(rng.normal(size=(4, 5)), "logits2")
    report = ad.finite_diff_check(lambda a, b: bce_loss(gt, ad.sigmoid(a), ad.sigmoid(b)), [z, z2])
    assert report["max_rel_err"] <= 1e-3


def test_loss_report_total_is_exact_sum():
    r = LossReport(0.1, 0.2)
    assert r.l_total == 0.1 + 0.2


def test_dice_examples():
    x = np.zeros((4, 4))
    x[0, :] = 1
    assert dice(x, x) == 1.0
    y = np.zeros((4, 4))
    y[3, :] = 1
    assert dice(x, y) == 0.0
    z = np.zeros((4, 4))
    z[0, 2:] = 1
    z[1, :2] = 1
    assert dice(x, z) == 0.5
    assert dice(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert dice(np.zeros((3, 3)), np.eye(3)) == 0.0


def test_dice_binarizes_probabilities_at_half():
    assert dice(np.array([[0.5, 0.49]]), np.array([[1, 0]])) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dice_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, (6, 6)), rng.integers(0, 2, (6, 6))
    assert dice(a, b) == dice(b, a)
    assert 0.0 <= dice(a, b) <= 1.0
