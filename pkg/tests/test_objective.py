import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from migcn.errors import ContractError
from migcn.localize import WindowConfig, candidate_set
from migcn.objective import (alignment_loss, candidate_ious, interval_iou, ranking_loss, regression_loss,
                             temporal_iou, total_loss)

finite = st.floats(-100, 100, allow_nan=False)


def test_iou_examples():
    assert temporal_iou(2, 6, 2, 6) == 1.0
    assert temporal_iou(0, 1, 2, 3) == 0.0
    assert temporal_iou(2, 6, 4, 8) == pytest.approx(1 / 3, abs=1e-15)
    assert temporal_iou(0, 1, 1, 2) == 0.0
    with pytest.raises(ContractError):
        temporal_iou(3, 2, 0, 1)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite)
def test_iou_symmetric_and_bounded(a, b, c, d):
    a, b = sorted((a, b))
    c, d = sorted((c, d))
    x = temporal_iou(a, b, c, d)
    assert x == temporal_iou(c, d, a, b)
    assert 0.0 <= x <= 1.0
    assert interval_iou(a, b, c, d) == pytest.approx(x, abs=1e-15) or (a == b and c == d)


def test_alignment_examples():
    assert alignment_loss(np.array([40.0]), np.array([1.0])).value < 1e-12
    # gamma 0.2 below lambda 0.3 -> target 0
    a = alignment_loss(np.array([0.7]), np.array([0.2]), lam=0.3).value
    assert a == pytest.approx(-math.log(1 - 1 / (1 + math.exp(-0.7))), abs=1e-14)
    assert alignment_loss(np.array([0.0]), np.array([0.5])).value == pytest.approx(math.log(2), abs=1e-15)


def test_alignment_saturation_is_finite():
    out = alignment_loss(np.array([-1000.0, 1000.0]), np.array([1.0, 0.0])).value
    assert np.isfinite(out) and out == pytest.approx(-math.log(1e-12), rel=1e-12)


def test_alignment_rejects_bad_lambda():
    with pytest.raises(ContractError):
        alignment_loss(np.zeros(2), np.zeros(2), lam=1.0)


def test_ranking_examples():
    assert ranking_loss(np.array([3.0]), np.array([0.2]))[0].value == 0.0
    loss, best = ranking_loss(np.array([1.0, 1.0, 1.0]), np.array([0.1, 0.9, 0.9]))
    assert loss.value == pytest.approx(math.log(3), abs=1e-15) and best == 1
    assert ranking_loss(np.array([0.0, 60.0]), np.array([0.1, 0.9]))[0].value < 1e-20


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 5.0))
def test_ranking_decreases_with_best_score(seed, bump):
    rng = np.random.default_rng(seed)
    scores, ious = rng.normal(size=10), rng.uniform(size=10)
    before, best = ranking_loss(scores, ious)
    scores[best] += bump
    assert ranking_loss(scores, ious)[0].value < before.value
    assert before.value >= 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_losses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    scores = rng.normal(scale=5, size=8)
    assert alignment_loss(scores, rng.uniform(size=8)).value >= 0
    assert regression_loss(rng.normal(), rng.normal(), rng.normal(), rng.normal()).value >= 0


@pytest.mark.parametrize("rect, gt, expected", [((3.0, 7.0), (3.0, 7.0), 0.0), ((2.5, 6.5), (3.0, 7.0), 0.25),
                                                ((1.0, 7.0), (3.0, 7.0), 1.5)])
def test_regression_examples(rect, gt, expected):
    assert regression_loss(rect[0], rect[1], gt[0], gt[1]).value == expected


def test_candidate_ious_use_clip_spans():
    cs = candidate_set(10, WindowConfig((2, 4), 2))
    ious = candidate_ious(cs, 3.0, 4.0)
    # clips 3..4 is exactly the second size-2 window
    assert ious[1] == 1.0
    assert ious[0] == pytest.approx(temporal_iou(0, 2, 2, 4))


def test_total_loss_decomposition(rng):
    cs = candidate_set(12, WindowConfig((2, 4), 1))
    n = len(cs)
    scores, off_s, off_e = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    lb = total_loss(scores, off_s, off_e, cs, 3.0, 6.0, alpha=0.1, beta=0.001)
    assert abs(lb.total.value - (lb.aln.value + 0.1 * lb.rank.value + 0.001 * lb.reg.value)) <= 1e-12
    zero = total_loss(scores, off_s, off_e, cs, 3.0, 6.0, alpha=0.0, beta=0.0)
    assert zero.total.value == zero.aln.value
    best = int(lb.best)
    assert (cs.t_s[best], cs.t_e[best]) == (3.0, 6.0)
    expected_reg = regression_loss(cs.t_s[best] + off_s[best], cs.t_e[best] + off_e[best], 3.0, 6.0).value
    assert lb.reg.value == expected_reg
    with pytest.raises(ContractError):
        total_loss(scores, off_s, off_e, cs, 3.0, 6.0, alpha=-1.0)


def test_total_loss_perfect_candidate_contributes_nothing():
    cs = candidate_set(4, WindowConfig((2,), 2))
    # candidates (1,2) and (3,4); ground truth is the first
    scores = np.array([60.0, -60.0])
    lb = total_loss(scores, np.zeros(2), np.zeros(2), cs, 1.0, 2.0)
    assert lb.total.value < 1e-20


def test_total_loss_batched_matches_per_example(rng):
    cs = candidate_set(8, WindowConfig((2, 3), 1))
    n = len(cs)
    scores, off_s, off_e = rng.normal(size=(3, n)), rng.normal(size=(3, n)), rng.normal(size=(3, n))
    gs, ge = np.array([1.0, 2.5, 4.0]), np.array([3.0, 6.0, 8.0])
    batch = total_loss(scores, off_s, off_e, cs, gs, ge)
    for b in range(3):
        one = total_loss(scores[b], off_s[b], off_e[b], cs, gs[b], ge[b])
        assert batch.total.value[b] == pytest.approx(one.total.value, abs=1e-14)
