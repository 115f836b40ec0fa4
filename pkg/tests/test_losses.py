import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scaleface.errors import FormatError, NumericError, ShapeError
from scaleface.gradnet import finite_diff_check
from scaleface.losses import LossConfig, arcface_loss, margin_loss, scaleface_loss, softmax_loss

from conftest import unit

mpmath.mp.dps = 40


def oracle_loss(E, W, labels, scales, margin, eps=1e-7):
    """Batch-mean loss in 40-digit arithmetic, angle margin applied via acos."""
    total = mpmath.mpf(0)
    for e, y, s in zip(E, labels, scales):
        logits = []
        for j, w in enumerate(W):
            c = mpmath.fsum(mpmath.mpf(float(a)) * mpmath.mpf(float(b)) for a, b in zip(e, w))
            if j == y and margin:
                c = min(max(c, -1 + mpmath.mpf(eps)), 1 - mpmath.mpf(eps))
                c = mpmath.cos(mpmath.acos(c) + margin)
            logits.append(mpmath.mpf(float(s)) * c)
        total += mpmath.log(mpmath.fsum(mpmath.exp(z) for z in logits)) - logits[y]
    return float(total / len(labels))


def test_uniform_softmax_is_log_c():
    res = softmax_loss(np.zeros((1, 4)), unit(np.eye(3, 4)), [1])
    assert res.loss == pytest.approx(math.log(3), abs=1e-15)


def test_softmax_saturation():
    E = np.array([[50.0, 0.0]])
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert softmax_loss(E, W, [0]).loss < 1e-20


def test_softmax_matches_oracle(rng):
    E = rng.normal(size=(4, 8))
    W = unit(rng.normal(size=(5, 8)))
    labels = rng.integers(0, 5, 4)
    res = softmax_loss(E, W, labels)
    assert res.loss == pytest.approx(oracle_loss(E, W, labels, np.ones(4), 0.0), abs=1e-12)


def test_arcface_uniform_case():
    W = unit(np.eye(3, 4))
    E = np.array([[0.0, 0.0, 0.0, 1.0]])
    assert arcface_loss(E, W, [0], scale=17.0, margin=0.0).loss == pytest.approx(math.log(3), abs=1e-15)


def test_arcface_two_class_value():
    # cos(theta_y) = 0.8, cos(theta_other) = 0.1
    E = np.array([[1.0, 0.0]])
    W = np.array([[0.8, 0.6], [0.1, math.sqrt(0.99)]])
    res = arcface_loss(E, W, [0], scale=10.0, margin=0.5)
    assert res.loss == pytest.approx(oracle_loss(E, W, [0], [10.0], 0.5), abs=1e-12)
    assert res.loss == pytest.approx(0.0427, abs=1e-3)


def test_arcface_matches_oracle(rng):
    for _ in range(5):
        E = unit(rng.normal(size=(4, 6)))
        W = unit(rng.normal(size=(5, 6)))
        labels = rng.integers(0, 5, 4)
        res = arcface_loss(E, W, labels, scale=64.0, margin=0.5)
        assert res.loss == pytest.approx(oracle_loss(E, W, labels, [64.0] * 4, 0.5), rel=1e-12, abs=1e-12)


def test_scaleface_matches_oracle(rng):
    E = unit(rng.normal(size=(6, 5)))
    W = unit(rng.normal(size=(3, 5)))
    labels = rng.integers(0, 3, 6)
    s = rng.uniform(1, 64, 6)
    res = scaleface_loss(E, W, labels, s, margin=0.3)
    assert res.loss == pytest.approx(oracle_loss(E, W, labels, s, 0.3), rel=1e-12, abs=1e-12)


def test_clamp_limits_margin_at_parallel_vectors():
    W = np.eye(2)
    res = arcface_loss(np.array([[1.0, 0.0]]), W, [0], scale=1.0, margin=0.5)
    assert np.isfinite(res.loss) and np.all(np.isfinite(res.grad_embeddings))


def test_reductions(rng):
    E = unit(rng.normal(size=(7, 6)))
    W = unit(rng.normal(size=(4, 6)))
    labels = rng.integers(0, 4, 7)
    a = arcface_loss(E, W, labels, scale=30.0, margin=0.4)
    s = scaleface_loss(E, W, labels, np.full(7, 30.0), margin=0.4)
    assert abs(a.loss - s.loss) <= 1e-12
    np.testing.assert_allclose(a.grad_embeddings, s.grad_embeddings, atol=1e-12, rtol=0)
    np.testing.assert_allclose(a.grad_centroids, s.grad_centroids, atol=1e-12, rtol=0)
    sm = softmax_loss(E, W, labels)
    a0 = arcface_loss(E, W, labels, scale=1.0, margin=0.0)
    assert abs(sm.loss - a0.loss) <= 1e-12


@pytest.mark.parametrize("sign, cy, co", [(-1, 0.9, 0.1), (1, 0.1, 0.6)])
def test_scale_gradient_sign(sign, cy, co):
    E = np.array([[1.0, 0.0]])
    W = np.array([[cy, math.sqrt(1 - cy**2)], [co, -math.sqrt(1 - co**2)]])
    res = scaleface_loss(E, W, [0], [8.0], margin=0.5)
    h = 1e-5
    up = scaleface_loss(E, W, [0], [8.0 + h], margin=0.5).loss
    down = scaleface_loss(E, W, [0], [8.0 - h], margin=0.5).loss
    fd = (up - down) / (2 * h)
    assert np.sign(res.grad_scales[0]) == np.sign(fd) == sign


def test_gradients_finite_differences(rng):
    E = unit(rng.normal(size=(5, 4)))
    W = unit(rng.normal(size=(3, 4)))
    labels = rng.integers(0, 3, 5)
    s = rng.uniform(0.5, 6.0, 5)

    def ev(ps):
        r = margin_loss(ps[0], ps[1], labels, ps[2], 0.5)
        return r.loss, [r.grad_embeddings, r.grad_centroids, r.grad_scales]
    assert finite_diff_check(ev, [E, W, s]).passed


def test_probs_rows_sum_to_one(rng):
    E = unit(rng.normal(size=(5, 4)))
    W = unit(rng.normal(size=(3, 4)))
    res = scaleface_loss(E, W, rng.integers(0, 3, 5), rng.uniform(1, 64, 5))
    np.testing.assert_allclose(res.probs.sum(axis=1), 1.0, atol=1e-12)
    assert res.per_sample.shape == (5,)


def test_validation_errors():
    W = np.eye(2)
    with pytest.raises(ShapeError):
        arcface_loss([[2.0, 0.0]], W, [0])
    with pytest.raises(FormatError):
        arcface_loss([[1.0, 0.0]], W, [2])
    with pytest.raises(ShapeError):
        arcface_loss([[1.0, 0.0, 0.0]], W, [0])
    with pytest.raises(NumericError):
        scaleface_loss([[1.0, 0.0]], W, [0], [0.0])
    with pytest.raises(ShapeError):
        scaleface_loss([[1.0, 0.0]], W, [0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        LossConfig(margin=2.0)
    with pytest.raises(ShapeError):
        LossConfig(scale=-1.0)


def test_margin_loss_allows_zero_scale():
    res = margin_loss(np.array([[1.0, 0.0]]), np.eye(2), np.array([0]), np.zeros(1), 0.5)
    assert res.loss == pytest.approx(math.log(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.2), st.floats(0.1, 64.0))
def test_margin_never_lowers_loss(seed, margin, s):
    r = np.random.default_rng(seed)
    E = unit(r.normal(size=(3, 4)))
    W = unit(r.normal(size=(3, 4)))
    labels = r.integers(0, 3, 3)
    plain = arcface_loss(E, W, labels, scale=s, margin=0.0).per_sample
    with_m = arcface_loss(E, W, labels, scale=s, margin=margin).per_sample
    cos_y = (E @ W.T)[np.arange(3), labels]
    # the margin shrinks the true logit unless theta + m wraps past pi
    ok = np.arccos(np.clip(cos_y, -1, 1)) + margin <= math.pi
    assert np.all(with_m[ok] >= plain[ok] - 1e-12)
