import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from disharmony import autodiff as ad
from disharmony.losses import cross_entropy, grad, huber, proximal_penalty, softmax, weight_decay
from disharmony.model import ModelConfig, init_params

finite = st.floats(-50, 50, allow_nan=False)
logit_vecs = arrays(np.float64, st.integers(2, 6), elements=finite)


def test_cross_entropy_examples():
    assert cross_entropy([0.0, 0.0], 0) == pytest.approx(math.log(2), abs=1e-12)
    assert cross_entropy([1000.0, 0.0], 0) == pytest.approx(0.0, abs=1e-12)
    assert cross_entropy([1.0, -1.0], 1) == pytest.approx(math.log1p(math.exp(2)), abs=1e-12)
    assert cross_entropy([1.0, -1.0], 1) == pytest.approx(2.1269, abs=1e-4)


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(ValueError):
        cross_entropy([0.0, 1.0], 2)
    with pytest.raises(ValueError):
        cross_entropy([0.0, 1.0], -1)


def test_huber_examples():
    assert huber(3.0, 3.0) == 0.0
    assert huber(0.5, 0.0, 1.0) == 0.125
    assert huber(2.0, 0.0, 1.0) == 1.5
    with pytest.raises(ValueError):
        huber(1.0, 0.0, 0.0)


def test_huber_derivative_continuous_at_delta():
    for delta in (0.3, 1.0, 2.5):
        h = 1e-7
        left = (huber(delta, 0, delta) - huber(delta - h, 0, delta)) / h
        right = (huber(delta + h, 0, delta) - huber(delta, 0, delta)) / h
        # both one-sided slopes equal delta analytically
        assert abs(left - right) < 1e-6
    # exact analytic check through the tape
    for delta in (0.3, 1.0, 2.5):
        for r in (delta, -delta):
            p = ad.Var(np.array([r]))
            ad.vsum(ad.huber_rows(p, np.zeros(1), delta)).backward()
            assert abs(p.grad[0] - np.sign(r) * delta) < 1e-9


def test_penalty_examples():
    assert proximal_penalty([1, 2], [1, 2], 3.0) == 0.0
    assert proximal_penalty([5, -2], [1, 7], 0.0) == 0.0
    assert proximal_penalty([1, 1], [0, 0], 2.0) == 2.0
    assert weight_decay(np.zeros(4), 1.0) == 0.0
    assert weight_decay([3.0, 4.0], 1.0) == 12.5
    theta = np.full(2, math.sqrt(1e5))
    assert weight_decay(theta, 1e-5) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        proximal_penalty([1, 2], [1], 1.0)


@settings(max_examples=200, deadline=None)
@given(logit_vecs)
def test_softmax_sums_to_one(z):
    assert abs(softmax(z).sum() - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(logit_vecs, st.floats(-100, 100), st.data())
def test_cross_entropy_shift_invariant(z, c, data):
    y = data.draw(st.integers(0, z.size - 1))
    assert abs(cross_entropy(z + c, y) - cross_entropy(z, y)) <= 1e-9
    assert cross_entropy(z, y) >= 0.0


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite),
       st.floats(0, 10), st.floats(-3, 3))
def test_proximal_symmetric_and_homogeneous(a, b, alpha, t):
    p = proximal_penalty(a, b, alpha)
    assert p >= 0.0
    assert p == pytest.approx(proximal_penalty(b, a, alpha), rel=1e-12, abs=1e-12)
    scaled = proximal_penalty(b + t * (a - b), b, alpha)
    assert scaled == pytest.approx(t * t * p, rel=1e-9, abs=1e-9)


def test_grad_of_penalty_at_anchor_is_zero():
    p = init_params(ModelConfig(3, (4,), (2,)), [], 0)
    anchor = p.values.copy()
    g = grad(lambda w: proximal_penalty(w, anchor, 2.0), p, p.segments)
    assert np.all(g == 0.0)


def test_grad_freezes_unselected_segments():
    p = init_params(ModelConfig(3, (4,), (2,)), [], 0)
    g = grad(lambda w: weight_decay(w, 1.0), p, ["phi_main"])
    assert np.all(g[p.segment_slice("theta_base")] == 0.0)
    assert np.array_equal(g[p.segment_slice("phi_main")], p.segment("phi_main"))


def test_grad_rejects_non_finite_loss():
    p = init_params(ModelConfig(3, (4,), (2,)), [], 0)
    with pytest.raises(FloatingPointError):
        grad(lambda w: ad.vsum(w) * np.inf, p, p.segments)
