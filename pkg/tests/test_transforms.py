import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from iceconf import transforms as tf
from iceconf.errors import InvalidInputError
from iceconf.simplex import argmax, cross_entropy, softmax

from conftest import random_simplex

P3 = np.array([0.7, 0.2, 0.1])


def _power_oracle(p, c):
    w = [x**c for x in p]
    s = sum(w)
    return [x / s for x in w]


def test_h_linear_examples():
    np.testing.assert_array_equal(tf.h_linear(P3, 1.0), P3)
    np.testing.assert_allclose(tf.h_linear(P3, 0.0), [1 / 3] * 3, rtol=1e-15)
    np.testing.assert_allclose(tf.h_linear(P3, 0.5), [0.516667, 0.266667, 0.216667], atol=1e-6)


def test_h_power_examples():
    np.testing.assert_array_equal(tf.h_power(P3, 1.0), P3)
    expected = _power_oracle(P3, 0.5)
    np.testing.assert_allclose(tf.h_power(P3, 0.5), expected, rtol=1e-14)
    np.testing.assert_allclose(expected, [0.522879, 0.279491, 0.197630], atol=1e-6)
    for c in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(tf.h_power([0.5, 0.5], c), [0.5, 0.5], rtol=1e-15)


def test_h_power_zero_entries():
    np.testing.assert_allclose(tf.h_power([1.0, 0.0, 0.0], 0.0), [1 / 3] * 3, rtol=1e-15)
    q = tf.h_power([0.6, 0.4, 0.0], 0.5)
    assert q[2] == 0.0
    np.testing.assert_allclose(q[:2], _power_oracle([0.6, 0.4], 0.5), rtol=1e-14)


def test_h_power_logits_examples(rng):
    z = np.array([2.0, 0.0, -1.0])
    np.testing.assert_allclose(tf.h_power_logits(z, 0.0), [1 / 3] * 3, rtol=1e-15)
    np.testing.assert_array_equal(tf.h_power_logits(z, 1.0), softmax(z))
    zs = rng.normal(scale=3, size=(10_000, 5))
    cs = rng.uniform(size=10_000)
    a = tf.h_power_logits(zs, cs)
    b = tf.h_power(softmax(zs), cs)
    assert np.abs(a - b).max() <= 1e-12


def test_h_power_logits_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        tf.h_power_logits([np.inf, 0.0], 0.5)


def test_batched_confidence_per_row(rng):
    p = random_simplex(rng, 20, 4)
    c = rng.uniform(size=20)
    q = tf.h_linear(p, c)
    for i in range(20):
        np.testing.assert_array_equal(q[i], tf.h_linear(p[i], c[i]))


def test_argmax_preservation(rng):
    p = random_simplex(rng, 100_000, 6)
    c = rng.uniform(1e-6, 1.0, size=100_000)
    expected = argmax(p)
    for kind in tf.KINDS:
        np.testing.assert_array_equal(argmax(tf.apply(kind, p, c)), expected)


def test_boundary_conditions(rng):
    p = random_simplex(rng, 10_000, 5)
    for kind in tf.KINDS:
        np.testing.assert_array_equal(tf.apply(kind, p, 1.0), p)
        assert np.abs(tf.apply(kind, p, 0.0) - 0.2).max() <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-8, 8), min_size=2, max_size=6),
    st.floats(0.0, 1.0),
)
def test_transforms_stay_on_simplex(z, c):
    p = softmax(z)
    for kind in tf.KINDS:
        q = tf.apply(kind, p, c)
        assert np.all(q >= 0)
        assert abs(q.sum() - 1) <= 1e-9


def test_grad_c_linear_examples():
    assert tf.grad_c_linear([0.25, 0.25, 0.5, 0.0], 0.3, 0) == 0.0
    fd = lambda i: (  # noqa: E731
        math.log(0.5000010 * [0.7, 0.3][i] + 0.4999990 * 0.5) - math.log(0.4999990 * [0.7, 0.3][i] + 0.5000010 * 0.5)
    ) / 2e-6
    assert tf.grad_c_linear([0.7, 0.3], 0.5, 0) == pytest.approx(fd(0), rel=1e-8)
    assert tf.grad_c_linear([0.7, 0.3], 0.5, 0) == pytest.approx(1 / 3, rel=1e-12)
    assert tf.grad_c_linear([0.7, 0.3], 0.5, 1) == pytest.approx(fd(1), rel=1e-8)
    assert tf.grad_c_linear([0.7, 0.3], 0.5, 1) == pytest.approx(-0.5, rel=1e-12)
    assert tf.grad_c_linear([1.0, 0.0], 1.0, 1) == -math.inf


def test_grad_c_power_examples():
    for i in range(4):
        assert tf.grad_c_power([0.25] * 4, 0.6, i) == 0.0

    def log_q(c, i):
        return math.log(_power_oracle([0.7, 0.3], c)[i])

    for i, expected in ((0, 0.3 * math.log(7 / 3)), (1, -0.7 * math.log(7 / 3))):
        fd = (log_q(1 + 1e-6, i) - log_q(1 - 1e-6, i)) / 2e-6
        got = tf.grad_c_power([0.7, 0.3], 1.0, i)
        assert got == pytest.approx(fd, rel=1e-8)
        assert got == pytest.approx(expected, rel=1e-12)
    with pytest.raises(InvalidInputError):
        tf.grad_c_power([1.0, 0.0], 0.5, 0)


def test_grad_c_power_matches_printed_form_in_sign(rng):
    p = random_simplex(rng, 2000, 4)
    c = rng.uniform(0.01, 0.99, size=2000)
    for i in range(4):
        exact = tf.grad_c_power(p, c, i)
        printed = (p ** c[:, None] * np.log(p[:, [i]] / p)).sum(axis=1)
        np.testing.assert_allclose(printed, exact * (p ** c[:, None]).sum(axis=1), rtol=1e-9, atol=1e-12)


def _rel_err(a, n, floor=1e-3):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@pytest.mark.parametrize("kind", tf.KINDS)
def test_grad_c_matches_finite_differences(rng, kind):
    n, k, h = 10_000, 4, 1e-6
    p = random_simplex(rng, n, k, scale=1.5)
    c = rng.uniform(0.01, 0.99, size=n)
    i = rng.integers(0, k, size=n)
    rows = np.arange(n)
    grad = tf.grad_c_linear if kind == tf.LINEAR else tf.grad_c_power
    analytic = np.array([grad(p[r], c[r], i[r]) for r in range(0, n)])
    logq = lambda cc: np.log(tf.apply(kind, p, cc)[rows, i])  # noqa: E731
    numeric = (logq(c + h) - logq(c - h)) / (2 * h)
    assert _rel_err(analytic, numeric).max() <= 1e-6


def test_sign_boundaries(rng):
    n, k = 10_000, 5
    p = random_simplex(rng, n, k)
    c = rng.uniform(0.0, 1.0, size=n)
    i = rng.integers(0, k, size=n)
    rows = np.arange(n)
    lin = tf.grad_c_linear(p, c, 0)
    np.testing.assert_array_equal(np.sign(lin), np.sign(p[:, 0] - 1 / k))
    pw = np.array([tf.grad_c_power(p[r], c[r], i[r]) for r in rows])
    q = tf.h_power(p, c)
    boundary = np.exp(-cross_entropy(q, p))
    np.testing.assert_array_equal(np.sign(pw), np.sign(np.log(p[rows, i]) - np.log(boundary)))


def test_power_zero_crossing_location(rng):
    # move p_i along softmax(z + t e_i) and locate where the gradient vanishes
    n, k = 10_000, 4
    worst = 0.0
    for _ in range(n):
        z = rng.normal(size=k)
        c = rng.uniform(0.05, 1.0)

        def p_of(t):
            zz = z.copy()
            zz[0] += t
            return softmax(zz)

        t0 = brentq(lambda t: tf.grad_c_power(p_of(t), c, 0), -30, 30, xtol=1e-15)
        p = p_of(t0)
        b = tf.power_sign_boundary(p, c)
        assert b == pytest.approx(math.exp(-cross_entropy(tf.h_power(p, c), p)), rel=1e-12)
        worst = max(worst, abs(p[0] - b))
    assert worst <= 1e-9


def test_backprop_trivial_cases(rng):
    p = random_simplex(rng, 1, 4)[0]
    up = rng.normal(size=4)
    dp, _ = tf.backprop_through_h(tf.LINEAR, up, p, 0.0)
    np.testing.assert_array_equal(dp, np.zeros(4))
    dp, dc = tf.backprop_through_h(tf.LINEAR, up, p, 1.0)
    np.testing.assert_array_equal(dp, up)
    assert dc == pytest.approx(up @ (p - 0.25), rel=1e-14)


@pytest.mark.parametrize("kind", tf.KINDS)
def test_backprop_matches_finite_differences(rng, kind):
    h = 1e-6
    for _ in range(200):
        k = int(rng.integers(2, 7))
        z = rng.normal(size=k)
        c = float(rng.uniform(0.05, 0.95))
        up = rng.normal(size=k)
        x = softmax(z) if kind == tf.LINEAR else z

        def f(xx, cc):
            q = tf.h_linear(xx, cc) if kind == tf.LINEAR else softmax(cc * xx)
            return up @ q

        dx, dc = tf.backprop_through_h(kind, up, x, c)
        # linear: perturb p off the simplex along free directions; h_linear is affine so any direction works
        num = np.empty(k)
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            if kind == tf.LINEAR:
                num[j] = (up @ (c * (x + e) + (1 - c) / k) - up @ (c * (x - e) + (1 - c) / k)) / (2 * h)
            else:
                num[j] = (f(x + e, c) - f(x - e, c)) / (2 * h)
        num_c = (f(x, c + h) - f(x, c - h)) / (2 * h)
        assert _rel_err(dx, num, floor=1e-4).max() <= 1e-6
        assert _rel_err(np.array(dc), np.array(num_c), floor=1e-4) <= 1e-6
