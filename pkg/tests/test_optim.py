"""ADAM update rule against a hand-stepped recurrence."""

import numpy as np
import pytest

from subgridboost.errors import StateError
from subgridboost.nn import Tensor
from subgridboost.optim import Adam


class TestAdam:
    def test_zero_gradient_zero_decay_leaves_params(self):
        p = Tensor(np.array([1.5, -2.0]))
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        for _ in range(3):
            p.zero_grad()
            opt.step()
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_matches_hand_stepped_recurrence(self):
        # independent recurrence: m, v, bias correction, decoupled decay
        lr, wd, b1, b2, eps = 0.1, 0.01, 0.9, 0.999, 1e-8
        theta = 0.7
        m = v = 0.0
        expected = []
        for t in range(1, 6):
            g = 1.0
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            theta = theta - lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * theta)
            expected.append(theta)

        p = Tensor(np.array([0.7]))
        opt = Adam([p], lr=lr, weight_decay=wd, beta1=b1, beta2=b2, eps=eps)
        got = []
        for _ in range(5):
            p.grad = np.array([1.0])
            opt.step()
            got.append(p.data[0])
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)

    def test_first_step_magnitude(self):
        p = Tensor(np.array([0.0]))
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        p.grad = np.array([1.0])
        opt.step()
        assert abs(p.data[0] - (-0.1 / (1.0 + 1e-8))) < 1e-12

    def test_identical_params_stay_identical(self):
        rng = np.random.default_rng(0)
        a = Tensor(np.array([0.3, -1.2]))
        b = Tensor(np.array([0.3, -1.2]))
        opt = Adam([a, b], lr=0.05, weight_decay=1e-4)
        for _ in range(7):
            g = rng.normal(size=2)
            a.grad = g.copy()
            b.grad = g.copy()
            opt.step()
        np.testing.assert_array_equal(a.data, b.data)

    def test_missing_gradient_raises(self):
        p = Tensor(np.array([1.0]))
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        with pytest.raises(StateError):
            opt.step()

    def test_step_counter_increases(self):
        p = Tensor(np.array([1.0]))
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        for expected in (1, 2, 3):
            p.zero_grad()
            opt.step()
            assert opt.step_count == expected
