import numpy as np
import pytest

from sdg_gan.optim import AdamState, adam_step


class TestAdam:
    def test_first_step_is_lr_times_sign(self):
        p = [np.array([[1.0, -2.0, 3.0]])]
        g = [np.array([[0.5, -4.0, 1e-3]])]
        state = AdamState.like(p)
        adam_step(state, p, g, lr=0.1, eps=0.0)
        np.testing.assert_allclose(p[0], [[0.9, -1.9, 2.9]], rtol=1e-14)

    def test_matches_reference_loop(self):
        r = np.random.default_rng(0)
        x = r.normal(size=(3, 2))
        p = [x.copy()]
        state = AdamState.like(p)
        m = np.zeros_like(x)
        v = np.zeros_like(x)
        ref = x.copy()
        for t in range(1, 6):
            g = r.normal(size=x.shape)
            adam_step(state, p, [g], lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8)
            m = 0.5 * m + 0.5 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref - 2e-4 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p[0], ref, rtol=1e-13)
        assert state.t == 5

    def test_minimizes_quadratic(self):
        p = [np.array([[5.0, -3.0]])]
        state = AdamState.like(p)
        for _ in range(2000):
            adam_step(state, p, [2 * p[0]], lr=0.05, beta1=0.9)
        np.testing.assert_allclose(p[0], 0.0, atol=1e-3)

    def test_shape_mismatch(self):
        p = [np.zeros((2, 2))]
        with pytest.raises(ValueError):
            adam_step(AdamState.like(p), p, [np.zeros((2, 3))])
        with pytest.raises(ValueError):
            adam_step(AdamState.like(p), p, [])

    def test_zero_gradient_leaves_params(self):
        p = [np.array([[1.5, -2.0]])]
        state = AdamState.like(p)
        adam_step(state, p, [np.zeros((1, 2))])
        np.testing.assert_array_equal(p[0], [[1.5, -2.0]])
        assert state.t == 1

    def test_hundred_steps_on_square(self):
        p = [np.array([[1.0]])]
        state = AdamState.like(p)
        # scalar recursion as oracle
        theta, m, v = 1.0, 0.0, 0.0
        for t in range(1, 101):
            adam_step(state, p, [2 * p[0]], lr=0.1)
            g = 2 * theta
            m = 0.5 * m + 0.5 * g
            v = 0.999 * v + 0.001 * g * g
            theta -= 0.1 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert p[0][0, 0] == pytest.approx(theta, rel=1e-12)
        assert abs(theta) < 0.05

    def test_zero_betas_give_normalized_step(self):
        g = np.array([[3.0, -0.25, 1e-4]])
        p = [np.zeros((1, 3))]
        adam_step(AdamState.like(p), p, [g], lr=1.0, beta1=0.0, beta2=0.0, eps=1e-8)
        np.testing.assert_allclose(p[0], -g / (np.abs(g) + 1e-8), rtol=1e-14)
