"""Tests for the finite-difference verification helpers themselves."""

import numpy as np
import pytest

from ggsa import tensor as T
from ggsa.errors import ContractError
from ggsa.gradcheck import (check_gradients, full_model_gradcheck,
                            numerical_gradient, relative_error)


class TestNumericalGradient:
    def test_quadratic_has_gradient_two_x(self):
        x = T.parameter(np.array([1.0, -2.0, 0.5]))
        grad = numerical_gradient(lambda: T.sum_all(T.hadamard(x, x)), x)
        np.testing.assert_allclose(grad, 2 * x.data, rtol=1e-8)

    def test_leaf_is_restored_after_probing(self):
        x = T.parameter(np.array([3.0, 4.0]))
        before = x.data.copy()
        numerical_gradient(lambda: T.sum_all(x), x)
        np.testing.assert_array_equal(x.data, before)

    def test_rejects_single_precision_leaves(self):
        x = T.parameter(np.array([1.0], dtype=np.float32))
        with pytest.raises(ContractError):
            numerical_gradient(lambda: T.sum_all(x), x)


class TestRelativeError:
    def test_identical_gradients_have_zero_error(self):
        g = np.array([1.0, 2.0])
        assert relative_error(g, g) == 0.0

    def test_error_normalizes_by_magnitude(self):
        a = np.array([100.0])
        b = np.array([101.0])
        np.testing.assert_allclose(relative_error(a, b), 1.0 / 101.0)

    def test_small_gradients_use_the_floor(self):
        a = np.array([0.0])
        b = np.array([1e-9])
        np.testing.assert_allclose(relative_error(a, b), 1e-9 / 1e-6)


class TestCheckGradients:
    def test_reports_per_leaf_errors(self):
        x = T.parameter(np.array([0.3, -0.7]))
        y = T.parameter(np.array([[1.0, 2.0], [3.0, 4.0]]))
        build = lambda: T.sum_all(T.hadamard(T.matmul(y, T.as_column(x)),
                                             T.matmul(y, T.as_column(x))))
        errors = check_gradients(build, {"x": x, "y": y})
        assert set(errors) == {"x", "y"}
        assert max(errors.values()) < 1e-7

    def test_detects_a_wrong_gradient(self):
        """A leaf that never feeds the loss but claims a gradient must show up."""
        x = T.parameter(np.array([1.0, 2.0]))
        unused = T.parameter(np.array([5.0]))

        def build():
            return T.sum_all(T.hadamard(x, x))

        loss = build()
        T.backward(loss)
        unused.grad = np.array([1.0])  # fabricated analytic gradient
        numeric = numerical_gradient(build, unused)
        assert relative_error(unused.grad, numeric) > 0.9


class TestFullModel:
    def test_every_parameter_verifies_under_tolerance(self):
        errors = full_model_gradcheck(seed=0)
        assert max(errors.values()) < 1e-4
        # interaction path must exercise the embedding, attention, gate,
        # interaction, and composition parameters
        for needle in ("embedding", "block0.attn.wq", "block0.gate.w",
                       "block0.inter.w1", "block0.ln1.gain"):
            assert needle in errors
        live = sum(1 for v in errors.values() if v > 0)
        assert live >= len(errors) - 2
