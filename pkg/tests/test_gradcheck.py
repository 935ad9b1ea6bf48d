"""The finite-difference checker itself: exactness, tolerance, fault injection."""

import numpy as np
import pytest

from lfcodec import ConvParams, conv2d, conv2d_backward, grad_check


def _conv_fixture(seed=0, kernel=2, stride=2, h=4):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, h, h))
    w = rng.standard_normal((2, 2, kernel, kernel))
    b = rng.standard_normal(2)
    ho = (h - kernel) // stride + 1
    proj = rng.standard_normal((1, 2, ho, ho))

    def fn(arrs):
        p = ConvParams(arrs["w"], arrs["b"], stride)
        y = conv2d(arrs["x"], p)
        gx, gw, gb = conv2d_backward(arrs["x"], p, proj)
        return float(np.sum(y * proj)), {"x": gx, "w": gw, "b": gb}

    return fn, {"x": x, "w": w, "b": b}


class TestGradCheck:
    def test_linear_map_is_nearly_exact(self):
        """1x1 conv is linear; central differences carry no truncation error."""
        fn, arrays = _conv_fixture(seed=1, kernel=1, stride=1)
        result = grad_check(fn, arrays, step=1e-2, tolerance=1e-10)
        assert result.passed, str(result)

    def test_conv_toy_instance(self):
        fn, arrays = _conv_fixture(seed=2)
        result = grad_check(fn, arrays, step=1e-5, tolerance=1e-4)
        assert result.passed, str(result)

    def test_corrupted_backward_is_caught_with_index(self):
        """Adding 1 to one gradient entry must trip the check at that entry."""
        fn, arrays = _conv_fixture(seed=3)

        def corrupted(arrs):
            loss, grads = fn(arrs)
            grads = {k: v.copy() for k, v in grads.items()}
            grads["w"][1, 0, 1, 0] += 1.0
            return loss, grads

        result = grad_check(corrupted, arrays, step=1e-5, tolerance=1e-4)
        assert not result.passed
        assert result.worst_name == "w"
        assert result.worst_index == (1, 0, 1, 0)

    def test_subsampling_is_seeded(self):
        fn, arrays = _conv_fixture(seed=4, h=8)
        r1 = grad_check(fn, arrays, sample_limit=5, seed=9)
        r2 = grad_check(fn, arrays, sample_limit=5, seed=9)
        assert r1.max_relative_error == r2.max_relative_error
        assert r1.checked == r2.checked

    def test_missing_gradient_key_rejected(self):
        def fn(arrs):
            return float(arrs["x"].sum()), {}

        with pytest.raises(KeyError):
            grad_check(fn, {"x": np.ones(3)})
