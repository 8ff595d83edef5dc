"""Forward examples and finite-difference gradient checks per operation."""

import numpy as np
import pytest

from helpers import assert_grad_close, bilinear_reference, sample_coords
from msgunet import tensor as T
from msgunet.errors import GraphError, ShapeError
from msgunet.tensor import Tensor


class TestConv2d:
    def test_all_ones_sums_kernel_window(self):
        x = Tensor(np.ones((1, 1, 3, 3)), dtype=np.float64)
        w = Tensor(np.ones((1, 1, 3, 3)), dtype=np.float64)
        y = T.conv2d(x, w, stride=1, padding=0)
        assert y.data.shape == (1, 1, 1, 1)
        assert y.data.item() == 9.0

    def test_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 1, 1), dtype=np.float32))
        y = T.conv2d(x, w)
        np.testing.assert_array_equal(y.data, x.data)

    def test_bias_broadcast(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)), dtype=np.float64)
        w = Tensor(np.zeros((5, 3, 1, 1)), dtype=np.float64)
        b = Tensor(np.arange(5.0), dtype=np.float64)
        y = T.conv2d(x, w, b)
        assert np.allclose(y.data[:, 3], 3.0)

    def test_gradcheck_strided(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True, dtype=np.float64)
        w = Tensor(0.5 * rng.standard_normal((4, 3, 4, 4)), requires_grad=True,
                   dtype=np.float64)
        b = Tensor(rng.standard_normal(4), requires_grad=True, dtype=np.float64)

        def forward():
            return float(T.mean(T.conv2d(x, w, b, stride=2, padding=1)).data)

        T.backward(T.mean(T.conv2d(x, w, b, stride=2, padding=1)))
        for t, k in ((x, 40), (w, 40), (b, 4)):
            coords = sample_coords(rng, t.data.size, k)
            assert_grad_close(t.grad, forward, t.data, coords)

    def test_channel_mismatch_names_shapes(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(np.zeros((1, 3, 2, 2)))
        with pytest.raises(ShapeError, match=r"\(1, 2, 4, 4\).*\(1, 3, 2, 2\)"):
            T.conv2d(x, w)

    def test_non_integer_output_names_arithmetic(self):
        x = Tensor(np.zeros((1, 1, 5, 5)))
        w = Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ShapeError, match=r"\(5 \+ 2\*0 - 2\) / 2"):
            T.conv2d(x, w, stride=2, padding=0)


class TestConvTranspose2d:
    def test_kernel_stamping(self):
        x = Tensor(np.ones((1, 1, 1, 1)), dtype=np.float64)
        w = Tensor(np.ones((1, 1, 2, 2)), dtype=np.float64)
        y = T.conv_transpose2d(x, w, stride=2, padding=0)
        np.testing.assert_array_equal(y.data, np.ones((1, 1, 2, 2)))

    def test_adjoint_of_conv2d(self, rng):
        # <conv(A, W), B> == <A, conv_transpose(B, W)> exactly defines the pair
        a = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 4, 4))
        at = Tensor(a, dtype=np.float64)
        wt = Tensor(w, dtype=np.float64)
        y = T.conv2d(at, wt, stride=2, padding=1)
        b = rng.standard_normal(y.data.shape)
        lhs = float((y.data * b).sum())
        back = T.conv_transpose2d(Tensor(b, dtype=np.float64), wt, stride=2, padding=1)
        rhs = float((a * back.data).sum())
        assert abs(lhs - rhs) < 1e-10

    def test_gradcheck(self, rng):
        x = Tensor(rng.standard_normal((2, 4, 4, 4)), requires_grad=True, dtype=np.float64)
        w = Tensor(0.5 * rng.standard_normal((4, 2, 4, 4)), requires_grad=True,
                   dtype=np.float64)
        b = Tensor(rng.standard_normal(2), requires_grad=True, dtype=np.float64)

        def forward():
            return float(T.mean(T.square(T.conv_transpose2d(x, w, b, stride=2))).data)

        T.backward(T.mean(T.square(T.conv_transpose2d(x, w, b, stride=2))))
        for t, k in ((x, 40), (w, 40), (b, 2)):
            coords = sample_coords(rng, t.data.size, k)
            assert_grad_close(t.grad, forward, t.data, coords)

    def test_degenerate_output_rejected(self):
        x = Tensor(np.zeros((1, 1, 1, 1)))
        w = Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ShapeError):
            T.conv_transpose2d(x, w, stride=1, padding=1)


class TestBatchNorm:
    def _stats(self, c, dtype=np.float64):
        return T.RunningStats(c, dtype=dtype)

    def test_normalizes_batch(self, rng):
        x = Tensor(5.0 + 3.0 * rng.standard_normal((4, 3, 5, 5)), dtype=np.float64)
        g = Tensor(np.ones(3), dtype=np.float64)
        b = Tensor(np.zeros(3), dtype=np.float64)
        y = T.batch_norm2d(x, g, b, self._stats(3), train=True)
        mu = y.data.mean(axis=(0, 2, 3))
        var = y.data.var(axis=(0, 2, 3))
        assert np.abs(mu).max() < 1e-6
        assert np.abs(var - 1.0).max() < 1e-5

    def test_zero_gamma_gives_beta(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)), dtype=np.float64)
        g = Tensor(np.zeros(3), dtype=np.float64)
        b = Tensor(np.array([1.0, -2.0, 0.5]), dtype=np.float64)
        y = T.batch_norm2d(x, g, b, self._stats(3), train=True)
        for c in range(3):
            assert np.allclose(y.data[:, c], b.data[c])

    def test_eval_uses_running_stats(self, rng):
        x = Tensor(rng.standard_normal((4, 2, 3, 3)), dtype=np.float64)
        g = Tensor(np.ones(2), dtype=np.float64)
        b = Tensor(np.zeros(2), dtype=np.float64)
        stats = self._stats(2)
        T.batch_norm2d(x, g, b, stats, train=True, momentum=1.0)
        x2 = Tensor(rng.standard_normal((1, 2, 3, 3)), dtype=np.float64)
        y = T.batch_norm2d(x2, g, b, stats, train=False)
        expect = (x2.data - stats.mean[None, :, None, None]) / np.sqrt(
            stats.var[None, :, None, None] + 1e-5)
        np.testing.assert_allclose(y.data, expect, rtol=1e-12)

    def test_gradcheck(self, rng):
        x = Tensor(rng.standard_normal((4, 3, 5, 5)), requires_grad=True, dtype=np.float64)
        g = Tensor(1.0 + 0.1 * rng.standard_normal(3), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.standard_normal(3), requires_grad=True, dtype=np.float64)
        weights = rng.standard_normal((4, 3, 5, 5))

        def loss():
            y = T.batch_norm2d(x, g, b, self._stats(3), train=True)
            return T.mean(T.square(T.add(y, Tensor(weights, dtype=np.float64))))

        T.backward(loss())
        for t, k in ((x, 40), (g, 3), (b, 3)):
            coords = sample_coords(rng, t.data.size, k)
            assert_grad_close(t.grad, lambda: float(loss().data), t.data, coords)

    def test_single_element_variance_rejected(self):
        x = Tensor(np.zeros((1, 3, 1, 1)))
        g = Tensor(np.ones(3))
        b = Tensor(np.zeros(3))
        with pytest.raises(ShapeError, match="variance"):
            T.batch_norm2d(x, g, b, self._stats(3, np.float32), train=True)


class TestActivations:
    def test_leaky_relu_values(self):
        x = Tensor(np.array([[[[-1.0, 3.0]]]]), dtype=np.float64)
        y = T.leaky_relu(x, 0.2)
        np.testing.assert_allclose(y.data.ravel(), [-0.2, 3.0], rtol=1e-15)

    def test_tanh_zero(self):
        assert T.tanh(Tensor(np.zeros((1, 1, 1, 1)))).data.item() == 0.0

    def test_sigmoid_range(self, rng):
        y = T.sigmoid(Tensor(rng.standard_normal((2, 2, 3, 3))))
        assert y.data.min() > 0.0 and y.data.max() < 1.0

    @pytest.mark.parametrize("fn", [lambda x: T.leaky_relu(x, 0.2), T.tanh, T.sigmoid])
    def test_gradcheck(self, rng, fn):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)) + 0.05, requires_grad=True,
                   dtype=np.float64)

        def forward():
            return float(T.mean(T.square(fn(x))).data)

        T.backward(T.mean(T.square(fn(x))))
        coords = sample_coords(rng, x.data.size, 40)
        assert_grad_close(x.grad, forward, x.data, coords)

    def test_bad_slope(self):
        with pytest.raises(ShapeError):
            T.leaky_relu(Tensor(np.zeros((1, 1, 1, 1))), slope=1.5)


class TestConcatAdd:
    def test_concat_layout(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 3, 3)))
        b = Tensor(rng.standard_normal((1, 3, 3, 3)))
        y = T.concat_channels(a, b)
        assert y.data.shape == (1, 5, 3, 3)
        np.testing.assert_array_equal(y.data[:, :2], a.data)
        np.testing.assert_array_equal(y.data[:, 2:], b.data)

    def test_concat_grad_splits(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)
        T.backward(T.tensor_sum(T.concat_channels(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones_like(a.data))
        np.testing.assert_array_equal(b.grad, np.ones_like(b.data))

    def test_concat_spatial_mismatch(self):
        a = Tensor(np.zeros((1, 2, 3, 3)))
        b = Tensor(np.zeros((1, 2, 4, 3)))
        with pytest.raises(ShapeError):
            T.concat_channels(a, b)

    def test_add_zero_and_negation(self, rng):
        a = Tensor(rng.standard_normal((1, 2, 3, 3)))
        zero = Tensor(np.zeros_like(a.data))
        np.testing.assert_array_equal(T.add(a, zero).data, a.data)
        np.testing.assert_array_equal(T.add(a, T.scale(a, -1.0)).data,
                                      np.zeros_like(a.data))

    def test_add_grad_is_uniform(self, rng):
        a = Tensor(rng.standard_normal((2, 2, 2, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 2, 2, 2)), requires_grad=True)
        T.backward(T.mean(T.add(a, b)))
        np.testing.assert_allclose(a.grad, 1.0 / a.data.size, rtol=1e-6)
        np.testing.assert_allclose(b.grad, 1.0 / b.data.size, rtol=1e-6)

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 3))))


class TestResize:
    def test_same_size_identity(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 5, 7)))
        y = T.resize(x, 5, 7)
        np.testing.assert_array_equal(y.data, x.data)

    def test_constant_stays_constant(self):
        x = Tensor(np.full((1, 2, 4, 6), 0.37), dtype=np.float64)
        y = T.resize(x, 9, 13)
        np.testing.assert_allclose(y.data, 0.37, rtol=1e-12)

    def test_matches_reference_formula(self):
        img = np.array([[[0.0, 1.0], [2.0, 3.0]]])
        x = Tensor(img[None], dtype=np.float64)
        y = T.resize(x, 4, 4)
        expect = bilinear_reference(img, 4, 4)
        np.testing.assert_allclose(y.data[0], expect, rtol=1e-12)

    def test_downsample_matches_reference(self, rng):
        img = rng.standard_normal((3, 8, 6))
        y = T.resize(Tensor(img[None], dtype=np.float64), 4, 3)
        np.testing.assert_allclose(y.data[0], bilinear_reference(img, 4, 3), rtol=1e-12)

    def test_nearest_rejected_on_grad_path(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 4, 4)), requires_grad=True)
        with pytest.raises(GraphError, match="nearest"):
            T.resize(x, 2, 2, method="nearest")
        y = T.resize(Tensor(rng.standard_normal((1, 1, 4, 4))), 2, 2, method="nearest")
        assert y.data.shape == (1, 1, 2, 2)

    def test_gradcheck(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 4)), requires_grad=True, dtype=np.float64)
        t = Tensor(rng.standard_normal((1, 2, 8, 7)), dtype=np.float64)

        def loss():
            return T.mean(T.square(T.add(T.resize(x, 8, 7), t)))

        T.backward(loss())
        coords = sample_coords(rng, x.data.size, 30)
        assert_grad_close(x.grad, lambda: float(loss().data), x.data, coords)


class TestReduce:
    def test_l1_identical_is_zero(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        assert T.l1_distance(x, Tensor(x.data.copy())).data.item() == 0.0

    def test_mean_of_ones(self):
        assert T.mean(Tensor(np.ones((2, 3, 4, 4)))).data.item() == 1.0

    def test_sum(self):
        assert T.tensor_sum(Tensor(np.full((1, 1, 2, 2), 2.0))).data.item() == 8.0

    def test_l1_gradcheck_away_from_ties(self, rng):
        a_data = rng.standard_normal((2, 3, 4, 4))
        b_data = a_data + np.where(rng.standard_normal(a_data.shape) > 0, 1.0, -1.0)
        a = Tensor(a_data, requires_grad=True, dtype=np.float64)
        b = Tensor(b_data, requires_grad=True, dtype=np.float64)

        def forward():
            return float(T.l1_distance(a, b).data)

        T.backward(T.l1_distance(a, b))
        for t in (a, b):
            coords = sample_coords(rng, t.data.size, 30)
            assert_grad_close(t.grad, forward, t.data, coords)

    def test_l1_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.l1_distance(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 3))))
