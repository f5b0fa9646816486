"""Tensor primitive contracts against the loop oracles."""

import numpy as np
import pytest

from vsrlab import tensor_ops as T

import oracles


@pytest.fixture
def rng():
    return np.random.default_rng(42)


class TestConv2d:
    def test_mean_kernel_on_ones(self):
        x = np.ones((1, 3, 3), dtype=np.float32)
        k = np.full((1, 1, 3, 3), 1 / 9, dtype=np.float32)
        out = T.conv2d(x, k, padding=1)
        assert out.shape == (1, 3, 3)
        assert out[0, 1, 1] == pytest.approx(1.0, abs=1e-6)
        assert out[0, 0, 0] == pytest.approx(4 / 9, abs=1e-6)

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((2, 5, 5)).astype(np.float32)
        k = np.zeros((2, 2, 3, 3), dtype=np.float32)
        k[0, 0, 1, 1] = 1.0
        k[1, 1, 1, 1] = 1.0
        out = T.conv2d(x, k, padding=1)
        np.testing.assert_array_equal(out, x)

    def test_matches_loop_oracle(self, rng):
        x = rng.standard_normal((2, 5, 5)).astype(np.float32)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        for pad_mode in ("zero", "replicate"):
            for padding, stride in [(0, 1), (1, 1), (1, 2), (2, 1)]:
                got = T.conv2d(x, k, padding=padding, pad_mode=pad_mode,
                               stride=stride)
                want = oracles.conv2d_loops(x, k, padding, pad_mode, stride)
                assert got.shape == want.shape
                np.testing.assert_allclose(got, want, atol=1e-5)

    def test_output_size_formula(self, rng):
        x = rng.standard_normal((1, 9, 7)).astype(np.float32)
        k = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
        out = T.conv2d(x, k, padding=1, stride=2)
        assert out.shape == (2, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_shape_mismatch_error(self, rng):
        x = rng.standard_normal((2, 4, 4)).astype(np.float32)
        k = rng.standard_normal((1, 3, 3, 3)).astype(np.float32)
        with pytest.raises(ValueError, match=r"(2, 4, 4)"):
            T.conv2d(x, k)

    def test_nonfinite_rejected(self):
        x = np.full((1, 3, 3), np.inf, dtype=np.float32)
        k = np.ones((1, 1, 1, 1), dtype=np.float32)
        with pytest.raises(FloatingPointError, match="conv2d"):
            T.conv2d(x, k)


class TestFilter2d:
    def test_matches_depthwise_oracle(self, rng):
        x = rng.standard_normal((4, 8, 8)).astype(np.float32)
        k = rng.uniform(0, 1, (3, 3)).astype(np.float32)
        np.testing.assert_allclose(T.filter2d(x, k),
                                   oracles.filter2d_loops(x, k), atol=1e-5)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ValueError, match="odd"):
            T.filter2d(np.zeros((1, 4, 4), np.float32), np.ones((2, 2)))


class TestSoftmax:
    def test_uniform_logits(self):
        out = T.softmax_over_axis(np.zeros(3, dtype=np.float32), 0)
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-7)

    def test_large_logits_stable(self):
        out = T.softmax_over_axis(np.array([1000.0, 0.0], dtype=np.float32), 0)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-6)

    def test_matches_naive_oracle(self, rng):
        x = rng.standard_normal((5, 4, 4)).astype(np.float32)
        got = T.softmax_over_axis(x, 0)
        np.testing.assert_allclose(got, oracles.softmax_loops(x, 0), atol=1e-6)
        np.testing.assert_allclose(got.sum(axis=0), 1.0, atol=1e-6)

    def test_shift_invariance(self, rng):
        x = rng.standard_normal((4, 3, 3)).astype(np.float32)
        shifted = x + 7.5
        np.testing.assert_allclose(T.softmax_over_axis(x, 0),
                                   T.softmax_over_axis(shifted, 0), atol=1e-6)

    def test_empty_axis_error(self):
        with pytest.raises(ValueError, match="empty"):
            T.softmax_over_axis(np.zeros((0, 2), dtype=np.float32), 0)


class TestBilinearResize:
    def test_scale_one_identity(self, rng):
        x = rng.standard_normal((2, 4, 5)).astype(np.float32)
        np.testing.assert_array_equal(T.bilinear_resize(x, 1.0), x)

    def test_constant_preserved(self):
        x = np.full((1, 1, 1), 5.0, dtype=np.float32)
        out = T.bilinear_resize(x, 4.0)
        assert out.shape == (1, 4, 4)
        np.testing.assert_allclose(out, 5.0, atol=1e-6)

    def test_matches_closed_form(self):
        x = np.array([[[0.0, 1.0], [2.0, 3.0]]], dtype=np.float32)
        got = T.bilinear_resize(x, 2.0)
        want = oracles.resize_loops(x, 2.0)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_random_matches_oracle(self, rng):
        x = rng.standard_normal((2, 5, 4)).astype(np.float32)
        for scale in (0.5, 1.5, 3.0):
            np.testing.assert_allclose(T.bilinear_resize(x, scale),
                                       oracles.resize_loops(x, scale),
                                       atol=1e-5)

    def test_zero_output_error(self):
        with pytest.raises(ValueError, match="output"):
            T.bilinear_resize(np.zeros((1, 2, 2), np.float32), 0.2)


class TestPixelShuffle:
    def test_single_pixel_layout(self):
        x = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(4, 1, 1)
        out = T.pixel_shuffle(x, 2)
        np.testing.assert_array_equal(out,
                                      np.array([[[1.0, 2.0], [3.0, 4.0]]]))

    def test_roundtrip_identity(self, rng):
        x = rng.standard_normal((8, 3, 3)).astype(np.float32)
        np.testing.assert_array_equal(
            T.pixel_unshuffle(T.pixel_shuffle(x, 2), 2), x)

    def test_element_count_preserved(self, rng):
        x = rng.standard_normal((16, 5, 7)).astype(np.float32)
        out = T.pixel_shuffle(x, 2)
        assert out.shape == (4, 10, 14)
        assert out.size == x.size == 560

    def test_indivisible_channels_error(self):
        with pytest.raises(ValueError, match="divisible"):
            T.pixel_shuffle(np.zeros((3, 2, 2), np.float32), 2)


class TestBackwardWarp:
    def test_zero_flow_identity(self, rng):
        x = rng.standard_normal((3, 6, 6)).astype(np.float32)
        flow = np.zeros((2, 6, 6), dtype=np.float32)
        np.testing.assert_array_equal(T.backward_warp(x, flow), x)

    def test_integer_shift_with_edge(self):
        ramp = np.arange(5, dtype=np.float32)[None, None, :].repeat(4, axis=1)
        flow = np.zeros((2, 4, 5), dtype=np.float32)
        flow[0] = 1.0  # pull from one column to the right
        out = T.backward_warp(ramp, flow)
        np.testing.assert_array_equal(out[0, :, :-1], ramp[0, :, 1:])
        np.testing.assert_array_equal(out[0, :, -1], ramp[0, :, -1])

    def test_subpixel_matches_oracle(self, rng):
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        flow = rng.uniform(-1.5, 1.5, (2, 6, 6)).astype(np.float32)
        np.testing.assert_allclose(T.backward_warp(x, flow),
                                   oracles.warp_loops(x, flow), atol=1e-5)

    def test_flow_shape_error(self, rng):
        x = rng.standard_normal((2, 4, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="flow"):
            T.backward_warp(x, np.zeros((2, 3, 4), dtype=np.float32))


class TestConcatSlice:
    def test_order_and_values(self):
        a = np.zeros((1, 2, 2), dtype=np.float32)
        b = np.ones((1, 2, 2), dtype=np.float32)
        out = T.concat_channels(a, b)
        np.testing.assert_array_equal(out[0], 0.0)
        np.testing.assert_array_equal(out[1], 1.0)

    def test_empty_neutral(self, rng):
        x = rng.standard_normal((3, 2, 2)).astype(np.float32)
        empty = np.zeros((0, 2, 2), dtype=np.float32)
        np.testing.assert_array_equal(T.concat_channels(x, empty), x)

    def test_roundtrip_slicing(self, rng):
        a = rng.standard_normal((3, 4, 4)).astype(np.float32)
        b = rng.standard_normal((5, 4, 4)).astype(np.float32)
        out = T.concat_channels(a, b)
        assert out.shape == (8, 4, 4)
        np.testing.assert_array_equal(T.slice_channels(out, 0, 3), a)
        np.testing.assert_array_equal(T.slice_channels(out, 3, 8), b)

    def test_spatial_mismatch_error(self):
        with pytest.raises(ValueError, match="spatial"):
            T.concat_channels(np.zeros((1, 2, 2), np.float32),
                              np.zeros((1, 3, 2), np.float32))


def test_all_ops_finite_on_finite_inputs(rng):
    x = rng.standard_normal((4, 6, 6)).astype(np.float32)
    k = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)
    flow = rng.uniform(-2, 2, (2, 6, 6)).astype(np.float32)
    outs = [
        T.conv2d(x, k, padding=1),
        T.filter2d(x, np.full((3, 3), 1 / 9, np.float32)),
        T.softmax_over_axis(x, 0),
        T.bilinear_resize(x, 1.7),
        T.pixel_shuffle(x, 2),
        T.backward_warp(x, flow),
        T.concat_channels(x, x),
    ]
    for out in outs:
        assert np.isfinite(out).all()
