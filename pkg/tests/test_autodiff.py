"""Tape recording, backward accumulation, and finite-difference checks."""

import numpy as np
import pytest

from vsrlab import autodiff as ad
from vsrlab import tensor_ops as T


@pytest.fixture
def rng():
    return np.random.default_rng(3)


class TestRecord:
    def test_add_forward(self, rng):
        tape = ad.Tape()
        x = tape.leaf(rng.standard_normal((2, 3, 3)).astype(np.float32), "x")
        y = tape.leaf(rng.standard_normal((2, 3, 3)).astype(np.float32), "y")
        out = tape.record("add", [x, y])
        np.testing.assert_array_equal(out.value, x.value + y.value)

    def test_conv_forward_parity(self, rng):
        x = rng.standard_normal((2, 4, 4)).astype(np.float32)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        tape = ad.Tape()
        node = tape.record("conv2d", [tape.leaf(x, "x"), tape.leaf(k, "k")],
                           padding=1, pad_mode="zero", stride=1)
        np.testing.assert_array_equal(node.value, T.conv2d(x, k, padding=1))

    def test_tape_length_counts_leaves_and_records(self, rng):
        tape = ad.Tape()
        x = tape.leaf(np.ones(3, dtype=np.float32), "x")
        y = tape.leaf(np.ones(3, dtype=np.float32), "y")
        node = tape.record("add", [x, y])
        node = tape.record("mul", [node, x])
        tape.record("sum_all", [node])
        assert len(tape) == 3 + 2

    def test_unknown_primitive_error(self):
        tape = ad.Tape()
        with pytest.raises(ValueError, match="unknown primitive"):
            tape.record("frobnicate", [tape.leaf(np.ones(2), "x")])

    def test_cross_tape_rejected(self):
        t1, t2 = ad.Tape(), ad.Tape()
        a = t1.leaf(np.ones(2), "a")
        b = t2.leaf(np.ones(2), "b")
        with pytest.raises(ValueError, match="different tape"):
            t1.record("add", [a, b])


class TestBackward:
    def test_sum_gives_ones(self, rng):
        tape = ad.Tape()
        x = tape.leaf(rng.standard_normal((2, 3, 3)).astype(np.float32), "x")
        grads = ad.backward(ad.sum_all(x))
        np.testing.assert_array_equal(grads["x"], np.ones_like(x.value))

    def test_quadratic(self, rng):
        tape = ad.Tape()
        xv = rng.standard_normal((4, 2, 2)).astype(np.float32)
        x = tape.leaf(xv, "x")
        loss = ad.scale(ad.sum_all(ad.mul(x, x)), 0.5)
        grads = ad.backward(loss)
        np.testing.assert_allclose(grads["x"], xv, atol=1e-6)

    def test_unused_leaf_zero(self, rng):
        tape = ad.Tape()
        x = tape.leaf(rng.standard_normal(3).astype(np.float32), "x")
        unused = tape.leaf(rng.standard_normal(5).astype(np.float32), "unused")
        grads = ad.backward(ad.sum_all(x))
        np.testing.assert_array_equal(grads["unused"], np.zeros(5))

    def test_non_scalar_loss_rejected(self, rng):
        tape = ad.Tape()
        x = tape.leaf(rng.standard_normal((2, 2)).astype(np.float32), "x")
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(x)

    def test_conv_l1_matches_finite_differences(self, rng):
        x = rng.standard_normal((1, 4, 4))
        k = rng.standard_normal((2, 1, 3, 3))
        target = rng.standard_normal((2, 4, 4))

        def build(nodes):
            y = ad.conv2d(nodes["x"], nodes["k"], padding=1)
            return ad.mean_all(ad.absolute(ad.sub(y, target)))

        assert ad.grad_check(build, {"x": x, "k": k}) < 1e-3

    def test_accumulation_deterministic(self, rng):
        xv = rng.standard_normal((3, 4, 4)).astype(np.float32)

        def run():
            tape = ad.Tape()
            x = tape.leaf(xv, "x")
            a = ad.mul(x, x)
            b = ad.add(a, x)
            c = ad.add(a, b)  # diamond fan-in on a
            return ad.backward(ad.sum_all(c))["x"]

        np.testing.assert_array_equal(run(), run())


class TestGradCheck:
    def test_linear_near_machine_eps(self, rng):
        err = ad.grad_check(lambda n: ad.sum_all(ad.scale(n["x"], 3.0)),
                            {"x": rng.standard_normal((2, 3, 3))})
        assert err < 1e-6

    def test_softmax_composition(self, rng):
        def build(nodes):
            s = ad.softmax_over_axis(nodes["x"], 0)
            return ad.sum_all(ad.mul(s, s))

        assert ad.grad_check(build, {"x": rng.standard_normal((4, 3, 3))}) < 1e-3

    def test_warp_fixed_flow(self, rng):
        flow = rng.uniform(-1, 1, (2, 4, 4))

        def build(nodes):
            y = ad.backward_warp(nodes["x"], flow)
            return ad.mean_all(ad.mul(y, y))

        assert ad.grad_check(build, {"x": rng.standard_normal((2, 4, 4))}) < 1e-3

    def test_nonfinite_intermediate_names_op(self, rng):
        def build(nodes):
            big = ad.scale(nodes["x"], 1e300)
            return ad.sum_all(ad.mul(big, big))

        with pytest.raises(FloatingPointError):
            ad.grad_check(build, {"x": rng.standard_normal(3) + 10.0})


class TestDispatch:
    def test_plain_arrays_stay_plain(self, rng):
        x = rng.standard_normal((2, 3, 3)).astype(np.float32)
        out = ad.relu(x)
        assert isinstance(out, np.ndarray)
        np.testing.assert_array_equal(out, np.maximum(x, 0))

    def test_broadcast_bias_grad(self, rng):
        x = rng.standard_normal((3, 4, 4))
        b = rng.standard_normal((3, 1, 1))

        def build(nodes):
            return ad.sum_all(ad.mul(ad.add(nodes["x"], nodes["b"]),
                                     ad.add(nodes["x"], nodes["b"])))

        assert ad.grad_check(build, {"x": x, "b": b}) < 1e-3

    def test_concat_and_slice_grads(self, rng):
        a = rng.standard_normal((2, 3, 3))
        b = rng.standard_normal((3, 3, 3))

        def build(nodes):
            joined = ad.concat([nodes["a"], nodes["b"]])
            piece = ad.slice_channels(joined, 1, 4)
            return ad.sum_all(ad.mul(piece, piece))

        assert ad.grad_check(build, {"a": a, "b": b}) < 1e-3
