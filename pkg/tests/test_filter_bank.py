"""Fixed kernel values, pool construction, and variant operator laws."""

import numpy as np
import pytest

from vsrlab import filter_bank as fb

import oracles

# published kernel tables (the 5x5 sharp base is stored after the row-5
# symmetrization and renormalization documented in the module)
BLUR_GAUSS_3 = np.array([[0.1108, 0.1113, 0.1108],
                         [0.1113, 0.1117, 0.1113],
                         [0.1108, 0.1113, 0.1108]])
SHARP_GAUSS_3 = np.array([[0.1096, 0.1118, 0.1096],
                          [0.1118, 0.1141, 0.1118],
                          [0.1096, 0.1118, 0.1096]])
SHARP_GAUSS_5_RAW = np.array([
    [0.0369, 0.0392, 0.0400, 0.0392, 0.0369],
    [0.0392, 0.0416, 0.0424, 0.0416, 0.0392],
    [0.0400, 0.0424, 0.0433, 0.0424, 0.0400],
    [0.0392, 0.0416, 0.0424, 0.0416, 0.0392],
    [0.0369, 0.0392, 0.0400, 0.0392, 0.0369],
])


@pytest.fixture
def bank():
    return fb.default_bank()


@pytest.fixture
def rng():
    return np.random.default_rng(11)


class TestDefaultBank:
    def test_size_and_modes(self, bank):
        assert len(bank) == 5
        assert bank.modes == ["blur", "blur", "blur", "sharp", "sharp"]

    def test_mean_kernels(self, bank):
        np.testing.assert_allclose(bank[0].base, 1 / 9, atol=1e-7)
        assert bank[0].base.shape == (3, 3)
        np.testing.assert_allclose(bank[1].base, 1 / 25, atol=1e-7)
        assert bank[1].base.shape == (5, 5)

    def test_gauss3_blur_sums_as_printed(self, bank):
        total = float(bank[2].base.astype(np.float64).sum())
        assert total == pytest.approx(1.0001, abs=1e-5)
        np.testing.assert_allclose(bank[2].base, BLUR_GAUSS_3, atol=1e-5)

    def test_sharp_gauss3_values(self, bank):
        np.testing.assert_allclose(bank[3].base, SHARP_GAUSS_3, atol=1e-5)

    def test_sharp_gauss5_corrected_and_normalized(self, bank):
        base = bank[4].base.astype(np.float64)
        assert base.shape == (5, 5)
        assert float(base.sum()) == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(base, SHARP_GAUSS_5_RAW / SHARP_GAUSS_5_RAW.sum(),
                                   atol=1e-6)
        # symmetric top/bottom after the documented fix
        np.testing.assert_allclose(base, base[::-1, :], atol=0)

    def test_every_normalized_kernel_unit_gain(self, bank):
        for k in bank:
            assert float(k.normalized.astype(np.float64).sum()) == \
                pytest.approx(1.0, abs=1e-6)

    def test_identity_opt_in(self):
        bank = fb.default_bank(include_identity=True)
        assert len(bank) == 6
        impulse = np.zeros((1, 3, 3), dtype=np.float32)
        impulse[0, 1, 1] = 1.0
        np.testing.assert_array_equal(fb.blur_variant(impulse, bank[5]), impulse)

    def test_bad_kernel_rejected(self):
        with pytest.raises(ValueError, match="unit DC gain"):
            fb.FilterKernel("bad", "blur", np.full((3, 3), 0.2, np.float32))
        with pytest.raises(ValueError, match="odd"):
            fb.FilterKernel("even", "blur", np.full((2, 2), 0.25, np.float32))


class TestVariants:
    def test_blur_constant_fixed_point(self, bank):
        h = np.full((2, 5, 5), 3.25, dtype=np.float32)
        for k in bank.of_mode("blur"):
            np.testing.assert_allclose(fb.blur_variant(h, k), h, atol=1e-6)

    def test_sharp_constant_fixed_point(self, bank):
        h = np.full((2, 5, 5), -1.5, dtype=np.float32)
        for k in bank.of_mode("sharp"):
            np.testing.assert_allclose(fb.sharp_variant(h, k), h, atol=1e-6)

    def test_blur_impulse_response(self, bank):
        impulse = np.zeros((1, 5, 5), dtype=np.float32)
        impulse[0, 2, 2] = 1.0
        out = fb.blur_variant(impulse, bank[0])
        np.testing.assert_allclose(out[0, 1:4, 1:4], 1 / 9, atol=1e-6)
        assert out[0, 0, 0] == 0.0

    def test_sharp_impulse_center(self, bank):
        impulse = np.zeros((1, 5, 5), dtype=np.float32)
        impulse[0, 2, 2] = 1.0
        out = fb.sharp_variant(impulse, bank[3])
        k = bank[3].normalized
        assert out[0, 2, 2] == pytest.approx(2.0 - k[1, 1], abs=1e-6)
        assert out[0, 2, 2] == pytest.approx(1.8859, abs=5e-4)
        assert out[0, 2, 1] < 0  # unsharp masking overshoots negative

    def test_blur_matches_loop_oracle(self, bank, rng):
        h = rng.standard_normal((4, 8, 8)).astype(np.float32)
        got = fb.blur_variant(h, bank[2])
        want = oracles.filter2d_loops(h, bank[2].normalized)
        np.testing.assert_allclose(got, want, atol=1e-5)

    def test_linearity(self, bank, rng):
        h1 = rng.standard_normal((2, 6, 6)).astype(np.float32)
        h2 = rng.standard_normal((2, 6, 6)).astype(np.float32)
        for k in bank:
            f = fb.blur_variant if k.mode == "blur" else fb.sharp_variant
            lhs = f(2.0 * h1 + 0.5 * h2, k)
            rhs = 2.0 * f(h1, k) + 0.5 * f(h2, k)
            np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_mode_mismatch_errors(self, bank, rng):
        h = rng.standard_normal((1, 4, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="blur kernel"):
            fb.blur_variant(h, bank[3])
        with pytest.raises(ValueError, match="sharp kernel"):
            fb.sharp_variant(h, bank[0])

    def test_sharp_after_blur_not_identity(self, bank):
        impulse = np.zeros((1, 7, 7), dtype=np.float32)
        impulse[0, 3, 3] = 1.0
        out = fb.sharp_variant(fb.blur_variant(impulse, bank[2]), bank[3])
        assert np.abs(out - impulse).max() > 1e-3


class TestBuildPool:
    def test_constant_pool_all_equal(self, bank):
        h = np.full((3, 4, 4), 0.7, dtype=np.float32)
        pool = fb.build_pool(h, bank)
        assert len(pool) == 5
        for entry in pool.entries:
            np.testing.assert_allclose(entry, h, atol=1e-6)

    def test_entry_count(self, bank, rng):
        pool = fb.build_pool(rng.standard_normal((2, 5, 5)).astype(np.float32),
                             bank)
        assert len(pool.entries) == len(bank)

    def test_matches_independent_variants(self, bank, rng):
        h = rng.standard_normal((2, 6, 6)).astype(np.float32)
        pool = fb.build_pool(h, bank)
        for entry, k in zip(pool.entries, bank):
            f = fb.blur_variant if k.mode == "blur" else fb.sharp_variant
            np.testing.assert_allclose(entry, f(h, k), atol=1e-6)

    def test_channel_permutation_equivariance(self, bank, rng):
        h = rng.standard_normal((4, 5, 5)).astype(np.float32)
        perm = [2, 0, 3, 1]
        pool_a = fb.build_pool(h, bank)
        pool_b = fb.build_pool(h[perm], bank)
        for a, b in zip(pool_a.entries, pool_b.entries):
            np.testing.assert_array_equal(a[perm], b)

    def test_empty_bank_error(self, rng):
        with pytest.raises(ValueError, match="empty"):
            fb.build_pool(np.zeros((1, 2, 2), np.float32),
                          fb.FilterBank(tuple()))

    def test_override_pool(self, bank, rng):
        h = rng.standard_normal((2, 5, 5)).astype(np.float32)
        pool = fb.build_override_pool(h, bank, "blur", 1)
        assert len(pool) == 5
        want = fb.blur_variant(h, bank[1])
        for entry in pool.entries:
            np.testing.assert_array_equal(entry, want)
        with pytest.raises(ValueError, match="out of range"):
            fb.build_override_pool(h, bank, "sharp", 2)
