import numpy as np
import numpy.testing as npt
import pytest

from unetsr.errors import ConfigError
from unetsr.gradcheck import finite_diff_check
from unetsr.losses import LossConfig, mge, mixge, mse, sobel_maps
from unetsr.tensor import Tensor

SOBEL_ROW_MASK = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=float)
SOBEL_COL_MASK = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)


def sobel_oracle(plane: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """True convolution of a 2-d plane with a 3x3 mask, edge-clamped."""
    h, w = plane.shape
    out = np.zeros_like(plane)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for u in (-1, 0, 1):
                for v in (-1, 0, 1):
                    ii = min(max(i - u, 0), h - 1)
                    jj = min(max(j - v, 0), w - 1)
                    acc += mask[1 + u, 1 + v] * plane[ii, jj]
            out[i, j] = acc
    return out


class TestMse:
    def test_identical_is_zero(self, rng):
        x = Tensor(rng.uniform(0, 1, (1, 3, 4, 4)))
        assert mse(x, x).item() == 0.0

    def test_unit_offset(self):
        assert mse(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.zeros((1, 3, 4, 4)))).item() == 1.0

    def test_matches_scalar_loop(self, rng):
        a = rng.uniform(0, 1, (1, 2, 3, 5))
        b = rng.uniform(0, 1, (1, 2, 3, 5))
        acc = 0.0
        for idx in np.ndindex(a.shape):
            acc += (a[idx] - b[idx]) ** 2
        npt.assert_allclose(mse(Tensor(a), Tensor(b)).item(), acc / a.size, atol=1e-12, rtol=0)


class TestSobel:
    def test_constant_field_is_flat(self):
        eps = 1e-12
        maps = sobel_maps(Tensor(np.full((1, 3, 5, 5), 0.42)), eps)
        npt.assert_array_equal(maps.gx.data, 0.0)
        npt.assert_array_equal(maps.gy.data, 0.0)
        npt.assert_allclose(maps.magnitude.data, np.sqrt(eps), rtol=0, atol=0)

    def test_horizontal_ramp_interior_response(self):
        h = w = 7
        ramp = np.tile(np.arange(w, dtype=float), (h, 1))[None, None]
        maps = sobel_maps(Tensor(ramp))
        interior = (slice(None), slice(None), slice(1, -1), slice(1, -1))
        # one direction is blind to a column ramp, the other sees step 1
        # weighted by 1+2+1 on each side of the center
        npt.assert_allclose(maps.gx.data[interior], 0.0, atol=1e-12)
        npt.assert_allclose(np.abs(maps.gy.data[interior]), 8.0, atol=1e-12)

    def test_single_white_pixel_matches_loop_oracle(self):
        plane = np.zeros((5, 5))
        plane[2, 2] = 1.0
        maps = sobel_maps(Tensor(plane[None, None]))
        gx_expected = sobel_oracle(plane, SOBEL_ROW_MASK)
        gy_expected = sobel_oracle(plane, SOBEL_COL_MASK)
        npt.assert_allclose(maps.gx.data[0, 0], gx_expected, atol=1e-12)
        npt.assert_allclose(maps.gy.data[0, 0], gy_expected, atol=1e-12)

    def test_random_image_matches_loop_oracle(self, rng):
        plane = rng.uniform(0, 1, (6, 6))
        maps = sobel_maps(Tensor(plane[None, None]), eps=0.0)
        gx_expected = sobel_oracle(plane, SOBEL_ROW_MASK)
        gy_expected = sobel_oracle(plane, SOBEL_COL_MASK)
        npt.assert_allclose(maps.gx.data[0, 0], gx_expected, atol=1e-12)
        npt.assert_allclose(maps.gy.data[0, 0], gy_expected, atol=1e-12)
        npt.assert_allclose(maps.magnitude.data[0, 0],
                            np.sqrt(gx_expected ** 2 + gy_expected ** 2), atol=1e-12)


class TestMge:
    def test_identical_is_zero(self, rng):
        x = Tensor(rng.uniform(0, 1, (1, 3, 5, 5)))
        assert mge(x, x).item() == 0.0

    def test_blind_to_dc_levels(self):
        a = Tensor(np.full((1, 1, 4, 4), 0.2))
        b = Tensor(np.full((1, 1, 4, 4), 0.9))
        assert mge(a, b).item() == 0.0

    def test_matches_composed_loop_oracles(self, rng):
        a = rng.uniform(0, 1, (6, 6))
        b = rng.uniform(0, 1, (6, 6))
        got = mge(Tensor(a[None, None]), Tensor(b[None, None]), eps=0.0).item()
        mag = lambda p: np.sqrt(sobel_oracle(p, SOBEL_ROW_MASK) ** 2
                                + sobel_oracle(p, SOBEL_COL_MASK) ** 2)
        expected = float(np.mean((mag(b) - mag(a)) ** 2))
        npt.assert_allclose(got, expected, atol=1e-12, rtol=0)

    def test_symmetric_in_arguments(self, rng):
        a = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        b = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        assert mge(a, b).item() == mge(b, a).item()

    def test_global_constant_shift_invariant(self, rng):
        a = rng.uniform(0, 1, (1, 3, 6, 6))
        b = rng.uniform(0, 1, (1, 3, 6, 6))
        base = mge(Tensor(a), Tensor(b)).item()
        shifted = mge(Tensor(a + 0.37), Tensor(b + 0.37)).item()
        npt.assert_allclose(shifted, base, atol=1e-12, rtol=0)


class TestMixge:
    def test_zero_weight_is_mse_bitwise(self, rng):
        a = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        b = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        cfg = LossConfig(kind="mixge", lambda_g=0.0)
        assert mixge(a, b, cfg).item() == mse(a, b).item()

    def test_default_weight(self):
        assert LossConfig().lambda_g == 0.1

    def test_linearity_identity(self, rng):
        a = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        b = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        one = mixge(a, b, LossConfig(lambda_g=1.0)).item()
        zero = mixge(a, b, LossConfig(lambda_g=0.0)).item()
        npt.assert_allclose(one - zero, mge(a, b).item(), atol=1e-12, rtol=0)

    def test_ordering_invariants(self, rng):
        a = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        b = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
        m = mse(a, b).item()
        g = mge(a, b).item()
        x = mixge(a, b, LossConfig(lambda_g=0.25)).item()
        assert m >= 0 and g >= 0
        assert x >= m

    def test_gradient_matches_finite_differences(self, rng):
        target = Tensor(rng.uniform(0, 1, (1, 3, 8, 8)))
        cfg = LossConfig(kind="mixge", lambda_g=0.1)
        report = finite_diff_check(lambda t: mixge(t, target, cfg),
                                   Tensor(rng.uniform(0, 1, (1, 3, 8, 8))),
                                   step=1e-5, tolerance=1e-4)
        assert report.passed, str(report)

    def test_gradient_near_flat_regions(self, rng):
        # half the image is perfectly flat: magnitudes sit at sqrt(eps)
        base = np.full((1, 3, 8, 8), 0.5)
        base[:, :, :, 4:] = rng.uniform(0, 1, (1, 3, 8, 4))
        target = Tensor(np.full((1, 3, 8, 8), 0.5))
        cfg = LossConfig(kind="mixge", lambda_g=0.1)
        report = finite_diff_check(lambda t: mixge(t, target, cfg), Tensor(base),
                                   step=1e-5, tolerance=1e-4)
        assert report.passed, str(report)


class TestLossConfig:
    def test_rejects_bad_kind(self):
        with pytest.raises(ConfigError):
            LossConfig(kind="l1")

    def test_rejects_negative_lambda(self):
        with pytest.raises(ConfigError):
            LossConfig(lambda_g=-0.5)

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ConfigError):
            LossConfig(sqrt_epsilon=0.0)

    def test_rejects_other_padding(self):
        with pytest.raises(ConfigError):
            LossConfig(sobel_pad="zero")
