import numpy as np
import pytest

from graspsight.imaging import (
    ImageF,
    InvalidInputError,
    PyramidParams,
    build_twin_pyramid,
    dog_contrast,
    downsample2,
    gaussian_blur,
    read_image,
    to_opponent,
    upsample_to,
    write_image,
)


def rand_rgb(rng, h=32, w=40):
    return ImageF(rng.uniform(0.0, 1.0, size=(3, h, w)).astype(np.float32))


class TestImageF:
    def test_2d_promoted_to_single_channel(self):
        img = ImageF(np.zeros((5, 7), dtype=np.float32))
        assert img.data.shape == (1, 5, 7)
        assert img.channels == 1 and img.height == 5 and img.width == 7

    def test_rejects_nan(self):
        bad = np.zeros((1, 4, 4))
        bad[0, 1, 1] = np.nan
        with pytest.raises(InvalidInputError):
            ImageF(bad)

    def test_rejects_wrong_ndim(self):
        with pytest.raises(InvalidInputError):
            ImageF(np.zeros(4))


class TestOpponent:
    def test_gray_pixel(self):
        img = ImageF(np.full((3, 1, 1), 0.5, dtype=np.float32))
        opp = to_opponent(img)
        assert opp.intensity.data[0, 0, 0] == pytest.approx(0.5)
        assert opp.rg.data[0, 0, 0] == pytest.approx(0.0)
        assert opp.by.data[0, 0, 0] == pytest.approx(0.0)

    def test_pure_red_pixel(self):
        img = ImageF(np.stack([np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1))]))
        opp = to_opponent(img)
        assert opp.intensity.data[0, 0, 0] == pytest.approx(1.0 / 3.0)
        assert opp.rg.data[0, 0, 0] == pytest.approx(1.0)
        assert opp.by.data[0, 0, 0] == pytest.approx(-0.5)

    def test_per_pixel_oracle(self):
        rng = np.random.default_rng(0)
        img = rand_rgb(rng)
        opp = to_opponent(img)
        r, g, b = (img.data[c].astype(np.float64) for c in range(3))
        assert np.allclose(opp.intensity.data[0], (r + g + b) / 3.0, atol=1e-6)
        assert np.allclose(opp.rg.data[0], r - g, atol=1e-6)
        assert np.allclose(opp.by.data[0], b - (r + g) / 2.0, atol=1e-6)

    def test_requires_three_channels(self):
        with pytest.raises(InvalidInputError):
            to_opponent(ImageF(np.zeros((2, 4, 4))))


class TestBlur:
    def test_preserves_constant(self):
        img = ImageF(np.full((1, 30, 30), 0.7, dtype=np.float32))
        out = gaussian_blur(img, 3.0)
        assert np.allclose(out.data, 0.7, atol=1e-6)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        a = ImageF(rng.uniform(size=(1, 20, 20)).astype(np.float32))
        b = ImageF(rng.uniform(size=(1, 20, 20)).astype(np.float32))
        lhs = gaussian_blur(ImageF(a.data + b.data), 2.0).data
        rhs = gaussian_blur(a, 2.0).data + gaussian_blur(b, 2.0).data
        assert np.allclose(lhs, rhs, atol=1e-5)

    def test_interior_impulse_is_symmetric_and_normalized(self):
        img = np.zeros((1, 41, 41), dtype=np.float32)
        img[0, 20, 20] = 1.0
        out = gaussian_blur(ImageF(img), 2.0).data[0].astype(np.float64)
        assert out.sum() == pytest.approx(1.0, abs=1e-5)
        assert np.allclose(out, out[::-1, :], atol=1e-7)
        assert np.allclose(out, out[:, ::-1], atol=1e-7)
        assert np.allclose(out, out.T, atol=1e-7)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(InvalidInputError):
            gaussian_blur(ImageF(np.zeros((1, 4, 4))), 0.0)


class TestDownsample:
    def test_box_mean_oracle(self):
        rng = np.random.default_rng(2)
        img = ImageF(rng.uniform(size=(2, 8, 10)).astype(np.float32))
        out = downsample2(img)
        assert out.data.shape == (2, 4, 5)
        for c in range(2):
            for i in range(4):
                for j in range(5):
                    block = img.data[c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                    assert out.data[c, i, j] == pytest.approx(block.mean(), abs=1e-6)

    def test_odd_trailing_dropped(self):
        img = ImageF(np.zeros((1, 9, 7), dtype=np.float32))
        out = downsample2(img)
        assert out.data.shape == (1, 4, 3)

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            downsample2(ImageF(np.zeros((1, 1, 4))))


class TestPyramid:
    def test_level_count_and_sizes(self):
        rng = np.random.default_rng(3)
        img = ImageF(rng.uniform(size=(1, 64, 64)).astype(np.float32))
        params = PyramidParams(octaves=3, scales_per_octave=2)
        pyr = build_twin_pyramid(img, params)
        assert len(pyr.center_levels) == 6
        assert len(pyr.surround_levels) == 6
        assert pyr.center_levels[0].data.shape == (1, 64, 64)
        assert pyr.center_levels[2].data.shape == (1, 32, 32)
        assert pyr.center_levels[4].data.shape == (1, 16, 16)

    def test_rejects_tiny_image(self):
        with pytest.raises(InvalidInputError):
            build_twin_pyramid(ImageF(np.zeros((1, 8, 8))), PyramidParams(octaves=4))

    def test_param_validation(self):
        with pytest.raises(InvalidInputError):
            PyramidParams(sigma_center=5.0, sigma_surround=2.0).validate()


class TestDogContrast:
    def test_trivial_values(self):
        on, off = dog_contrast(ImageF(np.full((1, 1, 1), 0.8)), ImageF(np.full((1, 1, 1), 0.3)))
        assert on.data[0, 0, 0] == pytest.approx(0.5)
        assert off.data[0, 0, 0] == pytest.approx(0.0)

    def test_disjoint_support_and_reconstruction(self):
        rng = np.random.default_rng(4)
        c = ImageF(rng.uniform(-1, 1, size=(1, 16, 16)).astype(np.float32))
        s = ImageF(rng.uniform(-1, 1, size=(1, 16, 16)).astype(np.float32))
        on, off = dog_contrast(c, s)
        assert np.all(on.data * off.data == 0.0)
        assert np.allclose(on.data - off.data, c.data - s.data, atol=1e-7)


class TestResize:
    def test_identity_when_same_size(self):
        rng = np.random.default_rng(5)
        img = ImageF(rng.uniform(size=(1, 12, 14)).astype(np.float32))
        out = upsample_to(img, 12, 14)
        assert np.allclose(out.data, img.data, atol=1e-7)

    def test_constant_preserved(self):
        img = ImageF(np.full((1, 8, 8), 0.25, dtype=np.float32))
        out = upsample_to(img, 32, 32)
        assert np.allclose(out.data, 0.25, atol=1e-6)


class TestIo:
    def test_roundtrip_rgb(self, tmp_path):
        rng = np.random.default_rng(6)
        img = ImageF((rng.integers(0, 256, size=(3, 10, 12)) / 255.0).astype(np.float32))
        path = tmp_path / "x.png"
        write_image(path, img)
        back = read_image(path)
        assert np.allclose(back.data, img.data, atol=1.0 / 255.0 / 2 + 1e-6)

    def test_roundtrip_gray(self, tmp_path):
        img = ImageF((np.arange(64).reshape(8, 8) / 63.0).astype(np.float32))
        path = tmp_path / "g.pgm"
        write_image(path, img)
        back = read_image(path)
        assert back.channels == 1
        assert np.allclose(back.data, img.data, atol=1.0 / 255.0 / 2 + 1e-6)

    def test_read_missing(self, tmp_path):
        with pytest.raises(InvalidInputError):
            read_image(tmp_path / "nope.png")
