"""Image/label file handling and input normalization."""

import numpy as np
import pytest
from PIL import Image

from unsupix import image_io as io


class TestLoadImage:
    def test_known_pixel_bytes(self, tmp_path):
        data = np.array(
            [[[0, 128, 255], [1, 2, 3]], [[10, 20, 30], [200, 100, 50]]], dtype=np.uint8
        )
        path = tmp_path / "px.png"
        Image.fromarray(data, "RGB").save(path)
        loaded = io.load_image(path)
        np.testing.assert_allclose(loaded, data / 255.0)

    def test_ppm_supported(self, tmp_path):
        data = np.array([[[255, 0, 0], [0, 255, 0]]], dtype=np.uint8)
        path = tmp_path / "px.ppm"
        Image.fromarray(data, "RGB").save(path)
        np.testing.assert_allclose(io.load_image(path), data / 255.0)

    def test_grayscale_promoted_to_rgb(self, tmp_path):
        data = np.array([[0, 100], [200, 255]], dtype=np.uint8)
        path = tmp_path / "gray.png"
        Image.fromarray(data, "L").save(path)
        loaded = io.load_image(path)
        assert loaded.shape == (2, 2, 3)
        for c in range(3):
            np.testing.assert_allclose(loaded[:, :, c], data / 255.0)

    def test_truncated_file_is_rejected_not_crash(self, tmp_path):
        data = np.zeros((16, 16, 3), dtype=np.uint8)
        path = tmp_path / "trunc.png"
        Image.fromarray(data, "RGB").save(path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(ValueError, match="cannot read"):
            io.load_image(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="cannot read"):
            io.load_image(tmp_path / "nope.png")

    def test_rgba_rejected_with_diagnostic(self, tmp_path):
        data = np.zeros((4, 4, 4), dtype=np.uint8)
        path = tmp_path / "rgba.png"
        Image.fromarray(data, "RGBA").save(path)
        with pytest.raises(ValueError, match="mode"):
            io.load_image(path)


class TestLabelMaps:
    def test_csv_parse(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,0\n1,1\n")
        np.testing.assert_array_equal(io.load_labelmap(path), [[0, 0], [1, 1]])

    def test_csv_large_label_accepted(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0,70000\n1,2\n")
        assert io.load_labelmap(path)[0, 1] == 70000

    def test_png16_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 65535, size=(17, 23))
        path = tmp_path / "labels.png"
        io.save_labelmap(path, labels)
        np.testing.assert_array_equal(io.load_labelmap(path), labels)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 200000, size=(9, 5))
        path = tmp_path / "labels.csv"
        io.save_labelmap(path, labels)
        np.testing.assert_array_equal(io.load_labelmap(path), labels)

    def test_png_overflow_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="16-bit"):
            io.save_labelmap(tmp_path / "big.png", np.array([[70000]]))

    def test_ragged_csv_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1\n2\n")
        with pytest.raises(ValueError, match="ragged"):
            io.load_labelmap(path)

    def test_non_integer_csv_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,x\n")
        with pytest.raises(ValueError, match="integers"):
            io.load_labelmap(path)

    def test_save_image_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.random((6, 7, 3))
        path = tmp_path / "img.png"
        io.save_image(path, img)
        loaded = io.load_image(path)
        np.testing.assert_allclose(loaded, img, atol=1 / 255 + 1e-9)


class TestNormalizeInputs:
    def test_three_point_coordinate_standardization(self):
        # a 1x3 row: x-coordinates {0,1,2} standardize to +-sqrt(3/2)
        image = np.random.default_rng(3).random((2, 3, 3))
        out = io.normalize_inputs(image)
        expected = np.sqrt(1.5)
        np.testing.assert_allclose(out.x_norm[0, :, 0], [-expected, 0.0, expected], atol=1e-6)

    def test_constant_channel_becomes_zero(self):
        image = np.full((4, 4, 3), 0.42)
        out = io.normalize_inputs(image)
        np.testing.assert_array_equal(out.i_norm, np.zeros((4, 4, 3)))

    def test_channel_statistics(self):
        image = np.random.default_rng(4).random((24, 17, 3))
        out = io.normalize_inputs(image)
        stacked = np.concatenate([out.i_norm, out.x_norm], axis=2)
        for c in range(5):
            assert abs(stacked[:, :, c].mean()) < 1e-5
            assert abs(stacked[:, :, c].std() - 1) < 1e-4

    def test_idempotent_up_to_tolerance(self):
        image = np.random.default_rng(5).random((12, 12, 3))
        once = io.normalize_inputs(image)
        # renormalizing an already-normalized channel barely moves it
        renorm = (once.i_norm - once.i_norm.mean(axis=(0, 1))) / once.i_norm.std(axis=(0, 1))
        np.testing.assert_allclose(renorm, once.i_norm, atol=1e-5)

    def test_coordinate_channel_order_is_column_then_row(self):
        image = np.random.default_rng(6).random((3, 5, 3))
        out = io.normalize_inputs(image)
        # channel 0 varies along columns only, channel 1 along rows only
        assert np.allclose(out.x_norm[0, :, 0], out.x_norm[2, :, 0])
        assert np.allclose(out.x_norm[:, 0, 1], out.x_norm[:, 4, 1])
        assert out.x_norm[0, 0, 0] < out.x_norm[0, 4, 0]
        assert out.x_norm[0, 0, 1] < out.x_norm[2, 0, 1]

    def test_denormalize_reconstruction(self):
        image = np.random.default_rng(7).random((8, 8, 3))
        out = io.normalize_inputs(image)
        np.testing.assert_allclose(out.denormalize_image(out.i_norm), image, atol=1e-6)

    def test_uint8_accepted(self):
        image = (np.random.default_rng(8).random((6, 6, 3)) * 255).astype(np.uint8)
        out = io.normalize_inputs(image)
        assert out.i_norm.shape == (6, 6, 3)
