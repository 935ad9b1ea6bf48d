"""Light-field container, PNG directory I/O, and channel stacking."""

import numpy as np
import pytest

from lfcodec import (
    DatasetLayout,
    DatasetError,
    LightField,
    ShapeError,
    center_view,
    load_light_field,
    save_light_field,
    stack_views,
    unstack_views,
)


class TestLightField:
    def test_rejects_non_square_views(self):
        with pytest.raises(ShapeError):
            LightField(np.zeros((3, 3, 4, 5, 3), dtype=np.float32))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            LightField(np.zeros((3, 3, 4, 4), dtype=np.float32))

    def test_coerces_to_float32(self):
        lf = LightField(np.zeros((1, 1, 2, 2, 3)))
        assert lf.views.dtype == np.float32


class TestDatasetIO:
    def test_roundtrip_through_png(self, tmp_path, random_field):
        lf = random_field(grid=3, size=16, seed=5)
        save_light_field(lf, tmp_path / "scene")
        layout = DatasetLayout(root=tmp_path, grid=3)
        loaded = load_light_field(layout, "scene")
        # 8-bit quantization: loaded values are the rounded originals.
        want = np.rint(lf.views * 255.0) / 255.0
        np.testing.assert_allclose(loaded.views, want.astype(np.float32), atol=1e-7)

    def test_extreme_pixel_values_map_exactly(self, tmp_path):
        views = np.zeros((1, 1, 8, 8, 3), dtype=np.float32)
        views[0, 0, :4] = 1.0
        save_light_field(LightField(views), tmp_path / "f")
        loaded = load_light_field(DatasetLayout(root=tmp_path, grid=1), "f")
        assert loaded.views.max() == 1.0
        assert loaded.views.min() == 0.0

    def test_missing_view_names_index(self, tmp_path, random_field):
        save_light_field(random_field(grid=3, size=8), tmp_path / "scene")
        (tmp_path / "scene" / "input_Cam004.png").unlink()
        with pytest.raises(DatasetError) as exc:
            load_light_field(DatasetLayout(root=tmp_path, grid=3), "scene")
        assert "4" in str(exc.value)

    def test_missing_view_40_of_9x9(self, tmp_path, random_field):
        save_light_field(random_field(grid=9, size=4), tmp_path / "scene")
        (tmp_path / "scene" / "input_Cam040.png").unlink()
        with pytest.raises(DatasetError) as exc:
            load_light_field(DatasetLayout(root=tmp_path, grid=9), "scene")
        assert "40" in str(exc.value)

    def test_mismatched_view_size_names_offender(self, tmp_path, random_field):
        from PIL import Image
        save_light_field(random_field(grid=3, size=8), tmp_path / "scene")
        Image.new("RGB", (6, 6)).save(tmp_path / "scene" / "input_Cam007.png")
        with pytest.raises(DatasetError) as exc:
            load_light_field(DatasetLayout(root=tmp_path, grid=3), "scene")
        assert "7" in str(exc.value)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError):
            load_light_field(DatasetLayout(root=tmp_path, grid=3), "nope")

    def test_ties_round_to_even(self, tmp_path):
        # 0.5/255 scales to exactly 0.5, which rounds down to 0 (even).
        views = np.full((1, 1, 8, 8, 3), 0.5 / 255.0, dtype=np.float64)
        save_light_field(LightField(views.astype(np.float32)), tmp_path / "f")
        loaded = load_light_field(DatasetLayout(root=tmp_path, grid=1), "f")
        assert np.all(loaded.views == 0.0)


class TestStacking:
    def test_channel_count_is_243_for_9x9(self, random_field):
        t = stack_views(random_field(grid=9, size=4))
        assert t.shape == (1, 243, 4, 4)

    def test_stack_unstack_roundtrip_bit_exact(self, random_field):
        lf = random_field(grid=3, size=8, seed=2)
        back = unstack_views(stack_views(lf))
        assert np.array_equal(back.views, lf.views)

    def test_unstack_stack_roundtrip_bit_exact(self):
        rng = np.random.default_rng(3)
        t = rng.random((1, 27, 4, 4)).astype(np.float32)
        assert np.array_equal(stack_views(unstack_views(t)), t)

    def test_center_view_occupies_channels_120_122(self, random_field):
        lf = random_field(grid=9, size=4, seed=7)
        t = stack_views(lf)
        np.testing.assert_array_equal(
            t[0, 120:123].transpose(1, 2, 0), lf.views[4, 4])

    def test_channel_formula(self, random_field):
        lf = random_field(grid=3, size=4, seed=8)
        t = stack_views(lf)
        for row in range(3):
            for col in range(3):
                for rgb in range(3):
                    ch = (row * 3 + col) * 3 + rgb
                    assert np.array_equal(t[0, ch], lf.views[row, col, :, :, rgb])

    def test_unstack_rejects_non_square_view_count(self):
        with pytest.raises(ShapeError):
            unstack_views(np.zeros((1, 24, 4, 4), dtype=np.float32))  # 8 views

    def test_unstack_rejects_non_multiple_of_three(self):
        with pytest.raises(ShapeError):
            unstack_views(np.zeros((1, 25, 4, 4), dtype=np.float32))


class TestCenterView:
    def test_9x9_center_is_4_4(self, random_field):
        lf = random_field(grid=9, size=4, seed=9)
        assert np.array_equal(center_view(lf), lf.views[4, 4])

    def test_3x3_center_is_1_1(self, random_field):
        lf = random_field(grid=3, size=4, seed=10)
        assert np.array_equal(center_view(lf), lf.views[1, 1])

    def test_even_grid_rejected(self, random_field):
        with pytest.raises(ShapeError):
            center_view(random_field(grid=2, size=4))

    def test_returns_copy(self, random_field):
        lf = random_field(grid=3, size=4)
        c = center_view(lf)
        c[:] = -1.0
        assert lf.views.min() >= 0.0
