import numpy as np
import pytest

from glmeasure.synthetic import (
    RulerSpec,
    measurement_scene,
    midpoint_circle,
    ruler_raster,
    sample_labels,
    two_class_image,
)


def test_two_class_image_deterministic():
    a, ta = two_class_image(32, seed=5)
    b, tb = two_class_image(32, seed=5)
    np.testing.assert_array_equal(a.data, b.data)
    assert 0.1 < ta.bits.mean() < 0.5


def test_sample_labels_fraction_and_truth():
    _, truth = two_class_image(40, seed=0)
    lab = sample_labels(truth, 0.05, seed=0)
    idx = lab.labels != 0
    assert idx.sum() == 80
    np.testing.assert_array_equal(lab.labels[idx] > 0, truth.bits[idx])


def test_ruler_tick_positions():
    img, ticks = ruler_raster(spec=RulerSpec(spacing=10.0, n_ticks=5))
    np.testing.assert_allclose(np.diff(ticks), 10.0)
    assert img.shape == (400, 1000) and img.channels == 1


def test_midpoint_circle_radius():
    bits = midpoint_circle(41, 41, 20, 20, 10)
    r = np.hypot(*(np.argwhere(bits) - 20).T)
    assert np.all(np.abs(r - 10) < 1.0)


def test_scene_geometry_scales_with_resolution():
    s1 = measurement_scene(1.0)
    s2 = measurement_scene(2.0)
    assert s2.image.shape == (2 * s1.image.shape[0], 2 * s1.image.shape[1])
    a1 = s1.blaze.count() / s1.px_per_mm**2
    a2 = s2.blaze.count() / s2.px_per_mm**2
    assert a1 == pytest.approx(s1.blaze_area_mm2, rel=0.05)
    assert a2 == pytest.approx(s1.blaze_area_mm2, rel=0.02)
