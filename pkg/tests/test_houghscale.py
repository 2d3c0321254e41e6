import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glmeasure import houghscale as hs
from glmeasure.imagegrid import BinaryMask, ImageGrid
from glmeasure.synthetic import RulerSpec, midpoint_circle, ruler_raster


def blank(h=40, w=40):
    return np.zeros((h, w), dtype=bool)


def test_params_validation():
    for bad in ({"s_min": 10, "s_max": 5}, {"thresh": 0}, {"obj_max": 0}, {"rho_res": 0}, {"acc": -1}):
        with pytest.raises(ValueError):
            hs.HoughParams(**bad)


def test_tv_keeps_constants_and_reduces_noise():
    flat = ImageGrid(np.full((20, 20), 0.3))
    np.testing.assert_allclose(hs.tv_denoise(flat).data, 0.3)
    rng = np.random.default_rng(0)
    noisy = np.clip(0.5 + rng.normal(0, 0.1, (40, 40)), 0, 1)
    out = hs.tv_denoise(ImageGrid(noisy), lambda_tv=5.0).plane()
    assert out.std() < 0.5 * noisy.std()
    assert out.mean() == pytest.approx(noisy.mean(), abs=0.01)


def test_tv_large_lambda_is_nearly_identity():
    rng = np.random.default_rng(1)
    f = rng.uniform(0.2, 0.8, (16, 16))
    out = hs.tv_denoise(ImageGrid(f), lambda_tv=1e4).plane()
    assert np.max(np.abs(out - f)) < 1e-3


def test_canny_step_edge_is_one_pixel_wide():
    img = np.zeros((20, 30))
    img[:, 15:] = 1.0
    e = hs.canny_edges(ImageGrid(img)).bits
    cols = np.flatnonzero(e.any(axis=0))
    assert cols.size == 1 and cols[0] in (14, 15)
    assert e[:, cols[0]].all()


def test_canny_flat_and_bad_thresholds():
    assert hs.canny_edges(ImageGrid(np.full((10, 10), 0.5))).count() == 0
    with pytest.raises(ValueError):
        hs.canny_edges(ImageGrid(np.zeros((5, 5))), low=0.3, high=0.2)


def test_accumulator_conserves_votes():
    e = blank()
    e[5, 3] = e[20, 30] = True
    acc = hs.hough_line_accumulate(e)
    assert acc.votes.sum() == pytest.approx(2 * acc.thetas.size)
    with pytest.raises(hs.HoughError):
        hs.hough_line_accumulate(blank())


@pytest.mark.parametrize(
    "setter, rho, theta",
    [
        (lambda e: e.__setitem__((slice(None), 5), True), 5.0, 0.0),
        (lambda e: e.__setitem__((7, slice(None)), True), 7.0, np.pi / 2),
    ],
)
def test_axis_lines_peak_exactly(setter, rho, theta):
    e = blank()
    setter(e)
    line = hs.longest_line(e)
    assert line.rho == pytest.approx(rho, abs=1e-9)
    assert line.theta == pytest.approx(theta, abs=1e-9)


def test_diagonal_line():
    e = np.eye(40, dtype=bool)
    line = hs.longest_line(e)
    assert line.theta == pytest.approx(3 * np.pi / 4, abs=1e-9)
    assert line.rho == pytest.approx(0.0, abs=0.5)
    assert max(line.residual(x, x) for x in range(40)) < 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 57))
def test_vertical_line_translation(x):
    e = blank(40, 60)
    e[:, x] = True
    line = hs.longest_line(e)
    assert line.rho == pytest.approx(x, abs=1e-9)
    (x0, y0), (x1, y1) = line.endpoints
    assert abs(x0 - x) < 1e-9 and abs(x1 - x) < 1e-9
    assert abs(y1 - y0) == pytest.approx(39, abs=1)


def test_peaks_suppress_close_lines_and_keep_spaced_ones():
    e = blank(60, 120)
    for x in (20, 23, 50, 80):
        e[:, x] = True
    params = hs.HoughParams(s_min=7, s_max=40, obj_max=10)
    thetas = np.array([0.0])
    peaks = hs.find_line_peaks(hs.hough_line_accumulate(e, params, thetas), params)
    rhos = sorted(round(p.rho) for p in peaks)
    assert len(rhos) == 3
    assert rhos[1:] == [50, 80]


def test_chain_selection_drops_isolated_line():
    e = blank(60, 200)
    for x in (10, 24, 38, 52, 150):
        e[:, x] = True
    params = hs.HoughParams(s_min=7, s_max=28, obj_max=10)
    peaks = hs.find_line_peaks(hs.hough_line_accumulate(e, params, np.array([0.0])), params)
    assert sorted(round(p.rho) for p in peaks) == [10, 24, 38, 52]


def test_notches_on_clean_ruler():
    img, ticks = ruler_raster(spec=RulerSpec())
    edges = hs.edge_map(img)
    base = hs.longest_line(edges)
    notches = hs.detect_ruler_notches(edges, base.theta)
    sp = hs.notch_spacings(notches)
    assert len(notches) == 20
    np.testing.assert_allclose(sp, 14.0, atol=0.3)


def test_insufficient_notches():
    e = blank(60, 120)
    e[:, 30] = True
    with pytest.raises(hs.HoughError, match="insufficient notches"):
        hs.detect_ruler_notches(e, np.pi / 2)


def test_notch_spacings_handles_flipped_normals():
    a = hs.DetectedLine(10.0, 0.01, 1.0)
    b = hs.DetectedLine(24.0, 0.01, 1.0)
    c = hs.DetectedLine(-38.0, np.pi + 0.01, 1.0)  # same family, normal flipped
    np.testing.assert_allclose(hs.notch_spacings([a, b, c]), [14.0, 14.0], atol=1e-9)
    assert hs.notch_spacings([a]).size == 0


def test_midpoint_circle_detected():
    bits = midpoint_circle(60, 60, 30, 25, 12)
    found = hs.hough_circles(BinaryMask(bits), 5, 20, hs.HoughParams(obj_max=1))
    assert len(found) == 1
    c = found[0]
    assert abs(c.c1 - 30) < 1 and abs(c.c2 - 25) < 1 and abs(c.r - 12) < 0.5


def test_circle_input_validation():
    assert hs.hough_circles(BinaryMask(blank()), 3, 10) == []
    with pytest.raises(ValueError):
        hs.hough_circles(BinaryMask(blank()), 10, 3)
