import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glmeasure.imagegrid import BinaryMask, ImageGrid, LabelField, save_image, save_label_field
from glmeasure.measure import scale_prior_from_head
from glmeasure.pipeline import (
    ConfigError,
    Dictionary,
    PipelineConfig,
    PipelineError,
    _downscale_labels,
    crop_box,
    detect_scale,
    dump_config,
    largest_component,
    load_config,
    load_dictionary,
    parse_config,
    refine,
    run_full,
    semi_supervised_segment,
)
from glmeasure.synthetic import circles_raster, ruler_raster, two_class_image


def test_parse_config_types_and_comments():
    cfg = parse_config("# header\nsigma2 = 2.5\nseed=7  # trailing\n\nsolver = mbo\nmode = gray\n")
    assert cfg.sigma2 == 2.5 and cfg.seed == 7 and cfg.solver == "mbo" and cfg.mode == "gray"


@pytest.mark.parametrize(
    "text, msg",
    [
        ("nonsense = 1", "unknown key"),
        ("sigma2 = abc", "bad value"),
        ("sigma2", "key=value"),
        ("sigma2 = -1", "sigma2"),
        ("solver = newton", "solver"),
        ("canny_low = 0.5\ncanny_high = 0.2", "canny"),
    ],
)
def test_parse_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.txt")


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.01, 100),
    st.integers(0, 2**31),
    st.sampled_from(["gl", "mbo"]),
    st.sampled_from(["gray", "rgb", "texture", "rgb+texture"]),
    st.integers(1, 20),
)
def test_config_dump_parse_roundtrip(sigma2, seed, solver, mode, f):
    cfg = PipelineConfig(sigma2=sigma2, seed=seed, solver=solver, mode=mode, downscale_factor=f)
    assert parse_config(dump_config(cfg)) == cfg


def test_override_ignores_none_and_rejects_unknown():
    cfg = PipelineConfig()
    assert cfg.override(seed=None) == cfg
    assert cfg.override(seed=3).seed == 3
    with pytest.raises(ConfigError):
        cfg.override(bogus=1)


def test_solver_params_auto_convexity():
    assert PipelineConfig(epsilon=0.5).solver_params().convexity == pytest.approx(7.0)
    assert PipelineConfig(C=40).solver_params().convexity == 40


def _write_entry(d, name, img, labels):
    save_image(img, d / f"{name}.png")
    save_label_field(labels, d / f"{name}.labels.pgm")


def test_load_dictionary_pairs_and_sorts(tmp_path):
    img = ImageGrid(np.zeros((4, 4, 3)))
    lab = LabelField(np.array([[1, 0, 0, -1]] * 4))
    _write_entry(tmp_path, "b", img, lab)
    _write_entry(tmp_path, "a", ImageGrid(np.ones((4, 4, 3))), lab)
    save_image(img, tmp_path / "unpaired.png")
    d = load_dictionary(tmp_path)
    assert len(d.entries) == 2
    assert d.entries[0][0].data.max() == 1.0  # "a" first
    with pytest.raises(FileNotFoundError):
        load_dictionary(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(FileNotFoundError):
        load_dictionary(empty)


def test_dictionary_validation():
    img = ImageGrid(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Dictionary(())
    with pytest.raises(ValueError, match="both"):
        Dictionary(((img, LabelField(np.ones((4, 4)))),))
    with pytest.raises(ValueError, match="size"):
        Dictionary(((img, LabelField(np.ones((3, 4)))),))


def test_downscale_labels_by_block_sign():
    lab = LabelField(np.array([[1, 1, -1, 0], [1, -1, -1, 0], [0, 0, 0, 0]]))
    np.testing.assert_array_equal(_downscale_labels(lab, 2).labels, [[1, -1], [0, 0]])


def test_refine_and_components():
    bits = np.zeros((20, 20), dtype=bool)
    bits[1:11, 1:11] = True  # 100 px
    bits[15, 15] = True  # 1 px
    bits[15:18, 1:4] = True  # 9 px
    m = BinaryMask(bits)
    assert refine(m, 0.05).count() == 109
    assert refine(m, 0.10).count() == 100
    assert refine(m, 0.0).count() == 110
    assert refine(m, keep=[3]).count() == 1
    with pytest.raises(ValueError):
        refine(m, keep=[9])
    with pytest.raises(ValueError):
        refine(BinaryMask(np.zeros((3, 3))))
    assert largest_component(m).count() == 100


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))), st.floats(0, 1))
def test_refine_idempotent(bits, fraction):
    assume(bits.any())
    once = refine(BinaryMask(bits), fraction)
    np.testing.assert_array_equal(refine(once, fraction).bits, once.bits)
    assert not np.any(once.bits & ~bits)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(1, 10), st.integers(1, 10), st.floats(0, 0.5))
def test_crop_box_contains_mask(t, l, h, w, margin):
    bits = np.zeros((45, 45), dtype=bool)
    bits[t:t + h, l:l + w] = True
    top, left, bottom, right = crop_box(BinaryMask(bits), margin)
    assert top <= t and left <= l and bottom >= min(45, t + h) and right >= min(45, l + w)
    assert 0 <= top and 0 <= left and bottom <= 45 and right <= 45


def test_segment_two_class_from_dictionary():
    dimg, dtruth = two_class_image(40, seed=1)
    dlab = LabelField(np.where(dtruth.bits, 1, -1))
    target, truth = two_class_image(40, seed=2)
    cfg = PipelineConfig(sigma2=1.0, epsilon=1.0, max_landmarks=200)
    seg = semi_supervised_segment(target, Dictionary(((dimg, dlab),)), cfg)
    assert np.mean(seg.mask.bits == truth.bits) > 0.97
    assert seg.n_landmarks == 160  # 5% of 3200 joint vertices
    mbo = semi_supervised_segment(target, Dictionary(((dimg, dlab),)), cfg.override(solver="mbo"))
    assert np.mean(mbo.mask.bits == truth.bits) > 0.95


def test_segment_mode_mismatch():
    dimg = ImageGrid(np.zeros((24, 24)))
    dlab = LabelField(np.where(np.arange(24)[None, :] < 12, 1, -1).repeat(24, 0))
    target = ImageGrid(np.zeros((24, 24, 3)))
    with pytest.raises(ValueError, match="mismatch"):
        semi_supervised_segment(target, Dictionary(((dimg, dlab),)), PipelineConfig(mode="rgb"))


def test_detect_scale_linear():
    img, _ = ruler_raster()
    det = detect_scale(img, "linear", scale_prior_from_head(14.0 * 15.1), PipelineConfig())
    assert det.scale.px_per_mm == pytest.approx(14.0, abs=0.5)
    assert det.scale.source == "linear_ruler"
    assert len(det.lines) == 21  # ruler edge + 20 notches


def test_detect_scale_circular():
    img = circles_raster(radii=(30.0, 90.0))  # 10 mm and 30 mm diameters at 6 px/mm
    det = detect_scale(img, "circular", scale_prior_from_head(6.0 * 15.1), PipelineConfig())
    assert det.scale.px_per_mm == pytest.approx(6.0, rel=0.02)
    assert len(det.circles) == 2


def test_detect_scale_without_ruler():
    img = ImageGrid(np.full((50, 50), 0.5))
    from glmeasure.houghscale import HoughError

    with pytest.raises(HoughError, match="ruler absent"):
        detect_scale(img, "linear", scale_prior_from_head(100.0), PipelineConfig())


def test_run_full_on_scene(scene_bundle):
    image, head_dir, blaze_dir, cfg_path, scene = scene_bundle
    out = run_full(image, head_dir, blaze_dir, load_config(cfg_path))
    rep = out.report
    assert rep.scale.px_per_mm == pytest.approx(scene.px_per_mm, rel=0.02)
    assert rep.area_mm2 == pytest.approx(scene.blaze_area_mm2, rel=0.05)
    assert np.sum(out.blaze_mask.bits != scene.blaze.bits) < 0.05 * scene.blaze.count()
    meta = rep.to_dict()["metadata"]
    assert meta["seed"] == 0 and meta["parameters"]["sigma2"] == 1.0
    assert dataclasses.asdict(load_config(cfg_path)) == meta["parameters"]


def test_run_full_wraps_stage_errors(scene_bundle, tmp_path):
    image, head_dir, _, cfg_path, _ = scene_bundle
    with pytest.raises(PipelineError, match=r"^\[load\]"):
        run_full(image, head_dir, tmp_path / "missing", load_config(cfg_path))
    with pytest.raises(PipelineError, match=r"^\[scale\]"):
        run_full(image, head_dir, head_dir, load_config(cfg_path).override(ruler_type="circular"))
