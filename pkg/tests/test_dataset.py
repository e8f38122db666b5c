import json

import numpy as np
import pytest
import scipy.ndimage as ndi

from textcount.dataset import (DensityTarget, build_density_target,
                               load_descriptions, load_fsc147, scale_dots,
                               validate_dataset)
from textcount.errors import DatasetError, InputError

from conftest import build_dataset, random_image, seeded_rng, write_image


def _specs():
    return [
        {"filename": "a.png", "split": "train", "class_name": "apples",
         "description": "the red apples", "points": [[5, 5], [20, 30], [40, 10],
                                                     [12, 50], [33, 33], [8, 41], [55, 21]],
         "size": (64, 64)},
        {"filename": "b.png", "split": "train", "class_name": "pears",
         "description": "the green pears", "points": [[i * 7 + 3, 30] for i in range(8)],
         "size": (64, 64)},
        {"filename": "c.png", "split": "val", "class_name": "coins",
         "description": "the old coins", "points": [[i * 5 + 2, i * 5 + 2] for i in range(9)],
         "size": (64, 64)},
        {"filename": "d.png", "split": "test", "class_name": "stamps",
         "description": "the rare stamps", "points": [[10 + i, 20] for i in range(11)],
         "size": (64, 64)},
    ]


# -- loading -----------------------------------------------------------------

def test_load_clean_fixture(tmp_path):
    root, desc = build_dataset(tmp_path / "data", _specs())
    index = load_fsc147(root, desc)
    assert set(index.splits) == {"train", "val", "test"}
    assert len(index) == 4
    rec = index.splits["train"][0]
    assert rec.class_name == "apples"
    assert rec.description == "the red apples"
    assert rec.count == 7
    assert rec.load_image().shape == (64, 64, 3)


def test_missing_pieces_all_reported(tmp_path):
    specs = _specs()
    root, desc = build_dataset(tmp_path / "data", specs)
    # remove one image, one annotation, one class entry, one description
    (root / "images" / "a.png").unlink()
    ann = json.loads((root / "annotations.json").read_text())
    ann.pop("b.png")
    (root / "annotations.json").write_text(json.dumps(ann))
    classes = json.loads((root / "classes.json").read_text())
    classes.pop("c.png")
    (root / "classes.json").write_text(json.dumps(classes))
    desc_map = json.loads(desc.read_text())
    desc_map.pop("d.png")
    desc.write_text(json.dumps(desc_map))

    with pytest.raises(DatasetError) as err:
        load_fsc147(root, desc)
    text = str(err.value)
    assert "a.png" in text and "image file missing" in text
    assert "b.png" in text and "no dot annotation" in text
    assert "c.png" in text and "no class name" in text
    assert "d.png" in text and "no description" in text


def test_split_class_overlap_rejected(tmp_path):
    specs = _specs()
    specs[2]["class_name"] = "apples"      # val shares a train class
    root, desc = build_dataset(tmp_path / "data", specs)
    with pytest.raises(DatasetError, match="apples"):
        load_fsc147(root, desc)


def test_duplicate_description_keys_rejected(tmp_path):
    root, desc = build_dataset(tmp_path / "data", _specs())
    desc.write_text('{"a.png": "the red apples", "a.png": "the other apples"}')
    with pytest.raises(DatasetError, match="duplicate"):
        load_descriptions(desc)


def test_blank_description_rejected(tmp_path):
    desc = tmp_path / "d.json"
    desc.write_text(json.dumps({"a.png": "   "}))
    with pytest.raises(DatasetError, match="a.png"):
        load_descriptions(desc)


def test_wrapped_description_values_adapted(tmp_path):
    desc = tmp_path / "d.json"
    desc.write_text(json.dumps({"a.png": {"text": "the wrapped apples"}}))
    assert load_descriptions(desc) == {"a.png": "the wrapped apples"}


def test_wrapped_annotation_values_adapted(tmp_path):
    specs = _specs()
    root, desc = build_dataset(tmp_path / "data", specs)
    ann = json.loads((root / "annotations.json").read_text())
    wrapped = {name: {"points": pts, "box_examples": []} for name, pts in ann.items()}
    (root / "annotations.json").write_text(json.dumps(wrapped))
    index = load_fsc147(root, desc)
    assert index.splits["train"][0].count == 7


def test_tab_separated_class_file_adapted(tmp_path):
    root, desc = build_dataset(tmp_path / "data", _specs())
    classes = json.loads((root / "classes.json").read_text())
    txt = "\n".join(f"{name}\t{cls}" for name, cls in classes.items())
    (root / "classes.txt").write_text(txt)
    index = load_fsc147(root, desc, class_file="classes.txt")
    assert index.splits["val"][0].class_name == "coins"


# -- dot rescaling -----------------------------------------------------------

def test_scale_dots_identity():
    pts = np.array([[3.0, 4.0], [10.0, 20.0]])
    out = scale_dots(pts, (64, 64), (64, 64))
    np.testing.assert_array_equal(out, np.rint(pts))


def test_scale_dots_by_hand():
    # 100x50 -> 50x25 halves both coordinates
    out = scale_dots(np.array([[80.0, 40.0], [11.0, 9.0]]), (100, 50), (50, 25))
    np.testing.assert_array_equal(out, [[40.0, 20.0], [6.0, 4.0]])


def test_scale_dots_clamps_to_bounds():
    out = scale_dots(np.array([[99.9, 49.9]]), (100, 50), (10, 10))
    assert out[0, 0] <= 9 and out[0, 1] <= 9


def test_scale_dots_preserves_count():
    rng = seeded_rng(4)
    pts = rng.uniform(0, 100, (57, 2))
    assert len(scale_dots(pts, (100, 100), (37, 91))) == 57


def test_scale_dots_rejects_bad_sizes():
    with pytest.raises(InputError):
        scale_dots(np.zeros((1, 2)), (0, 10), (10, 10))


# -- density targets ---------------------------------------------------------

def test_interior_dot_matches_separable_gaussian_oracle():
    """A dot far from every border must reproduce the truncated, normalized
    Gaussian kernel exactly (independent oracle: scipy's filter applied to
    a unit impulse)."""
    dt = build_density_target(np.array([[24.0, 17.0]]), (48, 48), (48, 48),
                              sigma=1.0, radius=4)
    impulse = np.zeros((48, 48))
    impulse[17, 24] = 1.0
    oracle = ndi.gaussian_filter(impulse, sigma=1.0, radius=4, mode="constant")
    np.testing.assert_allclose(dt.data, oracle, atol=1e-12)


def test_border_dot_keeps_unit_mass():
    for x, y in [(0.0, 0.0), (47.0, 0.0), (1.0, 46.0), (47.0, 47.0), (2.0, 3.0)]:
        dt = build_density_target(np.array([[x, y]]), (48, 48), (48, 48))
        assert abs(dt.data.sum() - 1.0) < 1e-12, (x, y)


def test_density_sum_equals_count_with_rescaling():
    rng = seeded_rng(5)
    pts = rng.uniform(0, 512, (137, 2))
    dt = build_density_target(pts, (512, 512), (384, 384))
    assert isinstance(dt, DensityTarget)
    assert dt.count == 137
    assert abs(dt.data.sum() - 137) < 1e-9


def test_zero_dots_gives_zero_map():
    dt = build_density_target(np.zeros((0, 2)), (64, 64), (24, 24))
    assert dt.count == 0
    assert dt.data.shape == (24, 24)
    assert dt.data.sum() == 0.0


def test_out_of_bounds_dot_rejected():
    with pytest.raises(DatasetError, match="outside"):
        build_density_target(np.array([[64.0, 10.0]]), (64, 64), (24, 24))


def test_density_map_nonnegative_and_float64():
    dt = build_density_target(np.array([[5.0, 5.0]]), (64, 64), (24, 24))
    assert dt.data.dtype == np.float64
    assert dt.data.min() >= 0.0


# -- validation report -------------------------------------------------------

def test_validate_clean_dataset_ok(tmp_path):
    root, desc = build_dataset(tmp_path / "data", _specs())
    report = validate_dataset(load_fsc147(root, desc))
    assert report.ok
    assert report.split_stats["train"]["samples"] == 2
    assert report.split_stats["train"]["count_min"] == 7
    assert report.the_prefix_fraction == 1.0
    assert sum(report.description_word_hist.values()) == 4


def test_validate_flags_low_counts(tmp_path):
    specs = _specs()
    specs[0]["points"] = [[5, 5], [9, 9]]          # only 2 dots
    root, desc = build_dataset(tmp_path / "data", specs)
    report = validate_dataset(load_fsc147(root, desc))
    assert not report.ok
    assert any("below minimum" in v and "a.png" in v for v in report.violations)


def test_validate_flags_out_of_bounds_dots(tmp_path):
    specs = _specs()
    specs[1]["points"] = [[200.0, 10.0]] + specs[1]["points"]
    root, desc = build_dataset(tmp_path / "data", specs)
    report = validate_dataset(load_fsc147(root, desc))
    assert any("outside" in v and "b.png" in v for v in report.violations)


def test_validate_report_serializes(tmp_path):
    root, desc = build_dataset(tmp_path / "data", _specs())
    report = validate_dataset(load_fsc147(root, desc))
    blob = json.dumps(report.to_dict())
    assert json.loads(blob)["ok"] is True


def test_dataset_error_carries_violation_list(tmp_path):
    specs = _specs()
    specs[2]["class_name"] = "apples"
    specs[3]["class_name"] = "apples"
    root, desc = build_dataset(tmp_path / "data", specs)
    with pytest.raises(DatasetError) as err:
        load_fsc147(root, desc)
    assert len(err.value.violations) == 3      # all three split pairs share it
