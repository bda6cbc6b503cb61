import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from contoursim import dataset as D
from contoursim import raster as R
from contoursim.synthetic import CORRUPTIONS, inject_corruption

GOLDEN = Path(__file__).parent / "golden"

EXPECTED_EXIT = {"missing-mask": 2, "bad-name": 2, "out-of-range": 1,
                 "dim-mismatch": 2, "empty-mask": 2, "disjoint-contour": 2}


def test_fixture_loads_sorted(fixture_root):
    index = D.load_dataset(fixture_root)
    assert len(index) == 5
    keys = [r.key for r in index.records]
    assert keys == sorted(keys) == ["0000001_01", "0000001_02", "0000002_01", "0000003_01", "0000003_02"]
    assert set(index.images) == {"0000001", "0000002", "0000003"}
    assert all(r.mask_path.name == f"{r.key}.png" for r in index.records)
    assert index.records[1].neg_contours


def test_clean_fixture_validates(fixture_root):
    report = D.validate_root(fixture_root)
    assert report.exit_code == 0
    assert report.counts() == {"pass": 5, "warn": 0, "fail": 0}


def test_empty_annotations_warn(tmp_path, caplog):
    for d in ("images", "masks"):
        (tmp_path / d).mkdir()
    (tmp_path / "contours.json").write_text("{}")
    with caplog.at_level("WARNING"):
        index = D.load_dataset(tmp_path)
    assert len(index) == 0 and "no annotations" in caplog.text
    assert D.serialize_annotations(index) == b"{}"


def test_missing_mask_names_path(fixture_root):
    (fixture_root / "masks" / "0000001_02.png").unlink()
    with pytest.raises(D.MissingFileError) as exc:
        D.load_dataset(fixture_root)
    assert exc.value.entry.endswith("masks/0000001_02.png")


def test_bad_name_and_bad_json(fixture_root):
    shutil.copy(fixture_root / "masks" / "0000001_01.png", fixture_root / "masks" / "0000001_1.png")
    with pytest.raises(D.NameConventionError, match="0000001_1.png"):
        D.load_dataset(fixture_root)
    (fixture_root / "masks" / "0000001_1.png").unlink()
    (fixture_root / "contours.json").write_text("{not json")
    with pytest.raises(D.MalformedAnnotationError):
        D.load_dataset(fixture_root)


@pytest.mark.parametrize("payload, match", [
    ({"0000001": [{"pos_contours": [[[0.1, 0.1]]], "neg_contours": []}]}, "degenerate"),
    ({"0000001": [{"pos_contours": [[0.1, 0.1]], "neg_contours": []}]}, "pairs"),
    ({"0000001": [{"pos_contours": []}]}, "neg_contours"),
    ({"0000001": []}, "non-empty"),
    ([], "object"),
])
def test_malformed_annotations_name_entry(fixture_root, payload, match):
    (fixture_root / "contours.json").write_text(json.dumps(payload))
    with pytest.raises(D.MalformedAnnotationError, match=match):
        D.load_dataset(fixture_root)


def test_close_contour():
    p = [(0, 0), (1, 0), (0, 1)]
    c = D.close_contour(p)
    assert len(c) == 4 and tuple(c[-1]) == (0, 0)
    np.testing.assert_array_equal(D.close_contour(c), c)
    with pytest.raises(ValueError, match="degenerate contour"):
        D.close_contour([(0.5, 0.5)])
    with pytest.raises(ValueError, match="degenerate contour"):
        D.close_contour([(0.5, 0.5), (0.5, 0.5)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=10))
def test_close_contour_idempotent(points):
    assume(len(set(points)) >= 2)
    once = D.close_contour(points)
    np.testing.assert_array_equal(D.close_contour(once), once)
    assert tuple(once[0]) == tuple(once[-1])


def test_single_triangle_golden(tmp_path):
    tri = [[0.1, 0.2], [0.9, 0.2], [0.5, 0.875]]
    mask = R.rasterize_polygon(tri, 40, 40)
    D.write_dataset(tmp_path, {"img-a": np.zeros((40, 40, 3), np.uint8)}, {"img-a": [(mask, [tri], [])]})
    assert (tmp_path / "contours.json").read_bytes() == (GOLDEN / "triangle.json").read_bytes()


def _semantic(index):
    return [(r.key, [c.tolist() for c in r.pos_contours], [c.tolist() for c in r.neg_contours])
            for r in index.records]


def test_roundtrip_fixpoint(fixture_root):
    first = D.load_dataset(fixture_root)
    text = D.serialize_annotations(first)
    (fixture_root / "contours.json").write_bytes(text)
    second = D.load_dataset(fixture_root)
    assert D.serialize_annotations(second) == text
    for a, b in zip(first.records, second.records):
        assert a.key == b.key
        for ca, cb in zip(a.pos_contours + a.neg_contours, b.pos_contours + b.neg_contours):
            assert np.abs(ca - cb).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.tuples(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5)), min_size=2, max_size=6),
                min_size=1, max_size=3))
def test_serialize_parse_roundtrip(contours):
    rec = D.AnnotationRecord("x", "01", tuple(np.array(c) for c in contours), (), Path("x_01.png"))
    text = D.serialize_annotations(D.DatasetIndex(Path("."), (rec,)))
    data = json.loads(text)
    back = [np.array(c) for c in data["x"][0]["pos_contours"]]
    for a, b in zip(contours, back):
        assert np.abs(np.array(a) - b).max() <= 5e-7 + 1e-12


def test_validation_is_side_effect_free(fixture_root):
    index = D.load_dataset(fixture_root)
    before = _semantic(index)
    D.validate_dataset(index)
    assert _semantic(index) == before


@pytest.mark.parametrize("kind", CORRUPTIONS)
def test_corruptions_are_detected(fixture_root, kind):
    inject_corruption(fixture_root, kind)
    report = D.validate_root(fixture_root)
    assert report.exit_code == EXPECTED_EXIT[kind]
    findings = json.dumps(report.to_dict())
    marker = {"missing-mask": "0000001_02.png", "bad-name": "0000003_2.png", "out-of-range": "outside [0, 1]",
              "dim-mismatch": "100x80", "empty-mask": "mask is empty", "disjoint-contour": "IoU=0"}[kind]
    assert marker in findings


def test_unknown_corruption(fixture_root):
    with pytest.raises(ValueError):
        inject_corruption(fixture_root, "nope")
