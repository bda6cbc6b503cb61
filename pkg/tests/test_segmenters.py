import sys

import numpy as np
import pytest

from contoursim.encoding import EncodingConfig, InteractionEncoding, encode_interaction
from contoursim.protocol import DimensionMismatch, SegmenterError, SegmenterTimeout
from contoursim.raster import iou
from contoursim.segmenters import (ExternalSegmenter, FilledBaselineSegmenter, OracleSegmenter, SegmenterAnswer,
                                   SegmenterQuery, check_answer, predict_filled_baseline, predict_oracle)
from contoursim.synthetic import square
from contoursim.views import View, ZoomInWindow


def query(pos, neg=None, prev=None, mode="filled", **kw):
    z = np.zeros(pos.shape, bool)
    enc = InteractionEncoding(pos, z if neg is None else neg, np.zeros(pos.shape) if prev is None else prev, mode)
    return SegmenterQuery("img", enc, **kw)


def test_oracle_returns_gt_through_view():
    gt = square(30, 40, 50)
    q = query(square(10))
    np.testing.assert_array_equal(predict_oracle(q, gt).probabilities, gt.astype(float))
    w = ZoomInWindow.around(square(40), 1.4)
    qv = SegmenterQuery("img", q.encoding.mapped(w.forward), view=View(w, flipped=True))
    np.testing.assert_array_equal(predict_oracle(qv, gt).probabilities, w.forward(gt)[:, ::-1])
    assert iou(predict_oracle(q, gt).probabilities >= 0.5, gt) == 1.0


def test_oracle_lookup_forms():
    gt = square(20)
    q = query(square(10), key="k")
    for lookup in ({"k": gt}, lambda key: gt):
        np.testing.assert_array_equal(OracleSegmenter(lookup).predict(q).probabilities, gt)


def test_baseline_examples():
    sq = square(40)
    np.testing.assert_array_equal(predict_filled_baseline(query(sq)).probabilities, sq)
    neg = np.zeros_like(sq)
    neg[:, 64:] = True
    out = predict_filled_baseline(query(sq, neg)).probabilities
    np.testing.assert_array_equal(out, sq & ~neg)
    prev = np.full(sq.shape, 0.3)
    out = predict_filled_baseline(query(np.zeros_like(sq), neg, prev)).probabilities
    assert out[0, 0] == 0.3 and out[0, 100] == 0.0
    with pytest.raises(SegmenterError, match="baseline requires filled encoding"):
        predict_filled_baseline(query(sq, mode="line"))


def test_baseline_passthrough_is_exact():
    gt = square(40)
    contour = square(44, 66, 62)
    enc = encode_interaction([contour], [])
    pred = FilledBaselineSegmenter().predict(SegmenterQuery("", enc)).probabilities >= 0.5
    assert iou(pred, gt) == iou(contour, gt)


def test_query_and_answer_validation():
    with pytest.raises(ValueError):
        query(square(10), interaction_index=0)
    with pytest.raises(ValueError):
        SegmenterAnswer(np.zeros(3))
    with pytest.raises(DimensionMismatch):
        check_answer(query(square(10)), SegmenterAnswer(np.zeros((3, 3))))


def test_external_pool_roundtrip():
    rng = np.random.default_rng(0)
    cmd = [sys.executable, "-m", "contoursim.reference_child"]
    with ExternalSegmenter(cmd, timeout=20, workers=2) as seg:
        for _ in range(4):
            pos = rng.random((12, 9)) < 0.5
            np.testing.assert_array_equal(seg.predict(query(pos)).probabilities, pos.astype(float))


def test_external_timeout_variant():
    cmd = [sys.executable, "-m", "contoursim.reference_child", "--mode", "hang"]
    with ExternalSegmenter(cmd, timeout=0.5) as seg:
        with pytest.raises(SegmenterTimeout):
            seg.predict(query(square(10)))


def test_line_encoding_is_not_filled():
    enc = encode_interaction([square(40)], [], config=EncodingConfig("line", 0.01))
    assert enc.mode == "line" and enc.positive.sum() < square(40).sum()
