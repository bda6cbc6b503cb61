import base64
import json
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from contoursim import protocol as P
from contoursim.encoding import InteractionEncoding, prob_to_png_bytes


def child(mode="echo", channel="pos"):
    return [sys.executable, "-m", "contoursim.reference_child", "--mode", mode, "--channel", channel]


def random_encoding(rng, h=9, w=11, mode="filled"):
    return InteractionEncoding(rng.random((h, w)) < 0.4, rng.random((h, w)) < 0.2, rng.random((h, w)), mode)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32 - 1), st.sampled_from(["filled", "line"]),
       st.integers(1, 20), st.booleans(), st.booleans())
def test_request_roundtrip_is_identity(h, w, seed, mode, interaction, with_clicks, with_view):
    rng = np.random.default_rng(seed)
    enc = random_encoding(rng, h, w, mode)
    clicks = [[1, 2, "positive"], [0, 0, "negative"]] if with_clicks else None
    view = {"flipped": True, "box": [0, 0, 4, 4], "size": [w, h]} if with_view else None
    line = P.encode_request("r1", enc, "img.jpg", interaction, clicks, view)
    msg = P.decode_request(line)
    assert P.request_from_decoded(msg) == line
    assert msg["mode"] == mode and msg["interaction"] == interaction
    np.testing.assert_array_equal(msg["encoding"].positive, enc.positive)
    assert np.abs(msg["encoding"].previous - enc.previous).max() <= 1 / 510


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)), elements=st.floats(0, 1)))
def test_response_roundtrip(prob):
    line = P.encode_response("a", prob)
    back = P.decode_response(line, "a", prob.shape)
    assert np.abs(back - prob).max() <= 1 / 510 + 1e-12
    assert P.encode_response("a", back) == line


def test_request_header_mismatch():
    enc = random_encoding(np.random.default_rng(0))
    msg = json.loads(P.encode_request("r", enc))
    msg["width"] += 1
    with pytest.raises(P.DimensionMismatch):
        P.decode_request(json.dumps(msg))


@pytest.mark.parametrize("line, err", [
    ("not json", P.MalformedResponse),
    ("[1, 2]", P.MalformedResponse),
    ('{"id": "other", "mask": ""}', P.MalformedResponse),
    ('{"id": "a"}', P.MalformedResponse),
    ('{"id": "a", "mask": "%%%"}', P.MalformedResponse),
    ('{"id": "a", "mask": "' + base64.b64encode(b"not a png").decode() + '"}', P.MalformedResponse),
    ('{"id": "a", "error": "boom"}', P.RemoteError),
])
def test_decode_response_errors(line, err):
    with pytest.raises(err):
        P.decode_response(line, "a", (2, 2))


def test_decode_response_wrong_dims_and_color():
    with pytest.raises(P.DimensionMismatch):
        P.decode_response(P.encode_response("a", np.zeros((3, 2))), "a", (2, 2))
    from io import BytesIO

    from PIL import Image

    buf = BytesIO()
    Image.fromarray(np.zeros((2, 2, 3), np.uint8)).save(buf, format="PNG")
    line = json.dumps({"id": "a", "mask": base64.b64encode(buf.getvalue()).decode()})
    with pytest.raises(P.MalformedResponse):
        P.decode_response(line, "a", (2, 2))


def test_png_values_are_rounded_levels():
    prob = np.array([[0.0, 0.5, 1.0]])
    line = P.encode_response("a", prob)
    raw = base64.b64decode(json.loads(line)["mask"])
    assert raw == prob_to_png_bytes(prob)


@pytest.mark.parametrize("channel", ["pos", "neg", "prev"])
def test_echo_child(channel):
    rng = np.random.default_rng(1)
    with P.ChildProcess(child("echo", channel), timeout=20) as c:
        for _ in range(3):
            enc = random_encoding(rng)
            out = c.request(enc)
            ref = {"pos": enc.positive, "neg": enc.negative, "prev": enc.previous}[channel].astype(float)
            assert np.abs(out - ref).max() <= 1 / 510


def test_timeout_then_recovery():
    enc = random_encoding(np.random.default_rng(2))
    c = P.ChildProcess(child("hang"), timeout=1.0)
    with pytest.raises(P.SegmenterTimeout):
        c.request(enc)
    assert c._proc is None
    c.cmd = child("echo")
    assert c.request(enc).shape == enc.shape
    c.close()


@pytest.mark.parametrize("mode, err", [("garbage", P.MalformedResponse), ("wrong-dims", P.DimensionMismatch),
                                       ("error", P.RemoteError), ("crash", P.ChildExited)])
def test_misbehaving_children(mode, err):
    enc = random_encoding(np.random.default_rng(3))
    with P.ChildProcess(child(mode), timeout=20) as c:
        with pytest.raises(err) as exc:
            c.request(enc)
        if mode == "crash":
            assert "code 3" in str(exc.value) and "crashing on purpose" in str(exc.value)
        # a second request restarts or reuses the child and fails the same way
        with pytest.raises(err):
            c.request(enc)


def test_missing_executable():
    with pytest.raises(OSError):
        P.ChildProcess(["/nonexistent/segmenter"]).request(random_encoding(np.random.default_rng(0)))
