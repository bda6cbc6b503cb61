"""Line-delimited JSON wire protocol for external segmenter processes.

Request, one line on the child's stdin::

    {"id": str, "width": int, "height": int, "image_path": str,
     "channels": {"pos": b64png, "neg": b64png, "prev": b64png},
     "mode": "filled" | "line", "interaction": int,
     "clicks": [[x, y, "positive" | "negative"], ...],   # optional
     "view": {"box": [x0, y0, x1, y1], "size": [w, h], "flipped": bool}}  # optional

Response, one line on its stdout: ``{"id": str, "mask": b64png}`` where the
mask is 8-bit grayscale holding ``round(p * 255)``, or ``{"id": str,
"error": str}``. Width and height describe the channel planes, which are
crop-sized when a view is present.
"""
from __future__ import annotations

import base64
import binascii
import json
import logging
import queue
import subprocess
import threading
from collections import deque
from typing import Optional, Sequence

import numpy as np

from .encoding import InteractionEncoding, encoding_from_pngs, encoding_to_pngs, png_bytes_to_prob, prob_to_png_bytes

log = logging.getLogger(__name__)


class SegmenterError(Exception):
    """A segmenter could not answer a query."""


class SegmenterTimeout(SegmenterError):
    pass


class MalformedResponse(SegmenterError):
    pass


class DimensionMismatch(SegmenterError):
    pass


class ChildExited(SegmenterError):
    pass


class RemoteError(SegmenterError):
    """The child answered with an explicit error message."""


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text, what: str) -> bytes:
    if not isinstance(text, str):
        raise MalformedResponse(f"{what} must be a base64 string")
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError):
        raise MalformedResponse(f"{what} is not valid base64") from None


def encode_request(req_id: str, encoding: InteractionEncoding, image_path: str = "",
                   interaction: int = 1, clicks: Optional[Sequence] = None,
                   view: Optional[dict] = None) -> str:
    msg = {"id": req_id, "width": encoding.width, "height": encoding.height,
           "image_path": str(image_path),
           "channels": {k: _b64(v) for k, v in encoding_to_pngs(encoding).items()},
           "mode": encoding.mode, "interaction": int(interaction)}
    if clicks is not None:
        msg["clicks"] = [[int(x), int(y), str(p)] for x, y, p in clicks]
    if view is not None:
        msg["view"] = view
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def decode_request(line: str) -> dict:
    """Parse a request line; ``encoding`` holds the decoded planes."""
    msg = json.loads(line)
    ch = msg["channels"]
    enc = encoding_from_pngs({k: _unb64(ch[k], k) for k in ("pos", "neg", "prev")}, msg.get("mode", "filled"))
    if enc.shape != (msg["height"], msg["width"]):
        raise DimensionMismatch(f"channels are {enc.width}x{enc.height}, header says {msg['width']}x{msg['height']}")
    out = dict(msg)
    out["encoding"] = enc
    del out["channels"]
    return out


def request_from_decoded(msg: dict) -> str:
    """Inverse of :func:`decode_request`."""
    return encode_request(msg["id"], msg["encoding"], msg["image_path"], msg.get("interaction", 1),
                          msg.get("clicks"), msg.get("view"))


def encode_response(req_id: str, prob) -> str:
    return json.dumps({"id": req_id, "mask": _b64(prob_to_png_bytes(prob))}, sort_keys=True, separators=(",", ":"))


def encode_error_response(req_id: str, message: str) -> str:
    return json.dumps({"id": req_id, "error": message}, sort_keys=True, separators=(",", ":"))


def decode_response(line: str, expected_id: Optional[str] = None,
                    shape: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Probability plane of a response line; raises the matching error variant."""
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise MalformedResponse(f"response is not JSON: {line[:80]!r}") from None
    if not isinstance(msg, dict) or "id" not in msg:
        raise MalformedResponse("response lacks an id")
    if expected_id is not None and msg["id"] != expected_id:
        raise MalformedResponse(f"response id {msg['id']!r} does not match request {expected_id!r}")
    if "error" in msg:
        raise RemoteError(str(msg["error"]))
    if "mask" not in msg:
        raise MalformedResponse("response has neither mask nor error")
    try:
        prob = png_bytes_to_prob(_unb64(msg["mask"], "mask"))
    except (OSError, ValueError) as exc:
        if isinstance(exc, SegmenterError):
            raise
        raise MalformedResponse(f"mask is not an 8-bit grayscale PNG ({exc})") from None
    if shape is not None and prob.shape != tuple(shape):
        raise DimensionMismatch(f"mask is {prob.shape[1]}x{prob.shape[0]}, expected {shape[1]}x{shape[0]}")
    return prob


class ChildProcess:
    """One segmenter child; one request in flight at a time.

    Any failure kills the child; the next request starts a fresh one.
    """

    def __init__(self, cmd: Sequence[str], timeout: float = 30.0):
        self.cmd = list(cmd)
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._lines: queue.Queue = queue.Queue()
        self._stderr: deque = deque(maxlen=20)
        self._counter = 0

    def _start(self) -> None:
        self._proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      stderr=subprocess.PIPE, text=True, bufsize=1)
        self._lines = queue.Queue()
        self._stderr = deque(maxlen=20)
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()
        self._drainer = threading.Thread(target=self._drain, args=(self._proc.stderr, self._stderr), daemon=True)
        self._drainer.start()

    @staticmethod
    def _pump(stream, lines: queue.Queue) -> None:
        try:
            for line in stream:
                lines.put(line)
        except (ValueError, OSError):
            pass  # stream closed under us
        lines.put(None)

    @staticmethod
    def _drain(stream, tail: deque) -> None:
        try:
            for line in stream:
                tail.append(line.rstrip("\n"))
        except (ValueError, OSError):
            pass

    def _exited(self) -> ChildExited:
        code = self._proc.wait(timeout=5) if self._proc is not None else None
        self._drainer.join(timeout=1.0)
        tail = " | ".join(self._stderr)
        self.close()
        return ChildExited(f"segmenter exited with code {code}" + (f": {tail}" if tail else ""))

    def next_id(self) -> str:
        self._counter += 1
        return f"q{self._counter}"

    def roundtrip(self, line: str) -> str:
        """Send one request line and return the response line."""
        if self._proc is None or self._proc.poll() is not None:
            self.close()
            self._start()
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise self._exited() from None
        try:
            reply = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise SegmenterTimeout(f"no response within {self.timeout:g} s") from None
        if reply is None:
            raise self._exited()
        return reply

    def request(self, encoding: InteractionEncoding, image_path: str = "", interaction: int = 1,
                clicks=None, view=None) -> np.ndarray:
        req_id = self.next_id()
        reply = self.roundtrip(encode_request(req_id, encoding, image_path, interaction, clicks, view))
        try:
            return decode_response(reply, req_id, encoding.shape)
        except (MalformedResponse, DimensionMismatch):
            # the stream may be out of step now
            self.close()
            raise

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        if proc.poll() is None:
            proc.kill()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            log.warning("segmenter child %s did not exit after kill", proc.pid)
        for stream in (proc.stdin, proc.stdout, proc.stderr):
            try:
                stream.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
