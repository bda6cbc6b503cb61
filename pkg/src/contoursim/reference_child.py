"""Minimal segmenter child speaking the wire protocol, for tests and demos.

    python -m contoursim.reference_child --mode echo --channel pos

Modes: ``echo`` answers with one request channel, ``empty`` with an
all-zero mask; ``hang``, ``garbage``, ``wrong-dims``, ``error`` and
``crash`` misbehave on purpose.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .protocol import decode_request, encode_error_response, encode_response

MODES = ("echo", "empty", "hang", "garbage", "wrong-dims", "error", "crash")


def answer(msg: dict, mode: str, channel: str) -> str:
    enc = msg["encoding"]
    if mode == "empty":
        return encode_response(msg["id"], np.zeros(enc.shape))
    if mode == "wrong-dims":
        return encode_response(msg["id"], np.zeros((enc.height + 1, enc.width)))
    if mode == "error":
        return encode_error_response(msg["id"], "refused")
    plane = {"pos": enc.positive, "neg": enc.negative, "prev": enc.previous}[channel]
    return encode_response(msg["id"], plane.astype(np.float64))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="reference_child", description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=MODES, default="echo")
    ap.add_argument("--channel", choices=("pos", "neg", "prev"), default="pos")
    args = ap.parse_args(argv)
    for line in sys.stdin:
        if not line.strip():
            continue
        if args.mode == "crash":
            print("reference child: crashing on purpose", file=sys.stderr, flush=True)
            return 3
        if args.mode == "hang":
            time.sleep(3600)
        if args.mode == "garbage":
            sys.stdout.write("this is not json\n")
        else:
            sys.stdout.write(answer(decode_request(line), args.mode, args.channel) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
