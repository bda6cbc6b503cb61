"""Segmenter contract, built-in reference segmenters and the external-process client."""
from __future__ import annotations

import queue
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from .encoding import InteractionEncoding
from .protocol import ChildProcess, DimensionMismatch, SegmenterError
from .raster import as_mask
from .views import IDENTITY, View

POSITIVE, NEGATIVE = "positive", "negative"


class Click(NamedTuple):
    x: int
    y: int
    polarity: str


@dataclass(frozen=True)
class SegmenterQuery:
    """One request: the encoded interaction plus routing and geometry context.

    ``key`` names the dataset sample, ``view`` says how the planes were cut
    from the full image and ``clicks`` are in the same (view) coordinates.
    """

    image_ref: str
    encoding: InteractionEncoding
    interaction_index: int = 1
    key: Optional[str] = None
    clicks: tuple = ()
    view: View = IDENTITY

    def __post_init__(self):
        if self.interaction_index < 1:
            raise ValueError("interaction_index is 1-based")


@dataclass(frozen=True)
class SegmenterAnswer:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("probabilities must be a 2-D plane")
        object.__setattr__(self, "probabilities", p)


def check_answer(query: SegmenterQuery, answer: SegmenterAnswer) -> SegmenterAnswer:
    if answer.probabilities.shape != query.encoding.shape:
        raise DimensionMismatch(f"answer shape {answer.probabilities.shape} != query {query.encoding.shape}")
    return answer


def predict_oracle(query: SegmenterQuery, gt) -> SegmenterAnswer:
    """The ground truth itself, seen through the query's view."""
    return SegmenterAnswer(query.view.forward(as_mask(gt)).astype(np.float64))


def predict_filled_baseline(query: SegmenterQuery) -> SegmenterAnswer:
    """Positive region minus negative region, else the previous prediction."""
    enc = query.encoding
    if enc.mode != "filled":
        raise SegmenterError("baseline requires filled encoding")
    prob = np.where(enc.positive, 1.0, np.maximum(enc.previous, 0.0))
    prob[enc.negative] = 0.0
    return SegmenterAnswer(prob)


def external_predict(query: SegmenterQuery, handle: ChildProcess) -> SegmenterAnswer:
    clicks = [(c.x, c.y, c.polarity) for c in query.clicks] if query.clicks else None
    prob = handle.request(query.encoding, query.image_ref, query.interaction_index, clicks, query.view.to_dict())
    return SegmenterAnswer(prob)


class OracleSegmenter:
    """Answers every query with the sample's ground-truth mask.

    ``lookup`` maps a query key to the mask, either as a mapping or a callable.
    """

    name = "oracle"

    def __init__(self, lookup: Union[Mapping[str, np.ndarray], Callable[[str], np.ndarray]]):
        self._lookup = lookup

    def predict(self, query: SegmenterQuery) -> SegmenterAnswer:
        gt = self._lookup(query.key) if callable(self._lookup) else self._lookup[query.key]
        return predict_oracle(query, gt)


class FilledBaselineSegmenter:
    name = "baseline"

    def predict(self, query: SegmenterQuery) -> SegmenterAnswer:
        return predict_filled_baseline(query)


@dataclass
class ExternalSegmenter:
    """A pool of identical child processes; each query borrows one child."""

    cmd: Sequence[str]
    timeout: float = 30.0
    workers: int = 1
    name: str = "external"
    _pool: queue.Queue = field(init=False, repr=False)
    _children: list = field(init=False, repr=False)

    def __post_init__(self):
        self._pool = queue.Queue()
        self._children = [ChildProcess(self.cmd, self.timeout) for _ in range(max(1, self.workers))]
        for c in self._children:
            self._pool.put(c)

    def predict(self, query: SegmenterQuery) -> SegmenterAnswer:
        child = self._pool.get()
        try:
            return external_predict(query, child)
        finally:
            self._pool.put(child)

    def close(self) -> None:
        for c in self._children:
            c.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
