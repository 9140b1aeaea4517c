"""Small hand-specified models with values that can be checked on paper."""

from __future__ import annotations

from .core import BLANK, Topology, TopologyKind, Vocabulary, to_score
from .models import TransducerModel


def _row(probs: dict) -> dict:
    return {y: to_score(p) for y, p in probs.items()}


def rnnt_single_label() -> TransducerModel:
    """RNN-T, T=2, V={a}, no label context, q(blank)=0.6 everywhere."""
    row = _row({"a": 0.4, BLANK: 0.6})
    return TransducerModel(Vocabulary(("a",)), Topology(TopologyKind.RNNT, 2), 0,
                           {(1, ()): dict(row), (2, ()): dict(row)})


def strict_two_label() -> TransducerModel:
    """Strict monotonic, T=2, V={a,b}, no label context, one row per frame."""
    return TransducerModel(Vocabulary(("a", "b")), Topology(TopologyKind.STRICT_MONOTONIC, 2), 0, {
        (1, ()): _row({BLANK: 0.2, "a": 0.5, "b": 0.3}),
        (2, ()): _row({BLANK: 0.5, "a": 0.1, "b": 0.4}),
    })


def greedy_trap() -> TransducerModel:
    """Strict, T=2: the locally best first label "a" leads to a worse complete sequence than "b".

    Optimum is "b" (0.3); with a tight score threshold both searches keep only
    "a" after the first step and return "aa" (0.25).
    """
    bos = ("<bos>",)
    return TransducerModel(Vocabulary(("a", "b")), Topology(TopologyKind.STRICT_MONOTONIC, 2), 1, {
        (1, bos): _row({"a": 0.5, "b": 0.3, BLANK: 0.2}),
        (2, bos): _row({"a": 0.5, "b": 0.3, BLANK: 0.2}),
        (2, ("a",)): _row({"a": 0.5, "b": 0.4, BLANK: 0.1}),
        (2, ("b",)): _row({"a": 0.0, "b": 0.0, BLANK: 1.0}),
    })


def boundary_trap() -> TransducerModel:
    """Strict, T=2: frame 1 is the more likely first boundary, but the best sequence is "a" at frame 2.

    A boundary beam of one commits to frame 1 before label scores are seen.
    """
    bos = ("<bos>",)
    after = _row({"a": 0.2, "b": 0.2, BLANK: 0.6})
    return TransducerModel(Vocabulary(("a", "b")), Topology(TopologyKind.STRICT_MONOTONIC, 2), 1, {
        (1, bos): _row({"a": 0.3, "b": 0.3, BLANK: 0.4}),
        (2, bos): _row({"a": 0.9, "b": 0.05, BLANK: 0.05}),
        (2, ("a",)): dict(after),
        (2, ("b",)): dict(after),
    })
