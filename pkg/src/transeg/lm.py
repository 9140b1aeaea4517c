"""Explicit-table n-gram LM over model labels, used for log-linear fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Mapping, Sequence, Union

import numpy as np

from .core import BOS, INF, SENTENCE_END, DomainError, Vocabulary, context_of, to_prob, to_score
from .models import (
    FORMAT_VERSION,
    NORMALIZATION_TOL,
    ModelFormatError,
    Row,
    Violation,
    _field,
    _parse_json,
    _random_scores,
    canonical_json,
    contexts,
)


@dataclass(frozen=True, eq=False)
class NGramLM:
    vocabulary: Vocabulary
    order: int
    table: Mapping[tuple, Row]

    def __post_init__(self):
        if self.order < 1:
            raise DomainError(f"LM order must be >= 1, got {self.order}")

    def context(self, history: Sequence[str]) -> tuple:
        return context_of(history, self.order - 1)

    def cost(self, history: Sequence[str], symbol: str) -> float:
        """``-ln p(symbol | history)`` for a label or SENTENCE_END."""
        if symbol != SENTENCE_END and symbol not in self.vocabulary:
            raise DomainError(f"out-of-vocabulary label {symbol!r}")
        ctx = self.context(history)
        try:
            row = self.table[ctx]
        except KeyError:
            raise DomainError(f"no LM row for context {ctx}") from None
        return row.get(symbol, INF)

    def end_cost(self, history: Sequence[str]) -> float:
        return self.cost(history, SENTENCE_END)


def lm_score(lm: NGramLM, labels: Sequence[str]) -> float:
    """Sum of conditional label scores plus the sentence-end score."""
    labels = tuple(labels)
    for a in labels:
        if a not in lm.vocabulary:
            raise DomainError(f"out-of-vocabulary label {a!r}")
    return sum(lm.cost(labels[:i], a) for i, a in enumerate(labels)) + lm.end_cost(labels)


def uniform_lm(vocabulary: Vocabulary, order: int = 2) -> NGramLM:
    n = len(vocabulary) + 1
    row = {s: math.log(n) for s in vocabulary.labels + (SENTENCE_END,)}
    return NGramLM(vocabulary, order, {ctx: dict(row) for ctx in contexts(vocabulary, order - 1)})


def generate_random_lm(seed: int, vocabulary: Vocabulary, order: int = 2, smoothness: float = 0.5) -> NGramLM:
    rng = np.random.default_rng(seed)
    syms = vocabulary.labels + (SENTENCE_END,)
    table = {ctx: dict(zip(syms, _random_scores(rng, len(syms), smoothness).tolist()))
             for ctx in contexts(vocabulary, order - 1)}
    return NGramLM(vocabulary, order, table)


def validate_lm(lm: NGramLM) -> List[Violation]:
    out = []
    for ctx in contexts(lm.vocabulary, lm.order - 1):
        if ctx not in lm.table:
            out.append(Violation(f"context=({','.join(ctx)})", "missing row"))
    terminable = False
    for ctx, row in lm.table.items():
        total = math.fsum(to_prob(s) for s in row.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            out.append(Violation(f"context=({','.join(ctx)})", f"row sums to {total:.15g}"))
        terminable |= row.get(SENTENCE_END, INF) < INF
    if not terminable:
        out.append(Violation("lm", "sentence end has probability zero in every context"))
    return out


def lm_to_dict(lm: NGramLM) -> dict:
    syms = lm.vocabulary.labels + (SENTENCE_END,)
    rows = [{"context": list(ctx), "probs": {s: to_prob(lm.table[ctx][s]) for s in syms if s in lm.table[ctx]}}
            for ctx in sorted(lm.table, key=list)]
    return {"format_version": FORMAT_VERSION, "kind": "lm", "order": lm.order,
            "vocabulary": list(lm.vocabulary.labels), "rows": rows}


def dumps_lm(lm: NGramLM) -> str:
    return canonical_json(lm_to_dict(lm)) + "\n"


def save_lm(lm: NGramLM, destination: Union[str, Path]) -> None:
    Path(destination).write_text(dumps_lm(lm), encoding="utf-8")


def loads_lm(text: str) -> NGramLM:
    data = _parse_json(text)
    try:
        vocab = Vocabulary(tuple(_field(data, "vocabulary", "top level")))
    except (DomainError, TypeError) as exc:
        raise ModelFormatError(f"vocabulary: {exc}") from None
    order = _field(data, "order", "top level")
    if not isinstance(order, int) or order < 1:
        raise ModelFormatError("order: expected a positive integer")
    rows = _field(data, "rows", "top level")
    if not isinstance(rows, list):
        raise ModelFormatError("rows: expected a list")
    allowed = set(vocab.labels) | {SENTENCE_END}
    table = {}
    for i, row in enumerate(rows):
        where = f"rows[{i}]"
        ctx = _field(row, "context", where)
        if not isinstance(ctx, list) or len(ctx) != order - 1:
            raise ModelFormatError(f"{where}.context: expected a list of {order - 1} labels")
        for c in ctx:
            if c != BOS and c not in vocab:
                raise ModelFormatError(f"{where}.context: unknown symbol {c!r}")
        probs = _field(row, "probs", where)
        if not isinstance(probs, dict):
            raise ModelFormatError(f"{where}.probs: expected an object")
        scores = {}
        for sym, p in probs.items():
            if sym not in allowed:
                raise ModelFormatError(f"{where}.probs: unknown symbol {sym!r}")
            if not isinstance(p, (int, float)) or isinstance(p, bool) or p < 0:
                raise ModelFormatError(f"{where}.probs[{sym!r}]: expected a nonnegative number")
            scores[sym] = to_score(float(p))
        table[tuple(ctx)] = scores
    return NGramLM(vocab, order, table)


def load_lm(source: Union[str, Path]) -> NGramLM:
    return loads_lm(Path(source).read_text(encoding="utf-8"))
