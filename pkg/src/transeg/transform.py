"""Exact rewrites between transducer and segmental models.

``SegmentalView`` reads a transducer as a segmental model: the blank
probability becomes a geometric-style segment-continuation probability, and
label probabilities are renormalized by the non-blank mass at the boundary
frame.  ``TransducerView`` goes the other way, turning survival ratios of a
boundary distribution into blank probabilities.  Both are lazy: queries are
answered from the wrapped model, so the same code applies to any object
exposing the transducer (``step``) or segmental (``boundary``/``label``/
``final``) query interface.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Dict, Sequence, Tuple

from .core import (
    BLANK,
    BOS,
    INF,
    SENTENCE_END,
    DomainError,
    Topology,
    TopologyKind,
    UnreachableError,
    log_sum,
)
from .models import Row, SegmentalModel, TransducerModel


def _representative(view, ctx: Tuple[str, ...], t_prev) -> Tuple[str, ...]:
    """A label history with context ``ctx`` and last boundary ``t_prev``."""
    hist = tuple(c for c in ctx if c != BOS)
    if not hist and not ctx and t_prev is not None and t_prev != view.topology.t0:
        hist = (view.vocabulary.labels[0],)
    return hist


class SegmentalView:
    """A transducer queried as a segmental model.

    For a segment starting after boundary ``t_prev`` the boundary score of
    frame ``t`` is the blank score of every earlier frame in the segment plus
    the score of *not* emitting blank at ``t``; the label score is the label
    score at ``t`` minus that same non-blank score.  At ``t = T`` the label
    row also carries the sentence end, valued as the blank odds
    ``q(blank) / (1 - q(blank))`` (possibly above one).  ``final`` returns
    the all-blank survival of the remaining frames directly.
    """

    kind = "segmental"
    native = False

    def __init__(self, model):
        self.model = model
        self.vocabulary = model.vocabulary
        self.topology: Topology = model.topology
        self.context_order = model.context_order
        self._blank_scores = lru_cache(maxsize=None)(self._blank_scores_uncached)

    def __repr__(self):
        return f"SegmentalView({self.model!r})"

    def _check(self, t_prev: int) -> None:
        if not self.topology.t0 <= t_prev <= self.topology.T:
            raise DomainError(f"previous boundary {t_prev} outside [{self.topology.t0}, {self.topology.T}]")

    def _rows(self, t_prev: int, labels: Tuple[str, ...]):
        last = t_prev if labels else None
        return [self.model.step(t, labels, last) for t in self.topology.candidates(t_prev)]

    def _blank_scores_uncached(self, t_prev: int, labels: Tuple[str, ...]) -> Tuple[float, ...]:
        return tuple(row[BLANK] for row in self._rows(t_prev, labels))

    def _nonblank(self, row: Row) -> float:
        # equals complement(row[BLANK]) for a normalized row, without the cancellation when q(blank) ~ 1
        return log_sum(row[a] for a in self.vocabulary.labels)

    def boundary(self, t_prev: int, labels: Sequence[str] = ()) -> Dict[int, float]:
        self._check(t_prev)
        labels = tuple(labels)
        out, acc = {}, 0.0
        for t, row in zip(self.topology.candidates(t_prev), self._rows(t_prev, labels)):
            out[t] = acc + self._nonblank(row)
            acc += row[BLANK]
        return out

    def label(self, t_prev: int, t: int, labels: Sequence[str] = ()) -> Row:
        self._check(t_prev)
        if t not in self.topology.candidates(t_prev):
            if self.topology.strict and t == t_prev:
                raise DomainError(f"zero-length segment at t={t} under strict monotonicity")
            raise DomainError(f"boundary {t} not admissible after {t_prev} under {self.topology}")
        labels = tuple(labels)
        row = self.model.step(t, labels, t_prev if labels else None)
        nonblank = self._nonblank(row)
        if nonblank == INF:
            raise UnreachableError(f"q(blank)=1 at boundary t={t}; label probability undefined")
        out = {a: row[a] - nonblank for a in self.vocabulary.labels}
        if t == self.topology.T:
            out[SENTENCE_END] = row[BLANK] - nonblank
        return out

    def final(self, t_prev: int, labels: Sequence[str] = ()) -> float:
        self._check(t_prev)
        return sum(self._blank_scores(t_prev, tuple(labels)))


class TransducerView:
    """A segmental model queried as a transducer.

    The state at frame ``t`` inside the segment that started after
    ``t_prev`` has probability mass R(t): every label event at a frame
    ``>= t`` plus the sentence-end event.  Blank at ``t`` is the survival
    ratio R(t+1)/R(t) and label ``a`` is p(t) p(a|t) / R(t).  For native
    models R(t) equals one minus the boundary CDF before ``t``, and the
    sentence-end mass becomes the terminating blank at frame ``T``.
    """

    kind = "transducer"
    boundary_dependent = True

    def __init__(self, model):
        self.model = model
        self.vocabulary = model.vocabulary
        self.topology: Topology = model.topology
        self.context_order = model.context_order
        self._profile = lru_cache(maxsize=None)(self._profile_uncached)

    def __repr__(self):
        return f"TransducerView({self.model!r})"

    @property
    def symbols(self):
        return self.vocabulary.labels + (BLANK,)

    def _profile_uncached(self, t_prev: int, labels: Tuple[str, ...]):
        seg, T = self.model, self.topology.T
        b = seg.boundary(t_prev, labels)
        events, label_rows = {}, {}
        for t in self.topology.candidates(t_prev):
            bt = b.get(t, INF)
            if bt == INF:
                events[t] = INF
                continue
            row = seg.label(t_prev, t, labels)
            label_rows[t] = row
            events[t] = bt + log_sum(row.get(a, INF) for a in self.vocabulary.labels)
        reach = {T + 1: seg.final(t_prev, labels)}
        for t in reversed(self.topology.candidates(t_prev)):
            reach[t] = log_sum((events[t], reach[t + 1]))
        return b, label_rows, reach

    def _resolve(self, t: int, labels: Sequence[str], last_frame):
        labels = tuple(labels)
        if not labels:
            last_frame = self.topology.t0
        elif last_frame is None:
            raise DomainError("the frame of the last emitted label is required")
        if t not in self.topology.candidates(last_frame):
            raise DomainError(f"frame {t} not reachable after last emission at {last_frame}")
        return labels, last_frame

    def reachable(self, t: int, labels: Sequence[str] = (), last_frame=None) -> bool:
        labels, t_prev = self._resolve(t, labels, last_frame)
        return self._profile(t_prev, labels)[2][t] != INF

    def step(self, t: int, labels: Sequence[str] = (), last_frame=None) -> Row:
        labels, t_prev = self._resolve(t, labels, last_frame)
        b, label_rows, reach = self._profile(t_prev, labels)
        if reach[t] == INF:
            return {y: INF for y in self.symbols}
        row = {BLANK: reach[t + 1] - reach[t]}
        bt = b.get(t, INF)
        lab = label_rows.get(t, {})
        for a in self.vocabulary.labels:
            row[a] = bt + lab.get(a, INF) - reach[t] if bt != INF else INF
        return row


class StrictAsRNNT:
    """A strict-monotonic segmental model expressed on the RNN-T grid.

    Zero-length segments get probability zero; the first segment keeps the
    strict model's t_0 = 0 row.  Rewriting the result as a transducer yields
    q(blank) = 1 right after every label emission.
    """

    kind = "segmental"
    native = False

    def __init__(self, model):
        if not model.topology.strict:
            raise DomainError("expected a strict-monotonic segmental model")
        self.model = model
        self.vocabulary = model.vocabulary
        self.context_order = model.context_order
        self.topology = Topology(TopologyKind.RNNT, model.topology.T)

    def _inner_prev(self, t_prev: int, labels: Tuple[str, ...]) -> int:
        return self.model.topology.t0 if not labels else t_prev

    def boundary(self, t_prev: int, labels: Sequence[str] = ()) -> Dict[int, float]:
        labels = tuple(labels)
        row = dict(self.model.boundary(self._inner_prev(t_prev, labels), labels))
        if labels:
            row[t_prev] = INF
        return dict(sorted(row.items()))

    def label(self, t_prev: int, t: int, labels: Sequence[str] = ()) -> Row:
        labels = tuple(labels)
        if labels and t == t_prev:
            return {}
        return self.model.label(self._inner_prev(t_prev, labels), t, labels)

    def final(self, t_prev: int, labels: Sequence[str] = ()) -> float:
        labels = tuple(labels)
        return self.model.final(self._inner_prev(t_prev, labels), labels)


def transducer_to_segmental(model) -> SegmentalView:
    return SegmentalView(model)


def segmental_to_transducer(model) -> TransducerView:
    return TransducerView(model)


def strict_as_rnnt(model) -> StrictAsRNNT:
    return StrictAsRNNT(model)


def materialize(view):
    """Bake a view into a standalone tabular model.

    Rows whose state carries no probability mass (or whose values are
    undefined there) are recorded as unreachable instead of being filled in.
    """
    if view.kind == "segmental":
        return _materialize_segmental(view)
    return _materialize_transducer(view)


def _materialize_segmental(view) -> SegmentalModel:
    shell = SegmentalModel(view.vocabulary, view.topology, view.context_order, {}, {})
    b_table, l_table, unreachable = {}, {}, set()
    for t_prev, ctx in shell.expected_boundary_keys():
        hist = _representative(view, ctx, t_prev)
        row = view.boundary(t_prev, hist)
        b_table[(t_prev, ctx)] = dict(row)
        for t in view.topology.candidates(t_prev):
            try:
                l_table[(t_prev, t, ctx)] = dict(view.label(t_prev, t, hist))
            except UnreachableError:
                unreachable.add((t_prev, t, ctx))
    return SegmentalModel(view.vocabulary, view.topology, view.context_order, b_table, l_table,
                          native=False, unreachable=frozenset(unreachable))


def _materialize_transducer(view) -> TransducerModel:
    dependent = getattr(view, "boundary_dependent", True)
    shell = TransducerModel(view.vocabulary, view.topology, view.context_order, {}, dependent)
    table, unreachable = {}, set()
    for key in shell.expected_keys():
        if dependent:
            t, t_prev, ctx = key
        else:
            (t, ctx), t_prev = key, None
        hist = _representative(view, ctx, t_prev)
        last = t_prev if hist else None
        reachable = getattr(view, "reachable", None)
        if reachable is not None and not reachable(t, hist, last):
            unreachable.add(key)
            continue
        table[key] = dict(view.step(t, hist, last))
    return TransducerModel(view.vocabulary, view.topology, view.context_order, table, dependent,
                           frozenset(unreachable))
