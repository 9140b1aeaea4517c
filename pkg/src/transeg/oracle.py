"""Exact full-sum and Viterbi quantities at desk scale.

Every sum has two independent routes: brute-force enumeration of
alignments (or segmentations) and a forward recursion over the lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .core import (
    BLANK,
    INF,
    TIE_TOLERANCE,
    AlignmentPath,
    DomainError,
    GuardExceeded,
    Segmentation,
    Topology,
    log_add,
    log_sum,
    segmentation_to_path,
)

ENUMERATION_GUARD = 10 ** 6
DEFAULT_S_MAX = 4


@dataclass(frozen=True)
class ScoredSequence:
    labels: Tuple[str, ...]
    score: float
    alignment: Optional[Segmentation] = None

    @property
    def boundaries(self) -> Tuple[int, ...]:
        return self.alignment.boundaries if self.alignment is not None else ()


def _boundary_tuples(topology: Topology, n: int):
    frames = range(1, topology.T + 1)
    if topology.strict:
        return itertools.combinations(frames, n)
    return itertools.combinations_with_replacement(frames, n)


def count_alignments(topology: Topology, n: int) -> int:
    if topology.strict:
        return math.comb(topology.T, n) if n <= topology.T else 0
    return math.comb(topology.T + n - 1, n)


def _guard(topology: Topology, n: int, guard: int) -> None:
    count = count_alignments(topology, n)
    if count > guard:
        raise GuardExceeded(f"{count} alignments of {n} labels over {topology} exceed the guard {guard}")


def _is_segmental(model) -> bool:
    return getattr(model, "kind", None) == "segmental"


def score_path(model, path: AlignmentPath) -> float:
    """Sum of transducer step scores along one alignment."""
    topo = model.topology
    t, last = 1, topo.t0
    emitted: Tuple[str, ...] = ()
    total = 0.0
    for y in path.symbols:
        total += model.step(t, emitted, last if emitted else None).get(y, INF)
        if total == INF:
            return INF
        if y == BLANK:
            t += 1
        else:
            emitted += (y,)
            last = t
            if topo.strict:
                t += 1
    return total


def score_segmentation(model, seg: Segmentation) -> float:
    """Boundary, label and sentence-end scores of one segmentation."""
    t_prev = model.topology.t0
    total = 0.0
    for s, (a, t) in enumerate(zip(seg.labels, seg.boundaries)):
        hist = seg.labels[:s]
        b = model.boundary(t_prev, hist).get(t, INF)
        if b == INF:
            return INF
        total += b + model.label(t_prev, t, hist).get(a, INF)
        if total == INF:
            return INF
        t_prev = t
    return total + model.final(t_prev, seg.labels)


def enumerate_paths(model, labels: Sequence[str], guard: int = ENUMERATION_GUARD) -> List[Tuple[AlignmentPath, float]]:
    labels = tuple(labels)
    topo = model.topology
    _guard(topo, len(labels), guard)
    out = []
    for bounds in _boundary_tuples(topo, len(labels)):
        path = segmentation_to_path(Segmentation(labels, bounds, topo))
        out.append((path, score_path(model, path)))
    return out


def enumerate_segmentations(model, labels: Sequence[str],
                            guard: int = ENUMERATION_GUARD) -> List[Tuple[Segmentation, float]]:
    labels = tuple(labels)
    topo = model.topology
    _guard(topo, len(labels), guard)
    out = []
    for bounds in _boundary_tuples(topo, len(labels)):
        seg = Segmentation(labels, bounds, topo)
        out.append((seg, score_segmentation(model, seg)))
    return out


def _forward(model, labels: Tuple[str, ...]) -> float:
    """Forward recursion over (frame, labels emitted, last emission frame)."""
    topo = model.topology
    T, S = topo.T, len(labels)
    dependent = getattr(model, "boundary_dependent", True)

    def lf(frame):
        return frame if dependent else None

    # alpha[(t, s)] maps last-emission frame -> score, for states about to read frame t
    alpha: Dict[Tuple[int, int], Dict[Optional[int], float]] = {(1, 0): {lf(topo.t0): 0.0}}
    total = INF

    def push(key, last, score):
        cell = alpha.setdefault(key, {})
        cell[last] = log_add(cell.get(last, INF), score)

    for t in range(1, T + 1):
        for s in range(S + 1):
            for last, a in list(alpha.get((t, s), {}).items()):
                if a == INF:
                    continue
                hist = labels[:s]
                row = model.step(t, hist, last if s else None)
                if s < S:
                    nxt = (t, s + 1) if not topo.strict else (t + 1, s + 1)
                    push(nxt, lf(t), a + row.get(labels[s], INF))
                blank = a + row[BLANK]
                if t < T:
                    push((t + 1, s), last, blank)
                elif s == S:
                    total = log_add(total, blank)
    if topo.strict:
        for a in alpha.get((T + 1, S), {}).values():
            total = log_add(total, a)
    return total


def full_sum_transducer(model, labels: Sequence[str], method: str = "dp",
                        guard: int = ENUMERATION_GUARD) -> float:
    """``-ln p(labels)`` summed over all alignments."""
    labels = tuple(labels)
    if model.topology.strict and len(labels) > model.topology.T:
        return INF
    if method == "dp":
        return _forward(model, labels)
    if method == "enumerate":
        return log_sum(score for _, score in enumerate_paths(model, labels, guard))
    raise ValueError(f"unknown method {method!r}")


def full_sum_segmental(model, labels: Sequence[str], guard: int = ENUMERATION_GUARD) -> float:
    """``-ln p(labels)`` summed over all boundary tuples."""
    labels = tuple(labels)
    if model.topology.strict and len(labels) > model.topology.T:
        return INF
    return log_sum(score for _, score in enumerate_segmentations(model, labels, guard))


def full_sum(model, labels: Sequence[str], **kw) -> float:
    if _is_segmental(model):
        return full_sum_segmental(model, labels, **kw)
    return full_sum_transducer(model, labels, **kw)


def label_sequences(vocab, s_max: int):
    for n in range(s_max + 1):
        yield from itertools.product(vocab.labels, repeat=n)


@dataclass
class MassReport:
    score: float
    terms: Dict[Tuple[str, ...], float]
    exact: bool
    s_max: int

    @property
    def mass(self) -> float:
        return math.exp(-self.score)


def total_mass(model, s_max: Optional[int] = None) -> MassReport:
    """Probability mass of all label sequences (strict: exact; RNN-T: lengths <= s_max, a lower bound)."""
    topo = model.topology
    if topo.strict:
        s_max, exact = topo.T, True
    else:
        s_max, exact = (DEFAULT_S_MAX if s_max is None else s_max), False
    terms = {seq: full_sum(model, seq) for seq in label_sequences(model.vocabulary, s_max)}
    return MassReport(log_sum(terms.values()), terms, exact, s_max)


# ---------------------------------------------------------------------------
# exact best


class _Best:
    def __init__(self, vocab):
        self.vocab = vocab
        self.score = INF
        self.labels: Tuple[str, ...] = ()
        self.bounds: Tuple[int, ...] = ()
        self.found = False

    def bound(self) -> float:
        return self.score + TIE_TOLERANCE

    def offer(self, score: float, labels, bounds) -> None:
        if score == INF:
            return
        if not self.found or score < self.score - TIE_TOLERANCE:
            better = True
        elif score <= self.score + TIE_TOLERANCE:
            better = (self.vocab.ids(labels), bounds) < (self.vocab.ids(self.labels), self.bounds)
        else:
            better = False
        if better:
            self.score, self.labels, self.bounds, self.found = score, tuple(labels), tuple(bounds), True


def exact_best(model, lm=None, lm_scale: float = 0.0, max_per_frame: Optional[int] = None,
               max_labels: Optional[int] = None) -> ScoredSequence:
    """Exhaustive Viterbi decision with optional LM fusion.

    Depth-first search over every alignment (transducer) or segmentation
    (segmental model); partial hypotheses scoring worse than the best
    complete one are cut, which is exact because every factor has a
    nonnegative score.  Ties within ``TIE_TOLERANCE`` go to the
    lexicographically smallest label ids, then the earliest boundaries.
    """
    topo = model.topology
    if max_labels is None:
        max_labels = topo.T if topo.strict else 8 * topo.T
    use_lm = lm is not None and lm_scale != 0.0
    best = _Best(model.vocabulary)
    vocab = model.vocabulary.labels

    def lm_cost(hist, sym):
        return lm_scale * lm.cost(hist, sym) if use_lm else 0.0

    def lm_end(hist):
        return lm_scale * lm.end_cost(hist) if use_lm else 0.0

    def in_frame(bounds, t):
        return sum(1 for b in bounds if b == t)

    def too_long(labels):
        if len(labels) >= max_labels:
            if not topo.strict:
                raise GuardExceeded(f"exact_best reached {max_labels} labels inside the bound")
            return True
        return False

    if _is_segmental(model):
        def dfs(t_prev, labels, bounds, score):
            if score > best.bound():
                return
            best.offer(score + model.final(t_prev, labels) + lm_end(labels), labels, bounds)
            for t, b in model.boundary(t_prev, labels).items():
                if b == INF or score + b > best.bound():
                    continue
                if max_per_frame is not None and in_frame(bounds, t) >= max_per_frame:
                    continue
                if too_long(labels):
                    break
                row = model.label(t_prev, t, labels)
                for a in vocab:
                    dfs(t, labels + (a,), bounds + (t,), score + b + row.get(a, INF) + lm_cost(labels, a))

        dfs(topo.t0, (), (), 0.0)
    else:
        T = topo.T

        def dfs(t, labels, bounds, score):
            if score > best.bound():
                return
            if topo.strict and t > T:
                best.offer(score + lm_end(labels), labels, bounds)
                return
            row = model.step(t, labels, bounds[-1] if labels else None)
            blank = score + row[BLANK]
            if not topo.strict and t == T:
                best.offer(blank + lm_end(labels), labels, bounds)
            else:
                dfs(t + 1, labels, bounds, blank)
            if max_per_frame is not None and in_frame(bounds, t) >= max_per_frame:
                return
            if too_long(labels):
                return
            nxt = t + 1 if topo.strict else t
            for a in vocab:
                dfs(nxt, labels + (a,), bounds + (t,), score + row.get(a, INF) + lm_cost(labels, a))

        dfs(1, (), (), 0.0)

    if not best.found:
        return ScoredSequence((), INF, None)
    return ScoredSequence(best.labels, best.score, Segmentation(best.labels, best.bounds, topo))


def best_score(model, lm=None, lm_scale: float = 0.0) -> float:
    """Viterbi score of the best complete hypothesis, with no cap on labels per frame.

    Independent of ``exact_best``: a shortest-path search over recombined
    states (position, recent labels), valid because every factor depends on
    the history only through its last few labels and all scores are
    nonnegative.
    """
    import heapq

    topo = model.topology
    T = topo.T
    use_lm = lm is not None and lm_scale != 0.0
    keep = max(model.context_order, (lm.order - 1) if use_lm else 0, 1)

    def grow(hist, a):
        return (hist + (a,))[-keep:]

    def lm_cost(hist, a):
        return lm_scale * lm.cost(hist, a) if use_lm else 0.0

    def lm_end(hist):
        return lm_scale * lm.end_cost(hist) if use_lm else 0.0

    done = ("done",)
    start = (topo.t0, ()) if _is_segmental(model) else (1, (), None)
    heap = [(0.0, 0, start)]
    seen = set()
    counter = 1
    while heap:
        score, _, state = heapq.heappop(heap)
        if state == done:
            return score
        if state in seen:
            continue
        seen.add(state)
        out = []
        if _is_segmental(model):
            t_prev, hist = state
            out.append((score + model.final(t_prev, hist) + lm_end(hist), done))
            for t, b in model.boundary(t_prev, hist).items():
                if b == INF:
                    continue
                row = model.label(t_prev, t, hist)
                for a in model.vocabulary.labels:
                    out.append((score + b + row.get(a, INF) + lm_cost(hist, a), (t, grow(hist, a))))
        else:
            t, hist, last = state
            if topo.strict and t > T:
                out.append((score + lm_end(hist), done))
            else:
                row = model.step(t, hist, last)
                blank = score + row[BLANK]
                if not topo.strict and t == T:
                    out.append((blank + lm_end(hist), done))
                else:
                    out.append((blank, (t + 1, hist, last)))
                nxt = t + 1 if topo.strict else t
                for a in model.vocabulary.labels:
                    out.append((score + row.get(a, INF) + lm_cost(hist, a), (nxt, grow(hist, a), t)))
        for s, st in out:
            if s != INF and st not in seen:
                heapq.heappush(heap, (s, counter, st))
                counter += 1
    return INF
