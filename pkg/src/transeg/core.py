"""Log-space scores, vocabularies, label topologies and the path/segmentation bijection.

Scores are negative natural logarithms of probabilities: ``0.0`` is
probability one and :data:`INF` is probability zero.  Frames are 1-indexed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Tuple, TypeVar

INF = math.inf

BLANK = "<blank>"
SENTENCE_END = "<eos>"
BOS = "<bos>"

RESERVED = frozenset({BLANK, SENTENCE_END, BOS})

# Scores closer than this are treated as ties by `rank`.
TIE_TOLERANCE = 1e-9


class TransegError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(TransegError, ValueError):
    """A query or value lies outside the domain allowed by the topology."""


class UnreachableError(TransegError):
    """A quantity is undefined because the state carries zero probability."""


class GuardExceeded(TransegError):
    """An exhaustive computation would exceed its combinatorial guard."""


def log_add(x: float, y: float) -> float:
    """Return ``-ln(exp(-x) + exp(-y))``."""
    if x > y:
        x, y = y, x
    if y == INF:
        return x
    return x - math.log1p(math.exp(x - y))


def log_sum(scores: Iterable[float]) -> float:
    """`log_add` folded over an iterable; the empty sum is :data:`INF`."""
    scores = [s for s in scores if s != INF]
    if not scores:
        return INF
    best = min(scores)
    return best - math.log(math.fsum(math.exp(best - s) for s in scores))


def complement(score: float) -> float:
    """Score of ``1 - p`` given the score of ``p`` (stable log1mexp)."""
    if score <= 0.0:
        return INF
    if score == INF:
        return 0.0
    if score < math.log(2.0):
        return -math.log(-math.expm1(-score))
    return -math.log1p(-math.exp(-score))


def to_prob(score: float) -> float:
    return math.exp(-score)


def to_score(prob: float) -> float:
    if prob <= 0.0:
        return INF
    return -math.log(prob)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered label set V.  BLANK and SENTENCE_END live outside it."""

    labels: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise DomainError("vocabulary must contain at least one label")
        if len(set(labels)) != len(labels):
            raise DomainError(f"duplicate labels in vocabulary: {labels}")
        bad = RESERVED.intersection(labels)
        if bad:
            raise DomainError(f"reserved symbols used as labels: {sorted(bad)}")

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def ids(self, labels: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.labels.index(a) for a in labels)


class TopologyKind(str, enum.Enum):
    RNNT = "rnnt"
    STRICT_MONOTONIC = "strict_monotonic"


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    T: int

    def __post_init__(self):
        object.__setattr__(self, "kind", TopologyKind(self.kind))
        if int(self.T) != self.T or self.T < 1:
            raise DomainError(f"frame count must be a positive integer, got {self.T}")

    @property
    def strict(self) -> bool:
        return self.kind is TopologyKind.STRICT_MONOTONIC

    @property
    def t0(self) -> int:
        """Boundary sentinel before the first segment."""
        return 0 if self.strict else 1

    def path_length(self, n_labels: int) -> int:
        return self.T if self.strict else self.T + n_labels

    def first_frame(self, prev_boundary: int) -> int:
        """Earliest admissible boundary for a segment starting after ``prev_boundary``."""
        return prev_boundary + 1 if self.strict else prev_boundary

    def candidates(self, prev_boundary: int) -> range:
        return range(self.first_frame(prev_boundary), self.T + 1)

    def check_boundaries(self, boundaries: Sequence[int]) -> None:
        prev = self.t0
        for s, t in enumerate(boundaries, start=1):
            if not 1 <= t <= self.T:
                raise DomainError(f"boundary t_{s}={t} outside [1, {self.T}]")
            if t < self.first_frame(prev):
                rel = "<=" if self.strict else "<"
                raise DomainError(f"boundary t_{s}={t} {rel} t_{s - 1}={prev} violates {self.kind.value} monotonicity")
            prev = t

    def __str__(self):
        return f"{self.kind.value}(T={self.T})"


RNNT = TopologyKind.RNNT
STRICT_MONOTONIC = TopologyKind.STRICT_MONOTONIC


@dataclass(frozen=True)
class AlignmentPath:
    """Blank-augmented alignment y_1^U."""

    symbols: Tuple[str, ...]
    topology: Topology

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(y for y in self.symbols if y != BLANK)

    def validate(self) -> None:
        n = len(self.labels)
        expected = self.topology.path_length(n)
        if len(self.symbols) != expected:
            raise DomainError(
                f"path of length {len(self.symbols)} with {n} labels; "
                f"{self.topology} requires length {expected}"
            )
        if SENTENCE_END in self.symbols:
            raise DomainError("sentence end is not an alignment symbol")
        if not self.topology.strict and self.symbols[-1] != BLANK:
            raise DomainError("RNN-T path must end with a blank")


@dataclass(frozen=True)
class Segmentation:
    """Labels a_1^S with boundaries t_1^S; the final (#, T) segment is implicit."""

    labels: Tuple[str, ...]
    boundaries: Tuple[int, ...]
    topology: Topology

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "boundaries", tuple(int(t) for t in self.boundaries))

    def validate(self) -> None:
        if len(self.labels) != len(self.boundaries):
            raise DomainError(f"{len(self.labels)} labels but {len(self.boundaries)} boundaries")
        if BLANK in self.labels or SENTENCE_END in self.labels:
            raise DomainError("reserved symbol in segment labels")
        self.topology.check_boundaries(self.boundaries)


def path_to_segmentation(path: AlignmentPath) -> Segmentation:
    path.validate()
    labels, boundaries = [], []
    for u, y in enumerate(path.symbols, start=1):
        if y == BLANK:
            continue
        labels.append(y)
        s = len(labels)
        boundaries.append(u if path.topology.strict else u - s + 1)
    return Segmentation(tuple(labels), tuple(boundaries), path.topology)


def segmentation_to_path(seg: Segmentation) -> AlignmentPath:
    seg.validate()
    topo = seg.topology
    symbols = [BLANK] * topo.path_length(len(seg.labels))
    for s, (a, t) in enumerate(zip(seg.labels, seg.boundaries), start=1):
        u = t if topo.strict else t + s - 1
        symbols[u - 1] = a
    return AlignmentPath(tuple(symbols), topo)


def context_of(labels: Sequence[str], k: int) -> Tuple[str, ...]:
    """Last ``k`` labels, left-padded with BOS."""
    if k == 0:
        return ()
    padded = (BOS,) * k + tuple(labels)
    return padded[-k:]


T_ = TypeVar("T_")


def rank(items: Iterable[T_], score: Callable[[T_], float], tiebreak: Callable[[T_], tuple],
         tol: float = TIE_TOLERANCE) -> list:
    """Sort ascending by score; runs of scores within ``tol`` of the run head are ordered by ``tiebreak``."""
    ordered = sorted(items, key=score)
    out, i = [], 0
    while i < len(ordered):
        head = score(ordered[i])
        j = i + 1
        while j < len(ordered) and score(ordered[j]) - head <= tol:
            j += 1
        out.extend(sorted(ordered[i:j], key=tiebreak) if j - i > 1 else ordered[i:j])
        i = j
    return out
