"""Time-synchronous and label-synchronous beam search with score and beam-size pruning.

All decoders work on the query interfaces of the two model kinds, so a
transducer can be decoded label-synchronously (through `SegmentalView`) and
a segmental model time-synchronously (through `TransducerView`); `decode`
inserts the view automatically.

With pruning disabled the decoders only drop hypotheses that provably
cannot beat the best complete hypothesis already reachable (every score
increment is nonnegative), so the 1-best equals the exhaustive Viterbi
decision while the search stays finite on RNN-T grids.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .core import BLANK, INF, TIE_TOLERANCE, DomainError, Segmentation, rank
from .oracle import ScoredSequence
from .transform import SegmentalView, TransducerView

DEFAULT_MAX_PER_FRAME = 3


class Strategy(str, enum.Enum):
    TIME_SYNC = "time_sync"
    LABEL_SYNC_FULL = "label_sync_full"
    LABEL_SYNC_TWO_STAGE = "label_sync_two_stage"


@dataclass(frozen=True)
class PruneConfig:
    """Score threshold ``q_prune`` (nats) and/or beam sizes; all off by default."""

    q_prune: float = INF
    beam: Optional[int] = None
    boundary_beam: Optional[int] = None

    def __post_init__(self):
        if not self.q_prune > 0:
            raise DomainError(f"q_prune must be positive, got {self.q_prune}")
        for name in ("beam", "boundary_beam"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise DomainError(f"{name} must be >= 1, got {v}")

    @classmethod
    def score_threshold(cls, q_prune: float) -> "PruneConfig":
        return cls(q_prune=q_prune)

    @classmethod
    def beam_size(cls, beam: int, boundary_beam: Optional[int] = None) -> "PruneConfig":
        return cls(beam=beam, boundary_beam=boundary_beam)

    @property
    def mode(self) -> str:
        has_q, has_b = self.q_prune != INF, self.beam is not None
        if has_q and has_b:
            return "both"
        if has_q:
            return "score_threshold"
        if has_b:
            return "beam_size"
        return "none"

    @property
    def unpruned(self) -> bool:
        return self.q_prune == INF and self.beam is None and self.boundary_beam is None

    def as_dict(self) -> dict:
        return {"q_prune": None if self.q_prune == INF else self.q_prune,
                "beam": self.beam, "boundary_beam": self.boundary_beam}


@dataclass
class DecodeStats:
    expanded: int = 0
    pruned: int = 0
    peak_beam: int = 0
    steps: int = 0
    wall_ms: float = 0.0
    step_cap_hit: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DecodeResult:
    nbest: List[ScoredSequence]
    stats: DecodeStats
    metadata: Dict[str, object] = field(default_factory=dict)
    model: object = field(default=None, repr=False, compare=False)

    @property
    def best(self) -> Optional[ScoredSequence]:
        return self.nbest[0] if self.nbest else None


class Hyp:
    __slots__ = ("labels", "bounds", "score")

    def __init__(self, labels: Tuple[str, ...], bounds: Tuple[int, ...], score: float):
        self.labels = labels
        self.bounds = bounds
        self.score = score

    def __repr__(self):
        return f"Hyp({self.labels}, {self.bounds}, {self.score:.6f})"


class _Fusion:
    def __init__(self, lm, scale: float):
        self.active = lm is not None and scale != 0.0
        self.lm, self.scale = lm, scale

    def label(self, hist, a) -> float:
        return self.scale * self.lm.cost(hist, a) if self.active else 0.0

    def end(self, hist) -> float:
        return self.scale * self.lm.end_cost(hist) if self.active else 0.0


def _ordered(hyps, vocab) -> List[Hyp]:
    return rank(hyps, score=lambda h: h.score, tiebreak=lambda h: (vocab.ids(h.labels), h.bounds))


def prune_hypotheses(hyps: List[Hyp], config: PruneConfig, vocab, stats: Optional[DecodeStats] = None) -> List[Hyp]:
    """Keep hypotheses within ``q_prune`` of the step best, then the best ``beam`` of those.

    The step best always survives.
    """
    if not hyps:
        return hyps
    ordered = _ordered(hyps, vocab)
    limit = ordered[0].score + config.q_prune
    kept = [h for h in ordered if h.score <= limit] if config.q_prune != INF else ordered
    if config.beam is not None:
        kept = kept[:config.beam]
    if stats is not None:
        stats.pruned += len(hyps) - len(kept)
        stats.peak_beam = max(stats.peak_beam, len(kept))
    return kept


class _Bound:
    """Best complete score reachable so far; used only when pruning is disabled."""

    def __init__(self, enabled: bool, stats: DecodeStats):
        self.enabled, self.stats = enabled, stats
        self.upper = INF

    def filter(self, hyps: List[Hyp], completion) -> List[Hyp]:
        if not self.enabled or not hyps:
            return hyps
        for h in hyps:
            self.upper = min(self.upper, completion(h))
        kept = [h for h in hyps if h.score <= self.upper + TIE_TOLERANCE]
        self.stats.pruned += len(hyps) - len(kept)
        return kept


def _finish(ended: List[Hyp], vocab, topology, nbest: int) -> List[ScoredSequence]:
    ranked = _ordered(ended, vocab)
    out, seen = [], set()
    for h in ranked:
        if h.score == INF or h.labels in seen:
            continue
        seen.add(h.labels)
        out.append(ScoredSequence(h.labels, h.score, Segmentation(h.labels, h.bounds, topology)))
        if len(out) == nbest:
            break
    return out


def _seed(extra_ended) -> List[Hyp]:
    return [Hyp(tuple(s.labels), tuple(s.boundaries), s.score) for s in extra_ended]


def decode_time_sync(model, lm=None, lm_scale: float = 0.0, prune: PruneConfig = PruneConfig(),
                     nbest: int = 1, max_per_frame: int = DEFAULT_MAX_PER_FRAME,
                     extra_ended: Sequence[ScoredSequence] = ()) -> DecodeResult:
    """Frame-by-frame expansion of alignment prefixes.

    On the RNN-T grid each frame first expands up to ``max_per_frame``
    vertical (label) transitions, pruning after every level, and then the
    horizontal blank; the hypotheses entering the next frame are pruned
    against each other.
    """
    start = time.perf_counter()
    topo, vocab = model.topology, model.vocabulary
    T = topo.T
    fusion = _Fusion(lm, lm_scale)
    stats = DecodeStats()
    bound = _Bound(prune.unpruned, stats)
    ended = _seed(extra_ended)

    def row(h, t):
        return model.step(t, h.labels, h.bounds[-1] if h.labels else None)

    def completion_from(t):
        def completion(h):
            s = h.score
            for f in range(t, T + 1):
                s += row(h, f)[BLANK]
            return s + fusion.end(h.labels)
        return completion

    beam = [Hyp((), (), 0.0)]
    for t in range(1, T + 1):
        stats.steps += 1
        beam = bound.filter(beam, completion_from(t))
        nxt: List[Hyp] = []
        if topo.strict:
            for h in beam:
                r = row(h, t)
                nxt.append(Hyp(h.labels, h.bounds, h.score + r[BLANK]))
                for a in vocab.labels:
                    s = h.score + r[a]
                    if s != INF:
                        nxt.append(Hyp(h.labels + (a,), h.bounds + (t,), s + fusion.label(h.labels, a)))
            stats.expanded += len(nxt)
            if t == T:
                ended.extend(Hyp(h.labels, h.bounds, h.score + fusion.end(h.labels)) for h in nxt)
            else:
                beam = prune_hypotheses(nxt, prune, vocab, stats)
            continue

        current, level = beam, 0
        while current:
            vertical: List[Hyp] = []
            for h in current:
                r = row(h, t)
                blank = Hyp(h.labels, h.bounds, h.score + r[BLANK])
                if t == T:
                    blank.score += fusion.end(h.labels)
                    ended.append(blank)
                else:
                    nxt.append(blank)
                stats.expanded += 1
                if level < max_per_frame:
                    for a in vocab.labels:
                        s = h.score + r[a]
                        if s != INF:
                            vertical.append(Hyp(h.labels + (a,), h.bounds + (t,), s + fusion.label(h.labels, a)))
            stats.expanded += len(vertical)
            level += 1
            current = prune_hypotheses(bound.filter(vertical, completion_from(t)), prune, vocab, stats)
        beam = prune_hypotheses(nxt, prune, vocab, stats)

    result = _finish(ended, vocab, topo, nbest)
    stats.wall_ms = (time.perf_counter() - start) * 1e3
    return DecodeResult(result, stats, {"strategy": Strategy.TIME_SYNC.value, "prune": prune.as_dict()}, model)


def _label_sync(model, lm, lm_scale, prune: PruneConfig, nbest, max_per_frame, max_steps,
                two_stage: bool, extra_ended) -> DecodeResult:
    start = time.perf_counter()
    topo, vocab = model.topology, model.vocabulary
    T = topo.T
    fusion = _Fusion(lm, lm_scale)
    stats = DecodeStats()
    bound = _Bound(prune.unpruned, stats)
    ended = _seed(extra_ended)
    if max_steps is None:
        max_steps = T if topo.strict else (max_per_frame or DEFAULT_MAX_PER_FRAME) * T
    cap = max_per_frame if not topo.strict else None

    def t_prev(h):
        return h.bounds[-1] if h.bounds else topo.t0

    def close(h):
        return h.score + model.final(t_prev(h), h.labels) + fusion.end(h.labels)

    live = [Hyp((), (), 0.0)]
    while live:
        if stats.steps >= max_steps:
            stats.step_cap_hit = True
            break
        stats.steps += 1
        live = bound.filter(live, close)
        new: List[Hyp] = []
        for h in live:
            tp = t_prev(h)
            cands = [(t, b) for t, b in model.boundary(tp, h.labels).items() if b != INF]
            if cap is not None:
                cands = [(t, b) for t, b in cands if sum(1 for x in h.bounds if x == t) < cap]
            if two_stage:
                stats.expanded += len(cands)
                cands.sort(key=lambda tb: (tb[1], tb[0]))
                if prune.boundary_beam is not None:
                    stats.pruned += max(0, len(cands) - prune.boundary_beam)
                    cands = cands[:prune.boundary_beam]
            ended.append(Hyp(h.labels, h.bounds, close(h)))
            stats.expanded += 1
            for t, b in cands:
                row = model.label(tp, t, h.labels)
                for a in vocab.labels:
                    s = h.score + b + row.get(a, INF)
                    if s == INF:
                        continue
                    nh = Hyp(h.labels + (a,), h.bounds + (t,), s + fusion.label(h.labels, a))
                    stats.expanded += 1
                    if topo.strict and t == T:
                        nh.score += model.final(T, nh.labels) + fusion.end(nh.labels)
                        ended.append(nh)
                    else:
                        new.append(nh)
        live = prune_hypotheses(new, prune, vocab, stats)

    result = _finish(ended, vocab, topo, nbest)
    stats.wall_ms = (time.perf_counter() - start) * 1e3
    strategy = Strategy.LABEL_SYNC_TWO_STAGE if two_stage else Strategy.LABEL_SYNC_FULL
    return DecodeResult(result, stats, {"strategy": strategy.value, "prune": prune.as_dict()}, model)


def decode_label_sync_full(model, lm=None, lm_scale: float = 0.0, prune: PruneConfig = PruneConfig(),
                           nbest: int = 1, max_per_frame: Optional[int] = DEFAULT_MAX_PER_FRAME,
                           max_steps: Optional[int] = None,
                           extra_ended: Sequence[ScoredSequence] = ()) -> DecodeResult:
    """Segment-by-segment search hypothesizing (label, boundary) pairs jointly.

    Hypotheses that take the sentence end (or, under strict monotonicity,
    reach the last frame) move to an ended pool that takes no part in
    pruning.  ``extra_ended`` pre-populates that pool.
    """
    return _label_sync(model, lm, lm_scale, prune, nbest, max_per_frame, max_steps, False, extra_ended)


def decode_label_sync_two_stage(model, lm=None, lm_scale: float = 0.0, prune: PruneConfig = PruneConfig(),
                                nbest: int = 1, max_per_frame: Optional[int] = DEFAULT_MAX_PER_FRAME,
                                max_steps: Optional[int] = None,
                                extra_ended: Sequence[ScoredSequence] = ()) -> DecodeResult:
    """Boundaries first (best ``boundary_beam`` per hypothesis), then labels, then the global ``beam``.

    Closing a hypothesis with the sentence end is always scored, independent
    of which boundaries survive the boundary beam.
    """
    return _label_sync(model, lm, lm_scale, prune, nbest, max_per_frame, max_steps, True, extra_ended)


_DECODERS = {
    Strategy.TIME_SYNC: decode_time_sync,
    Strategy.LABEL_SYNC_FULL: decode_label_sync_full,
    Strategy.LABEL_SYNC_TWO_STAGE: decode_label_sync_two_stage,
}


def prepare_model(model, strategy):
    """The model a strategy runs on, plus the name of the view inserted (or None)."""
    strategy = Strategy(strategy)
    if strategy is Strategy.TIME_SYNC and model.kind == "segmental":
        return TransducerView(model), "segmental_to_transducer"
    if strategy is not Strategy.TIME_SYNC and model.kind == "transducer":
        return SegmentalView(model), "transducer_to_segmental"
    return model, None


def decode(model, strategy, lm=None, lm_scale: float = 0.0, prune: Optional[PruneConfig] = None,
           nbest: int = 1, **kwargs) -> DecodeResult:
    strategy = Strategy(strategy)
    used, transform = prepare_model(model, strategy)
    result = _DECODERS[strategy](used, lm=lm, lm_scale=lm_scale, prune=prune or PruneConfig(),
                                 nbest=nbest, **kwargs)
    result.metadata["transform"] = transform
    result.metadata["model_kind"] = model.kind
    return result
