"""Measurement protocol: unit-level WER, pairwise decode comparison, search errors and pruning sweeps.

Labels stand in for words, so every WER here is a label error rate.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import BLANK, INF, SENTENCE_END, TransegError, to_prob
from .models import generate_random_segmental, generate_random_transducer
from .oracle import ScoredSequence, exact_best, full_sum
from .search import DEFAULT_MAX_PER_FRAME, PruneConfig, Strategy, decode, prepare_model

SAME_SCORE_TOL = 1e-4
SEARCH_ERROR_TOL = 1e-8
WER_UNIT_NOTE = "error rates are computed over model labels (label error rate), not words"
CSV_COLUMNS = ("grid_point", "strategy", "wer", "search_error_rate", "same_trans_pct",
               "same_score_pct", "hypotheses_expanded", "wall_ms")
REFERENCE_MODES = ("oracle-best", "sampled")


# ---------------------------------------------------------------------------
# WER


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int
    empty_reference: bool = False

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return self.errors / max(self.reference_length, 1)

    def __iter__(self):
        return iter((self.substitutions, self.insertions, self.deletions, self.rate))


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> EditCounts:
    """Levenshtein alignment with unit costs.

    Among minimal alignments the backtrace prefers substitution, then
    insertion, then deletion.  An empty reference has rate I/1 and is flagged.
    """
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), d[i, j - 1] + 1, d[i - 1, j] + 1)
    i, j, s, ins, dels = n, m, 0, 0, 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and d[i, j] == d[i, j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return EditCounts(int(s), ins, dels, n, empty_reference=(n == 0))


def corpus_wer(pairs: Sequence[Tuple[Sequence[str], Sequence[str]]]) -> float:
    """Total edits over total reference length (at least one)."""
    counts = [wer(r, h) for r, h in pairs]
    return sum(c.errors for c in counts) / max(sum(c.reference_length for c in counts), 1)


# ---------------------------------------------------------------------------
# pairwise comparison


def is_search_error(result: Optional[ScoredSequence], optimum: ScoredSequence, tol: float = SEARCH_ERROR_TOL) -> bool:
    if result is None:
        return True
    return tuple(result.labels) != tuple(optimum.labels) or result.score > optimum.score + tol


@dataclass
class ComparisonReport:
    records: List[dict]
    same_trans_pct: float
    same_score_pct: float
    tolerance: float
    wer_a: Optional[float] = None
    wer_b: Optional[float] = None
    search_error_rate_a: Optional[float] = None
    search_error_rate_b: Optional[float] = None

    def as_dict(self) -> dict:
        return {"note": WER_UNIT_NOTE, **self.__dict__}


def _labels(r: Optional[ScoredSequence]):
    return None if r is None else list(r.labels)


def compare_decodes(results_a: Sequence[Tuple[str, Optional[ScoredSequence]]],
                    results_b: Sequence[Tuple[str, Optional[ScoredSequence]]],
                    tolerance: float = SAME_SCORE_TOL,
                    references: Optional[Dict[str, Sequence[str]]] = None,
                    optima: Optional[Dict[str, ScoredSequence]] = None) -> ComparisonReport:
    """Same-transcription and same-score percentages of two aligned result lists.

    A missing result (decode failure) is given as ``None``; it matches nothing.
    """
    if len(results_a) != len(results_b):
        raise TransegError(f"result lists differ in length ({len(results_a)} vs {len(results_b)})")
    records = []
    for (id_a, a), (id_b, b) in zip(results_a, results_b):
        if id_a != id_b:
            raise TransegError(f"utterance id mismatch: {id_a!r} vs {id_b!r}")
        same_trans = a is not None and b is not None and tuple(a.labels) == tuple(b.labels)
        same_score = same_trans and abs(a.score - b.score) <= tolerance
        records.append({"utt_id": id_a, "labels_a": _labels(a), "labels_b": _labels(b),
                        "score_a": None if a is None else a.score, "score_b": None if b is None else b.score,
                        "same_trans": same_trans, "same_score": same_score})
    n = max(len(records), 1)
    report = ComparisonReport(records, 100.0 * sum(r["same_trans"] for r in records) / n,
                              100.0 * sum(r["same_score"] for r in records) / n, tolerance)
    if references is not None:
        report.wer_a = corpus_wer([(references[i], _labels(a) or []) for i, a in results_a])
        report.wer_b = corpus_wer([(references[i], _labels(b) or []) for i, b in results_b])
    if optima is not None:
        report.search_error_rate_a = sum(is_search_error(a, optima[i]) for i, a in results_a) / n
        report.search_error_rate_b = sum(is_search_error(b, optima[i]) for i, b in results_b) / n
    return report


# ---------------------------------------------------------------------------
# utterance sets


@dataclass
class Utterance:
    utt_id: str
    model: object
    reference: Tuple[str, ...]


@dataclass
class UtteranceSet:
    utterances: List[Utterance]
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [u.utt_id for u in self.utterances]
        if len(set(ids)) != len(ids):
            raise TransegError("utterance ids must be unique")

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)


def utterance_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def sample_labels(model, rng: np.random.Generator, max_labels: Optional[int] = None) -> Tuple[str, ...]:
    """Draw one alignment from the model and return its labels."""
    topo = model.topology
    if max_labels is None:
        max_labels = 4 * topo.T
    if model.kind == "segmental":
        t_prev, labels = topo.t0, ()
        while True:
            events = [(SENTENCE_END, None, model.final(t_prev, labels))]
            for t, b in model.boundary(t_prev, labels).items():
                if b != INF and not (len(labels) >= max_labels):
                    row = model.label(t_prev, t, labels)
                    events += [(a, t, b + row.get(a, INF)) for a in model.vocabulary.labels]
            p = np.array([to_prob(s) for _, _, s in events])
            a, t, _ = events[rng.choice(len(events), p=p / p.sum())]
            if a == SENTENCE_END:
                return labels
            labels, t_prev = labels + (a,), t
            if topo.strict and t == topo.T:
                return labels
    t, labels, last = 1, (), None
    while t <= topo.T:
        row = model.step(t, labels, last)
        syms = [BLANK] + ([] if len(labels) >= max_labels else list(model.vocabulary.labels))
        p = np.array([to_prob(row[y]) for y in syms])
        y = syms[rng.choice(len(syms), p=p / p.sum())]
        if y == BLANK:
            t += 1
        else:
            labels, last = labels + (y,), t
            if topo.strict:
                t += 1
    return labels


def generate_utterance_set(seed: int, count: int, T: int, vocab_size: int, k: int, topology: str,
                           smoothness: float, model_kind: str = "transducer", blank_bias: float = 0.0,
                           reference_mode: str = "oracle-best",
                           max_per_frame: int = DEFAULT_MAX_PER_FRAME) -> UtteranceSet:
    """One seeded model per utterance, with a reference transcription.

    ``oracle-best`` references are the exact Viterbi decision (so unpruned
    decoding has zero WER); ``sampled`` references are drawn from the model.
    """
    if reference_mode not in REFERENCE_MODES:
        raise TransegError(f"unknown reference mode {reference_mode!r}")
    utts = []
    for i in range(count):
        s = utterance_seed(seed, i)
        if model_kind == "transducer":
            model = generate_random_transducer(s, T, vocab_size, k, topology, smoothness, blank_bias)
        elif model_kind == "segmental":
            model = generate_random_segmental(s, T, vocab_size, k, topology, smoothness)
        else:
            raise TransegError(f"unknown model kind {model_kind!r}")
        if reference_mode == "oracle-best":
            ref = exact_best(model, max_per_frame=None if model.topology.strict else max_per_frame).labels
        else:
            ref = sample_labels(model, np.random.default_rng(s))
        utts.append(Utterance(f"utt{i:04d}", model, tuple(ref)))
    params = {"count": count, "T": T, "vocab_size": vocab_size, "k": k, "topology": str(topology),
              "smoothness": smoothness, "model_kind": model_kind, "blank_bias": blank_bias,
              "reference_mode": reference_mode}
    return UtteranceSet(utts, seed, params)


def rescore_full_sum(model, nbest: Sequence[ScoredSequence]) -> List[ScoredSequence]:
    """Replace Viterbi scores by full-sum scores and re-sort."""
    out = [ScoredSequence(h.labels, full_sum(model, h.labels), h.alignment) for h in nbest]
    return sorted(out, key=lambda h: (h.score, model.vocabulary.ids(h.labels)))


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class GridPoint:
    name: str
    prune_a: PruneConfig
    prune_b: PruneConfig


def q_grid(values: Sequence[float], exhaustive: bool = True) -> List[GridPoint]:
    points = [GridPoint(f"Q={v:g}", PruneConfig(q_prune=v), PruneConfig(q_prune=v)) for v in values]
    if exhaustive:
        points.append(GridPoint("exhaustive", PruneConfig(), PruneConfig()))
    return points


def beam_grid(settings: Sequence[Tuple[int, int]], exhaustive: bool = True) -> List[GridPoint]:
    """``(B, B_t)`` pairs; the time-synchronous side uses ``B`` only."""
    points = [GridPoint(f"B={b},Bt={bt}", PruneConfig(beam=b), PruneConfig(beam=b, boundary_beam=bt))
              for b, bt in settings]
    if exhaustive:
        points.append(GridPoint("exhaustive", PruneConfig(), PruneConfig()))
    return points


DEFAULT_Q_GRID = (4, 6, 8, 10, 12, 14, 20)


@dataclass
class SweepRow:
    grid_point: str
    strategy: str
    wer: float
    search_error_rate: float
    same_trans_pct: float
    same_score_pct: float
    hypotheses_expanded: int
    wall_ms: Optional[float] = None


@dataclass
class SweepTable:
    rows: List[SweepRow]
    details: Dict[str, dict]
    header: dict

    def row(self, grid_point: str, strategy) -> SweepRow:
        strategy = Strategy(strategy).value
        for r in self.rows:
            if r.grid_point == grid_point and r.strategy == strategy:
                return r
        raise KeyError((grid_point, strategy))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.grid_point, r.strategy, _num(r.wer), _num(r.search_error_rate), _num(r.same_trans_pct),
                        _num(r.same_score_pct), r.hypotheses_expanded,
                        "" if r.wall_ms is None else f"{r.wall_ms:.3f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"header": self.header, "rows": [r.__dict__ for r in self.rows],
                           "utterances": self.details}, indent=1, sort_keys=True) + "\n"

    def write(self, csv_path: Union[str, Path, None] = None, json_path: Union[str, Path, None] = None) -> None:
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv(), encoding="utf-8")
        if json_path is not None:
            Path(json_path).write_text(self.to_json(), encoding="utf-8")


def _num(x: float) -> str:
    return f"{x:.6f}"


def _decode_one(utt: Utterance, strategy, prune, lm, lm_scale, max_per_frame):
    try:
        used, _ = prepare_model(utt.model, strategy)
        res = decode(used, strategy, lm=lm, lm_scale=lm_scale, prune=prune, max_per_frame=max_per_frame)
        return res.best, res.stats, None
    except TransegError as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def pruning_sweep(uset: UtteranceSet, strategy_a, strategy_b, grid: Sequence[GridPoint], lm=None,
                  lm_scale: float = 0.0, tolerance: float = SAME_SCORE_TOL, workers: int = 1,
                  timing: bool = False, max_per_frame: int = DEFAULT_MAX_PER_FRAME) -> SweepTable:
    """Decode every utterance under both strategies at every grid point.

    Search errors are counted against the exact Viterbi decision of each
    utterance's model (with the same labels-per-frame cap as the decoders).
    ``wall_ms`` is left empty unless ``timing`` is set, so that reruns give
    byte-identical CSV.
    """
    strategy_a, strategy_b = Strategy(strategy_a), Strategy(strategy_b)
    utts = list(uset)

    def optimum(u):
        return exact_best(u.model, lm, lm_scale, max_per_frame=None if u.model.topology.strict else max_per_frame)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        optima = dict(zip([u.utt_id for u in utts], pool.map(optimum, utts)))
        references = {u.utt_id: u.reference for u in utts}
        rows, details = [], {}
        for gp in grid:
            per = {}
            for strategy, prune in ((strategy_a, gp.prune_a), (strategy_b, gp.prune_b)):
                out = list(pool.map(lambda u: _decode_one(u, strategy, prune, lm, lm_scale, max_per_frame), utts))
                per[strategy] = out
            res_a = [(u.utt_id, o[0]) for u, o in zip(utts, per[strategy_a])]
            res_b = [(u.utt_id, o[0]) for u, o in zip(utts, per[strategy_b])]
            report = compare_decodes(res_a, res_b, tolerance, references, optima)
            entries = {}
            for strategy, res, w, se in ((strategy_a, res_a, report.wer_a, report.search_error_rate_a),
                                         (strategy_b, res_b, report.wer_b, report.search_error_rate_b)):
                stats = [o[1] for o in per[strategy]]
                rows.append(SweepRow(gp.name, strategy.value, w, se, report.same_trans_pct, report.same_score_pct,
                                     sum(s.expanded for s in stats if s is not None),
                                     sum(s.wall_ms for s in stats if s is not None) if timing else None))
                entries[strategy.value] = [
                    {"utt_id": u.utt_id, "labels": _labels(r), "score": None if r is None else r.score,
                     "search_error": is_search_error(r, optima[u.utt_id]), "error": o[2]}
                    for u, (_, r), o in zip(utts, res, per[strategy])]
            details[gp.name] = {"strategies": entries, "comparison": report.records}
    header = {"note": WER_UNIT_NOTE, "seed": uset.seed, "set": uset.params, "lm_scale": lm_scale,
              "tolerance": tolerance, "strategy_a": strategy_a.value, "strategy_b": strategy_b.value,
              "grid": [{"name": g.name, "prune_a": g.prune_a.as_dict(), "prune_b": g.prune_b.as_dict()} for g in grid],
              "oracle": [{"utt_id": i, "labels": list(o.labels), "score": o.score} for i, o in optima.items()]}
    return SweepTable(rows, details, header)
