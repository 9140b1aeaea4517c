"""Tabular transducer and segmental models.

The encoder output never exists as data: every distribution is indexed by
frame numbers and by the last ``k`` emitted labels (BOS-padded).  A
transducer may additionally condition on the frame of its last label
emission (``boundary_dependent``); that is what a segmental model turns
into when rewritten as a transducer.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from .core import (
    BLANK,
    BOS,
    INF,
    SENTENCE_END,
    DomainError,
    Topology,
    TopologyKind,
    TransegError,
    Vocabulary,
    context_of,
    log_sum,
    to_prob,
    to_score,
)

FORMAT_VERSION = 1
NORMALIZATION_TOL = 1e-12

# Inverse temperature at smoothness 0; with the +2 margin on the winning
# logit this keeps the top probability above 0.9998 for |V| <= 3.
SHARPNESS_MAX = 12.0

Row = Dict[str, float]
Context = Tuple[str, ...]


class ModelFormatError(TransegError, ValueError):
    """A model or LM file could not be parsed."""


class VersionError(ModelFormatError):
    """Unsupported ``format_version``."""


def contexts(vocab: Vocabulary, k: int) -> List[Context]:
    """Every BOS-padded label context of order ``k``."""
    out = []
    for n_real in range(k + 1):
        for tail in itertools.product(vocab.labels, repeat=n_real):
            out.append((BOS,) * (k - n_real) + tail)
    return out


def _emitted(ctx: Context) -> Tuple[int, bool]:
    """(minimum number of labels emitted, whether that number is exact)."""
    n_real = sum(1 for c in ctx if c != BOS)
    return n_real, n_real < len(ctx)


def segment_state_reachable(topology: Topology, ctx: Context, t_prev: int) -> bool:
    """Can a segment start after boundary ``t_prev`` with label context ``ctx``?"""
    n, exact = _emitted(ctx)
    if exact and n == 0:
        return t_prev == topology.t0
    if n == 0:
        return topology.t0 <= t_prev <= topology.T
    lo = max(1, n) if topology.strict else 1
    return lo <= t_prev <= topology.T


def frame_state_reachable(topology: Topology, ctx: Context, t: int) -> bool:
    """Can the grid sit at frame ``t`` with label context ``ctx``?"""
    if not 1 <= t <= topology.T:
        return False
    n, _ = _emitted(ctx)
    return n <= t - 1 if topology.strict else True


def _fmt_ctx(ctx: Context) -> str:
    return "(" + ",".join(ctx) + ")"


@dataclass(frozen=True, eq=False)
class TransducerModel:
    """q(y | t, last-k labels[, last emission frame]) over V and BLANK, stored as scores."""

    vocabulary: Vocabulary
    topology: Topology
    context_order: int
    table: Mapping[tuple, Row]
    boundary_dependent: bool = False
    unreachable: FrozenSet[tuple] = frozenset()

    kind = "transducer"

    @property
    def symbols(self) -> Tuple[str, ...]:
        return self.vocabulary.labels + (BLANK,)

    def key(self, t: int, labels: Sequence[str], last_frame: Optional[int] = None) -> tuple:
        ctx = context_of(labels, self.context_order)
        if not self.boundary_dependent:
            return (t, ctx)
        if last_frame is None:
            if labels:
                raise DomainError("boundary-dependent model needs the last emission frame")
            last_frame = self.topology.t0
        return (t, last_frame, ctx)

    def step(self, t: int, labels: Sequence[str] = (), last_frame: Optional[int] = None) -> Row:
        if not 1 <= t <= self.topology.T:
            raise DomainError(f"frame {t} outside [1, {self.topology.T}]")
        key = self.key(t, labels, last_frame)
        if key in self.unreachable:
            return {y: INF for y in self.symbols}
        try:
            return self.table[key]
        except KeyError:
            raise DomainError(f"no table row for {key}") from None

    def expected_keys(self) -> List[tuple]:
        topo, k = self.topology, self.context_order
        keys = []
        for ctx in contexts(self.vocabulary, k):
            for t in range(1, topo.T + 1):
                if not self.boundary_dependent:
                    if frame_state_reachable(topo, ctx, t):
                        keys.append((t, ctx))
                    continue
                for t_prev in range(topo.t0, t + 1):
                    if segment_state_reachable(topo, ctx, t_prev) and t >= topo.first_frame(t_prev):
                        keys.append((t, t_prev, ctx))
        return keys


@dataclass(frozen=True, eq=False)
class SegmentalModel:
    """Boundary rows p(t_s | t_{s-1}, ctx) and label rows p(a_s | t_{s-1}, t_s, ctx), as scores.

    ``native`` models have boundary rows summing to one.  Models produced
    from a transducer (``native=False``) may leave boundary mass unassigned
    and carry an odds-valued sentence-end entry at ``t_s = T``.
    """

    vocabulary: Vocabulary
    topology: Topology
    context_order: int
    boundary_table: Mapping[tuple, Dict[int, float]]
    label_table: Mapping[tuple, Row]
    native: bool = True
    unreachable: FrozenSet[tuple] = frozenset()

    kind = "segmental"

    def _check_prev(self, t_prev: int) -> None:
        if not self.topology.t0 <= t_prev <= self.topology.T:
            raise DomainError(f"previous boundary {t_prev} outside [{self.topology.t0}, {self.topology.T}]")

    def boundary(self, t_prev: int, labels: Sequence[str] = ()) -> Dict[int, float]:
        self._check_prev(t_prev)
        if self.topology.strict and t_prev == self.topology.T:
            return {}
        key = (t_prev, context_of(labels, self.context_order))
        if key in self.unreachable:
            return {t: INF for t in self.topology.candidates(t_prev)}
        try:
            return self.boundary_table[key]
        except KeyError:
            raise DomainError(f"no boundary row for {key}") from None

    def label(self, t_prev: int, t: int, labels: Sequence[str] = ()) -> Row:
        self._check_prev(t_prev)
        if t not in self.topology.candidates(t_prev):
            raise DomainError(f"boundary {t} not admissible after {t_prev} under {self.topology}")
        key = (t_prev, t, context_of(labels, self.context_order))
        if key in self.unreachable:
            return {}
        try:
            return self.label_table[key]
        except KeyError:
            raise DomainError(f"no label row for {key}") from None

    def final(self, t_prev: int, labels: Sequence[str] = ()) -> float:
        """Score of closing the sequence after boundary ``t_prev`` (the (#, T) segment)."""
        T = self.topology.T
        if self.topology.strict and t_prev == T:
            return 0.0
        b = self.boundary(t_prev, labels).get(T, INF)
        if b == INF:
            return INF
        return b + self.label(t_prev, T, labels).get(SENTENCE_END, INF)

    def expected_boundary_keys(self) -> List[tuple]:
        topo = self.topology
        keys = []
        for t_prev in range(topo.t0, topo.T + 1):
            if topo.strict and t_prev == topo.T:
                continue
            for ctx in contexts(self.vocabulary, self.context_order):
                if segment_state_reachable(topo, ctx, t_prev):
                    keys.append((t_prev, ctx))
        return keys

    def expected_label_keys(self) -> List[tuple]:
        return [(t_prev, t, ctx) for t_prev, ctx in self.expected_boundary_keys()
                for t in self.topology.candidates(t_prev)]


Model = Union[TransducerModel, SegmentalModel]


def transducer_step(model, emitted_labels: Sequence[str], t: int, last_frame: Optional[int] = None) -> Row:
    """Distribution over V and BLANK at frame ``t`` after ``emitted_labels``."""
    return model.step(t, tuple(emitted_labels), last_frame)


def segmental_boundary(model, prev_boundary: int, history: Sequence[str]) -> Dict[int, float]:
    return model.boundary(prev_boundary, tuple(history))


def segmental_label(model, prev_boundary: int, boundary: int, history: Sequence[str]) -> Row:
    return model.label(prev_boundary, boundary, tuple(history))


def boundary_deficiency(row: Mapping[int, float]) -> float:
    """Probability mass a boundary row leaves unassigned."""
    return 1.0 - math.fsum(to_prob(s) for s in row.values())


# ---------------------------------------------------------------------------
# random generation


def _random_scores(rng: np.random.Generator, n: int, smoothness: float,
                   bias: Optional[np.ndarray] = None) -> np.ndarray:
    z = rng.uniform(0.0, 1.0, size=n)
    z[rng.integers(n)] += 2.0
    logits = SHARPNESS_MAX * (1.0 - smoothness) * z
    if bias is not None:
        logits = logits + bias
    return -log_softmax(logits)


def _check_params(T: int, vocab_size: int, k: int, smoothness: float) -> None:
    if vocab_size < 1 or T < 1 or k < 0:
        raise DomainError("need vocab_size >= 1, T >= 1, k >= 0")
    if not 0.0 <= smoothness <= 1.0:
        raise DomainError(f"smoothness must lie in [0, 1], got {smoothness}")


def default_vocabulary(size: int) -> Vocabulary:
    return Vocabulary(tuple("abcdefghijklmnopqrstuvwxyz"[:size]) if size <= 26
                      else tuple(f"l{i}" for i in range(size)))


def generate_random_transducer(seed: int, T: int, vocab_size: int, k: int,
                               topology: Union[TopologyKind, str], smoothness: float,
                               blank_bias: float = 0.0) -> TransducerModel:
    """Seeded tabular transducer; ``smoothness`` 1 gives uniform rows, 0 near one-hot rows.

    ``blank_bias`` is added to the blank logit after the temperature is applied.
    """
    _check_params(T, vocab_size, k, smoothness)
    vocab = default_vocabulary(vocab_size)
    topo = Topology(TopologyKind(topology), T)
    rng = np.random.default_rng(seed)
    symbols = vocab.labels + (BLANK,)
    bias = np.zeros(len(symbols))
    bias[-1] = blank_bias
    table = {}
    for ctx in contexts(vocab, k):
        for t in range(1, T + 1):
            scores = _random_scores(rng, len(symbols), smoothness, bias)
            if frame_state_reachable(topo, ctx, t):
                table[(t, ctx)] = dict(zip(symbols, scores.tolist()))
    return TransducerModel(vocab, topo, k, table)


def generate_random_segmental(seed: int, T: int, vocab_size: int, k: int,
                              topology: Union[TopologyKind, str], smoothness: float) -> SegmentalModel:
    """Seeded native segmental model with normalized boundary and label rows."""
    _check_params(T, vocab_size, k, smoothness)
    vocab = default_vocabulary(vocab_size)
    topo = Topology(TopologyKind(topology), T)
    rng = np.random.default_rng(seed)
    model = SegmentalModel(vocab, topo, k, {}, {})
    boundary_table, label_table = {}, {}
    for t_prev, ctx in model.expected_boundary_keys():
        cands = list(topo.candidates(t_prev))
        boundary_table[(t_prev, ctx)] = dict(zip(cands, _random_scores(rng, len(cands), smoothness).tolist()))
        for t in cands:
            syms = vocab.labels + ((SENTENCE_END,) if t == T else ())
            label_table[(t_prev, t, ctx)] = dict(zip(syms, _random_scores(rng, len(syms), smoothness).tolist()))
    return SegmentalModel(vocab, topo, k, boundary_table, label_table)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    row: str
    defect: str

    def __str__(self):
        return f"{self.row}: {self.defect}"


def _row_sum(row: Mapping) -> float:
    return math.fsum(to_prob(s) for s in row.values())


def _bad_scores(row: Mapping) -> bool:
    return any(isinstance(s, float) and math.isnan(s) for s in row.values())


def validate_model(model: Model, native: Optional[bool] = None) -> List[Violation]:
    """All invariant violations of a tabular model; never raises.

    ``native`` overrides the model's own flag for segmental boundary rows
    (True demands exact normalization, False allows deficiency).
    """
    try:
        if isinstance(model, TransducerModel):
            return _validate_transducer(model)
        if isinstance(model, SegmentalModel):
            return _validate_segmental(model, model.native if native is None else native)
        return [Violation("model", f"not a tabular model: {type(model).__name__}")]
    except Exception as exc:  # validation reports, it does not throw
        return [Violation("model", f"validation aborted: {exc!r}")]


def _validate_transducer(m: TransducerModel) -> List[Violation]:
    out = []
    allowed = set(m.symbols)
    for key in m.expected_keys():
        if key not in m.table and key not in m.unreachable:
            out.append(Violation(_transducer_row_name(m, key), "missing row"))
    for key in sorted(m.table, key=_sort_key):
        row, name = m.table[key], _transducer_row_name(m, key)
        unknown = set(row) - allowed
        if unknown:
            out.append(Violation(name, f"unknown symbols {sorted(unknown)}"))
        if _bad_scores(row):
            out.append(Violation(name, "NaN score"))
            continue
        total = _row_sum(row)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            out.append(Violation(name, f"row sums to {total:.15g}"))
    return out


def _transducer_row_name(m: TransducerModel, key: tuple) -> str:
    if m.boundary_dependent:
        t, t_prev, ctx = key
        return f"t={t} t_prev={t_prev} context={_fmt_ctx(ctx)}"
    t, ctx = key
    return f"t={t} context={_fmt_ctx(ctx)}"


def _validate_segmental(m: SegmentalModel, native: bool) -> List[Violation]:
    out = []
    T = m.topology.T
    for key in m.expected_boundary_keys():
        if key not in m.boundary_table and key not in m.unreachable:
            out.append(Violation(f"boundary t_prev={key[0]} context={_fmt_ctx(key[1])}", "missing row"))
    for key in m.expected_label_keys():
        if key not in m.label_table and key not in m.unreachable:
            out.append(Violation(f"label t_prev={key[0]} t={key[1]} context={_fmt_ctx(key[2])}", "missing row"))

    for (t_prev, ctx) in sorted(m.boundary_table, key=_sort_key):
        row = m.boundary_table[(t_prev, ctx)]
        name = f"boundary t_prev={t_prev} context={_fmt_ctx(ctx)}"
        allowed = set(m.topology.candidates(t_prev))
        outside = sorted(t for t in row if t not in allowed)
        if outside:
            out.append(Violation(name, f"boundaries {outside} outside the admissible range"))
        if _bad_scores(row):
            out.append(Violation(name, "NaN score"))
            continue
        total = _row_sum(row)
        if total > 1.0 + NORMALIZATION_TOL:
            out.append(Violation(name, f"row sums to {total:.15g} > 1"))
        elif native and abs(total - 1.0) > NORMALIZATION_TOL:
            out.append(Violation(name, f"row sums to {total:.15g}"))

    allowed_syms = set(m.vocabulary.labels) | {SENTENCE_END}
    for (t_prev, t, ctx) in sorted(m.label_table, key=_sort_key):
        row = m.label_table[(t_prev, t, ctx)]
        name = f"label t_prev={t_prev} t={t} context={_fmt_ctx(ctx)}"
        unknown = set(row) - allowed_syms
        if unknown:
            out.append(Violation(name, f"unknown symbols {sorted(unknown)}"))
        if _bad_scores(row):
            out.append(Violation(name, "NaN score"))
            continue
        if t < T and to_prob(row.get(SENTENCE_END, INF)) > 0.0:
            out.append(Violation(name, f"sentence end before T (t={t} < {T})"))
        if native or t < T:
            total = _row_sum(row)
        else:
            total = _row_sum({a: s for a, s in row.items() if a != SENTENCE_END})
        if abs(total - 1.0) > NORMALIZATION_TOL:
            out.append(Violation(name, f"row sums to {total:.15g}"))
    return out


# ---------------------------------------------------------------------------
# serialization


def _sort_key(key: tuple) -> tuple:
    return tuple(list(k) if isinstance(k, tuple) else k for k in key)


def format_number(x: float) -> str:
    return format(x, ".17g")


def canonical_json(obj, indent: int = 0, row_lists: Tuple[str, ...] = ("rows",)) -> str:
    """Deterministic JSON: 17 significant digits, one row object per line."""
    pad = "  " * indent
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number {obj} cannot be serialized")
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(canonical_json(v, 0) for v in obj) + "]"
    if isinstance(obj, dict):
        if indent == 0 and not any(k in row_lists for k in obj):
            return "{" + ", ".join(f"{json.dumps(k)}: {canonical_json(v)}" for k, v in obj.items()) + "}"
        inner = "  " * (indent + 1)
        parts = []
        for k, v in obj.items():
            if k in row_lists and isinstance(v, list):
                body = (",\n").join(inner + "  " + canonical_json(r) for r in v)
                text = "[\n" + body + "\n" + inner + "]" if v else "[]"
            else:
                text = canonical_json(v, 0)
            parts.append(f"{inner}{json.dumps(k)}: {text}")
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _probs(row: Mapping, order: Sequence) -> dict:
    return {str(s): to_prob(row[s]) for s in order if s in row}


def model_to_dict(model: Model) -> dict:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "topology": {"kind": model.topology.kind.value, "T": model.topology.T},
        "vocabulary": list(model.vocabulary.labels),
        "context_order": model.context_order,
    }
    rows = []
    if isinstance(model, TransducerModel):
        header["boundary_dependent"] = model.boundary_dependent
        keys = sorted(set(model.table) | set(model.unreachable), key=_sort_key)
        for key in keys:
            if model.boundary_dependent:
                t, t_prev, ctx = key
                row = {"t": t, "t_prev": t_prev, "context": list(ctx)}
            else:
                t, ctx = key
                row = {"t": t, "context": list(ctx)}
            if key in model.unreachable:
                row["unreachable"] = True
            else:
                row["probs"] = _probs(model.table[key], model.symbols)
            rows.append(row)
    else:
        header["native"] = model.native
        b_keys = {k for k in model.unreachable if len(k) == 2} | set(model.boundary_table)
        l_keys = {k for k in model.unreachable if len(k) == 3} | set(model.label_table)
        entries = [((k[0], -1, list(k[1])), "boundary", k) for k in b_keys]
        entries += [((k[0], k[1], list(k[2])), "label", k) for k in l_keys]
        entries.sort(key=lambda e: e[0])
        syms = model.vocabulary.labels + (SENTENCE_END,)
        for _, table, key in entries:
            if table == "boundary":
                row = {"table": "boundary", "t_prev": key[0], "context": list(key[1])}
                if key in model.unreachable:
                    row["unreachable"] = True
                else:
                    src = model.boundary_table[key]
                    row["probs"] = _probs(src, sorted(src))
            else:
                row = {"table": "label", "t_prev": key[0], "t_cur": key[1], "context": list(key[2])}
                if key in model.unreachable:
                    row["unreachable"] = True
                else:
                    row["probs"] = _probs(model.label_table[key], syms)
            rows.append(row)
    header["rows"] = rows
    return header


def dumps_model(model: Model) -> str:
    return canonical_json(model_to_dict(model)) + "\n"


def save_model(model: Model, destination: Union[str, Path]) -> None:
    Path(destination).write_text(dumps_model(model), encoding="utf-8")


def _field(obj: dict, name: str, where: str):
    try:
        return obj[name]
    except (KeyError, TypeError):
        raise ModelFormatError(f"{where}: missing field '{name}'") from None


def _parse_json(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ModelFormatError("top level: expected a JSON object")
    version = _field(data, "format_version", "top level")
    if version != FORMAT_VERSION:
        raise VersionError(f"format_version: unsupported version {version!r} (expected {FORMAT_VERSION})")
    return data


def _scores(probs, where: str, allowed, convert=str) -> dict:
    if not isinstance(probs, dict):
        raise ModelFormatError(f"{where}.probs: expected an object")
    out = {}
    for sym, p in probs.items():
        try:
            key = convert(sym)
        except ValueError:
            raise ModelFormatError(f"{where}.probs: bad key {sym!r}") from None
        if key not in allowed:
            raise ModelFormatError(f"{where}.probs: unknown symbol {sym!r}")
        if not isinstance(p, (int, float)) or isinstance(p, bool) or p < 0:
            raise ModelFormatError(f"{where}.probs[{sym!r}]: expected a nonnegative number")
        out[key] = to_score(float(p))
    return out


def _context(row: dict, where: str, vocab: Vocabulary, k: int) -> Context:
    ctx = _field(row, "context", where)
    if not isinstance(ctx, list) or len(ctx) != k:
        raise ModelFormatError(f"{where}.context: expected a list of {k} labels")
    for c in ctx:
        if c != BOS and c not in vocab:
            raise ModelFormatError(f"{where}.context: unknown symbol {c!r}")
    return tuple(ctx)


def model_from_dict(data: dict) -> Model:
    kind = _field(data, "kind", "top level")
    topo_d = _field(data, "topology", "top level")
    try:
        topo = Topology(TopologyKind(_field(topo_d, "kind", "topology")), int(_field(topo_d, "T", "topology")))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"topology: {exc}") from None
    try:
        vocab = Vocabulary(tuple(_field(data, "vocabulary", "top level")))
    except (DomainError, TypeError) as exc:
        raise ModelFormatError(f"vocabulary: {exc}") from None
    k = _field(data, "context_order", "top level")
    if not isinstance(k, int) or k < 0:
        raise ModelFormatError("context_order: expected a nonnegative integer")
    rows = _field(data, "rows", "top level")
    if not isinstance(rows, list):
        raise ModelFormatError("rows: expected a list")

    if kind == "transducer":
        dep = bool(data.get("boundary_dependent", False))
        table, unreachable = {}, set()
        allowed = set(vocab.labels) | {BLANK}
        for i, row in enumerate(rows):
            where = f"rows[{i}]"
            t = _field(row, "t", where)
            ctx = _context(row, where, vocab, k)
            key = (t, _field(row, "t_prev", where), ctx) if dep else (t, ctx)
            if row.get("unreachable"):
                unreachable.add(key)
            else:
                table[key] = _scores(_field(row, "probs", where), where, allowed)
        return TransducerModel(vocab, topo, k, table, dep, frozenset(unreachable))

    if kind == "segmental":
        b_table, l_table, unreachable = {}, {}, set()
        l_allowed = set(vocab.labels) | {SENTENCE_END}
        for i, row in enumerate(rows):
            where = f"rows[{i}]"
            which = _field(row, "table", where)
            t_prev = _field(row, "t_prev", where)
            ctx = _context(row, where, vocab, k)
            if which == "boundary":
                key = (t_prev, ctx)
                if row.get("unreachable"):
                    unreachable.add(key)
                else:
                    b_table[key] = _scores(_field(row, "probs", where), where, set(range(0, topo.T + 1)), int)
            elif which == "label":
                key = (t_prev, _field(row, "t_cur", where), ctx)
                if row.get("unreachable"):
                    unreachable.add(key)
                else:
                    l_table[key] = _scores(_field(row, "probs", where), where, l_allowed)
            else:
                raise ModelFormatError(f"{where}.table: expected 'boundary' or 'label', got {which!r}")
        return SegmentalModel(vocab, topo, k, b_table, l_table, bool(data.get("native", True)),
                              frozenset(unreachable))

    raise ModelFormatError(f"kind: expected 'transducer' or 'segmental', got {kind!r}")


def loads_model(text: str) -> Model:
    return model_from_dict(_parse_json(text))


def load_model(source: Union[str, Path]) -> Model:
    return loads_model(Path(source).read_text(encoding="utf-8"))
