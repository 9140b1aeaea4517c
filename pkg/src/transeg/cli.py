"""``transeg`` command line: generate, transform, decode, compare, sweep, verify.

Exit codes: 0 success, 1 validation or audit failure, 2 usage error.
``TRANSEG_SEED`` overrides every seed given on the command line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

from .core import INF, TopologyKind, TransegError
from .evalharness import (
    DEFAULT_Q_GRID,
    SAME_SCORE_TOL,
    beam_grid,
    compare_decodes,
    generate_utterance_set,
    pruning_sweep,
    q_grid,
)
from .lm import dumps_lm, generate_random_lm, load_lm
from .models import (
    ModelFormatError,
    dumps_model,
    generate_random_segmental,
    generate_random_transducer,
    loads_model,
    validate_model,
)
from .oracle import ScoredSequence, full_sum, full_sum_transducer, label_sequences, total_mass
from .search import DEFAULT_MAX_PER_FRAME, PruneConfig, Strategy, decode
from .transform import SegmentalView, TransducerView, materialize

EQUIVALENCE_TOL = 1e-9
ROUND_TRIP_TOL = 1e-12
MASS_TOL = 1e-9


class AuditFailure(TransegError):
    pass


def _seed(args) -> int:
    env = os.environ.get("TRANSEG_SEED")
    return int(env) if env not in (None, "") else args.seed


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _config(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# model files, including lazy views


def load_any(path) -> object:
    """A model file, or a view file that wraps another model file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if text.lstrip().startswith("{") else None
    if isinstance(data, dict) and data.get("kind") == "view":
        inner = load_any((path.parent / data["source"]).resolve())
        return _view(inner, data["direction"])
    return loads_model(text)


def _view(model, direction: str):
    if direction == "t2s":
        if model.kind != "transducer":
            raise TransegError("t2s expects a transducer model")
        return SegmentalView(model)
    if direction == "s2t":
        if model.kind != "segmental":
            raise TransegError("s2t expects a segmental model")
        return TransducerView(model)
    raise TransegError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    seed = _seed(args)
    files = []
    for i in range(args.count):
        s = seed + i
        if args.kind == "transducer":
            text = dumps_model(generate_random_transducer(s, args.T, args.vocab_size, args.k, args.topology,
                                                          args.smoothness, args.blank_bias))
        elif args.kind == "segmental":
            text = dumps_model(generate_random_segmental(s, args.T, args.vocab_size, args.k, args.topology,
                                                         args.smoothness))
        else:
            from .models import default_vocabulary
            text = dumps_lm(generate_random_lm(s, default_vocabulary(args.vocab_size), args.k + 1, args.smoothness))
        if args.count == 1:
            _emit(text, args.out)
            files.append(args.out or "-")
        else:
            out_dir = Path(args.out or ".")
            out_dir.mkdir(parents=True, exist_ok=True)
            target = out_dir / f"{args.kind}_{i:04d}.json"
            target.write_text(text, encoding="utf-8")
            files.append(str(target))
    if args.count > 1 or args.out:
        print(_dump({"config": _config(args, seed=seed), "files": files}), end="", file=sys.stderr)
    return 0


def cmd_transform(args) -> int:
    model = load_any(args.input)
    view = _view(model, args.direction)
    if args.materialize:
        _emit(dumps_model(materialize(view)), args.out)
        return 0
    if not args.out:
        raise TransegError("a lazy view needs --out so its source path can be stored relative to it")
    source = os.path.relpath(Path(args.input).resolve(), Path(args.out).resolve().parent)
    _emit(_dump({"format_version": 1, "kind": "view", "direction": args.direction, "source": source}), args.out)
    return 0


def _prune(args) -> PruneConfig:
    return PruneConfig(q_prune=INF if args.q_prune is None else args.q_prune, beam=args.beam_b,
                       boundary_beam=args.beam_bt)


def _seq_dict(s: ScoredSequence) -> dict:
    return {"labels": list(s.labels), "score": s.score, "boundaries": list(s.boundaries)}


def cmd_decode(args) -> int:
    model = load_any(args.model)
    lm = load_lm(args.lm) if args.lm else None
    res = decode(model, args.strategy, lm=lm, lm_scale=args.lm_scale, prune=_prune(args), nbest=args.nbest,
                 max_per_frame=args.max_per_frame)
    stats = res.stats.as_dict()
    if not args.timing:
        stats.pop("wall_ms")
    meta = dict(res.metadata)
    if meta.get("transform"):
        meta["note"] = f"model auto-wrapped with {meta['transform']} for {args.strategy}"
    utt_id = args.utt_id or Path(args.model).stem
    _emit(_dump({"config": _config(args), "utt_id": utt_id, "metadata": meta, "stats": stats,
                 "nbest": [_seq_dict(s) for s in res.nbest]}), args.out)
    return 0


def _read_results(path) -> List[tuple]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = data["results"] if "results" in data else [data]
    out = []
    for e in entries:
        best = e["nbest"][0] if e.get("nbest") else (e if "labels" in e else None)
        seq = None if best is None or best.get("labels") is None else \
            ScoredSequence(tuple(best["labels"]), float(best["score"]))
        out.append((e["utt_id"], seq))
    return sorted(out, key=lambda x: x[0])


def cmd_compare(args) -> int:
    a = [r for p in args.a for r in _read_results(p)]
    b = [r for p in args.b for r in _read_results(p)]
    report = compare_decodes(sorted(a, key=lambda x: x[0]), sorted(b, key=lambda x: x[0]), args.tolerance)
    _emit(_dump({"config": _config(args), "report": report.as_dict()}), args.out)
    return 0


def _parse_grid(args):
    if args.beam_grid:
        pairs = []
        for item in args.beam_grid.split(","):
            b, _, bt = item.partition(":")
            pairs.append((int(b), int(bt or b)))
        return beam_grid(pairs, exhaustive=not args.no_exhaustive)
    values = [float(v) for v in args.q_grid.split(",")] if args.q_grid else list(DEFAULT_Q_GRID)
    return q_grid(values, exhaustive=not args.no_exhaustive)


def cmd_sweep(args) -> int:
    seed = _seed(args)
    uset = generate_utterance_set(seed, args.count, args.T, args.vocab_size, args.k, args.topology,
                                  args.smoothness, args.model_kind, args.blank_bias, args.reference_mode,
                                  args.max_per_frame)
    lm = load_lm(args.lm) if args.lm else None
    table = pruning_sweep(uset, args.strategy_a, args.strategy_b, _parse_grid(args), lm=lm,
                          lm_scale=args.lm_scale, tolerance=args.tolerance, workers=args.workers,
                          timing=args.timing, max_per_frame=args.max_per_frame)
    table.header["config"] = _config(args, seed=seed)
    if args.csv:
        Path(args.csv).write_text(table.to_csv(), encoding="utf-8")
    else:
        sys.stdout.write(table.to_csv())
    if args.json:
        Path(args.json).write_text(table.to_json(), encoding="utf-8")
    return 0


def audit(model, s_max: int = 3) -> dict:
    """Normalization, two-route full sums and equivalence through the opposite view."""
    checks = []

    def check(name, ok, detail=""):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    violations = validate_model(model) if hasattr(model, "table") or hasattr(model, "boundary_table") else []
    check("normalization", not violations, "; ".join(map(str, violations[:20])))
    if violations:
        return {"passed": False, "checks": checks}
    topo = model.topology
    limit = topo.T if topo.strict else s_max
    other = SegmentalView(model) if model.kind == "transducer" else TransducerView(model)
    worst_eq, worst_dp = 0.0, 0.0
    for seq in label_sequences(model.vocabulary, limit):
        a, b = full_sum(model, seq), full_sum(other, seq)
        if a != b:
            worst_eq = max(worst_eq, abs(a - b))
        tr = model if model.kind == "transducer" else other
        d = full_sum_transducer(tr, seq, method="dp")
        e = full_sum_transducer(tr, seq, method="enumerate")
        if d != e:
            worst_dp = max(worst_dp, abs(d - e))
    check("equivalence", worst_eq <= EQUIVALENCE_TOL, f"max |diff| = {worst_eq:.3e} over S <= {limit}")
    check("dp_vs_enumeration", worst_dp <= 1e-10, f"max |diff| = {worst_dp:.3e}")
    report = total_mass(model, s_max=s_max)
    if report.exact:
        check("total_mass", abs(report.mass - 1.0) <= MASS_TOL, f"mass = {report.mass:.15g}")
    else:
        check("total_mass_lower_bound", report.mass <= 1.0 + MASS_TOL,
              f"mass of S <= {s_max} = {report.mass:.15g}")
    return {"passed": all(c["ok"] for c in checks), "checks": checks}


def cmd_verify(args) -> int:
    try:
        model = load_any(args.model)
    except ModelFormatError as exc:
        result = {"passed": False, "checks": [{"check": "parse", "ok": False, "detail": str(exc)}]}
    else:
        result = audit(model, args.s_max)
    _emit(_dump({"config": _config(args), **result}), args.out)
    for c in result["checks"]:
        if not c["ok"]:
            print(f"FAILED {c['check']}: {c['detail']}", file=sys.stderr)
    return 0 if result["passed"] else 1


# ---------------------------------------------------------------------------
# parser


def _model_params(p, with_kind=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=int, default=5, help="number of frames")
    p.add_argument("--vocab-size", type=int, default=3)
    p.add_argument("--k", type=int, default=1, help="label context order")
    p.add_argument("--topology", choices=[t.value for t in TopologyKind], default="strict_monotonic")
    p.add_argument("--smoothness", type=float, default=0.5)
    p.add_argument("--blank-bias", type=float, default=0.0)


def _prune_flags(p):
    p.add_argument("--q-prune", type=float, default=None, help="score threshold Q_prune in nats")
    p.add_argument("--beam-b", type=int, default=None, help="beam size B")
    p.add_argument("--beam-bt", type=int, default=None, help="boundary beam B_t (two-stage search)")
    p.add_argument("--lm", default=None, help="LM file")
    p.add_argument("--lm-scale", type=float, default=0.0, help="LM scale lambda")
    p.add_argument("--max-per-frame", type=int, default=DEFAULT_MAX_PER_FRAME)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="transeg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write seeded random model or LM files")
    p.add_argument("--kind", choices=["transducer", "segmental", "lm"], default="transducer")
    _model_params(p)
    p.add_argument("--count", type=int, default=1, help="number of files (written to the --out directory)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("transform", help="rewrite a model as the other kind")
    p.add_argument("--input", required=True)
    p.add_argument("--direction", choices=["t2s", "s2t"], required=True)
    p.add_argument("--materialize", action=argparse.BooleanOptionalAction, default=True,
                   help="bake the view into tables (default) or store a lazy reference")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("decode", help="beam-search one model")
    p.add_argument("--model", required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.TIME_SYNC.value)
    _prune_flags(p)
    p.add_argument("--nbest", type=int, default=1)
    p.add_argument("--utt-id", default=None)
    p.add_argument("--timing", action="store_true", help="include wall time (breaks byte-identical reruns)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("compare", help="same-transcription / same-score report of two result sets")
    p.add_argument("--a", nargs="+", required=True)
    p.add_argument("--b", nargs="+", required=True)
    p.add_argument("--tolerance", type=float, default=SAME_SCORE_TOL)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="pruning sweep over a synthetic utterance set")
    _model_params(p)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--model-kind", choices=["transducer", "segmental"], default="transducer")
    p.add_argument("--reference-mode", choices=["oracle-best", "sampled"], default="oracle-best")
    p.add_argument("--strategy-a", choices=[s.value for s in Strategy], default=Strategy.TIME_SYNC.value)
    p.add_argument("--strategy-b", choices=[s.value for s in Strategy], default=Strategy.LABEL_SYNC_FULL.value)
    p.add_argument("--q-grid", default=None, help="comma-separated Q_prune values (default 4,6,8,10,12,14,20)")
    p.add_argument("--beam-grid", default=None, help="comma-separated B:B_t pairs, replaces the Q grid")
    p.add_argument("--no-exhaustive", action="store_true", help="omit the unpruned grid point")
    p.add_argument("--lm", default=None)
    p.add_argument("--lm-scale", type=float, default=0.0)
    p.add_argument("--tolerance", type=float, default=SAME_SCORE_TOL)
    p.add_argument("--max-per-frame", type=int, default=DEFAULT_MAX_PER_FRAME)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--csv", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="normalization and equivalence audit of one model file")
    p.add_argument("--model", required=True)
    p.add_argument("--s-max", type=int, default=3, help="longest label sequence checked on the RNN-T grid")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TransegError, OSError, ValueError, KeyError) as exc:
        print(f"transeg {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
