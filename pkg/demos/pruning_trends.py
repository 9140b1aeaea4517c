"""Small versions of the two pruning sweeps, printed as tables.

A smooth suite under score-threshold pruning shows label-synchronous search
losing the optimum at small thresholds while time-synchronous search holds
on; a sharp suite under beam-size pruning shows the gap closing.  Error
rates are over labels, not words.

    python demos/pruning_trends.py [utterances]
"""

import sys

from transeg import Strategy, beam_grid, generate_utterance_set, pruning_sweep, q_grid


def table(sweep, title):
    print(f"\n{title}")
    print(f"  {'setting':12s} {'strategy':22s} {'LER':>6s} {'search err':>10s} {'same-trans':>10s} "
          f"{'same-score':>10s} {'expanded':>9s}")
    for r in sweep.rows:
        print(f"  {r.grid_point:12s} {r.strategy:22s} {r.wer:6.3f} {r.search_error_rate:10.3f} "
              f"{r.same_trans_pct:10.1f} {r.same_score_pct:10.1f} {r.hypotheses_expanded:9d}")


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 60
    smooth = generate_utterance_set(2024, n, 7, 2, 1, "strict_monotonic", 0.97)
    table(pruning_sweep(smooth, Strategy.TIME_SYNC, Strategy.LABEL_SYNC_FULL, q_grid([1, 2, 4, 10, 20])),
          f"smooth suite ({n} utterances), score threshold")
    sharp = generate_utterance_set(2025, n, 7, 3, 1, "strict_monotonic", 0.1, blank_bias=-2.0)
    table(pruning_sweep(sharp, Strategy.TIME_SYNC, Strategy.LABEL_SYNC_TWO_STAGE, beam_grid([(1, 1), (4, 4), (16, 16)])),
          f"sharp suite ({n} utterances), beam size")
