"""Decode the same models with all three searches, unpruned and pruned.

Unpruned, every strategy returns the exact Viterbi decision.  Two small
hand-built models then show how pruning goes wrong: a tight score
threshold commits to a locally attractive first label, and a boundary beam
of one commits to a segment end before any label score is seen.

    python demos/search_comparison.py
"""

from transeg import PruneConfig, Strategy, decode, exact_best, generate_random_lm, generate_random_transducer
from transeg.fixtures import boundary_trap, greedy_trap


def line(name, seq):
    labels = " ".join(seq.labels) or "(empty)"
    return f"  {name:24s} {labels:12s} score {seq.score:8.4f}  boundaries {seq.boundaries}"


def unpruned():
    m = generate_random_transducer(42, 5, 3, 1, "rnnt", 0.6)
    lm = generate_random_lm(1, m.vocabulary, 2, 0.5)
    for scale in (0.0, 0.5):
        print(f"\nrandom RNN-T model, LM scale {scale}, no pruning")
        print(line("exact", exact_best(m, lm, scale, max_per_frame=3)))
        for s in Strategy:
            r = decode(m, s, lm=lm, lm_scale=scale)
            note = f" via {r.metadata['transform']}" if r.metadata["transform"] else ""
            print(line(s.value, r.best) + f"  expanded {r.stats.expanded}{note}")


def traps():
    m = greedy_trap()
    print("\ngreedy trap, score threshold Q = 0.01")
    print(line("exact", exact_best(m)))
    for s in Strategy:
        print(line(s.value, decode(m, s, prune=PruneConfig(q_prune=0.01)).best))

    m = boundary_trap()
    print("\nboundary trap, two-stage search")
    print(line("exact", exact_best(m)))
    for bt in (1, 2):
        r = decode(m, Strategy.LABEL_SYNC_TWO_STAGE, prune=PruneConfig(beam=4, boundary_beam=bt))
        print(line(f"B=4, B_t={bt}", r.best))


if __name__ == "__main__":
    unpruned()
    traps()
