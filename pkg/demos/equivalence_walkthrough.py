"""Walk through the transducer <-> segmental rewrite on the two toy models.

Prints the segmental rows derived from a transducer, checks that sequence
probabilities agree on both sides, and round-trips a random model.

    python demos/equivalence_walkthrough.py
"""

from transeg import (
    SegmentalView,
    TransducerView,
    full_sum,
    generate_random_segmental,
    generate_random_transducer,
    label_sequences,
    materialize,
    to_prob,
    total_mass,
)
from transeg.core import SENTENCE_END
from transeg.fixtures import rnnt_single_label, strict_two_label


def show_segmental_rows(model, name):
    view = SegmentalView(model)
    T = model.topology.T
    print(f"\n{name}: boundary and label rows of the segmental view")
    for t_prev in range(model.topology.t0, T + 1):
        if model.topology.strict and t_prev == T:
            continue
        bounds = {t: round(to_prob(s), 4) for t, s in view.boundary(t_prev).items()}
        print(f"  after boundary {t_prev}: p(next boundary) = {bounds}")
        for t in bounds:
            row = {a: round(to_prob(s), 4) for a, s in view.label(t_prev, t).items()}
            print(f"    segment ending at {t}: labels {row}")
        print(f"    close here (sentence end): {to_prob(view.final(t_prev)):.4f}")


def compare_sums(model, name):
    view = SegmentalView(model)
    print(f"\n{name}: p(labels) on both sides")
    limit = model.topology.T if model.topology.strict else 2
    for seq in label_sequences(model.vocabulary, limit):
        a, b = to_prob(full_sum(model, seq)), to_prob(full_sum(view, seq))
        print(f"  {''.join(seq) or '(empty)':8s} transducer {a:.6f}  segmental {b:.6f}")
    mass = total_mass(model)
    print(f"  total mass {mass.mass:.6f} ({'exact' if mass.exact else f'labels up to {mass.s_max}'})")


def round_trip():
    print("\nround trip on random models")
    m = generate_random_transducer(7, 4, 2, 1, "rnnt", 0.5)
    back = materialize(TransducerView(SegmentalView(m)))
    worst = max(abs(to_prob(row[y]) - to_prob(m.table[(t, ctx)][y]))
                for (t, _, ctx), row in back.table.items() for y in row)
    print(f"  transducer -> segmental -> transducer: max row difference {worst:.1e}")
    s = generate_random_segmental(7, 4, 2, 1, "strict_monotonic", 0.5)
    view = TransducerView(s)
    worst = max(abs(full_sum(s, seq) - full_sum(view, seq)) for seq in label_sequences(s.vocabulary, 4))
    print(f"  native segmental vs its transducer view: max |log p difference| {worst:.1e}")
    print(f"  (the sentence-end entry at the last frame is '{SENTENCE_END}', a blank odds ratio in the view)")


if __name__ == "__main__":
    show_segmental_rows(rnnt_single_label(), "RNN-T toy model (q(blank) = 0.6)")
    compare_sums(rnnt_single_label(), "RNN-T toy model")
    show_segmental_rows(strict_two_label(), "strict toy model")
    compare_sums(strict_two_label(), "strict toy model")
    round_trip()
