import itertools
import math

import pytest
from hypothesis import given, strategies as st

from conftest import nl
from transeg.core import BLANK, GuardExceeded, Topology, TopologyKind, Vocabulary, to_prob
from transeg.lm import uniform_lm
from transeg.models import TransducerModel, generate_random_segmental, generate_random_transducer
from transeg.oracle import (
    best_score,
    count_alignments,
    enumerate_paths,
    enumerate_segmentations,
    exact_best,
    full_sum,
    full_sum_segmental,
    full_sum_transducer,
    label_sequences,
    total_mass,
)
from transeg.transform import SegmentalView

params = st.tuples(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 3), st.integers(0, 1),
                   st.sampled_from(["rnnt", "strict_monotonic"]))


def test_enumerate_paths_fixtures(m0, m1):
    paths = enumerate_paths(m0, "a")
    assert sorted(p.symbols for p, _ in paths) == sorted([("a", BLANK, BLANK), (BLANK, "a", BLANK)])
    assert all(s == pytest.approx(nl(0.144)) for _, s in paths)
    (path, score), = enumerate_paths(m0, "")
    assert path.symbols == (BLANK, BLANK) and score == pytest.approx(nl(0.36))
    (path, score), = enumerate_paths(m1, "ab")
    assert path.symbols == ("a", "b") and score == pytest.approx(nl(0.20))


def test_full_sum_fixtures(m0, m1):
    for method in ("dp", "enumerate"):
        assert full_sum_transducer(m0, "a", method) == pytest.approx(nl(0.288), abs=1e-14)
        assert full_sum_transducer(m0, "aa", method) == pytest.approx(nl(0.1728), abs=1e-14)
        assert full_sum_transducer(m1, "a", method) == pytest.approx(nl(0.27), abs=1e-14)
    assert full_sum_segmental(SegmentalView(m0), "a") == pytest.approx(nl(0.288), abs=1e-14)
    assert full_sum_segmental(SegmentalView(m1), "") == pytest.approx(nl(0.10), abs=1e-14)
    assert full_sum(m1, "aaa") == math.inf


def test_full_sum_single_term_for_one_hot_segmental():
    from transeg.models import SegmentalModel
    from transeg.core import SENTENCE_END
    topo = Topology(TopologyKind.STRICT_MONOTONIC, 2)
    m = SegmentalModel(Vocabulary(("a",)), topo, 0,
                       {(0, ()): {1: 0.0, 2: math.inf}, (1, ()): {2: 0.0}},
                       {(0, 1, ()): {"a": 0.0}, (0, 2, ()): {"a": nl(0.5), SENTENCE_END: nl(0.5)},
                        (1, 2, ()): {"a": math.inf, SENTENCE_END: 0.0}})
    terms = [s for _, s in enumerate_segmentations(m, "a") if s != math.inf]
    assert terms == [0.0]
    assert full_sum(m, "a") == 0.0


def test_mass_decomposition_m1(m1):
    report = total_mass(m1)
    assert report.exact
    expected = {(): 0.10, ("a",): 0.27, ("b",): 0.23, ("a", "b"): 0.20, ("b", "a"): 0.03,
                ("a", "a"): 0.05, ("b", "b"): 0.12}
    assert {k: to_prob(v) for k, v in report.terms.items()} == pytest.approx(expected, abs=1e-15)
    assert report.mass == pytest.approx(1.0, abs=1e-15)


def test_partial_mass_rnnt(m0):
    report = total_mass(m0, s_max=2)
    assert not report.exact
    assert report.mass == pytest.approx(0.8208, abs=1e-14)


def test_one_hot_model_mass():
    topo = Topology(TopologyKind.STRICT_MONOTONIC, 2)
    m = TransducerModel(Vocabulary(("a", "b")), topo, 0,
                        {(1, ()): {"a": 0.0, "b": math.inf, BLANK: math.inf},
                         (2, ()): {"a": math.inf, "b": 0.0, BLANK: math.inf}})
    report = total_mass(m)
    assert report.mass == 1.0
    assert [k for k, v in report.terms.items() if v != math.inf] == [("a", "b")]


@given(params)
def test_enumeration_matches_dp(p):
    seed, T, V, k, topo = p
    m = generate_random_transducer(seed, T, V, k, topo, 0.5)
    for labels in label_sequences(m.vocabulary, T if m.topology.strict else 3):
        a = full_sum_transducer(m, labels, "dp")
        b = full_sum_transducer(m, labels, "enumerate")
        assert a == b or abs(a - b) <= 1e-10


@given(params)
def test_strict_mass_is_one(p):
    seed, T, V, k, _ = p
    assert total_mass(generate_random_transducer(seed, T, V, k, "strict_monotonic", 0.5)).mass == \
        pytest.approx(1.0, abs=1e-9)
    assert total_mass(generate_random_segmental(seed, T, V, k, "strict_monotonic", 0.5)).mass == \
        pytest.approx(1.0, abs=1e-9)


def test_guard():
    m = generate_random_transducer(0, 30, 2, 0, "rnnt", 0.5)
    assert count_alignments(m.topology, 12) > 10 ** 6
    with pytest.raises(GuardExceeded):
        enumerate_paths(m, "a" * 12)
    assert full_sum_transducer(m, "a" * 12, "dp") < math.inf


def test_exact_best_fixtures(m0, m1):
    best = exact_best(m1)
    assert best.labels == ("a",) and best.score == pytest.approx(nl(0.25), abs=1e-14)
    assert best.boundaries == (1,)
    best = exact_best(m0)
    assert best.labels == () and best.score == pytest.approx(nl(0.36), abs=1e-14)


def test_exact_best_zero_scale_lm(m1):
    assert exact_best(m1, uniform_lm(m1.vocabulary), 0.0) == exact_best(m1)


def test_exact_best_tie_break():
    # both labels equally likely at the single frame: "a" (id 0) wins
    topo = Topology(TopologyKind.STRICT_MONOTONIC, 1)
    m = TransducerModel(Vocabulary(("b", "a")), topo, 0, {(1, ()): {"a": nl(0.45), "b": nl(0.45), BLANK: nl(0.1)}})
    assert exact_best(m).labels == ("b",)
    # "a" at frame 1 and "a" at frame 2 both score 0.36; the earlier boundary wins
    topo = Topology(TopologyKind.STRICT_MONOTONIC, 2)
    m = TransducerModel(Vocabulary(("a", "b")), topo, 1, {
        (1, ("<bos>",)): {"a": nl(0.5), "b": nl(0.1), BLANK: nl(0.4)},
        (2, ("<bos>",)): {"a": nl(0.9), "b": nl(0.05), BLANK: nl(0.05)},
        (2, ("a",)): {"a": nl(0.14), "b": nl(0.14), BLANK: nl(0.72)},
        (2, ("b",)): {"a": nl(0.14), "b": nl(0.14), BLANK: nl(0.72)},
    })
    best = exact_best(m)
    assert best.labels == ("a",) and best.boundaries == (1,)
    assert best.score == pytest.approx(nl(0.36))


@given(params)
def test_exact_best_is_min_over_enumerated_paths(p):
    seed, T, V, k, topo = p
    m = generate_random_transducer(seed, T, V, k, topo, 0.5)
    strict = m.topology.strict
    best = exact_best(m, max_per_frame=None if strict else 3)
    smax = T if strict else 3 * T
    guard_ok = lambda n: count_alignments(m.topology, n) * V ** n <= 20000
    lowest = min(s for n in range(smax + 1) if guard_ok(n)
                 for labels in itertools.product(m.vocabulary.labels, repeat=n)
                 for path, s in enumerate_paths(m, labels)
                 if strict or all(path_per_frame_ok(path, 3)))
    assert best.score <= lowest + 1e-12
    if strict:
        assert abs(best.score - lowest) <= 1e-12
    assert abs(best.score - best_score(m)) <= 1e-9


def path_per_frame_ok(path, cap):
    run = 0
    for y in path.symbols:
        run = 0 if y == BLANK else run + 1
        yield run <= cap


@given(params)
def test_exact_best_segmental_matches_transducer_route(p):
    seed, T, V, k, topo = p
    m = generate_random_transducer(seed, T, V, k, topo, 0.5)
    cap = None if m.topology.strict else 3
    a, b = exact_best(m, max_per_frame=cap), exact_best(SegmentalView(m), max_per_frame=cap)
    assert a.labels == b.labels and a.boundaries == b.boundaries
    assert abs(a.score - b.score) <= 1e-10
