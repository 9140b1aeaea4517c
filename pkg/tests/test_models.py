import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import nl
from transeg.core import BLANK, SENTENCE_END, DomainError, Topology, TopologyKind, Vocabulary, to_prob
from transeg.models import (
    ModelFormatError,
    SegmentalModel,
    TransducerModel,
    VersionError,
    dumps_model,
    generate_random_segmental,
    generate_random_transducer,
    load_model,
    loads_model,
    save_model,
    segmental_boundary,
    segmental_label,
    transducer_step,
    validate_model,
)
from transeg.transform import SegmentalView

model_params = st.tuples(st.integers(0, 10 ** 6), st.integers(1, 5), st.integers(1, 3), st.integers(0, 2),
                         st.sampled_from(["rnnt", "strict_monotonic"]), st.floats(0.0, 1.0))


def row_sum(row):
    return math.fsum(to_prob(s) for s in row.values())


def test_transducer_step_fixture_rows(m0):
    assert transducer_step(m0, (), 1) == {"a": nl(0.4), BLANK: nl(0.6)}
    assert transducer_step(m0, ("a",), 2) == transducer_step(m0, (), 1)


def test_transducer_step_out_of_range(m0):
    with pytest.raises(DomainError):
        transducer_step(m0, (), 3)
    with pytest.raises(DomainError):
        transducer_step(m0, (), 0)


@given(model_params)
def test_generated_transducer_rows_normalized(params):
    seed, T, V, k, topo, sm = params
    m = generate_random_transducer(seed, T, V, k, topo, sm)
    assert validate_model(m) == []
    for row in m.table.values():
        assert abs(row_sum(row) - 1) <= 1e-12


@given(model_params)
def test_generated_segmental_rows_normalized(params):
    seed, T, V, k, topo, sm = params
    m = generate_random_segmental(seed, T, V, k, topo, sm)
    assert validate_model(m) == []
    for (t_prev, ctx), row in m.boundary_table.items():
        assert set(row) == set(m.topology.candidates(t_prev))
    for (t_prev, t, ctx), row in m.label_table.items():
        assert (SENTENCE_END in row) == (t == T)


def test_generation_deterministic():
    a = generate_random_transducer(7, 4, 2, 1, "rnnt", 0.4)
    b = generate_random_transducer(7, 4, 2, 1, "rnnt", 0.4)
    assert a.table == b.table
    assert dumps_model(a) == dumps_model(b)
    assert dumps_model(generate_random_segmental(7, 3, 2, 1, "strict_monotonic", 0.4)) == \
        dumps_model(generate_random_segmental(7, 3, 2, 1, "strict_monotonic", 0.4))


def test_smoothness_extremes():
    flat = generate_random_transducer(1, 6, 3, 1, "rnnt", 1.0)
    maxima = [max(to_prob(s) for s in row.values()) for row in flat.table.values()]
    assert np.mean(maxima) == pytest.approx(1 / 4, abs=1e-9)
    sharp = generate_random_transducer(1, 6, 3, 1, "rnnt", 0.0)
    assert min(max(to_prob(s) for s in row.values()) for row in sharp.table.values()) > 0.99


def test_blank_bias_raises_blank_mass():
    plain = generate_random_transducer(3, 5, 3, 0, "rnnt", 0.7)
    biased = generate_random_transducer(3, 5, 3, 0, "rnnt", 0.7, blank_bias=3.0)
    mean = lambda m: np.mean([to_prob(r[BLANK]) for r in m.table.values()])
    assert mean(biased) > mean(plain)


def test_t2s_boundary_and_label_queries(m1):
    view = SegmentalView(m1)
    b = segmental_boundary(view, 0, ())
    assert {t: to_prob(s) for t, s in b.items()} == pytest.approx({1: 0.8, 2: 0.1})
    assert 1 - sum(to_prob(s) for s in b.values()) == pytest.approx(0.1)
    lab = segmental_label(view, 0, 1, ())
    assert {a: to_prob(s) for a, s in lab.items()} == pytest.approx({"a": 0.625, "b": 0.375})
    assert SENTENCE_END not in lab


def test_single_frame_strict_support():
    m = generate_random_segmental(0, 1, 2, 0, "strict_monotonic", 0.5)
    assert list(segmental_boundary(m, 0, ())) == [1]
    assert segmental_boundary(m, 1, ("a",)) == {}


def test_single_label_vocab_forces_certainty():
    m = generate_random_transducer(4, 3, 1, 0, "rnnt", 0.5)
    row = segmental_label(SegmentalView(m), 1, 2, ())
    assert to_prob(row["a"]) == pytest.approx(1.0, abs=1e-15)


def test_boundary_support_never_exceeds_T():
    m = generate_random_segmental(2, 4, 2, 1, "rnnt", 0.5)
    for (t_prev, ctx), row in m.boundary_table.items():
        assert max(row) <= 4 and min(row) >= t_prev


def test_label_query_outside_support(m1):
    m = generate_random_segmental(2, 3, 2, 0, "strict_monotonic", 0.5)
    with pytest.raises(DomainError):
        segmental_label(m, 1, 1, ("a",))
    with pytest.raises(DomainError):
        segmental_label(m, 0, 4, ())


def test_validate_reports_perturbed_row(m0):
    table = dict(m0.table)
    table[(1, ())] = {"a": nl(0.4), BLANK: nl(0.7)}
    bad = TransducerModel(m0.vocabulary, m0.topology, 0, table)
    violations = validate_model(bad)
    assert len(violations) == 1
    assert "t=1" in violations[0].row and "1.1" in violations[0].defect


def test_validate_flags_early_sentence_end():
    m = generate_random_segmental(0, 2, 2, 0, "strict_monotonic", 0.5)
    labels = dict(m.label_table)
    labels[(0, 1, ())] = {"a": nl(0.5), "b": nl(0.3), SENTENCE_END: nl(0.2)}
    bad = SegmentalModel(m.vocabulary, m.topology, 0, m.boundary_table, labels)
    defects = [v.defect for v in validate_model(bad)]
    assert any("sentence end before T" in d for d in defects)


def test_validate_missing_row_and_never_raises(m0):
    partial = TransducerModel(m0.vocabulary, m0.topology, 0, {(1, ()): m0.table[(1, ())]})
    assert [v.defect for v in validate_model(partial)] == ["missing row"]
    assert validate_model("not a model")[0].row == "model"


def test_native_flag_controls_deficiency_check(m1):
    from transeg.transform import materialize
    mat = materialize(SegmentalView(m1))
    assert validate_model(mat) == []
    assert any("row sums" in v.defect for v in validate_model(mat, native=True))


@pytest.mark.parametrize("make", [
    lambda: generate_random_transducer(5, 4, 2, 1, "rnnt", 0.3),
    lambda: generate_random_transducer(5, 4, 3, 2, "strict_monotonic", 0.3),
    lambda: generate_random_segmental(5, 4, 2, 1, "rnnt", 0.3),
    lambda: generate_random_segmental(5, 3, 2, 1, "strict_monotonic", 0.3),
])
def test_save_load_round_trip(tmp_path, make):
    m = make()
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert type(back) is type(m)
    if isinstance(m, TransducerModel):
        assert back.table.keys() == m.table.keys()
        pairs = [(m.table[k], back.table[k]) for k in m.table]
    else:
        pairs = [(m.boundary_table[k], back.boundary_table[k]) for k in m.boundary_table]
        pairs += [(m.label_table[k], back.label_table[k]) for k in m.label_table]
    for a, b in pairs:
        assert a.keys() == b.keys()
        for y in a:
            assert abs(to_prob(a[y]) - to_prob(b[y])) <= 1e-15
    assert dumps_model(back) == path.read_text()


def test_round_trip_fixture_exact(m0):
    back = loads_model(dumps_model(m0))
    assert back.table == m0.table


def test_canonical_rows_sorted(m1):
    data = json.loads(dumps_model(generate_random_transducer(1, 3, 2, 1, "rnnt", 0.5)))
    keys = [(r["t"], r["context"]) for r in data["rows"]]
    assert keys == sorted(keys)


def test_unknown_version(m0):
    data = json.loads(dumps_model(m0))
    data["format_version"] = 99
    with pytest.raises(VersionError):
        loads_model(json.dumps(data))


def test_syntax_error_location():
    with pytest.raises(ModelFormatError, match="line 2, column"):
        loads_model('{"format_version": 1,\n "kind": }')


def test_field_error_location(m0):
    data = json.loads(dumps_model(m0))
    data["rows"][1]["probs"]["zz"] = 0.1
    with pytest.raises(ModelFormatError, match=r"rows\[1\]\.probs: unknown symbol 'zz'"):
        loads_model(json.dumps(data))
    del data["rows"][0]["context"]
    with pytest.raises(ModelFormatError, match=r"rows\[0\]: missing field 'context'"):
        loads_model(json.dumps(data))


def test_unnormalized_row_loads_then_validates(m0):
    data = json.loads(dumps_model(m0))
    data["rows"][0]["probs"]["<blank>"] = 0.5
    m = loads_model(json.dumps(data))
    violations = validate_model(m)
    assert len(violations) == 1 and "0.9" in violations[0].defect


def test_unreachable_marker_round_trip():
    m = TransducerModel(Vocabulary(("a",)), Topology(TopologyKind.RNNT, 1), 0, {}, unreachable=frozenset({(1, ())}))
    text = dumps_model(m)
    assert '"unreachable": true' in text
    back = loads_model(text)
    assert back.unreachable == m.unreachable
    assert all(s == math.inf for s in back.step(1).values())
