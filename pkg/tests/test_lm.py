import json
import math

import pytest
from hypothesis import given, strategies as st

from transeg.core import BOS, SENTENCE_END, DomainError, Vocabulary, to_prob
from transeg.lm import (
    NGramLM,
    dumps_lm,
    generate_random_lm,
    load_lm,
    lm_score,
    loads_lm,
    save_lm,
    uniform_lm,
    validate_lm,
)
from transeg.models import ModelFormatError

AB = Vocabulary(("a", "b"))


def test_uniform_bigram_scores():
    lm = uniform_lm(AB, 2)
    assert lm_score(lm, ["a", "b"]) == pytest.approx(-math.log(1 / 27), abs=1e-14)
    assert lm_score(lm, []) == pytest.approx(lm.cost([], SENTENCE_END), abs=0)
    assert lm_score(lm, []) == pytest.approx(math.log(3), abs=1e-15)


def test_oov_label_raises():
    with pytest.raises(DomainError):
        lm_score(uniform_lm(AB), ["a", "z"])
    with pytest.raises(DomainError):
        NGramLM(AB, 0, {})


def test_round_trip(tmp_path):
    for lm in (uniform_lm(AB), generate_random_lm(4, Vocabulary(("a", "b", "c")), 3, 0.4)):
        path = tmp_path / "lm.json"
        save_lm(lm, path)
        back = load_lm(path)
        assert back.order == lm.order and back.vocabulary == lm.vocabulary
        assert set(back.table) == set(lm.table)
        for ctx, row in lm.table.items():
            for sym, s in row.items():
                assert abs(to_prob(back.table[ctx][sym]) - to_prob(s)) <= 1e-15
        assert dumps_lm(back) == dumps_lm(lm)


def test_unnormalized_row_loads_and_is_reported():
    data = json.loads(dumps_lm(uniform_lm(AB)))
    data["rows"][0]["probs"] = {"a": 0.49, "b": 0.29, SENTENCE_END: 0.2}
    lm = loads_lm(json.dumps(data))
    problems = validate_lm(lm)
    assert len(problems) == 1 and "0.98" in str(problems[0])
    assert validate_lm(uniform_lm(AB)) == []


def test_unknown_context_symbol_names_it():
    data = json.loads(dumps_lm(uniform_lm(AB)))
    data["rows"][1]["context"] = ["zz"]
    with pytest.raises(ModelFormatError, match="zz"):
        loads_lm(json.dumps(data))


def test_unterminable_lm_is_reported():
    row = {"a": 0.0, "b": math.inf, SENTENCE_END: math.inf}
    lm = NGramLM(AB, 2, {(BOS,): dict(row), ("a",): dict(row), ("b",): dict(row)})
    assert any("sentence end" in str(v) for v in validate_lm(lm))


@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.lists(st.sampled_from("abc"), max_size=6),
       st.lists(st.sampled_from("abc"), max_size=6))
def test_factorization(seed, order, x, y):
    lm = generate_random_lm(seed, Vocabulary(("a", "b", "c")), order, 0.5)
    joined = tuple(x) + tuple(y)
    by_hand = sum(lm.cost(joined[:i], a) for i, a in enumerate(joined)) + lm.cost(joined, SENTENCE_END)
    assert lm_score(lm, joined) == pytest.approx(by_hand, abs=1e-12)
    # the prefix part of a concatenation does not depend on what follows
    prefix = lm_score(lm, x) - lm.end_cost(x)
    suffix = sum(lm.cost(joined[:len(x) + i], a) for i, a in enumerate(y)) + lm.end_cost(joined)
    assert lm_score(lm, joined) == pytest.approx(prefix + suffix, abs=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(1, 3))
def test_random_lms_are_valid(seed, order):
    assert validate_lm(generate_random_lm(seed, AB, order, 0.7)) == []
