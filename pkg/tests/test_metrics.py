from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from toolcheck.callparse import ToolCall, parse_lenient
from oracles import brute_force, random_calls
from toolcheck.metrics import aggregate, arguments_equal, f1_score, match_calls, normalize_value, score_case


def test_self_match(hexagon_chosen):
    calls = parse_lenient(hexagon_chosen).calls
    assert match_calls(calls, calls) == [(0, 0), (1, 1)]
    s = score_case(calls, calls)
    assert (s.tp_name, s.tp_full, s.fp_name, s.fn_name, s.fp_full, s.fn_full) == (2, 2, 0, 0, 0, 0)


def test_rejected_vs_chosen(hexagon_chosen, hexagon_rejected):
    s = score_case(parse_lenient(hexagon_rejected).calls, parse_lenient(hexagon_chosen).calls)
    assert (s.tp_name, s.tp_full) == (2, 1)


def test_duplicate_names():
    a, b = ToolCall("a", {}), ToolCall("b", {})
    assert len(match_calls([a, a], [a, b])) == 1
    assert match_calls([], [a]) == []


def test_prefers_exact_argument_pairing():
    pred = [ToolCall("a", {"x": 1}), ToolCall("a", {"x": 2})]
    gold = [ToolCall("a", {"x": 2}), ToolCall("a", {"x": 1})]
    assert match_calls(pred, gold) == [(0, 1), (1, 0)]
    assert score_case(pred, gold).tp_full == 2


def test_half_precision():
    s = score_case([ToolCall("a", {}), ToolCall("z", {})], [ToolCall("a", {}), ToolCall("b", {})])
    assert s.tp_name == 1 and s.fp_name == 1 and s.fn_name == 1
    assert s.f1_name == pytest.approx(0.5)


def test_f1_conventions():
    assert f1_score(0, 0, 0) == 1.0
    assert f1_score(0, 1, 0) == 0.0 and f1_score(0, 0, 1) == 0.0
    assert score_case([], []).f1_name == 1.0


def test_aggregate_examples():
    perfect = aggregate([score_case([ToolCall("a", {})], [ToolCall("a", {})])])
    assert perfect.f1_name == perfect.f1_full == 1.0
    c1 = score_case([ToolCall("a", {}), ToolCall("b", {})], [ToolCall("a", {})])   # tp1 fp1 fn0
    c2 = score_case([], [ToolCall("c", {})])                                       # tp0 fp0 fn1
    assert aggregate([c1, c2]).f1_name == pytest.approx(0.5, abs=1e-15)
    empty = aggregate([])
    assert empty.f1_name is None and empty.f1_full is None
    assert empty.to_dict()["f1_name_param"] is None


def test_value_normalization():
    assert arguments_equal({"n": 4}, {"n": 4.0})
    assert not arguments_equal({"n": 4}, {"n": "4"})
    assert not arguments_equal({"f": True}, {"f": 1})
    assert not arguments_equal({"s": "A"}, {"s": "a"})
    assert not arguments_equal({"l": [1, 2]}, {"l": [2, 1]})
    assert normalize_value([1.0, {"k": 2.0}]) == normalize_value([1, {"k": 2}])


def test_matching_oracle_equivalence():
    rng = random.Random(5)
    for _ in range(300):
        pred, gold = random_calls(rng, rng.randint(0, 4)), random_calls(rng, rng.randint(0, 4))
        s = score_case(pred, gold)
        assert (s.tp_name, s.tp_full) == brute_force(pred, gold)


@given(st.randoms(use_true_random=False))
def test_symmetry_permutation_and_bounds(rng):
    pred, gold = random_calls(rng, rng.randint(0, 4)), random_calls(rng, rng.randint(0, 4))
    s, t = score_case(pred, gold), score_case(gold, pred)
    assert (s.tp_name, s.fp_name, s.fn_name) == (t.tp_name, t.fn_name, t.fp_name)
    sp = score_case(rng.sample(pred, len(pred)), rng.sample(gold, len(gold)))
    assert (sp.tp_name, sp.tp_full, sp.fp_full, sp.fn_full) == (s.tp_name, s.tp_full, s.fp_full, s.fn_full)
    assert 0 <= s.f1_full <= s.f1_name <= 1
