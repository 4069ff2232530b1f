from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from toolcheck.callparse import ToolCall, parse_lenient, render_calls
from toolcheck.checker import (
    CheckMode,
    ErrorCode,
    ErrorFinding,
    MissingReference,
    check,
    error_histogram,
    render_global_checklist,
)
from toolcheck.localgen import TEMPLATE_TOOL
from toolcheck.negsample import perturb
from toolcheck.synthetic import synth_cases
from toolcheck.toolspec import registry_from_specs

TEMPLATE = registry_from_specs([TEMPLATE_TOOL])


def codes(text, registry=TEMPLATE, gold=None, mode="schema_only"):
    return [f.code for f in check(parse_lenient(text), registry, gold, mode)]


def test_hexagon_rejected_single_e4(hexagon_case, hexagon_rejected):
    findings = check(parse_lenient(hexagon_rejected), hexagon_case.registry, hexagon_case.gold, CheckMode.REFERENCED)
    assert [(f.code, f.call_index, f.param) for f in findings] == [(ErrorCode.E4, 0, "n")]
    # n is declared only for the sibling tool, so schema-only mode sees it as undeclared
    schema = check(parse_lenient(hexagon_rejected), hexagon_case.registry)
    assert [(f.code, f.param) for f in schema] == [(ErrorCode.E4, "n")]


def test_hexagon_chosen_clean(hexagon_case, hexagon_chosen):
    for mode in CheckMode:
        assert check(parse_lenient(hexagon_chosen), hexagon_case.registry, hexagon_case.gold, mode) == []


def test_missing_required_message():
    f = check(parse_lenient('[{"name": "name_of_the_tool", "arguments": {"parameter_2": 3}}]'), TEMPLATE)
    assert [x.code for x in f] == [ErrorCode.E1]
    assert json.loads(f[0].message) == {"error": "MissingRequiredParameter", "message": "The 'parameter_1' parameter is required."}


def test_type_empty_and_undeclared():
    assert codes('[{"name": "name_of_the_tool", "arguments": {"parameter_1": "a", "parameter_2": "4"}}]') == [ErrorCode.E2]
    assert codes('[{"name": "name_of_the_tool", "arguments": {"parameter_1": ""}}]') == [ErrorCode.E3]
    assert codes('[{"name": "name_of_the_tool", "arguments": {"parameter_1": "a", "parameter_2": null}}]') == [ErrorCode.E3]
    assert codes('[{"name": "name_of_the_tool", "arguments": {"parameter_1": "a", "parameter_2": 0}}]') == []
    assert codes('[{"name": "name_of_the_tool", "arguments": {"parameter_1": "a", "extra": 1}}]') == [ErrorCode.E4]


def test_wrong_name_with_suggestion():
    f = check(parse_lenient('[{"name": "Name_Of_The_Tool", "arguments": {}}]'), TEMPLATE)
    assert [x.code for x in f] == [ErrorCode.E0]
    assert "name_of_the_tool" in f[0].thought


def test_format_and_prose():
    assert codes('{"Name": "name_of_the_tool", "Parameter": {"parameter_1": "a"}}') == [ErrorCode.E5]
    assert codes('Here you go: [{"name": "name_of_the_tool", "arguments": {"parameter_1": "a"}}]') == [ErrorCode.E6]
    # nothing parsed means no count check either
    assert codes("no idea", gold=[ToolCall("name_of_the_tool", {"parameter_1": "a"})], mode="referenced") == [ErrorCode.E5]


def test_wrong_count_referenced_only():
    gold = [ToolCall("name_of_the_tool", {"parameter_1": "a"})]
    two = render_calls(gold * 2)
    assert codes(two, gold=gold, mode="referenced") == [ErrorCode.E7]
    assert codes(two) == []


def test_referenced_needs_gold():
    with pytest.raises(MissingReference):
        check(parse_lenient("[]"), TEMPLATE, None, CheckMode.REFERENCED)


def test_finding_invariants():
    with pytest.raises(ValueError):
        ErrorFinding(ErrorCode.E1, "m", "t", 0, None)
    with pytest.raises(ValueError):
        ErrorFinding(ErrorCode.E5, "m", "t", 0, None)
    with pytest.raises(ValueError):
        ErrorFinding(ErrorCode.E7, "m", "t", None, "p")


def test_finding_serialization(hexagon_case, hexagon_rejected):
    f = check(parse_lenient(hexagon_rejected), hexagon_case.registry, hexagon_case.gold, "referenced")[0]
    d = f.to_dict()
    assert (d["code"], d["error"], d["call_index"], d["param"]) == ("E4", "RedundantParameter", 0, "n")
    assert ErrorFinding.from_dict(d) == f


def test_error_code_parsing():
    assert ErrorCode.parse("E4") is ErrorCode.E4
    assert ErrorCode.parse(4) is ErrorCode.E4
    assert ErrorCode.parse("RedundantParameter") is ErrorCode.E4
    with pytest.raises(ValueError):
        ErrorCode.parse("E9")


def test_global_checklist():
    text = render_global_checklist()
    assert text == render_global_checklist()
    lines = text.splitlines()
    assert len(lines) == 8 + 2
    assert "Wrong Tool Name" in text
    assert [l.split(":")[0] for l in lines[2:]] == [f"Error {i}" for i in range(8)]


def test_histogram():
    e4 = ErrorFinding(ErrorCode.E4, "m", "t", 0, "n")
    e5 = ErrorFinding(ErrorCode.E5, "m", "t")
    h = error_histogram([[e4], [e4, e5]])
    assert h[ErrorCode.E4] == 2 and h[ErrorCode.E5] == 1 and sum(h.values()) == 3
    assert error_histogram([]) == {c: 0 for c in ErrorCode}


CASES = synth_cases(60, seed=11)


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(CASES), st.sampled_from(list(ErrorCode)), st.integers(0, 2**16))
def test_schema_findings_subset_of_referenced(case, code, seed):
    text = perturb(case.gold, case.tools, code, seed)
    out = parse_lenient(text)
    schema = [f.to_dict() for f in check(out, case.registry)]
    ref = [f.to_dict() for f in check(out, case.registry, case.gold, "referenced")]
    assert all(f in ref for f in schema)


def test_gold_is_clean_for_synthetic_cases():
    for case in CASES:
        assert check(parse_lenient(render_calls(case.gold)), case.registry, case.gold, "referenced") == []
