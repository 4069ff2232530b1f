from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from toolcheck.callparse import FormatError, ToolCall, balanced_arrays, parse_lenient, parse_strict, render_calls
from toolcheck.negsample import render_single_quoted, wrap_in_prose

json_scalars = st.one_of(st.none(), st.booleans(), st.integers(-10**6, 10**6), st.text(max_size=12),
                         st.floats(allow_nan=False, allow_infinity=False))
json_values = st.recursive(json_scalars, lambda inner: st.one_of(
    st.lists(inner, max_size=3), st.dictionaries(st.text(max_size=6), inner, max_size=3)), max_leaves=8)
calls = st.lists(st.builds(ToolCall, st.text(min_size=1, max_size=10),
                           st.dictionaries(st.text(max_size=8), json_values, max_size=4)), max_size=4)


def test_hexagon_chosen_is_strict(hexagon_chosen):
    out = parse_strict(hexagon_chosen)
    assert out.strict and not out.salvage
    assert [c.name for c in out.calls] == ["polygon_area_shoelace", "find_n_largest_numbers"]


def test_empty_list():
    out = parse_strict("  []\n")
    assert out.calls == () and out.strict


@pytest.mark.parametrize(
    "text,fragment",
    [
        ('{"Name": "t", "Parameter": {"a": 1}}', "top level"),
        ('[{"Name": "t", "Parameter": {}}]', "wrong keys"),
        ('[1]', "not an object"),
        ('[{"name": "t", "arguments": []}]', "arguments"),
        ('[{"name": "", "arguments": {}}]', "name"),
        ('[{"name": "t", "arguments": {}, "id": 1}]', "wrong keys"),
        ('[{"name": "t", "arguments": {"a": 1, "a": 2}}]', "duplicate"),
        ('[{"name": "t", "arguments": {"a": NaN}}]', "non-JSON"),
        ("oops", "not valid JSON"),
    ],
)
def test_strict_rejects(text, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_strict(text)


def test_redundant_information_template():
    raw = (
        "\"Based on the query, I will make a function call to the 'name_of_the_tool' tool to get the query answered. "
        "Here is the output in the required JSON format: \n[\n  {\n    'name': 'name_of_the_tool',\n    'arguments': {\n"
        "      'parameter_1': 'parameter_value',\n      'parameter_2': 'parameter_value'\n    }\n  }\n]\""
    )
    out = parse_lenient(raw)
    assert out.salvage and not out.strict
    assert out.calls == (ToolCall("name_of_the_tool", {"parameter_1": "parameter_value", "parameter_2": "parameter_value"}),)


def test_lenient_passes_strict_through(hexagon_chosen):
    assert parse_lenient(hexagon_chosen) == parse_strict(hexagon_chosen)


def test_pure_prose():
    out = parse_lenient("I cannot help with that request, sorry.")
    assert out.calls == () and not out.salvage and out.failed


def test_fenced_block_is_salvage():
    out = parse_lenient('```json\n[{"name": "t", "arguments": {}}]\n```')
    assert out.salvage and out.fenced and len(out.calls) == 1


def test_longest_array_wins_and_ties_go_first():
    a = '[{"name": "a", "arguments": {}}]'
    b = '[{"name": "bb", "arguments": {"k": 1}}]'
    assert parse_lenient(f"x {a} y {b}").calls[0].name == "bb"
    c = '[{"name": "c", "arguments": {}}]'
    assert parse_lenient(f"{a} and {c}").calls[0].name == "a"


def test_python_literals_salvaged():
    out = parse_lenient("Answer: [{'name': 't', 'arguments': {'flag': True, 'x': None}}]")
    assert out.calls[0].arguments == {"flag": True, "x": None}


def test_brackets_inside_strings_ignored():
    text = 'note [ then [{"name": "t", "arguments": {"s": "a]b[c"}}]'
    assert parse_lenient(text).calls[0].arguments == {"s": "a]b[c"}


@given(calls)
def test_strict_inverts_render(cs):
    assert parse_strict(render_calls(cs)).calls == tuple(cs)


@given(calls)
def test_single_quoted_rendering_is_recovered(cs):
    out = parse_lenient(wrap_in_prose(cs))
    assert out.salvage and out.calls == tuple(cs)


@given(st.text(alphabet='[]{}"\' ,ab:\\', max_size=30))
def test_lenient_is_total_and_exclusive(text):
    out = parse_lenient(text)
    assert out == parse_lenient(text)
    assert not (out.strict and out.salvage)
    if out.salvage:
        with pytest.raises(FormatError):
            parse_strict(text)


def _oracle_balanced(text):
    """Every (i, j) with text[i] == '[' whose prefix depth first returns to zero at j (quote-aware)."""
    spans = []
    for i in range(len(text)):
        for j in range(i + 1, len(text) + 1):
            sub = text[i:j]
            if not (sub.startswith("[") and sub.endswith("]")):
                continue
            depth, quote, k, ok = 0, None, 0, True
            while k < len(sub):
                ch = sub[k]
                if quote:
                    if ch == "\\":
                        k += 1
                    elif ch == quote:
                        quote = None
                elif ch in "\"'":
                    quote = ch
                elif ch == "[":
                    depth += 1
                elif ch == "]":
                    depth -= 1
                    if depth == 0 and k != len(sub) - 1:
                        ok = False
                        break
                k += 1
            if ok and depth == 0 and quote is None:
                spans.append((i, j))
    return spans


@given(st.text(alphabet="[]ab\"'\\ ", max_size=16))
def test_balanced_scanner_matches_oracle(text):
    assert sorted(balanced_arrays(text)) == sorted(_oracle_balanced(text))


def test_scanner_oracle_on_prose():
    text = "We looked at [1, 2] and [3] but no calls."
    assert sorted(balanced_arrays(text)) == sorted(_oracle_balanced(text))
    assert parse_lenient(text).calls == ()


def test_render_is_canonical(hexagon_chosen):
    calls = parse_strict(hexagon_chosen).calls
    assert render_calls(calls) == hexagon_chosen
    assert json.loads(render_calls([])) == []
