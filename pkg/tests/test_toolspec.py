from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from toolcheck.toolspec import (
    UNKNOWN,
    MalformedSpec,
    ParamSpec,
    ParamType,
    ToolSpec,
    dump_registry,
    load_registry,
    parse_param_type,
    parse_tool_spec,
    registry_from_specs,
    value_matches,
)

NUMBER = ParamType("number")


def test_nested_type_string():
    t = parse_param_type("List[Tuple[float, float]]")
    assert t == ParamType("list", (ParamType("tuple", (NUMBER, NUMBER)),))
    assert t.render() == "List[Tuple[float, float]]"


@pytest.mark.parametrize(
    "text,kind",
    [("int", "integer"), ("integer", "integer"), ("str", "string"), ("string", "string"), ("float", "number"),
     ("number", "number"), ("bool", "boolean"), ("boolean", "boolean"), ("Frobnicator", "unknown"), ("", "unknown")],
)
def test_aliases(text, kind):
    assert parse_param_type(text).kind == kind


@given(st.text(max_size=40))
def test_parse_param_type_is_total(s):
    assert isinstance(parse_param_type(s), ParamType)


@given(st.recursive(
    st.sampled_from(["str", "int", "float", "bool"]),
    lambda inner: st.one_of(
        inner.map(lambda t: f"List[{t}]"),
        st.tuples(inner, inner).map(lambda p: f"Tuple[{p[0]}, {p[1]}]"),
    ),
    max_leaves=6,
))
def test_render_parse_round_trip(type_string):
    t = parse_param_type(type_string)
    assert parse_param_type(t.render()) == t


def test_optional_suffix_and_unknown_round_trip():
    assert parse_param_type("int, optional").kind == "integer"
    assert parse_param_type(UNKNOWN.render()) == UNKNOWN


def test_find_n_largest_spec(hexagon_case):
    tool = next(t for t in hexagon_case.tools if t.name == "find_n_largest_numbers")
    assert [p.name for p in tool.params] == ["nums", "n"]
    assert tool.param("nums").ptype.render() == "List[int]"
    assert tool.param("n").ptype.kind == "integer"
    # no required list in the source: everything is required
    assert tool.required == ("nums", "n")


def test_zero_param_tool_and_missing_description():
    t = parse_tool_spec({"name": "t", "parameters": {}})
    assert t.params == () and t.description == ""
    assert parse_tool_spec({"name": "u"}).params == ()


def test_duplicate_params_rejected():
    with pytest.raises(MalformedSpec):
        parse_tool_spec({"name": "t", "parameters": [{"name": "a", "type": "int"}, {"name": "a", "type": "str"}]})


@pytest.mark.parametrize("raw", [{}, {"name": ""}, {"name": "t", "parameters": {"a": {"type": "int"}}, "required": ["b"]}])
def test_malformed(raw):
    with pytest.raises(MalformedSpec):
        parse_tool_spec(raw)


def test_json_schema_layout():
    t = parse_tool_spec({
        "name": "get_weather",
        "parameters": {"type": "object", "properties": {"city": {"type": "string"}, "days": {"type": "integer"},
                       "tags": {"type": "array", "items": {"type": "string"}}}, "required": ["city"]},
    })
    assert t.required == ("city",)
    assert t.param("tags").ptype.render() == "List[str]"


def test_optional_marker_without_required_list():
    t = parse_tool_spec({"name": "t", "parameters": {"a": {"type": "int"}, "b": {"type": "str, optional"}}})
    assert t.required == ("a",)


def test_spec_round_trip(hexagon_case):
    for tool in hexagon_case.tools:
        assert parse_tool_spec(json.loads(json.dumps(tool.to_dict()))) == tool


def test_registry_duplicates_later_wins():
    a = ToolSpec("t", "first", ())
    b = ToolSpec("t", "second", ())
    reg = registry_from_specs([a, b])
    assert len(reg) == 1 and reg["t"].description == "second"
    assert len(reg.warnings) == 1


def test_registry_lookup(hexagon_case):
    reg = registry_from_specs(hexagon_case.tools)
    assert len(reg) == 2
    assert "polygon_area_shoelace" in reg
    assert "Polygon_Area_Shoelace" not in reg
    assert reg.suggest("Polygon_Area_Shoelace") == "polygon_area_shoelace"
    assert len(registry_from_specs([])) == 0


def test_registry_file_round_trip(tmp_path, hexagon_case):
    path = tmp_path / "tools.jsonl"
    dump_registry(hexagon_case.tools, path)
    assert list(load_registry(path)) == list(hexagon_case.tools)


def test_toolspec_invariants():
    with pytest.raises(ValueError):
        ToolSpec("", "", ())
    p = ParamSpec("a", NUMBER, "", True)
    with pytest.raises(ValueError):
        ToolSpec("t", "", (p, p))


@pytest.mark.parametrize(
    "type_string,value,ok",
    [
        ("int", 4, True), ("int", "4", False), ("int", 4.0, False), ("int", True, False),
        ("float", 4, True), ("float", 4.5, True), ("float", False, False),
        ("bool", True, True), ("bool", 1, False),
        ("str", "x", True), ("str", ["x"], False),
        ("List[int]", [1, 2], True), ("List[int]", [1, "2"], False), ("List[int]", [], True),
        ("Tuple[float, float]", [1, 2.5], True), ("Tuple[float, float]", [1], False),
        ("Dict[str, int]", {"a": 1}, True), ("Dict[str, int]", {"a": "1"}, False),
        ("Frobnicator", object(), True),
        ("int", None, True),  # null is an emptiness problem, not a type problem
    ],
)
def test_value_matches(type_string, value, ok):
    assert value_matches(parse_param_type(type_string), value) is ok
