"""Global error checklist (codes 0-7) applied to parsed model output."""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .callparse import ParseOutcome, ToolCall
from .toolspec import ToolRegistry, value_matches


class MissingReference(ValueError):
    pass


class ErrorCode(enum.IntEnum):
    E0 = 0
    E1 = 1
    E2 = 2
    E3 = 3
    E4 = 4
    E5 = 5
    E6 = 6
    E7 = 7

    @property
    def title(self) -> str:
        return _TITLES[self]

    @property
    def identifier(self) -> str:
        return _IDENTIFIERS[self]

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, value: Any) -> "ErrorCode":
        """Accept ``4``, ``"4"``, ``"E4"`` or an identifier like ``"RedundantParameter"``."""
        if isinstance(value, ErrorCode):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return cls(value)
        if isinstance(value, str):
            text = value.strip()
            if text.upper().startswith("E") and text[1:].isdigit():
                return cls(int(text[1:]))
            if text.isdigit():
                return cls(int(text))
            for code, ident in _IDENTIFIERS.items():
                if ident == text:
                    return code
        raise ValueError(f"not an error code: {value!r}")


_TITLES = {
    ErrorCode.E0: "Wrong Tool Name Error",
    ErrorCode.E1: "Missing Required Parameter Error",
    ErrorCode.E2: "Invalid Parameter Type Error",
    ErrorCode.E3: "Empty Parameter Value Error",
    ErrorCode.E4: "Redundant Parameter Error",
    ErrorCode.E5: "Invalid Function Calling Output Format Error",
    ErrorCode.E6: "Redundant Information Error",
    ErrorCode.E7: "Wrong Number of Tools Error",
}

_IDENTIFIERS = {
    ErrorCode.E0: "WrongToolName",
    ErrorCode.E1: "MissingRequiredParameter",
    ErrorCode.E2: "InvalidParameterType",
    ErrorCode.E3: "EmptyParameterValue",
    ErrorCode.E4: "RedundantParameter",
    ErrorCode.E5: "InvalidFormat",
    ErrorCode.E6: "RedundantInformationError",
    ErrorCode.E7: "WrongNumberOfTools",
}

_SUMMARIES = {
    ErrorCode.E0: "the called tool name must exactly match one of the provided tools",
    ErrorCode.E1: "every required parameter of a called tool must be filled",
    ErrorCode.E2: "each parameter value must have the type declared for it",
    ErrorCode.E3: "parameter values must not be empty strings, empty lists or null",
    ErrorCode.E4: "only fill parameters the tool declares and the request asks for",
    ErrorCode.E5: 'output must be a JSON list of {"name": ..., "arguments": {...}} objects',
    ErrorCode.E6: "output must contain only the JSON list, with no extra prose or markup",
    ErrorCode.E7: "call exactly as many tools as the request needs, no more and no fewer",
}


class CheckMode(str, enum.Enum):
    SCHEMA_ONLY = "schema_only"
    REFERENCED = "referenced"


@dataclass(frozen=True)
class ErrorFinding:
    code: ErrorCode
    message: str
    thought: str
    call_index: int | None = None
    param: str | None = None

    def __post_init__(self):
        if self.code in (ErrorCode.E1, ErrorCode.E2, ErrorCode.E3, ErrorCode.E4) and not self.param:
            raise ValueError(f"{self.code.name} findings must name a parameter")
        if self.code in (ErrorCode.E0, ErrorCode.E7) and self.param is not None:
            raise ValueError(f"{self.code.name} findings do not carry a parameter")
        if self.code in (ErrorCode.E5, ErrorCode.E6) and (self.param is not None or self.call_index is not None):
            raise ValueError(f"{self.code.name} findings carry neither parameter nor call index")

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code.name,
            "error": self.code.identifier,
            "message": self.message,
            "thought": self.thought,
            "call_index": self.call_index,
            "param": self.param,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ErrorFinding":
        return cls(
            code=ErrorCode.parse(d["code"]),
            message=d["message"],
            thought=d["thought"],
            call_index=d.get("call_index"),
            param=d.get("param"),
        )


def _message(code: ErrorCode, text: str) -> str:
    return json.dumps({"error": code.identifier, "message": text}, ensure_ascii=False)


CANONICAL_SHAPE = '[{"name": "func_name1", "arguments": {"parameter_1": "value1", "parameter_2": "value2"}}]'


def wrong_tool_name(call_index: int, name: str, suggestion: str | None = None) -> ErrorFinding:
    thought = f"Tool '{name}' is not among the available tools. Use only the exact tool names provided."
    if suggestion:
        thought += f" Did you mean '{suggestion}'? Tool names are case-sensitive."
    return ErrorFinding(ErrorCode.E0, _message(ErrorCode.E0, f"The tool '{name}' does not exist."), thought, call_index)


def missing_required(call_index: int, param: str, required: Sequence[str]) -> ErrorFinding:
    req = ", ".join(f"'{r}'" for r in required)
    return ErrorFinding(
        ErrorCode.E1,
        _message(ErrorCode.E1, f"The '{param}' parameter is required."),
        f"Parameter '{param}' is missing. Ensure all required parameters ({req}) are included in the function call.",
        call_index,
        param,
    )


def invalid_type(call_index: int, param: str, type_name: str) -> ErrorFinding:
    return ErrorFinding(
        ErrorCode.E2,
        _message(ErrorCode.E2, f"The '{param}' is not of '{type_name}'."),
        f"Parameter '{param}' should be of type '{type_name}', but an invalid type was provided. "
        "Ensure all parameters match their expected types.",
        call_index,
        param,
    )


def empty_value(call_index: int, param: str) -> ErrorFinding:
    return ErrorFinding(
        ErrorCode.E3,
        _message(ErrorCode.E3, f"The '{param}' parameter cannot be empty."),
        f"Parameter '{param}' has an empty value. Fill it with the value the request provides.",
        call_index,
        param,
    )


def redundant_param(call_index: int, param: str, undeclared: bool, tool: str) -> ErrorFinding:
    if undeclared:
        text = f"The parameter '{param}' is not defined for tool '{tool}' and should not be called."
    else:
        text = f"The parameter '{param}' is not indicated by the query and should not be called."
    return ErrorFinding(
        ErrorCode.E4,
        _message(ErrorCode.E4, text),
        f"Parameter '{param}' is unnecessary. Include only the required parameters and the ones the query specifies.",
        call_index,
        param,
    )


def invalid_format(detail: str | None = None) -> ErrorFinding:
    text = "The function calling output does not follow the required format and cannot be parsed."
    if detail:
        text += f" ({detail})"
    return ErrorFinding(
        ErrorCode.E5,
        _message(ErrorCode.E5, text),
        "The output format is incorrect. The correct function calling output should look like: " + CANONICAL_SHAPE,
    )


def redundant_information(raw: str, fenced: bool = False) -> ErrorFinding:
    snippet = " ".join(raw.strip().split())[:40]
    if fenced:
        text = "The function calling output is wrapped in a code fence, which is unnecessary."
    else:
        text = f"The function calling output contains redundant text such as '{snippet}...' which is unnecessary."
    return ErrorFinding(
        ErrorCode.E6,
        _message(ErrorCode.E6, text),
        "No additional text should be included in the output. It should only contain the JSON list of calls.",
    )


def wrong_count(expected: int, got: int) -> ErrorFinding:
    return ErrorFinding(
        ErrorCode.E7,
        _message(ErrorCode.E7, f"Expected {expected} tool call(s) but got {got}."),
        f"The request needs {expected} tool call(s). Add the missing calls or remove the extra ones.",
    )


def is_empty_value(value: Any) -> bool:
    # zero and false are legitimate values
    return value is None or value == "" or (isinstance(value, list) and not value)


def check(
    outcome: ParseOutcome,
    registry: ToolRegistry,
    gold: Sequence[ToolCall] | None = None,
    mode: CheckMode | str = CheckMode.SCHEMA_ONLY,
) -> list[ErrorFinding]:
    """All checklist violations in ``outcome``; empty iff clean under ``mode``.

    In referenced mode the gold calls stand in for the query's intent: a
    declared argument absent from the matched gold call counts as redundant,
    and a call-count mismatch is reported once. The count check is skipped
    when nothing could be parsed, since that is already a format error.
    """
    mode = CheckMode(mode)
    if mode is CheckMode.REFERENCED and gold is None:
        raise MissingReference("referenced mode needs gold calls")

    findings: list[ErrorFinding] = []
    if outcome.failed:
        findings.append(invalid_format(outcome.error))
        return findings
    if outcome.salvage:
        findings.append(redundant_information(outcome.raw, outcome.fenced))

    calls = outcome.calls
    matched: dict[int, ToolCall] = {}
    if mode is CheckMode.REFERENCED:
        from .metrics import match_calls

        matched = {p: gold[g] for p, g in match_calls(calls, gold)}

    for i, call in enumerate(calls):
        spec = registry.get(call.name)
        if spec is None:
            findings.append(wrong_tool_name(i, call.name, registry.suggest(call.name)))
            continue
        for pname in spec.required:
            if pname not in call.arguments:
                findings.append(missing_required(i, pname, spec.required))
        ref = matched.get(i)
        for key, value in call.arguments.items():
            pspec = spec.param(key)
            if pspec is not None and not value_matches(pspec.ptype, value):
                findings.append(invalid_type(i, key, pspec.ptype.render()))
            if is_empty_value(value):
                findings.append(empty_value(i, key))
            if pspec is None:
                findings.append(redundant_param(i, key, True, spec.name))
            elif ref is not None and key not in ref.arguments:
                findings.append(redundant_param(i, key, False, spec.name))

    if mode is CheckMode.REFERENCED and len(calls) != len(gold):
        findings.append(wrong_count(len(gold), len(calls)))
    return findings


def render_global_checklist() -> str:
    lines = [
        "Global Error Checklist",
        "Before answering, make sure your tool calls avoid each of these errors:",
    ]
    for code in ErrorCode:
        lines.append(f"Error {code.value}: {code.title} - {_SUMMARIES[code]}.")
    return "\n".join(lines)


def error_histogram(findings_per_case: Iterable[Iterable[ErrorFinding]]) -> dict[ErrorCode, int]:
    counts = Counter(f.code for case in findings_per_case for f in case)
    return {code: counts.get(code, 0) for code in ErrorCode}
