"""Per-tool local error checklists: prompt rendering, response parsing, offline synthesis.

Parsed entries are untrusted. Each one is kept only if its faulty output
actually triggers its error code under the checker, using the gold implied by
the entry (see :func:`implied_gold`).
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .callparse import ToolCall, parse_lenient, render_calls
from .checker import CheckMode, ErrorCode, check
from .toolspec import ToolSpec, parse_tool_spec, registry_from_specs


class NoEntriesParsed(ValueError):
    pass


@dataclass(frozen=True)
class LocalChecklistEntry:
    code: ErrorCode
    query: str
    faulty_output: str
    error_message: str
    thought: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code.name,
            "query": self.query,
            "faulty_output": self.faulty_output,
            "error_message": self.error_message,
            "thought": self.thought,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LocalChecklistEntry":
        return cls(ErrorCode.parse(d["code"]), d["query"], d["faulty_output"], d["error_message"], d["thought"])


@dataclass(frozen=True)
class LocalChecklist:
    tool: ToolSpec
    entries: tuple[LocalChecklistEntry, ...]
    dropped: tuple[tuple[str, str], ...] = ()  # (section header, reason)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a local checklist needs at least one entry")
        codes = [e.code for e in self.entries]
        if len(codes) != len(set(codes)):
            raise ValueError("entry codes must be unique within a checklist")

    @property
    def codes(self) -> set[ErrorCode]:
        return {e.code for e in self.entries}

    def to_dict(self) -> dict[str, Any]:
        return {"tool": self.tool.to_dict(), "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LocalChecklist":
        return cls(parse_tool_spec(d["tool"]), tuple(LocalChecklistEntry.from_dict(e) for e in d["entries"]))

    def render(self) -> str:
        """Plain-text form used inside round-2 prompts."""
        out = [f"Local error checklist for tool '{self.tool.name}':"]
        for e in self.entries:
            out += [
                "",
                f"{e.code.title} (Error {e.code.value})",
                f"Query: {e.query}",
                f"Function Calling Output: {e.faulty_output}",
                f"Error Message: {e.error_message}",
                f"Thought of Error: {e.thought}",
            ]
        return "\n".join(out)


def save_checklist(checklist: LocalChecklist, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checklist.to_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_checklist(path: str | Path) -> LocalChecklist:
    with open(path, encoding="utf-8") as fh:
        return LocalChecklist.from_dict(json.load(fh))


TEMPLATE_TOOL = parse_tool_spec(
    {
        "name": "name_of_the_tool",
        "description": "description_of_the_tool",
        "parameters": {
            "parameter_1": {"type": "str", "description": "description_of_the_parameter"},
            "parameter_2": {"type": "int", "description": "description_of_the_parameter"},
        },
        "required": ["parameter_1"],
    }
)


GENERATION_PROMPT = """Task:
You are given information about a tool and an example template of an error checklist. Your task is to generate an error checklist for the tool in the same format as the template. More specifically, for each error, you should:
- Provide a **perfect query**. The query should be self-contained and contain all the necessary information for a correct tool call. For example: "Can you verify the access to the database named 'customer_data'?"
- Provide the **corresponding answer** from the model that evokes the error.
- Provide an **error message** that describes what went wrong.
- Provide a **thought** explaining how the error should be corrected.

Note: You should strictly follow the format of the template.

------

**Error Checklist Template**

Tool Information

name: 'name_of_the_tool'
description: 'description_of_the_tool'
parameters: {"parameter_name_1": {"type": "type_1", "description": "description_of_the_parameter"},  "parameter_2": {"type": "type_2",  "description": "description_of_the_parameter"}} required parameters: ["parameter_1"]
(Include other relevant information about the tool if necessary.)

---

Error 2: Missing Required Parameter Error

Query: "a_query_that_calls_the_tool"

Function Calling Output: [{"name": "name_of_the_tool","arguments": {"parameter_2":"parameter_value"}}]

Error Message: {"error": "MissingRequiredParameter","message": "The 'parameter_1' parameter is required."}

Thought of Error: Parameter 'parameter_1' is missing. Ensure all required parameters ('parameter_1') are included in the function call.

---

Error 3: Invalid Parameter Type Error

Query: "a_query_that_calls_the_tool"

Function Calling Output:
[
  {
    "name": "name_of_the_tool",
    "arguments": {
      "parameter_1": "parameter_value",
      "parameter_2": "parameter_value (but not of type_2)"
    }
  }
]

Error Message:
{
  "error": "InvalidParameterType",
  "message": "The 'parameter_2' is not of 'type_2'."
}

Thought of Error:
Parameter 'parameter_2' should be of type 'type_2', but an invalid type was provided. Ensure all parameters match their expected types.

---

Error 4: Empty Parameter Value Error

Query: "a_query_that_calls_the_tool"

Function Calling Output:
[
  {
    "name": "name_of_the_tool",
    "arguments": {
      "parameter_1": "parameter_value",
      "parameter_2": ""
    }
  }
]

Error Message:
{
  "error": "EmptyParameterValue",
  "message": "The 'parameter_2' parameter cannot be empty."
}

Thought of Error:
Parameter 'parameter_2' has an empty value. It should not be empty as specified by the tool's requirements.

---

Error 5: Redundant Parameter Error

Query: "a_query_that_calls_the_tool (that only needs to fill in part of the parameters of the tool)"

Function Calling Output:
[
  {
    "name": "name_of_the_tool",
    "arguments": {
      "parameter_1": "parameter_value",
      "parameter_2": "parameter_value"
    }
  }
]

Error Message:
{
  "error": "RedundantParameter",
  "message": "The parameter 'parameter_2' is not indicated by the query and should not be called."
}

Thought of Error:
Parameter 'parameter_2' is unnecessary and was not specified in the query. Ensure only the required and specified parameters are included in the function call.

---

Error 6: Invalid Function Calling Output Format Error

Query: "a_query_that_calls_the_tool"

Function Calling Output:
{
  "Name": "name_of_the_tool",
  "Parameter": {
    "parameter_1": "parameter_value",
    "parameter_2": "parameter_value"
  }
}

Error Message:
{
  "error": "InvalidFormat",
  "message": "The function calling output does not follow the required format and cannot be parsed."
}

Thought of Error:
The output format is incorrect due to improperly formatted keys and symbols. The correct function calling output should be:
[
  {
    "name": "func_name1",
    "arguments": {
      "parameter_1": "value1",
      "parameter_2": "value2"
    }
  }
]

---

Error 7: Redundant Information Error

Query: "a_query_that_calls_the_tool"

Function Calling Output:
"Based on the query, I will make a function call to the 'name_of_the_tool' tool to get the query answered. Here is the output in the required JSON format:
[
  {
    'name': 'name_of_the_tool',
    'arguments': {
      'parameter_1': 'parameter_value',
      'parameter_2': 'parameter_value'
    }
  }
]"

Error Message:
{
  "error": "RedundantInformationError",
  "message": "The function calling output contains redundant text such as 'Based on the query, I will make a function call...' which is unnecessary."
}

Thought of Error:
No additional text should be included in the output. The correct function calling output should only contain:
[
  {
    "name": "func_name1",
    "arguments": {
      "parameter_1": "value1",
      "parameter_2": "value2"
    }
  }
]

------

Instructions

Now, generate an error checklist for the following tool:

<tool_info>

Note: You must strictly follow the format of the template."""


def render_tool_info(tool: ToolSpec) -> str:
    d = tool.to_dict()
    return (
        f"name: '{tool.name}'\n"
        f"description: '{tool.description}'\n"
        f"parameters: {json.dumps(d['parameters'], ensure_ascii=False)} "
        f"required parameters: {json.dumps(d['required'], ensure_ascii=False)}"
    )


def render_generation_prompt(tool: ToolSpec) -> str:
    return GENERATION_PROMPT.replace("<tool_info>", render_tool_info(tool))


# Section headers are matched by title, not number: the template numbers its
# sections one higher than the global checklist does.
_HEADER = re.compile(r"^\s*\**\s*Error\s+(\d+)\s*:\s*(.+?)\s*\**\s*$", re.MULTILINE)
_FIELDS = ("Query", "Function Calling Output", "Error Message", "Thought of Error")
_FIELD_RE = re.compile(r"^\s*\**(Query|Function Calling Output|Error Message|Thought of Error)\**\s*:", re.MULTILINE)
_BY_TITLE = {c.title.lower(): c for c in ErrorCode}


def _code_for(title: str) -> ErrorCode | None:
    key = title.strip().strip("*").strip().lower()
    if key in _BY_TITLE:
        return _BY_TITLE[key]
    for t, code in _BY_TITLE.items():
        if t.removesuffix(" error") in key:
            return code
    return None


def _strip_field(text: str) -> str:
    text = re.sub(r"^\s*-{3,}\s*$", "", text, flags=re.MULTILINE).strip()
    return text


def implied_gold(code: ErrorCode, calls: Sequence[ToolCall], tool: ToolSpec) -> tuple[CheckMode, list[ToolCall] | None]:
    """Mode and reference under which an entry's faulty output is validated.

    Redundant-parameter entries are checked against the same calls reduced to
    required arguments; wrong-count entries against the calls with duplicates
    removed. Everything else is a schema-level error.
    """
    if code is ErrorCode.E4:
        keep = set(tool.required)
        return CheckMode.REFERENCED, [ToolCall(c.name, {k: v for k, v in c.arguments.items() if k in keep}) for c in calls]
    if code is ErrorCode.E7:
        seen, uniq = set(), []
        for c in calls:
            key = render_calls([c])
            if key not in seen:
                seen.add(key)
                uniq.append(c)
        return CheckMode.REFERENCED, uniq
    return CheckMode.SCHEMA_ONLY, None


def triggers(entry: LocalChecklistEntry, tool: ToolSpec) -> bool:
    outcome = parse_lenient(entry.faulty_output)
    mode, gold = implied_gold(entry.code, outcome.calls, tool)
    findings = check(outcome, registry_from_specs([tool]), gold, mode)
    return any(f.code is entry.code for f in findings)


def parse_checklist_response(text: str, tool: ToolSpec = TEMPLATE_TOOL) -> LocalChecklist:
    """Extract entries by section markers and keep the ones that validate."""
    headers = list(_HEADER.finditer(text or ""))
    entries: list[LocalChecklistEntry] = []
    dropped: list[tuple[str, str]] = []
    for k, h in enumerate(headers):
        label = f"Error {h.group(1)}: {h.group(2)}"
        body = text[h.end() : headers[k + 1].start() if k + 1 < len(headers) else len(text)]
        code = _code_for(h.group(2))
        if code is None:
            dropped.append((label, "unrecognized error title"))
            continue
        marks = list(_FIELD_RE.finditer(body))
        fields: dict[str, str] = {}
        for m, mark in enumerate(marks):
            end = marks[m + 1].start() if m + 1 < len(marks) else len(body)
            fields.setdefault(mark.group(1), _strip_field(body[mark.end() : end]))
        missing = [f for f in _FIELDS if not fields.get(f)]
        if missing:
            dropped.append((label, f"missing fields: {', '.join(missing)}"))
            continue
        if any(e.code is code for e in entries):
            dropped.append((label, f"duplicate {code.name} entry"))
            continue
        entry = LocalChecklistEntry(
            code,
            fields["Query"].strip('"'),
            fields["Function Calling Output"],
            fields["Error Message"],
            fields["Thought of Error"],
        )
        if not triggers(entry, tool):
            dropped.append((label, f"faulty output does not trigger {code.name}"))
            continue
        entries.append(entry)
    if not entries:
        raise NoEntriesParsed(f"no valid entries ({len(dropped)} dropped)")
    return LocalChecklist(tool, tuple(entries), tuple(dropped))


def _query_for(tool: ToolSpec, args: dict[str, Any]) -> str:
    if not args:
        return f"Please run {tool.name}."
    parts = ", ".join(f"{k} {json.dumps(v, ensure_ascii=False)}" for k, v in args.items())
    return f"Please run {tool.name} with {parts}."


def synth_checklist_offline(tool: ToolSpec, seed: int = 0, include_wrong_name: bool = False) -> LocalChecklist:
    """Deterministic checklist built from the perturbation operators.

    The gold call fills required parameters with sample values; each applicable
    code contributes one entry whose message and thought come from the checker.
    """
    from .negsample import Inapplicable, perturb, sample_value

    rng = random.Random(f"{seed}:{tool.name}")
    args = {p.name: sample_value(p.ptype, f"{p.name}_value") for p in tool.params if p.required}
    gold = [ToolCall(tool.name, args)]
    registry = registry_from_specs([tool])
    codes = [ErrorCode.E1, ErrorCode.E2, ErrorCode.E3, ErrorCode.E4, ErrorCode.E5, ErrorCode.E6]
    if include_wrong_name:
        codes.insert(0, ErrorCode.E0)
    entries = []
    for code in codes:
        try:
            faulty = perturb(gold, [tool], code, rng.randrange(2**32))
        except Inapplicable:
            continue
        mode, ref = implied_gold(code, parse_lenient(faulty).calls, tool)
        finding = next(f for f in check(parse_lenient(faulty), registry, ref, mode) if f.code is code)
        entries.append(LocalChecklistEntry(code, _query_for(tool, args), faulty, finding.message, finding.thought))
    return LocalChecklist(tool, tuple(entries))


def generate_checklist(tool: ToolSpec, client, **params: Any) -> LocalChecklist:
    """LLM-backed generation through any chat client; output goes through the same validation."""
    from .chat import ChatMessage

    completion = client.complete([ChatMessage("user", render_generation_prompt(tool))], **params)
    return parse_checklist_response(completion.text, tool)
