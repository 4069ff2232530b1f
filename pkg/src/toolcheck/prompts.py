"""Prompt text shared by the ICL runner, checklist generation and PTC records."""

from __future__ import annotations

import json
from typing import Sequence

from .toolspec import ToolSpec

TOOL_CALLING_INSTRUCTION = """You are a tool calling assistant. In order to complete the user's request, you need to select one or more appropriate tools from the following tools and fill in the correct values for the tool parameters. Your specific tasks are:
1. Make one or more function/tool calls to meet the request based on the question.
2. If none of the function can be used, point it out and refuse to answer.
3. If the given question lacks the parameters required by the function, also point it out.

{tools}

The output MUST strictly adhere to the following JSON format, and NO other text MUST be included.
The example format is as follows. Please make sure the parameter type is correct. If no function call is needed, please directly output an empty list "[]"

[
    {{"name": "func_name1", "arguments": {{"argument1": "value1", "argument2": "value2"}}}},
    ... (more tool calls as required)
]"""


def serialize_tools(tools: Sequence[ToolSpec]) -> str:
    return json.dumps([t.to_dict() for t in tools], ensure_ascii=False)


def render_system_prompt(tools: Sequence[ToolSpec]) -> str:
    return TOOL_CALLING_INSTRUCTION.format(tools=serialize_tools(tools))


def render_tool_prompt(query: str, tools: Sequence[ToolSpec]) -> str:
    """Single-message prompt (instruction, tools, then the query), as stored in PTC records."""
    return render_system_prompt(tools) + "\n\n" + query
