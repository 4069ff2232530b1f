"""Validate tool-calling outputs against a hierarchical error checklist, build
negative-sample preference data, score F1, and study DPO/KTO on a toy model."""

from __future__ import annotations

from .callparse import FormatError, ParseOutcome, ToolCall, parse_lenient, parse_strict, render_calls
from .checker import CheckMode, ErrorCode, ErrorFinding, check, render_global_checklist
from .ingest import EvalCase, PreferencePair, load_cases, read_ptc, write_ptc
from .metrics import aggregate, match_calls, score_case
from .toolspec import ParamType, ToolRegistry, ToolSpec, parse_param_type, parse_tool_spec, registry_from_specs

__version__ = "0.1.0"

__all__ = [
    "CheckMode",
    "ErrorCode",
    "ErrorFinding",
    "EvalCase",
    "FormatError",
    "ParamType",
    "ParseOutcome",
    "PreferencePair",
    "ToolCall",
    "ToolRegistry",
    "ToolSpec",
    "aggregate",
    "check",
    "load_cases",
    "match_calls",
    "parse_lenient",
    "parse_param_type",
    "parse_strict",
    "parse_tool_spec",
    "read_ptc",
    "registry_from_specs",
    "render_calls",
    "render_global_checklist",
    "score_case",
    "write_ptc",
]
