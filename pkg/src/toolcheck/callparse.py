"""Extract tool calls from raw model text.

Strict parsing accepts only the canonical ``[{"name": ..., "arguments": {...}}]``
array (surrounding whitespace allowed). Lenient parsing falls back to salvaging
the longest bracket-balanced call array embedded in other text, which is the
evidence for redundant-information errors.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from typing import Any, Iterable


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("tool call name must be a non-empty string")
        if not isinstance(self.arguments, dict):
            raise ValueError("tool call arguments must be a mapping")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToolCall":
        return cls(d["name"], dict(d.get("arguments") or {}))


@dataclass(frozen=True)
class ParseOutcome:
    calls: tuple[ToolCall, ...]
    strict: bool
    salvage: bool
    raw: str
    error: str | None = None
    fenced: bool = False

    @property
    def failed(self) -> bool:
        return not self.strict and not self.salvage


def render_calls(calls: Iterable[ToolCall]) -> str:
    """Canonical one-line rendering; strict parsing inverts it exactly."""
    return json.dumps([c.to_dict() for c in calls], ensure_ascii=False)


def _no_dupes(pairs):
    keys = [k for k, _ in pairs]
    if len(keys) != len(set(keys)):
        dup = next(k for k in keys if keys.count(k) > 1)
        raise FormatError(f"duplicate key {dup!r}")
    return dict(pairs)


def _reject_constant(name):
    raise FormatError(f"non-JSON constant {name}")


def _loads(text: str) -> Any:
    try:
        return json.loads(text, object_pairs_hook=_no_dupes, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc.msg} at position {exc.pos}") from None


def _validate_call_array(obj: Any) -> tuple[ToolCall, ...]:
    if not isinstance(obj, list):
        raise FormatError(f"top level must be an array of calls, got {type(obj).__name__}")
    calls = []
    for i, item in enumerate(obj):
        if not isinstance(item, dict):
            raise FormatError(f"element {i} is not an object")
        keys = set(item)
        if keys != {"name", "arguments"}:
            extra = sorted(keys - {"name", "arguments"})
            missing = sorted({"name", "arguments"} - keys)
            raise FormatError(f"element {i} has wrong keys (unexpected {extra}, missing {missing})")
        if not isinstance(item["name"], str) or not item["name"]:
            raise FormatError(f"element {i}: 'name' must be a non-empty string")
        if not isinstance(item["arguments"], dict):
            raise FormatError(f"element {i}: 'arguments' must be an object")
        calls.append(ToolCall(item["name"], item["arguments"]))
    return tuple(calls)


def parse_strict(raw: str) -> ParseOutcome:
    """Parse canonical output or raise :class:`FormatError` naming the first violation."""
    calls = _validate_call_array(_loads(raw.strip()))
    return ParseOutcome(calls=calls, strict=True, salvage=False, raw=raw)


def requote(text: str) -> str:
    """Rewrite single-quoted string literals as JSON double-quoted strings."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            out.append(text[i : j + 1])
            i = j + 1
        elif ch == "'":
            j = i + 1
            buf, plain = [], []
            while j < n and text[j] != "'":
                c = text[j]
                if c == "\\" and j + 1 < n:
                    nxt = text[j + 1]
                    buf.append("'" if nxt == "'" else c + nxt)
                    plain.append(nxt)
                    j += 2
                    continue
                buf.append('\\"' if c == '"' else c)
                plain.append(c)
                j += 1
            try:
                value = json.loads('"' + "".join(buf) + '"')
            except json.JSONDecodeError:
                value = "".join(plain)
            out.append(json.dumps(value, ensure_ascii=False))
            i = j + 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _tuples_to_lists(obj: Any) -> Any:
    if isinstance(obj, (list, tuple)):
        return [_tuples_to_lists(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    return obj


def _parse_candidate(text: str) -> tuple[ToolCall, ...] | None:
    for attempt in (_loads, lambda t: _loads(requote(t))):
        try:
            return _validate_call_array(attempt(text))
        except FormatError:
            continue
    try:
        obj = ast.literal_eval(text)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
        return None
    try:
        return _validate_call_array(_tuples_to_lists(obj))
    except (FormatError, ValueError):
        return None


def balanced_arrays(text: str) -> list[tuple[int, int]]:
    """Spans ``(start, end)`` of every bracket-balanced ``[...]`` substring.

    Brackets inside quoted strings (either quote style) are ignored while a
    span is being scanned.
    """
    spans = []
    n = len(text)
    for start, ch in enumerate(text):
        if ch != "[":
            continue
        depth = 0
        quote = None
        i = start
        while i < n:
            c = text[i]
            if quote:
                if c == "\\":
                    i += 2
                    continue
                if c == quote:
                    quote = None
            elif c in "\"'":
                quote = c
            elif c == "[":
                depth += 1
            elif c == "]":
                depth -= 1
                if depth == 0:
                    spans.append((start, i + 1))
                    break
            i += 1
    return spans


def parse_lenient(raw: str) -> ParseOutcome:
    """Never raises. Longest salvageable call array wins, earliest start on ties."""
    try:
        return parse_strict(raw)
    except FormatError as exc:
        error = str(exc)
    fenced = "```" in raw
    spans = sorted(balanced_arrays(raw), key=lambda s: (-(s[1] - s[0]), s[0]))
    for start, end in spans:
        calls = _parse_candidate(raw[start:end])
        if calls is not None:
            return ParseOutcome(calls=calls, strict=False, salvage=True, raw=raw, error=error, fenced=fenced)
    return ParseOutcome(calls=(), strict=False, salvage=False, raw=raw, error=error, fenced=fenced)
