"""Unified benchmark cases and the pairwise (PTC) preference format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .callparse import FormatError, ToolCall, parse_strict
from .chat import ChatMessage
from .checker import ErrorCode, check
from .toolspec import MalformedSpec, ToolRegistry, ToolSpec, parse_tool_spec, registry_from_specs


class UnreadableFile(OSError):
    pass


class EmptyDataset(ValueError):
    pass


class InvariantViolation(ValueError):
    pass


@dataclass(frozen=True)
class EvalCase:
    id: str
    query: str
    tools: tuple[ToolSpec, ...]
    gold: tuple[ToolCall, ...] = ()
    context: tuple[ChatMessage, ...] | None = None

    def __post_init__(self):
        names = {t.name for t in self.tools}
        missing = [c.name for c in self.gold if c.name not in names]
        if missing:
            raise InvariantViolation(f"case {self.id!r}: gold calls {missing} are not among its tools")

    @property
    def registry(self) -> ToolRegistry:
        return registry_from_specs(self.tools)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "query": self.query,
            "tools": [t.to_dict() for t in self.tools],
            "gold": [c.to_dict() for c in self.gold],
        }
        if self.context is not None:
            d["context"] = [m.to_dict() for m in self.context]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalCase":
        if not isinstance(d.get("query"), str):
            raise ValueError("'query' must be text")
        tools = d.get("tools")
        gold = d.get("gold", [])
        if not isinstance(tools, list) or not isinstance(gold, list):
            raise ValueError("'tools' and 'gold' must be lists")
        context = d.get("context")
        return cls(
            id=str(d.get("id", "")),
            query=d["query"],
            tools=tuple(parse_tool_spec(t) for t in tools),
            gold=tuple(ToolCall(c["name"], dict(c.get("arguments") or {})) for c in gold),
            context=None if context is None else tuple(ChatMessage.from_dict(m) for m in context),
        )


@dataclass(frozen=True)
class SkipRecord:
    line: int
    reason: str


@dataclass(frozen=True)
class LoadResult:
    cases: tuple[EvalCase, ...]
    skipped: tuple[SkipRecord, ...] = ()

    def __iter__(self):
        return iter(self.cases)

    def __len__(self) -> int:
        return len(self.cases)


def _xlam(obj: Mapping[str, Any]) -> dict[str, Any]:
    """xlam-function-calling-60k rows: ``tools``/``answers`` are JSON strings."""
    tools = obj["tools"]
    answers = obj["answers"]
    tools = json.loads(tools) if isinstance(tools, str) else tools
    answers = json.loads(answers) if isinstance(answers, str) else answers
    return {"id": obj.get("id", ""), "query": obj["query"], "tools": tools, "gold": answers}


ADAPTERS: dict[str, Callable[[Mapping[str, Any]], dict[str, Any]]] = {"xlam": _xlam}


def register_adapter(name: str, fn: Callable[[Mapping[str, Any]], dict[str, Any]]) -> None:
    ADAPTERS[name] = fn


def load_cases(path: str | Path, format: str = "unified") -> LoadResult:
    """Read cases from JSON lines, in file order.

    ``format`` is ``"unified"`` or ``"adapter:<name>"``. Bad lines are skipped
    and reported in ``LoadResult.skipped``; a file with no valid case raises
    :class:`EmptyDataset`. Missing ids default to the line number.
    """
    if format == "unified":
        adapt = None
    elif format.startswith("adapter:") and format[len("adapter:") :] in ADAPTERS:
        adapt = ADAPTERS[format[len("adapter:") :]]
    else:
        raise ValueError(f"unknown case format {format!r}")
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc

    cases, skipped = [], []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            if adapt is not None:
                obj = adapt(obj)
            if not obj.get("id"):
                obj = {**obj, "id": str(lineno)}
            cases.append(EvalCase.from_dict(obj))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, MalformedSpec) as exc:
            skipped.append(SkipRecord(lineno, f"{type(exc).__name__}: {exc}"))
    if not cases:
        raise EmptyDataset(f"{path}: no valid cases ({len(skipped)} skipped)")
    return LoadResult(tuple(cases), tuple(skipped))


def write_cases(cases: Iterable[EvalCase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    injected_error: ErrorCode | None = None
    label_chosen: bool = True
    label_rejected: bool = False
    # case id, carried through so that pairs can be joined back to their tools
    id: str | None = field(default=None, compare=True)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "injected_error": None if self.injected_error is None else int(self.injected_error),
            "labels": {"chosen": self.label_chosen, "rejected": self.label_rejected},
        }
        if self.id is not None:
            d["id"] = self.id
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PreferencePair":
        labels = d.get("labels") or {}
        err = d.get("injected_error")
        return cls(
            prompt=d["prompt"],
            chosen=d["chosen"],
            rejected=d["rejected"],
            injected_error=None if err is None else ErrorCode.parse(err),
            label_chosen=bool(labels.get("chosen", True)),
            label_rejected=bool(labels.get("rejected", False)),
            id=d.get("id"),
        )


def check_pair_invariants(pair: PreferencePair, registry: ToolRegistry | None = None) -> None:
    if pair.chosen == pair.rejected:
        raise InvariantViolation("chosen and rejected are identical")
    try:
        outcome = parse_strict(pair.chosen)
    except FormatError as exc:
        raise InvariantViolation(f"chosen is not a canonical call array: {exc}") from exc
    if registry is not None:
        findings = check(outcome, registry)
        if findings:
            raise InvariantViolation(f"chosen has findings: {[f.code.name for f in findings]}")


def write_ptc(
    pairs: Sequence[PreferencePair],
    path: str | Path,
    registries: Sequence[ToolRegistry] | None = None,
) -> None:
    """Write PTC JSON lines. ``registries`` (aligned with ``pairs``) enables the clean-chosen check."""
    if registries is not None and len(registries) != len(pairs):
        raise ValueError("registries must align with pairs")
    for i, pair in enumerate(pairs):
        check_pair_invariants(pair, None if registries is None else registries[i])
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for pair in pairs:
                fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise UnreadableFile(f"cannot write {path}: {exc}") from exc


def read_ptc(path: str | Path) -> list[PreferencePair]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [PreferencePair.from_dict(json.loads(line)) for line in fh if line.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
